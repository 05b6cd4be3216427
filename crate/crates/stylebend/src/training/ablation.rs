//! Component mask: which parts of the model and objective a run disables.

use crate::{Error, Result};

/// Recognized flag names (hyphenated spellings are accepted on input).
pub const ABLATION_FLAGS: [&str; 5] = ["no_style", "no_patch", "no_germ", "no_wmi", "lgfs_only"];

/// Parsed ablation switches. The default (all `false`) is the full model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ComponentMask {
    /// Drop the feature-statistics alignment loss.
    pub no_style: bool,
    /// Drop the rotated-patch adversarial losses.
    pub no_patch: bool,
    /// Remove the residual refinement module (forbids exemplar mode).
    pub no_germ: bool,
    /// Skip weight interpolation: the refinement applies to the per-iteration
    /// anchor translation instead.
    pub no_wmi: bool,
    /// Keep only the statistics + patch losses: the whole anchor objective
    /// (branch adversarial and reconstruction terms) is dropped, and
    /// `no_wmi` and `no_germ` are implied.
    pub lgfs_only: bool,
}

impl ComponentMask {
    /// Parses flag strings (underscore or hyphen spelling). Unknown or
    /// repeated flags and combinations that would leave the few-shot path
    /// without any loss are errors.
    pub fn parse(flags: &[String]) -> Result<Self> {
        let mut mask = ComponentMask::default();
        let mut seen = std::collections::HashSet::new();
        for raw in flags {
            let flag = raw.trim().replace('-', "_");
            if !seen.insert(flag.clone()) {
                return Err(Error::Config(format!("repeated ablation flag `{raw}`")));
            }
            match flag.as_str() {
                "no_style" => mask.no_style = true,
                "no_patch" => mask.no_patch = true,
                "no_germ" => mask.no_germ = true,
                "no_wmi" => mask.no_wmi = true,
                "lgfs_only" => mask.lgfs_only = true,
                _ => {
                    return Err(Error::Config(format!(
                        "unknown ablation flag `{raw}` (known: {})",
                        ABLATION_FLAGS.join(", ")
                    )))
                }
            }
        }
        mask.check()?;
        Ok(mask)
    }

    fn check(&self) -> Result<()> {
        if self.lgfs_only && (self.no_style || self.no_patch) {
            return Err(Error::Config(
                "lgfs_only keeps only the statistics and patch losses; combining it with \
                 no_style or no_patch would leave no few-shot objective"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Canonical flag list (underscore spelling, fixed order).
    pub fn canonical(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (on, name) in [
            (self.no_style, "no_style"),
            (self.no_patch, "no_patch"),
            (self.no_germ, "no_germ"),
            (self.no_wmi, "no_wmi"),
            (self.lgfs_only, "lgfs_only"),
        ] {
            if on {
                out.push(name.to_string());
            }
        }
        out
    }

    /// Statistics-alignment loss active?
    pub fn style_on(&self) -> bool {
        !self.no_style
    }

    /// Rotated-patch adversarial losses active?
    pub fn patch_on(&self) -> bool {
        !self.no_patch
    }

    /// Branch adversarial losses active?
    pub fn adv_on(&self) -> bool {
        !self.lgfs_only
    }

    /// Reconstruction losses active? `lgfs_only` replaces the whole anchor
    /// objective — adversarial and reconstruction terms alike — with the
    /// statistics + patch losses, so nothing anchors the autoencoder to the
    /// identity there.
    pub fn recon_on(&self) -> bool {
        !self.lgfs_only
    }

    /// Residual refinement module active?
    pub fn germ_on(&self) -> bool {
        !(self.no_germ || self.lgfs_only)
    }

    /// Learned weight interpolation active?
    pub fn wmi_on(&self) -> bool {
        !(self.no_wmi || self.lgfs_only)
    }

    /// Exemplar mode is only available with the refinement module.
    pub fn exemplar_allowed(&self) -> bool {
        self.germ_on()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn default_mask_enables_everything() {
        let m = ComponentMask::parse(&[]).unwrap();
        assert!(m.style_on() && m.patch_on() && m.adv_on() && m.germ_on() && m.wmi_on());
        assert!(m.exemplar_allowed());
        assert!(m.canonical().is_empty());
    }

    #[test]
    fn lgfs_only_implies_no_wmi_and_no_germ() {
        let m = ComponentMask::parse(&flags(&["lgfs_only"])).unwrap();
        assert!(!m.adv_on());
        assert!(!m.wmi_on());
        assert!(!m.germ_on());
        assert!(!m.exemplar_allowed());
        assert!(m.style_on() && m.patch_on());
    }

    #[test]
    fn hyphen_spelling_is_accepted() {
        let m = ComponentMask::parse(&flags(&["lgfs-only", "no-style"]));
        assert!(m.is_err(), "and the conflict is still detected");
        let m = ComponentMask::parse(&flags(&["no-germ"])).unwrap();
        assert!(!m.germ_on());
        assert_eq!(m.canonical(), vec!["no_germ"]);
    }

    #[test]
    fn conflicts_and_junk_are_rejected() {
        assert!(ComponentMask::parse(&flags(&["lgfs_only", "no_style"])).is_err());
        assert!(ComponentMask::parse(&flags(&["lgfs_only", "no_patch"])).is_err());
        assert!(ComponentMask::parse(&flags(&["nope"])).is_err());
        assert!(ComponentMask::parse(&flags(&["no_style", "no_style"])).is_err());
        // Redundant-but-consistent combinations stay legal.
        let m = ComponentMask::parse(&flags(&["lgfs_only", "no_wmi", "no_germ"])).unwrap();
        assert!(!m.wmi_on() && !m.germ_on());
    }

    #[test]
    fn individual_switches() {
        assert!(!ComponentMask::parse(&flags(&["no_style"])).unwrap().style_on());
        assert!(!ComponentMask::parse(&flags(&["no_patch"])).unwrap().patch_on());
        let no_wmi = ComponentMask::parse(&flags(&["no_wmi"])).unwrap();
        assert!(!no_wmi.wmi_on());
        assert!(no_wmi.germ_on() && no_wmi.adv_on());
        let no_germ = ComponentMask::parse(&flags(&["no_germ"])).unwrap();
        assert!(!no_germ.germ_on() && !no_germ.exemplar_allowed());
        assert!(no_germ.wmi_on());
    }
}
