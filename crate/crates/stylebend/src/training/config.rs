//! Run configuration: a flat `key = value` text file. Every field has a key
//! of the same name; lists are comma-separated; `#` starts a comment.

use std::path::Path;

use crate::losses::LossWeights;
use crate::networks::NetConfig;
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Master seed for parameters, sampling, mode draws, and noise.
    pub seed: u64,
    /// Square image side; must be a positive multiple of 8 and of 2^levels.
    pub resolution: usize,
    pub batch_size: usize,
    pub iterations: u64,
    /// Adam settings shared by both parameter groups.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Objective weights.
    pub lambda_adv: f64,
    pub lambda_patch: f64,
    pub lambda_style: f64,
    pub lambda_recon_image: f64,
    pub lambda_recon_latent: f64,
    /// Cap on the few-shot set size.
    pub fewshot_count: usize,
    /// Anchor domain names; the first must be `id` (the source domain).
    pub anchors: Vec<String>,
    /// Probability of exemplar mode per iteration.
    pub exemplar_prob: f64,
    /// Patches per image for the patch discriminator.
    pub patch_count: usize,
    /// Patch side; 0 selects resolution / 4.
    pub patch_size: usize,
    /// Backbone width and depth.
    pub width: usize,
    pub levels: usize,
    pub style_dim: usize,
    /// Fixed feature extractor: stage widths and its own seed.
    pub phi_widths: Vec<usize>,
    pub phi_seed: u64,
    /// Ablation flags (see the ablation module); empty = full model.
    pub ablation: Vec<String>,
    /// Console log cadence in steps.
    pub log_every: u64,
    /// Checkpoint cadence in steps; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    /// Dataset root holding `source/`, one directory per non-source anchor,
    /// and `fewshot/`.
    pub data_root: String,
    /// Output directory for checkpoints, metrics, and the resolved config.
    pub out_dir: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            resolution: 64,
            batch_size: 1,
            iterations: 5000,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            lambda_adv: 1.0,
            lambda_patch: 1.0,
            lambda_style: 1.0,
            lambda_recon_image: 10.0,
            lambda_recon_latent: 1.0,
            fewshot_count: 10,
            anchors: vec!["id".into(), "anchor_m".into()],
            exemplar_prob: 0.5,
            patch_count: 8,
            patch_size: 0,
            width: 32,
            levels: 2,
            style_dim: 8,
            phi_widths: vec![8, 16, 32, 64],
            phi_seed: 500,
            ablation: Vec::new(),
            log_every: 10,
            checkpoint_every: 1000,
            data_root: "data".into(),
            out_dir: "runs/default".into(),
        }
    }
}

/// Documented keys in serialization order.
pub const CONFIG_KEYS: [&str; 27] = [
    "seed",
    "resolution",
    "batch_size",
    "iterations",
    "lr",
    "beta1",
    "beta2",
    "lambda_adv",
    "lambda_patch",
    "lambda_style",
    "lambda_recon_image",
    "lambda_recon_latent",
    "fewshot_count",
    "anchors",
    "exemplar_prob",
    "patch_count",
    "patch_size",
    "width",
    "levels",
    "style_dim",
    "phi_widths",
    "phi_seed",
    "ablation",
    "log_every",
    "checkpoint_every",
    "data_root",
    "out_dir",
];

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let v = value.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|part| parse_as(key, part)).collect()
}

fn join_list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl TrainConfig {
    /// Sets one field from its textual key/value form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_as(key, value)?,
            "resolution" => self.resolution = parse_as(key, value)?,
            "batch_size" => self.batch_size = parse_as(key, value)?,
            "iterations" => self.iterations = parse_as(key, value)?,
            "lr" => self.lr = parse_as(key, value)?,
            "beta1" => self.beta1 = parse_as(key, value)?,
            "beta2" => self.beta2 = parse_as(key, value)?,
            "lambda_adv" => self.lambda_adv = parse_as(key, value)?,
            "lambda_patch" => self.lambda_patch = parse_as(key, value)?,
            "lambda_style" => self.lambda_style = parse_as(key, value)?,
            "lambda_recon_image" => self.lambda_recon_image = parse_as(key, value)?,
            "lambda_recon_latent" => self.lambda_recon_latent = parse_as(key, value)?,
            "fewshot_count" => self.fewshot_count = parse_as(key, value)?,
            "anchors" => self.anchors = parse_list(key, value)?,
            "exemplar_prob" => self.exemplar_prob = parse_as(key, value)?,
            "patch_count" => self.patch_count = parse_as(key, value)?,
            "patch_size" => self.patch_size = parse_as(key, value)?,
            "width" => self.width = parse_as(key, value)?,
            "levels" => self.levels = parse_as(key, value)?,
            "style_dim" => self.style_dim = parse_as(key, value)?,
            "phi_widths" => self.phi_widths = parse_list(key, value)?,
            "phi_seed" => self.phi_seed = parse_as(key, value)?,
            "ablation" => self.ablation = parse_list(key, value)?,
            "log_every" => self.log_every = parse_as(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_as(key, value)?,
            "data_root" => self.data_root = value.trim().to_string(),
            "out_dir" => self.out_dir = value.trim().to_string(),
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "resolution" => self.resolution.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "iterations" => self.iterations.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "lambda_adv" => self.lambda_adv.to_string(),
            "lambda_patch" => self.lambda_patch.to_string(),
            "lambda_style" => self.lambda_style.to_string(),
            "lambda_recon_image" => self.lambda_recon_image.to_string(),
            "lambda_recon_latent" => self.lambda_recon_latent.to_string(),
            "fewshot_count" => self.fewshot_count.to_string(),
            "anchors" => join_list(&self.anchors),
            "exemplar_prob" => self.exemplar_prob.to_string(),
            "patch_count" => self.patch_count.to_string(),
            "patch_size" => self.patch_size.to_string(),
            "width" => self.width.to_string(),
            "levels" => self.levels.to_string(),
            "style_dim" => self.style_dim.to_string(),
            "phi_widths" => join_list(&self.phi_widths),
            "phi_seed" => self.phi_seed.to_string(),
            "ablation" => join_list(&self.ablation),
            "log_every" => self.log_every.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "data_root" => self.data_root.clone(),
            "out_dir" => self.out_dir.clone(),
            _ => unreachable!("key list and getter are kept in sync"),
        }
    }

    /// Parses a full config text. Unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate config key `{key}`")));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Full textual form covering every key, parseable by [`TrainConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# run configuration (key = value)\n");
        for key in CONFIG_KEYS {
            out.push_str(&format!("{key} = {}\n", self.get(key)));
        }
        out
    }

    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Patch side after resolving the `0 = resolution / 4` default.
    pub fn effective_patch_size(&self) -> usize {
        if self.patch_size == 0 {
            self.resolution / 4
        } else {
            self.patch_size
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            width: self.width,
            levels: self.levels,
            style_dim: self.style_dim,
            num_domains: self.anchors.len(),
            phi_widths: self.phi_widths.clone(),
            phi_seed: self.phi_seed,
        }
    }

    pub fn loss_weights<S: Scalar>(&self) -> LossWeights<S> {
        LossWeights {
            adv: S::cast(self.lambda_adv),
            patch: S::cast(self.lambda_patch),
            style: S::cast(self.lambda_style),
            recon_image: S::cast(self.lambda_recon_image),
            recon_latent: S::cast(self.lambda_recon_latent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.resolution == 0 || self.resolution % 8 != 0 {
            return fail(format!(
                "resolution: must be a positive multiple of 8, got {}",
                self.resolution
            ));
        }
        let factor = 1usize << self.levels;
        if self.resolution % factor != 0 {
            return fail(format!(
                "resolution: {} is not divisible by 2^levels = {factor}",
                self.resolution
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size: must be at least 1".into());
        }
        if self.iterations == 0 {
            return fail("iterations: must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("lr: must be positive and finite, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return fail(format!("{name}: must lie in [0, 1), got {b}"));
            }
        }
        for (name, l) in [
            ("lambda_adv", self.lambda_adv),
            ("lambda_patch", self.lambda_patch),
            ("lambda_style", self.lambda_style),
            ("lambda_recon_image", self.lambda_recon_image),
            ("lambda_recon_latent", self.lambda_recon_latent),
        ] {
            if !(l.is_finite() && l >= 0.0) {
                return fail(format!("{name}: must be nonnegative and finite, got {l}"));
            }
        }
        if self.fewshot_count == 0 {
            return fail("fewshot_count: must be at least 1".into());
        }
        if self.anchors.first().map(String::as_str) != Some("id") {
            return fail("anchors: the first anchor must be `id` (the source domain)".into());
        }
        for name in &self.anchors {
            if name.is_empty() || name.contains('/') || name.contains('\\') {
                return fail(format!("anchors: `{name}` is not a valid directory name"));
            }
        }
        if !(self.exemplar_prob.is_finite() && (0.0..=1.0).contains(&self.exemplar_prob)) {
            return fail(format!(
                "exemplar_prob: must lie in [0, 1], got {}",
                self.exemplar_prob
            ));
        }
        if self.patch_count == 0 {
            return fail("patch_count: must be at least 1".into());
        }
        let patch = self.effective_patch_size();
        if patch < 4 || patch % 4 != 0 || patch > self.resolution {
            return fail(format!(
                "patch_size: effective size {patch} must be a multiple of 4 in [4, resolution]"
            ));
        }
        if self.log_every == 0 {
            return fail("log_every: must be at least 1".into());
        }
        self.net_config().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_text();
        let back = TrainConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_documented_key_is_settable() {
        let mut cfg = TrainConfig::default();
        for key in CONFIG_KEYS {
            let current = cfg.get(key);
            cfg.set(key, &current).unwrap();
        }
    }

    #[test]
    fn parse_applies_overrides_and_rejects_junk() {
        let cfg = TrainConfig::parse(
            "# comment\nseed = 11\nanchors = id,night,snow\nlambda_style = 2.5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.anchors, vec!["id", "night", "snow"]);
        assert!((cfg.lambda_style - 2.5).abs() < 1e-12);

        match TrainConfig::parse("unknown_key = 3\n") {
            Err(Error::Config(msg)) => assert!(msg.contains("unknown_key")),
            other => panic!("expected config error, got {other:?}"),
        }
        match TrainConfig::parse("seed = 1\nseed = 2\n") {
            Err(Error::Config(msg)) => assert!(msg.contains("duplicate")),
            other => panic!("expected duplicate error, got {other:?}"),
        }
        match TrainConfig::parse("seed = not_a_number\n") {
            Err(Error::Config(msg)) => assert!(msg.contains("seed")),
            other => panic!("expected config error, got {other:?}"),
        }
        assert!(TrainConfig::parse("just text\n").is_err());
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let bad = |key: &str, value: &str| {
            let mut cfg = TrainConfig::default();
            cfg.set(key, value).unwrap();
            cfg.validate().unwrap_err()
        };
        for (key, value) in [
            ("resolution", "50"),
            ("resolution", "0"),
            ("batch_size", "0"),
            ("iterations", "0"),
            ("lr", "0"),
            ("beta1", "1.0"),
            ("exemplar_prob", "1.5"),
            ("patch_size", "13"),
            ("patch_size", "128"),
            ("patch_count", "0"),
            ("fewshot_count", "0"),
            ("anchors", "night,id"),
            ("anchors", "id"),
            ("width", "3"),
            ("log_every", "0"),
        ] {
            match bad(key, value) {
                Error::Config(msg) => {
                    assert!(!msg.is_empty(), "{key}={value} must explain itself")
                }
                other => panic!("{key}={value}: expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn patch_size_auto_resolves_to_quarter_resolution() {
        let mut cfg = TrainConfig::default();
        assert_eq!(cfg.effective_patch_size(), 16);
        cfg.set("patch_size", "8").unwrap();
        assert_eq!(cfg.effective_patch_size(), 8);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut cfg = TrainConfig::default();
        cfg.set("iterations", "123").unwrap();
        cfg.save(&path).unwrap();
        let back = TrainConfig::from_file(&path).unwrap();
        assert_eq!(back, cfg);
        assert!(TrainConfig::from_file(&dir.path().join("missing.cfg")).is_err());
    }

    #[test]
    fn derived_configs_match_fields() {
        let cfg = TrainConfig::default();
        let net = cfg.net_config();
        assert_eq!(net.num_domains, 2);
        assert_eq!(net.width, 32);
        let w: LossWeights<f32> = cfg.loss_weights();
        assert_eq!(w.recon_image, 10.0);
    }
}
