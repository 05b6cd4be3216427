//! Training losses: feature-statistics alignment, rotated-patch least-squares
//! adversarial terms, multi-branch adversarial terms, and reconstruction
//! penalties, plus the weighted assembly into one report.

use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::ImageBatch;
use crate::networks::{FeatureStatistics, Networks};
use crate::tensor::{PatchSpec, Tape, Var};
use crate::{Error, Result, Scalar};

/// Scalar weights of the joint objective.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights<S: Scalar> {
    pub adv: S,
    pub patch: S,
    pub style: S,
    pub recon_image: S,
    pub recon_latent: S,
}

impl<S: Scalar> Default for LossWeights<S> {
    fn default() -> Self {
        LossWeights {
            adv: S::one(),
            patch: S::one(),
            style: S::one(),
            recon_image: S::cast(10.0),
            recon_latent: S::one(),
        }
    }
}

/// Mean absolute difference.
pub fn l1_mean_t<'t, S: Scalar>(a: Var<'t, S>, b: Var<'t, S>) -> Var<'t, S> {
    (a - b).abs().mean_all()
}

/// Least-squares realness: `mean((s - 1)^2)`.
pub fn lsgan_to_one_t<'t, S: Scalar>(scores: Var<'t, S>) -> Var<'t, S> {
    let d = scores.add_scalar(-S::one());
    (d * d).mean_all()
}

/// Least-squares fakeness: `mean(s^2)`.
pub fn lsgan_to_zero_t<'t, S: Scalar>(scores: Var<'t, S>) -> Var<'t, S> {
    (scores * scores).mean_all()
}

fn l2_norm_t<'t, S: Scalar>(v: Var<'t, S>) -> Var<'t, S> {
    (v * v).sum_all().sqrt0()
}

/// Feature-statistics alignment of a generated batch against fixed target
/// statistics: per extractor stage, the (unsquared) Euclidean distances of
/// the batch-averaged channel means and deviations, summed over stages.
pub fn style_loss_t<'t, S: Scalar>(
    nets: &Networks<S>,
    tape: &'t Tape<S>,
    generated: Var<'t, S>,
    target: &FeatureStatistics<S>,
) -> Var<'t, S> {
    let gen_stats = nets.statistics_t(tape, generated);
    assert_eq!(
        gen_stats.len(),
        target.stages(),
        "stage count mismatch between generated and target statistics"
    );
    let mut total: Option<Var<'t, S>> = None;
    for (k, (mu_g, sigma_g)) in gen_stats.into_iter().enumerate() {
        let mu_t = tape.constant(target.mu[k].clone().into_dyn());
        let sigma_t = tape.constant(target.sigma[k].clone().into_dyn());
        let term = l2_norm_t(mu_g - mu_t) + l2_norm_t(sigma_g - sigma_t);
        total = Some(match total {
            None => term,
            Some(t) => t + term,
        });
    }
    total.expect("at least one extractor stage")
}

/// Array-level statistics alignment between two image batches (the second
/// batch provides the target statistics).
pub fn style_loss<S: Scalar>(
    nets: &Networks<S>,
    generated: &ImageBatch<S>,
    target: &ImageBatch<S>,
) -> Result<S> {
    let target_stats = nets.extract_statistics(target)?;
    if generated.is_empty() {
        return Err(Error::Shape(
            "style loss needs a non-empty generated batch".into(),
        ));
    }
    let tape = Tape::new();
    let g = tape.constant(generated.data().clone());
    Ok(style_loss_t(nets, &tape, g, &target_stats).scalar())
}

/// Random patch layout: `count` square patches of side `size` per image,
/// uniformly positioned, each rotated by an independent uniform quarter
/// turn. Draw order per patch: top, left, rotation.
pub fn sample_patch_plan(
    n_images: usize,
    height: usize,
    width: usize,
    count_per_image: usize,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PatchSpec>> {
    if size == 0 || size > height || size > width {
        return Err(Error::Shape(format!(
            "patch size {size} does not fit {height}x{width} images"
        )));
    }
    if count_per_image == 0 {
        return Err(Error::Config("patch count must be at least 1".into()));
    }
    let mut specs = Vec::with_capacity(n_images * count_per_image);
    for image in 0..n_images {
        for _ in 0..count_per_image {
            let top = rng.gen_range(0..=height - size);
            let left = rng.gen_range(0..=width - size);
            let rot = rng.gen_range(0..4u8);
            specs.push(PatchSpec {
                image,
                top,
                left,
                rot,
            });
        }
    }
    Ok(specs)
}

/// Extracts randomly placed, randomly rotated patches `(N*count, 3, size,
/// size)` from an image batch.
pub fn sample_patches<S: Scalar>(
    images: &ImageBatch<S>,
    count_per_image: usize,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ArrayD<S>> {
    if images.is_empty() {
        return Err(Error::Shape("cannot sample patches from an empty batch".into()));
    }
    let specs = sample_patch_plan(
        images.len(),
        images.height(),
        images.width(),
        count_per_image,
        size,
        rng,
    )?;
    let tape = Tape::new();
    let x = tape.constant(images.data().clone());
    Ok(x.extract_patches(&specs, size).value().as_ref().clone())
}

/// Generator-side patch realism: pushes patch scores of the generated batch
/// toward the real label.
pub fn patch_loss_g_t<'t, S: Scalar>(
    nets: &Networks<S>,
    tape: &'t Tape<S>,
    generated: Var<'t, S>,
    specs: &[PatchSpec],
    size: usize,
) -> Var<'t, S> {
    let patches = generated.extract_patches(specs, size);
    lsgan_to_one_t(nets.discriminate_patches_t(tape, patches))
}

/// Discriminator-side patch loss: real target patches toward 1, generated
/// patches (cut from a detached copy) toward 0.
pub fn patch_loss_d_t<'t, S: Scalar>(
    nets: &Networks<S>,
    tape: &'t Tape<S>,
    target: Var<'t, S>,
    target_specs: &[PatchSpec],
    generated: Var<'t, S>,
    generated_specs: &[PatchSpec],
    size: usize,
) -> Var<'t, S> {
    let real = target.extract_patches(target_specs, size);
    let fake = generated.detach().extract_patches(generated_specs, size);
    lsgan_to_one_t(nets.discriminate_patches_t(tape, real))
        + lsgan_to_zero_t(nets.discriminate_patches_t(tape, fake))
}

/// Generator-side branch adversarial loss for one anchor domain.
pub fn adv_loss_g_t<'t, S: Scalar>(
    nets: &Networks<S>,
    tape: &'t Tape<S>,
    fake: Var<'t, S>,
    domain: usize,
) -> Var<'t, S> {
    lsgan_to_one_t(nets.discriminate_multitarget_t(tape, fake, domain))
}

/// Discriminator-side branch adversarial loss for one anchor domain; the
/// generated batch is detached.
pub fn adv_loss_d_t<'t, S: Scalar>(
    nets: &Networks<S>,
    tape: &'t Tape<S>,
    real: Var<'t, S>,
    fake: Var<'t, S>,
    domain: usize,
) -> Var<'t, S> {
    lsgan_to_one_t(nets.discriminate_multitarget_t(tape, real, domain))
        + lsgan_to_zero_t(nets.discriminate_multitarget_t(tape, fake.detach(), domain))
}

/// Reconstruction penalties:
/// - image: decoding the source's own content and style must return it;
/// - content: re-encoding the translated image must return the content;
/// - style: re-encoding the translated image under the target branch must
///   return the style that produced it.
pub fn reconstruction_losses_t<'t, S: Scalar>(
    nets: &Networks<S>,
    tape: &'t Tape<S>,
    source: Var<'t, S>,
    content: Var<'t, S>,
    translated: Var<'t, S>,
    style_used: Var<'t, S>,
    domain: usize,
) -> (Var<'t, S>, Var<'t, S>, Var<'t, S>) {
    let own_style = nets.encode_style_t(tape, source, 0);
    let self_recon = nets.decode_t(tape, content, own_style);
    let recon_image = l1_mean_t(self_recon, source);

    let re_content = nets.encode_content_t(tape, translated);
    let recon_content = l1_mean_t(re_content, content);

    let re_style = nets.encode_style_t(tape, translated, domain);
    let recon_style = l1_mean_t(re_style, style_used);

    (recon_image, recon_content, recon_style)
}

/// Every scalar of one optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport<S: Scalar> {
    pub style: S,
    pub patch_g: S,
    pub patch_d: S,
    pub adv_g: S,
    pub adv_d: S,
    pub recon_image: S,
    pub recon_content: S,
    pub recon_style: S,
    pub total_g: S,
    pub total_d: S,
}

impl<S: Scalar> LossReport<S> {
    /// `(name, value)` pairs in a fixed order, for logging.
    pub fn entries(&self) -> [(&'static str, S); 10] {
        [
            ("style", self.style),
            ("patch_G", self.patch_g),
            ("patch_D", self.patch_d),
            ("adv_G", self.adv_g),
            ("adv_D", self.adv_d),
            ("recon_image", self.recon_image),
            ("recon_content", self.recon_content),
            ("recon_style", self.recon_style),
            ("total_G", self.total_g),
            ("total_D", self.total_d),
        ]
    }
}

impl<S: Scalar> LossWeights<S> {
    /// Weighted generator objective on the tape.
    pub fn combine_g_t<'t>(
        &self,
        style: Var<'t, S>,
        patch_g: Var<'t, S>,
        adv_g: Var<'t, S>,
        recon_image: Var<'t, S>,
        recon_content: Var<'t, S>,
        recon_style: Var<'t, S>,
    ) -> Var<'t, S> {
        adv_g.scale(self.adv)
            + patch_g.scale(self.patch)
            + style.scale(self.style)
            + recon_image.scale(self.recon_image)
            + (recon_content + recon_style).scale(self.recon_latent)
    }

    /// Weighted discriminator objective on the tape.
    pub fn combine_d_t<'t>(&self, adv_d: Var<'t, S>, patch_d: Var<'t, S>) -> Var<'t, S> {
        adv_d.scale(self.adv) + patch_d.scale(self.patch)
    }
}

/// Validates every term and builds the report. Any non-finite value is a
/// numerical error naming the offending term.
#[allow(clippy::too_many_arguments)]
pub fn assemble<S: Scalar>(
    style: S,
    patch_g: S,
    patch_d: S,
    adv_g: S,
    adv_d: S,
    recon_image: S,
    recon_content: S,
    recon_style: S,
    total_g: S,
    total_d: S,
) -> Result<LossReport<S>> {
    let report = LossReport {
        style,
        patch_g,
        patch_d,
        adv_g,
        adv_d,
        recon_image,
        recon_content,
        recon_style,
        total_g,
        total_d,
    };
    for (name, value) in report.entries() {
        if !value.is_finite() {
            return Err(Error::Numerical {
                term: name.to_string(),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::NetConfig;
    use crate::tensor::gradcheck;
    use ndarray::IxDyn;
    use rand::SeedableRng;

    fn small_nets(seed: u64) -> Networks<f64> {
        Networks::new(
            NetConfig {
                width: 4,
                levels: 2,
                style_dim: 4,
                num_domains: 2,
                phi_widths: vec![4, 6],
                phi_seed: 13,
            },
            seed,
        )
        .unwrap()
    }

    fn identity_nets(seed: u64) -> Networks<f64> {
        let mut nets = Networks::new(
            NetConfig {
                width: 4,
                levels: 2,
                style_dim: 4,
                num_domains: 2,
                phi_widths: vec![3],
                phi_seed: 13,
            },
            seed,
        )
        .unwrap();
        nets.calibrate_identity_extractor().unwrap();
        nets
    }

    fn batch(shape: &[usize], seed: u64) -> ImageBatch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBatch::new(ArrayD::from_shape_fn(IxDyn(shape), |_| {
            rng.gen_range(-1.0..1.0)
        }))
        .unwrap()
    }

    #[test]
    fn style_loss_closed_form_on_constant_images() {
        let nets = identity_nets(1);
        let a = ImageBatch::new(ArrayD::from_elem(IxDyn(&[2, 3, 8, 8]), 0.3)).unwrap();
        let b = ImageBatch::new(ArrayD::from_elem(IxDyn(&[2, 3, 8, 8]), 0.7)).unwrap();
        let loss = style_loss(&nets, &a, &b).unwrap();
        // Means differ by 0.4 in each of 3 channels; deviations are equal.
        let expect = 0.4 * 3.0f64.sqrt();
        assert!(
            (loss - expect).abs() < 1e-9,
            "loss {loss} expected {expect}"
        );
    }

    #[test]
    fn style_loss_is_zero_for_identical_batches_and_symmetric() {
        let nets = small_nets(2);
        let a = batch(&[2, 3, 16, 16], 3);
        let b = batch(&[2, 3, 16, 16], 4);
        let same = style_loss(&nets, &a, &a).unwrap();
        assert!(same.abs() < 1e-9, "self distance {same}");
        let ab = style_loss(&nets, &a, &b).unwrap();
        let ba = style_loss(&nets, &b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);
        assert!(ab > 0.0);
    }

    #[test]
    fn style_loss_gradient_matches_finite_differences() {
        let nets = small_nets(5);
        let x0 = batch(&[1, 3, 4, 4], 6).into_data();
        let target = batch(&[1, 3, 4, 4], 7);
        let target_stats = nets.extract_statistics(&target).unwrap();

        let tape = Tape::new();
        let x = tape.constant(x0.clone());
        let loss = style_loss_t(&nets, &tape, x, &target_stats);
        let grads = tape.backward(loss);
        let analytic = grads.get(x).unwrap().clone();

        let mut f = |v: &ArrayD<f64>| -> f64 {
            let t = Tape::new();
            let xv = t.constant(v.clone());
            style_loss_t(&nets, &t, xv, &target_stats).scalar()
        };
        let numeric = gradcheck::central_diff(&mut f, &x0, 1e-5);
        let rel = gradcheck::max_rel_err(&analytic, &numeric);
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn patch_rotations_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let specs = sample_patch_plan(1250, 32, 32, 8, 8, &mut rng).unwrap();
        assert_eq!(specs.len(), 10_000);
        let mut counts = [0usize; 4];
        for s in &specs {
            counts[s.rot as usize] += 1;
            assert!(s.top <= 24 && s.left <= 24);
        }
        for (r, &c) in counts.iter().enumerate() {
            let freq = c as f64 / 10_000.0;
            assert!(
                (freq - 0.25).abs() < 0.02,
                "rotation {r} frequency {freq}"
            );
        }
    }

    #[test]
    fn patch_sampling_shapes_and_determinism() {
        let images = batch(&[3, 3, 16, 16], 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = sample_patches(&images, 4, 4, &mut rng).unwrap();
        assert_eq!(p.shape(), &[12, 3, 4, 4]);
        let mut rng2 = ChaCha8Rng::seed_from_u64(10);
        let q = sample_patches(&images, 4, 4, &mut rng2).unwrap();
        assert_eq!(p, q);
        assert!(sample_patches(&images, 4, 20, &mut rng).is_err());
        assert!(sample_patches(&images, 0, 4, &mut rng).is_err());
    }

    #[test]
    fn lsgan_fixed_score_oracle() {
        let tape: Tape<f64> = Tape::new();
        let scores = tape.constant(ArrayD::from_shape_vec(IxDyn(&[2]), vec![0.0, 1.0]).unwrap());
        assert!((lsgan_to_one_t(scores).scalar() - 0.5).abs() < 1e-12);
        let scores2 = tape.constant(ArrayD::from_shape_vec(IxDyn(&[2]), vec![0.0, 2.0]).unwrap());
        assert!((lsgan_to_zero_t(scores2).scalar() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn discriminator_losses_do_not_touch_generator_parameters() {
        let nets = small_nets(11);
        let tape = Tape::new();
        let src = tape.constant(batch(&[1, 3, 16, 16], 12).into_data());
        let content = nets.encode_content_t(&tape, src);
        let style = nets.encode_style_t(&tape, src, 1);
        let fake = nets.decode_t(&tape, content, style);
        let real = tape.constant(batch(&[1, 3, 16, 16], 13).into_data());

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let specs_real = sample_patch_plan(1, 16, 16, 4, 4, &mut rng).unwrap();
        let specs_fake = sample_patch_plan(1, 16, 16, 4, 4, &mut rng).unwrap();
        let loss_d = adv_loss_d_t(&nets, &tape, real, fake, 1)
            + patch_loss_d_t(&nets, &tape, real, &specs_real, fake, &specs_fake, 4);
        let grads = tape.backward(loss_d);
        for id in nets.generator_ids() {
            assert!(
                grads.param_grad(id).is_none(),
                "generator parameter `{}` received discriminator gradient",
                nets.store.name(id)
            );
        }
        let disc_with_grads = nets
            .discriminator_ids()
            .iter()
            .filter(|&&id| grads.param_grad(id).is_some())
            .count();
        assert!(disc_with_grads > 0, "discriminator must receive gradients");
    }

    #[test]
    fn generator_losses_reach_generator_parameters() {
        let nets = small_nets(15);
        let tape = Tape::new();
        let src = tape.constant(batch(&[1, 3, 16, 16], 16).into_data());
        let content = nets.encode_content_t(&tape, src);
        let style = nets.encode_style_t(&tape, src, 1);
        let fake = nets.decode_t(&tape, content, style);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let specs = sample_patch_plan(1, 16, 16, 4, 4, &mut rng).unwrap();
        let loss_g = adv_loss_g_t(&nets, &tape, fake, 1)
            + patch_loss_g_t(&nets, &tape, fake, &specs, 4);
        let grads = tape.backward(loss_g);
        let enc_w = nets.store.id_of("enc.stem.weight").unwrap();
        let dec_w = nets.store.id_of("dec.out.weight").unwrap();
        assert!(grads.param_grad(enc_w).is_some());
        assert!(grads.param_grad(dec_w).is_some());
    }

    #[test]
    fn reconstruction_terms_are_zero_only_for_perfect_cycles() {
        let nets = small_nets(18);
        let tape = Tape::new();
        let src = tape.constant(batch(&[1, 3, 16, 16], 19).into_data());
        let content = nets.encode_content_t(&tape, src);
        let style = nets.encode_style_t(&tape, src, 1);
        let translated = nets.decode_t(&tape, content, style);
        let (ri, rc, rs) =
            reconstruction_losses_t(&nets, &tape, src, content, translated, style, 1);
        assert!(ri.scalar() > 0.0);
        assert!(rc.scalar() > 0.0);
        assert!(rs.scalar() > 0.0);
    }

    #[test]
    fn assemble_rejects_non_finite_terms() {
        let ok = assemble(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 2.0, 0.8);
        assert!(ok.is_ok());
        let bad = assemble(0.1, f64::NAN, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 2.0, 0.8);
        match bad {
            Err(Error::Numerical { term }) => assert_eq!(term, "patch_G"),
            other => panic!("expected numerical error, got {other:?}"),
        }
        let inf = assemble(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, f64::INFINITY, 0.8);
        assert!(matches!(inf, Err(Error::Numerical { .. })));
    }

    #[test]
    fn combined_objectives_match_manual_weighting() {
        let w = LossWeights::<f64> {
            adv: 1.0,
            patch: 2.0,
            style: 3.0,
            recon_image: 4.0,
            recon_latent: 5.0,
        };
        let tape: Tape<f64> = Tape::new();
        let c = |v: f64| tape.constant(ArrayD::from_elem(IxDyn(&[]), v));
        let g = w.combine_g_t(c(0.1), c(0.2), c(0.3), c(0.4), c(0.5), c(0.6));
        let expect = 0.3 + 2.0 * 0.2 + 3.0 * 0.1 + 4.0 * 0.4 + 5.0 * (0.5 + 0.6);
        assert!((g.scalar() - expect).abs() < 1e-12);
        let d = w.combine_d_t(c(0.7), c(0.8));
        assert!((d.scalar() - (0.7 + 2.0 * 0.8)).abs() < 1e-12);
    }
}
