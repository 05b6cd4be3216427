//! Residual refinement on top of the interpolated-style translation: a
//! conditioning vector (feature statistics of one exemplar, or unit noise of
//! the same dimension) drives a zero-initialized residual generator whose
//! output is added to the base translation and clamped back to image range.

use ndarray::{Array1, ArrayD};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::ImageBatch;
use crate::manifold::{broadcast_style, Manifold, StyleBank};
use crate::networks::Networks;
use crate::tensor::{Tape, Var};
use crate::{Error, Result, Scalar};

/// How the residual generator is conditioned.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ConditioningMode {
    /// Feature statistics of a single exemplar image.
    Exemplar,
    /// Unit-normal noise of the same dimension.
    General,
}

/// Conditioning vector from exactly one exemplar image: the flattened
/// per-stage `(mu, sigma)` statistics of the fixed extractor.
pub fn exemplar_conditioning<S: Scalar>(
    nets: &Networks<S>,
    exemplar: &ImageBatch<S>,
) -> Result<Array1<S>> {
    if exemplar.len() != 1 {
        return Err(Error::Shape(format!(
            "exemplar conditioning takes exactly one image, got {}",
            exemplar.len()
        )));
    }
    Ok(nets.extract_statistics(exemplar)?.flatten())
}

/// Unit-normal conditioning vector of dimension `dim`.
pub fn general_conditioning<S: Scalar>(dim: usize, rng: &mut ChaCha8Rng) -> Array1<S> {
    Array1::from_shape_fn(dim, |_| {
        let v: f64 = StandardNormal.sample(rng);
        S::cast(v)
    })
}

/// Residual image `(N, 3, H, W)` from content features and one conditioning
/// vector (shared by the whole batch).
pub fn residual<S: Scalar>(
    nets: &Networks<S>,
    content: &ArrayD<S>,
    conditioning: &Array1<S>,
) -> Result<ArrayD<S>> {
    if content.ndim() != 4 || content.shape()[1] != nets.cfg.content_channels() {
        return Err(Error::Shape(format!(
            "residual expects content (N, {}, h, w), got {:?}",
            nets.cfg.content_channels(),
            content.shape()
        )));
    }
    let d = nets.phi.conditioning_dim();
    if conditioning.len() != d {
        return Err(Error::Shape(format!(
            "conditioning must have dimension {d}, got {}",
            conditioning.len()
        )));
    }
    let n = content.shape()[0];
    let tape = Tape::new();
    let c = tape.constant(content.clone());
    let cond = tape.constant(broadcast_style(conditioning, n));
    Ok(nets.residual_t(&tape, c, cond).value().as_ref().clone())
}

/// `clamp(base + residual, -1, 1)` as a differentiable node.
pub fn compose_t<'t, S: Scalar>(base: Var<'t, S>, residual: Var<'t, S>) -> Var<'t, S> {
    (base + residual).clamp(-S::one(), S::one())
}

/// Adds the residual to the base translation and clamps to image range.
pub fn compose<S: Scalar>(base: &ImageBatch<S>, residual: &ArrayD<S>) -> Result<ImageBatch<S>> {
    if base.data().shape() != residual.shape() {
        return Err(Error::Shape(format!(
            "compose shape mismatch: base {:?}, residual {:?}",
            base.data().shape(),
            residual.shape()
        )));
    }
    let tape = Tape::new();
    let b = tape.constant(base.data().clone());
    let r = tape.constant(residual.clone());
    let y = compose_t(b, r).value().as_ref().clone();
    ImageBatch::new(y)
}

/// Resolves the conditioning vector for a mode, enforcing that exemplar mode
/// has exactly one exemplar image and general mode has none.
pub fn resolve_conditioning<S: Scalar>(
    nets: &Networks<S>,
    mode: ConditioningMode,
    exemplar: Option<&ImageBatch<S>>,
    rng: &mut ChaCha8Rng,
) -> Result<Array1<S>> {
    match (mode, exemplar) {
        (ConditioningMode::Exemplar, Some(ex)) => exemplar_conditioning(nets, ex),
        (ConditioningMode::Exemplar, None) => Err(Error::Config(
            "exemplar conditioning requires an exemplar image".into(),
        )),
        (ConditioningMode::General, None) => {
            Ok(general_conditioning(nets.phi.conditioning_dim(), rng))
        }
        (ConditioningMode::General, Some(_)) => Err(Error::Config(
            "general conditioning takes no exemplar image".into(),
        )),
    }
}

/// Base translation with an explicit style code, refined by a conditioned
/// residual when a conditioning vector is given.
pub fn translate_styled<S: Scalar>(
    nets: &Networks<S>,
    source: &ImageBatch<S>,
    style: &Array1<S>,
    conditioning: Option<&Array1<S>>,
) -> Result<ImageBatch<S>> {
    let content = nets.encode_content(source)?;
    let base = nets.decode(&content, &broadcast_style(style, source.len()))?;
    match conditioning {
        None => Ok(base),
        Some(cond) => {
            let r = residual(nets, &content, cond)?;
            compose(&base, &r)
        }
    }
}

/// Full translation: interpolated-style base plus conditioned residual.
/// `Exemplar` mode requires a single exemplar image; `General` mode forbids
/// one and draws unit noise instead.
pub fn translate<S: Scalar>(
    nets: &Networks<S>,
    manifold: &Manifold,
    bank: &StyleBank<S>,
    source: &ImageBatch<S>,
    mode: ConditioningMode,
    exemplar: Option<&ImageBatch<S>>,
    rng: &mut ChaCha8Rng,
) -> Result<ImageBatch<S>> {
    let conditioning = resolve_conditioning(nets, mode, exemplar, rng)?;
    let z_w = manifold.interpolate_style(&nets.store, &bank.styles)?;
    translate_styled(nets, source, &z_w, Some(&conditioning))
}
