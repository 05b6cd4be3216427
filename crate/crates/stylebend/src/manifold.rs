//! Learned style manifold over the anchor domains: a simplex of anchor
//! weights (softmax of trainable logits) that either hard-selects one anchor
//! or blends anchor style codes into an interpolated style.

use ndarray::{Array1, ArrayD, IxDyn};

use crate::data::ImageBatch;
use crate::networks::Networks;
use crate::tensor::{ParamId, ParamStore, Tape, Var};
use crate::{Error, Result, Scalar};

/// Store name of the interpolation logits.
pub const WMI_LOGITS: &str = "wmi.logits";

/// Anchor domain set plus the learned interpolation logits. Anchor 0 is the
/// source domain itself; the remaining anchors are data-rich target domains.
pub struct Manifold {
    names: Vec<String>,
    pub logits: ParamId,
}

impl Manifold {
    /// Registers zero-initialized logits (uniform initial weights) in the
    /// shared store. Between 2 and 6 uniquely named anchors are supported.
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, names: &[String]) -> Result<Self> {
        if !(2..=6).contains(&names.len()) {
            return Err(Error::Config(format!(
                "anchor count must be between 2 and 6, got {}",
                names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for n in names {
            if n.is_empty() {
                return Err(Error::Config("anchor names must be non-empty".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("duplicate anchor name `{n}`")));
            }
        }
        let logits = store.add(
            WMI_LOGITS.to_string(),
            ArrayD::zeros(IxDyn(&[names.len()])),
            true,
        );
        Ok(Manifold {
            names: names.to_vec(),
            logits,
        })
    }

    pub fn num_anchors(&self) -> usize {
        self.names.len()
    }

    pub fn anchor_names(&self) -> &[String] {
        &self.names
    }

    pub fn anchor_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownDomain(name.to_string()))
    }

    /// Current simplex weights (softmax of the logits).
    pub fn weights<S: Scalar>(&self, store: &ParamStore<S>) -> Array1<S> {
        let logits = store.value(self.logits);
        let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
        let e: Vec<S> = logits.iter().map(|&v| (v - max).exp()).collect();
        let sum: S = e.iter().copied().fold(S::zero(), |a, b| a + b);
        Array1::from_vec(e.into_iter().map(|v| v / sum).collect())
    }

    /// Simplex weights as a differentiable node.
    pub fn weights_t<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
    ) -> Var<'t, S> {
        tape.param(store, self.logits).softmax1d()
    }

    /// Blends one style node per anchor with the learned weights:
    /// `sum_i softmax(logits)_i * styles[i]`. All styles must share a shape.
    pub fn interpolate_style_t<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        styles: &[Var<'t, S>],
    ) -> Var<'t, S> {
        assert_eq!(
            styles.len(),
            self.num_anchors(),
            "one style per anchor required"
        );
        let shape = styles[0].shape();
        for s in styles {
            assert_eq!(s.shape(), shape, "anchor styles must share a shape");
        }
        let w = self.weights_t(tape, store);
        let mut acc = styles[0].scale_by(w.index1(0));
        for (i, &s) in styles.iter().enumerate().skip(1) {
            acc = acc + s.scale_by(w.index1(i));
        }
        acc
    }

    /// Array-level interpolation of per-anchor style vectors.
    pub fn interpolate_style<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        styles: &[Array1<S>],
    ) -> Result<Array1<S>> {
        if styles.len() != self.num_anchors() {
            return Err(Error::Shape(format!(
                "expected {} anchor styles, got {}",
                self.num_anchors(),
                styles.len()
            )));
        }
        let d = styles[0].len();
        if styles.iter().any(|s| s.len() != d) {
            return Err(Error::Shape("anchor styles must share a dimension".into()));
        }
        let w = self.weights(store);
        let mut acc = Array1::<S>::zeros(d);
        for (i, s) in styles.iter().enumerate() {
            acc = acc + s.mapv(|v| v * w[i]);
        }
        Ok(acc)
    }
}

/// Hard anchor selection: index of the maximal weight (first index wins
/// ties). With weights from a softmax this equals the argmax of the logits.
pub fn select_style<S: Scalar>(weights: &Array1<S>) -> usize {
    assert!(!weights.is_empty(), "weights must be non-empty");
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = i;
        }
    }
    best
}

/// Mean style code of an exemplar batch under the branch for `domain`.
pub fn mean_style<S: Scalar>(
    nets: &Networks<S>,
    exemplars: &ImageBatch<S>,
    domain: usize,
) -> Result<Array1<S>> {
    if exemplars.is_empty() {
        return Err(Error::Data(
            "anchor exemplar batch must be non-empty".into(),
        ));
    }
    let codes = nets.encode_style(exemplars, domain)?;
    let k = codes.shape()[0];
    let d = codes.shape()[1];
    let mut acc = Array1::<S>::zeros(d);
    for i in 0..k {
        for j in 0..d {
            acc[j] += codes[[i, j]];
        }
    }
    Ok(acc.mapv(|v| v / S::cast(k as f64)))
}

/// Per-anchor mean style codes, computed once for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleBank<S: Scalar> {
    pub styles: Vec<Array1<S>>,
}

impl<S: Scalar> StyleBank<S> {
    /// One mean style per anchor from per-anchor exemplar batches (anchor 0,
    /// the source domain, uses source images).
    pub fn compute(nets: &Networks<S>, exemplars: &[ImageBatch<S>]) -> Result<Self> {
        let mut styles = Vec::with_capacity(exemplars.len());
        for (domain, batch) in exemplars.iter().enumerate() {
            styles.push(mean_style(nets, batch, domain)?);
        }
        Ok(StyleBank { styles })
    }
}

/// Repeats a style vector across a batch axis: `(D,) -> (N, D)`.
pub(crate) fn broadcast_style<S: Scalar>(style: &Array1<S>, n: usize) -> ArrayD<S> {
    let d = style.len();
    ArrayD::from_shape_fn(IxDyn(&[n, d]), |idx| style[idx[1]])
}

/// Translates source images into one anchor domain using the mean style of
/// that anchor's exemplars.
pub fn translate_to_anchor<S: Scalar>(
    nets: &Networks<S>,
    source: &ImageBatch<S>,
    anchor_exemplars: &ImageBatch<S>,
    domain: usize,
) -> Result<ImageBatch<S>> {
    if domain >= nets.cfg.num_domains {
        return Err(Error::UnknownDomain(format!(
            "{domain} (have {} branches)",
            nets.cfg.num_domains
        )));
    }
    let style = mean_style(nets, anchor_exemplars, domain)?;
    let content = nets.encode_content(source)?;
    nets.decode(&content, &broadcast_style(&style, source.len()))
}

/// Translates source images with the weight-interpolated style across all
/// anchors; `exemplars[i]` supplies anchor `i`'s style (index 0 = source).
pub fn translate_interpolated<S: Scalar>(
    nets: &Networks<S>,
    manifold: &Manifold,
    source: &ImageBatch<S>,
    exemplars: &[ImageBatch<S>],
) -> Result<ImageBatch<S>> {
    let bank = StyleBank::compute(nets, exemplars)?;
    translate_with_bank(nets, manifold, source, &bank)
}

/// Same as [`translate_interpolated`] but with precomputed mean styles.
pub fn translate_with_bank<S: Scalar>(
    nets: &Networks<S>,
    manifold: &Manifold,
    source: &ImageBatch<S>,
    bank: &StyleBank<S>,
) -> Result<ImageBatch<S>> {
    let z_w = manifold.interpolate_style(&nets.store, &bank.styles)?;
    let content = nets.encode_content(source)?;
    nets.decode(&content, &broadcast_style(&z_w, source.len()))
}
