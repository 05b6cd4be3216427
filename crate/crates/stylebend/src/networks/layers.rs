//! Parametric building blocks. Every layer registers named parameters in a
//! shared [`ParamStore`] at construction and is a pure function of (store,
//! input) afterwards.

use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{ParamId, ParamStore, Tape, Var};
use crate::Scalar;

/// Epsilon guarding all instance-statistics denominators.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Init {
    /// Kaiming normal, for layers feeding a rectifier.
    He,
    /// Smaller normal, for output layers and linear heads.
    Xavier,
    /// All-zero weights and bias.
    Zero,
}

fn normal_array<S: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> ArrayD<S> {
    let dist = Normal::new(0.0, std).expect("valid std");
    ArrayD::from_shape_fn(IxDyn(shape), |_| S::cast(dist.sample(rng)))
}

fn init_array<S: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, init: Init) -> ArrayD<S> {
    match init {
        Init::He => normal_array(rng, shape, (2.0 / fan_in as f64).sqrt()),
        Init::Xavier => normal_array(rng, shape, (1.0 / fan_in as f64).sqrt()),
        Init::Zero => ArrayD::zeros(IxDyn(shape)),
    }
}

pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        init: Init,
        trainable: bool,
    ) -> Self {
        let w = init_array(rng, &[cout, cin, kernel, kernel], cin * kernel * kernel, init);
        let weight = store.add(format!("{name}.weight"), w, trainable);
        let bias = store.add(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[cout])), trainable);
        Conv2d { weight, bias, stride, pad }
    }

    pub fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Var<'t, S> {
        x.conv2d(
            tape.param(store, self.weight),
            tape.param(store, self.bias),
            self.stride,
            self.pad,
        )
    }
}

pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
    ) -> Self {
        let w = init_array(rng, &[in_dim, out_dim], in_dim, init);
        let weight = store.add(format!("{name}.weight"), w, true);
        let bias = store.add(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[out_dim])), true);
        Linear { weight, bias }
    }

    pub fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Var<'t, S> {
        x.linear(tape.param(store, self.weight), tape.param(store, self.bias))
    }
}

/// `(x - mean) / (std + eps)` per sample and channel over the spatial plane.
pub fn instance_normalize<'t, S: Scalar>(x: Var<'t, S>) -> Var<'t, S> {
    let sh = x.shape();
    let (h, w) = (sh[2], sh[3]);
    let mu = x.spatial_mean();
    let centered = x - mu.bc_nchw(h, w);
    let var = (centered * centered).spatial_mean();
    let denom = var.sqrt0().add_scalar(S::cast(NORM_EPS)).bc_nchw(h, w);
    centered / denom
}

/// Instance-normalizes `x`, then applies a per-sample, per-channel affine.
pub fn adain_affine<'t, S: Scalar>(x: Var<'t, S>, scale: Var<'t, S>, shift: Var<'t, S>) -> Var<'t, S> {
    let sh = x.shape();
    let (h, w) = (sh[2], sh[3]);
    instance_normalize(x) * scale.bc_nchw(h, w) + shift.bc_nchw(h, w)
}

pub struct InstanceNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl InstanceNorm2d {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, channels: usize) -> Self {
        let gamma = store.add(
            format!("{name}.gamma"),
            ArrayD::from_elem(IxDyn(&[channels]), S::one()),
            true,
        );
        let beta = store.add(format!("{name}.beta"), ArrayD::zeros(IxDyn(&[channels])), true);
        InstanceNorm2d { gamma, beta }
    }

    pub fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Var<'t, S> {
        let sh = x.shape();
        let (n, h, w) = (sh[0], sh[2], sh[3]);
        let g = tape.param(store, self.gamma).bc_c(n, h, w);
        let b = tape.param(store, self.beta).bc_c(n, h, w);
        instance_normalize(x) * g + b
    }
}

/// Per-sample normalization over all of (C, H, W) with per-channel affine.
pub struct LayerNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm2d {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, channels: usize) -> Self {
        let gamma = store.add(
            format!("{name}.gamma"),
            ArrayD::from_elem(IxDyn(&[channels]), S::one()),
            true,
        );
        let beta = store.add(format!("{name}.beta"), ArrayD::zeros(IxDyn(&[channels])), true);
        LayerNorm2d { gamma, beta }
    }

    pub fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Var<'t, S> {
        let sh = x.shape();
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        let mu = x.per_sample_mean();
        let centered = x - mu.bc_sample(c, h, w);
        let var = (centered * centered).per_sample_mean();
        let denom = var.sqrt0().add_scalar(S::cast(NORM_EPS)).bc_sample(c, h, w);
        let norm = centered / denom;
        let g = tape.param(store, self.gamma).bc_c(n, h, w);
        let b = tape.param(store, self.beta).bc_c(n, h, w);
        norm * g + b
    }
}

/// Fully connected stack with hidden rectifiers and a linear last layer.
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut ChaCha8Rng,
        name: &str,
        dims: &[usize],
    ) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let init = if i + 2 == dims.len() { Init::Xavier } else { Init::He };
            layers.push(Linear::new(
                store,
                rng,
                &format!("{name}.fc{i}"),
                dims[i],
                dims[i + 1],
                init,
            ));
        }
        Mlp { layers }
    }

    pub fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Var<'t, S> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h);
            if i + 1 < self.layers.len() {
                h = h.relu();
            }
        }
        h
    }
}

/// Residual block with instance normalization: `x + IN(conv(relu(IN(conv(x)))))`.
pub struct ResBlock {
    conv1: Conv2d,
    norm1: InstanceNorm2d,
    conv2: Conv2d,
    norm2: InstanceNorm2d,
}

impl ResBlock {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
    ) -> Self {
        ResBlock {
            conv1: Conv2d::new(store, rng, &format!("{name}.conv1"), channels, channels, 3, 1, 1, Init::He, true),
            norm1: InstanceNorm2d::new(store, &format!("{name}.norm1"), channels),
            conv2: Conv2d::new(store, rng, &format!("{name}.conv2"), channels, channels, 3, 1, 1, Init::He, true),
            norm2: InstanceNorm2d::new(store, &format!("{name}.norm2"), channels),
        }
    }

    pub fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Var<'t, S> {
        let h = self.norm1.forward(tape, store, self.conv1.forward(tape, store, x)).relu();
        let h = self.norm2.forward(tape, store, self.conv2.forward(tape, store, h));
        x + h
    }
}

/// Residual block whose two normalization sites take externally injected
/// per-sample affine parameters.
pub struct StyledResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
    pub channels: usize,
}

impl StyledResBlock {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
    ) -> Self {
        StyledResBlock {
            conv1: Conv2d::new(store, rng, &format!("{name}.conv1"), channels, channels, 3, 1, 1, Init::He, true),
            conv2: Conv2d::new(store, rng, &format!("{name}.conv2"), channels, channels, 3, 1, 1, Init::He, true),
            channels,
        }
    }

    pub fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
        affines: [(Var<'t, S>, Var<'t, S>); 2],
    ) -> Var<'t, S> {
        let h = self.conv1.forward(tape, store, x);
        let h = adain_affine(h, affines[0].0, affines[0].1).relu();
        let h = self.conv2.forward(tape, store, h);
        let h = adain_affine(h, affines[1].0, affines[1].1);
        x + h
    }
}

/// Splits an MLP output `(N, sum 2*C_site)` into per-site `(scale, shift)`
/// pairs; raw scales are offset by one so a zero MLP output is an identity
/// injection.
pub fn split_affines<'t, S: Scalar>(
    params: Var<'t, S>,
    site_channels: &[usize],
) -> Vec<(Var<'t, S>, Var<'t, S>)> {
    let total: usize = site_channels.iter().map(|c| 2 * c).sum();
    assert_eq!(params.shape()[1], total, "affine parameter width mismatch");
    let mut out = Vec::with_capacity(site_channels.len());
    let mut offset = 0;
    for &c in site_channels {
        let scale = params.slice_cols(offset, offset + c).add_scalar(S::one());
        let shift = params.slice_cols(offset + c, offset + 2 * c);
        out.push((scale, shift));
        offset += 2 * c;
    }
    out
}
