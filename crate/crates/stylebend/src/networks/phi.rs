//! Fixed convolutional feature pyramid. Its parameters are registered
//! non-trainable and never move during training; it supplies per-layer
//! feature statistics, conditioning vectors, and embedding coordinates.

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Conv2d, Init, NORM_EPS};
use crate::tensor::{ParamStore, Tape, Var};
use crate::{Error, Result, Scalar};

/// Stage widths used when a run does not override them.
pub const DEFAULT_WIDTHS: [usize; 4] = [8, 16, 32, 64];

/// All fixed-extractor parameters share this name prefix.
pub const PHI_PREFIX: &str = "phi.";

/// Frozen feature extractor: `stages` 3x3 conv + ReLU blocks with average
/// pooling between stages whenever the spatial plane is even-sized.
pub struct Phi {
    stages: Vec<Conv2d>,
    widths: Vec<usize>,
}

impl Phi {
    /// Randomly initialized, deterministic in `seed`, frozen.
    pub fn from_seed<S: Scalar>(store: &mut ParamStore<S>, widths: &[usize], seed: u64) -> Self {
        assert!(!widths.is_empty(), "extractor needs at least one stage");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = Vec::with_capacity(widths.len());
        let mut cin = 3;
        for (k, &w) in widths.iter().enumerate() {
            stages.push(Conv2d::new(
                store,
                &mut rng,
                &format!("{PHI_PREFIX}stage{k}"),
                cin,
                w,
                3,
                1,
                1,
                Init::He,
                false,
            ));
            cin = w;
        }
        Phi {
            stages,
            widths: widths.to_vec(),
        }
    }

    /// Single 1x1 pass-through stage (identity on non-negative inputs).
    /// Used for calibration tests where feature statistics must equal raw
    /// image statistics.
    pub fn with_identity_stage<S: Scalar>(store: &mut ParamStore<S>) -> Self {
        let mut w = ArrayD::<S>::zeros(IxDyn(&[3, 3, 1, 1]));
        for c in 0..3 {
            w[[c, c, 0, 0]] = S::one();
        }
        let weight = store.add(format!("{PHI_PREFIX}stage0.weight"), w, false);
        let bias = store.add(
            format!("{PHI_PREFIX}stage0.bias"),
            ArrayD::zeros(IxDyn(&[3])),
            false,
        );
        Phi {
            stages: vec![Conv2d {
                weight,
                bias,
                stride: 1,
                pad: 0,
            }],
            widths: vec![3],
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Length of the concatenated (mu, sigma) conditioning vector.
    pub fn conditioning_dim(&self) -> usize {
        2 * self.widths.iter().sum::<usize>()
    }

    /// Width of the deepest stage, the embedding dimension.
    pub fn embed_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Names of every parameter this extractor owns, in order.
    pub fn param_names(&self) -> Vec<String> {
        (0..self.stages.len())
            .flat_map(|k| {
                [
                    format!("{PHI_PREFIX}stage{k}.weight"),
                    format!("{PHI_PREFIX}stage{k}.bias"),
                ]
            })
            .collect()
    }

    /// Overwrites the extractor weights from named arrays (a weights file
    /// decoded elsewhere). Every parameter must be present with its exact
    /// shape.
    pub fn load_arrays<S: Scalar>(
        &self,
        store: &mut ParamStore<S>,
        arrays: &HashMap<String, ArrayD<S>>,
    ) -> Result<()> {
        for name in self.param_names() {
            let id = store
                .id_of(&name)
                .expect("extractor parameters are registered at construction");
            let arr = arrays.get(&name).ok_or_else(|| {
                Error::Checkpoint(format!("extractor weights file is missing `{name}`"))
            })?;
            if arr.shape() != store.value(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "extractor weight `{name}` has shape {:?}, expected {:?}",
                    arr.shape(),
                    store.value(id).shape()
                )));
            }
            store.set_value(id, arr.clone());
        }
        Ok(())
    }

    fn maybe_pool<'t, S: Scalar>(v: Var<'t, S>) -> Var<'t, S> {
        let sh = v.shape();
        if sh[2] > 1 && sh[3] > 1 && sh[2] % 2 == 0 && sh[3] % 2 == 0 {
            v.avgpool2()
        } else {
            v
        }
    }

    /// Per-stage activations (each recorded before the pooling that feeds
    /// the next stage).
    pub fn forward_stages<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Vec<Var<'t, S>> {
        let mut outs = Vec::with_capacity(self.stages.len());
        let mut h = x;
        for (k, conv) in self.stages.iter().enumerate() {
            let a = conv.forward(tape, store, h).relu();
            outs.push(a);
            if k + 1 < self.stages.len() {
                h = Self::maybe_pool(a);
            }
        }
        outs
    }

    /// Per-stage batch-averaged channel statistics `(mu, sigma)`, each of
    /// shape `(C_k)`; `sigma = sqrt(spatial variance + eps)` averaged over
    /// the batch. Differentiable through the tape.
    pub fn stats_vars<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Vec<(Var<'t, S>, Var<'t, S>)> {
        assert!(x.shape()[0] > 0, "statistics need a non-empty batch");
        self.forward_stages(tape, store, x)
            .into_iter()
            .map(|s| {
                let sh = s.shape();
                let (h, w) = (sh[2], sh[3]);
                let mu_img = s.spatial_mean();
                let centered = s - mu_img.bc_nchw(h, w);
                let var_img = (centered * centered).spatial_mean();
                let sigma_img = var_img.add_scalar(S::cast(NORM_EPS)).sqrt0();
                (mu_img.sample_mean(), sigma_img.sample_mean())
            })
            .collect()
    }

    /// Embedding coordinates: global average pool of the deepest stage,
    /// shape `(N, embed_dim)`.
    pub fn embed_var<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Var<'t, S> {
        let stages = self.forward_stages(tape, store, x);
        stages.last().copied().unwrap().spatial_mean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn seeded(shape: &[usize], seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn seed_determines_weights() {
        let build = |seed: u64| {
            let mut store: ParamStore<f32> = ParamStore::new();
            let phi = Phi::from_seed(&mut store, &[4, 8], seed);
            let ids: Vec<_> = store.ids().collect();
            let _ = phi;
            store.fingerprint(&ids)
        };
        assert_eq!(build(7), build(7));
        assert_ne!(build(7), build(8));
    }

    #[test]
    fn stage_shapes_and_pooling_schedule() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let phi = Phi::from_seed(&mut store, &[4, 8, 16], 1);
        let tape = Tape::new();
        let x = tape.constant(seeded(&[2, 3, 16, 16], 2));
        let stages = phi.forward_stages(&tape, &store, x);
        assert_eq!(stages[0].shape(), vec![2, 4, 16, 16]);
        assert_eq!(stages[1].shape(), vec![2, 8, 8, 8]);
        assert_eq!(stages[2].shape(), vec![2, 16, 4, 4]);
        let emb = phi.embed_var(&tape, &store, x);
        assert_eq!(emb.shape(), vec![2, 16]);
        assert_eq!(phi.conditioning_dim(), 2 * (4 + 8 + 16));
        assert_eq!(phi.embed_dim(), 16);
    }

    #[test]
    fn tiny_inputs_stop_pooling() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let phi = Phi::from_seed(&mut store, &[2, 3, 4, 5], 1);
        let tape = Tape::new();
        let x = tape.constant(seeded(&[1, 3, 4, 4], 3));
        let stages = phi.forward_stages(&tape, &store, x);
        assert_eq!(stages[0].shape(), vec![1, 2, 4, 4]);
        assert_eq!(stages[1].shape(), vec![1, 3, 2, 2]);
        assert_eq!(stages[2].shape(), vec![1, 4, 1, 1]);
        assert_eq!(stages[3].shape(), vec![1, 5, 1, 1]);
    }

    #[test]
    fn identity_stage_reports_image_statistics() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let phi = Phi::with_identity_stage(&mut store);
        let tape = Tape::new();
        let x = tape.constant(ArrayD::from_elem(IxDyn(&[2, 3, 6, 6]), 0.4));
        let stats = phi.stats_vars(&tape, &store, x);
        assert_eq!(stats.len(), 1);
        let (mu, sigma) = &stats[0];
        for &m in mu.value().iter() {
            assert!((m - 0.4).abs() < 1e-12);
        }
        let expected_sigma = NORM_EPS.sqrt();
        for &s in sigma.value().iter() {
            assert!((s - expected_sigma).abs() < 1e-12, "sigma {s}");
        }
    }

    #[test]
    fn parameters_are_frozen() {
        let mut store: ParamStore<f32> = ParamStore::new();
        let phi = Phi::from_seed(&mut store, &DEFAULT_WIDTHS, 11);
        assert!(store.trainable_ids().is_empty());
        for name in phi.param_names() {
            assert!(store.id_of(&name).is_some(), "missing {name}");
        }
    }

    #[test]
    fn duplicated_rows_do_not_change_statistics() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let phi = Phi::from_seed(&mut store, &[4, 6], 5);
        let one = seeded(&[1, 3, 8, 8], 9);
        let two = ndarray::concatenate(
            ndarray::Axis(0),
            &[one.view(), one.view()],
        )
        .unwrap();
        let tape = Tape::new();
        let s1 = phi.stats_vars(&tape, &store, tape.constant(one));
        let s2 = phi.stats_vars(&tape, &store, tape.constant(two));
        for ((m1, v1), (m2, v2)) in s1.iter().zip(&s2) {
            for (a, b) in m1.value().iter().zip(m2.value().iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in v1.value().iter().zip(v2.value().iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn load_arrays_round_trip_and_errors() {
        let mut store: ParamStore<f32> = ParamStore::new();
        let phi = Phi::from_seed(&mut store, &[4], 2);
        let mut arrays = HashMap::new();
        for name in phi.param_names() {
            let id = store.id_of(&name).unwrap();
            let mut v = store.value(id).as_ref().clone();
            v.mapv_inplace(|x| x + 1.0);
            arrays.insert(name, v);
        }
        phi.load_arrays(&mut store, &arrays).unwrap();
        let id = store.id_of("phi.stage0.bias").unwrap();
        assert!(store.value(id).iter().all(|&v| v == 1.0));

        let missing: HashMap<String, ArrayD<f32>> = HashMap::new();
        assert!(phi.load_arrays(&mut store, &missing).is_err());

        let mut bad = arrays.clone();
        bad.insert(
            "phi.stage0.weight".into(),
            ArrayD::zeros(IxDyn(&[1, 1, 1, 1])),
        );
        assert!(phi.load_arrays(&mut store, &bad).is_err());
    }
}
