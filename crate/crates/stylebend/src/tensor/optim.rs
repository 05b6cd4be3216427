//! Adam optimizer over a fixed, ordered set of parameters.

use ndarray::ArrayD;

use super::{Gradients, ParamId, ParamStore};
use crate::Scalar;

/// Adam with bias correction. Parameters are visited in the order given at
/// construction, so updates are deterministic. Moment estimates are exposed
/// for checkpointing.
pub struct Adam<S: Scalar> {
    ids: Vec<ParamId>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    m: Vec<ArrayD<S>>,
    v: Vec<ArrayD<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(store: &ParamStore<S>, ids: Vec<ParamId>, lr: f64, beta1: f64, beta2: f64) -> Self {
        let m = ids.iter().map(|id| ArrayD::zeros(store.value(*id).raw_dim())).collect();
        let v = ids.iter().map(|id| ArrayD::zeros(store.value(*id).raw_dim())).collect();
        Adam {
            ids,
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step_count: 0,
            m,
            v,
        }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. Parameters without a gradient are skipped but
    /// their moments still decay with the shared step counter.
    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &Gradients<S>) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let lr_t = self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        let (lr_t, b1, b2, eps) = (
            S::cast(lr_t),
            S::cast(self.beta1),
            S::cast(self.beta2),
            S::cast(self.eps),
        );
        let one = S::one();
        for (k, id) in self.ids.iter().enumerate() {
            let Some(g) = grads.param_grad(*id) else { continue };
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| {
                *m = b1 * *m + (one - b1) * g;
            });
            ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| {
                *v = b2 * *v + (one - b2) * g * g;
            });
            store.update_in_place(*id, |w| {
                ndarray::Zip::from(w).and(&*m).and(&*v).for_each(|w, &m, &v| {
                    *w -= lr_t * m / (v.sqrt() + eps);
                });
            });
        }
    }

    /// Moment arrays and step counter, named for stable serialization.
    pub fn state(&self, store: &ParamStore<S>) -> Vec<(String, ArrayD<S>)> {
        let mut out = Vec::with_capacity(2 * self.ids.len());
        for (k, id) in self.ids.iter().enumerate() {
            let name = store.name(*id);
            out.push((format!("{name}.adam_m"), self.m[k].clone()));
            out.push((format!("{name}.adam_v"), self.v[k].clone()));
        }
        out
    }

    /// Restores moments saved by [`Adam::state`]; missing entries are an error.
    pub fn load_state(
        &mut self,
        store: &ParamStore<S>,
        lookup: &mut dyn FnMut(&str) -> Option<ArrayD<S>>,
        step_count: u64,
    ) -> crate::Result<()> {
        for (k, id) in self.ids.iter().enumerate() {
            let name = store.name(*id);
            for (suffix, slot) in [(".adam_m", &mut self.m[k]), (".adam_v", &mut self.v[k])] {
                let key = format!("{name}{suffix}");
                let arr = lookup(&key).ok_or_else(|| {
                    crate::Error::Checkpoint(format!("missing optimizer state `{key}`"))
                })?;
                if arr.shape() != slot.shape() {
                    return Err(crate::Error::Checkpoint(format!(
                        "optimizer state `{key}` has shape {:?}, expected {:?}",
                        arr.shape(),
                        slot.shape()
                    )));
                }
                *slot = arr;
            }
        }
        self.step_count = step_count;
        Ok(())
    }
}
