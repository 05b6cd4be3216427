//! Finite-difference utilities for validating backward passes.
//!
//! Kept in the library proper (not behind `cfg(test)`) so integration tests
//! can reuse the same oracle.

use ndarray::ArrayD;

/// Central-difference gradient of `f` at `x0`, one coordinate at a time.
pub fn central_diff(f: &mut dyn FnMut(&ArrayD<f64>) -> f64, x0: &ArrayD<f64>, eps: f64) -> ArrayD<f64> {
    let mut x = x0.as_standard_layout().to_owned();
    let mut g = ArrayD::zeros(x0.raw_dim());
    for i in 0..x0.len() {
        let orig = x.as_slice().unwrap()[i];
        x.as_slice_mut().unwrap()[i] = orig + eps;
        let fp = f(&x);
        x.as_slice_mut().unwrap()[i] = orig - eps;
        let fm = f(&x);
        x.as_slice_mut().unwrap()[i] = orig;
        g.as_slice_mut().unwrap()[i] = (fp - fm) / (2.0 * eps);
    }
    g
}

/// Largest absolute difference between the two gradients, relative to the
/// largest magnitude present (floored so that near-zero gradients do not
/// explode the ratio).
pub fn max_rel_err(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shape mismatch");
    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .fold(1e-4_f64, |m, v| m.max(v.abs()));
    let diff = analytic
        .iter()
        .zip(numeric.iter())
        .fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()));
    diff / scale
}
