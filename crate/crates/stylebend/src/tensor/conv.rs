//! Two-dimensional convolution as im2col plus matrix multiplication.
//!
//! Patch columns are cached inside the backward closure, trading memory for
//! one im2col pass; at the image sizes this crate trains on that is cheap.

use std::rc::Rc;

use ndarray::{Array2, ArrayD, Axis, IxDyn};

use super::Var;
use crate::Scalar;

/// Output spatial extent; stride must divide the padded span exactly so
/// that encoder and decoder stay shape-symmetric.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    let span = input + 2 * pad - kernel;
    assert!(
        span % stride == 0,
        "conv geometry not exact: input {input}, kernel {kernel}, stride {stride}, pad {pad}"
    );
    span / stride + 1
}

/// Unfolds `(N, C, H, W)` into `(N*Ho*Wo, C*kh*kw)` patch rows with zero
/// padding. Row order is batch-major, then output row, then output column.
fn im2col<S: Scalar>(
    x: &ArrayD<S>,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> (Array2<S>, usize, usize) {
    let sh = x.shape();
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let ho = conv_out_dim(h, kernel, stride, pad);
    let wo = conv_out_dim(w, kernel, stride, pad);
    let kcols = c * kernel * kernel;
    let rows = n * ho * wo;
    let xs = x.as_slice().expect("standard layout");
    let mut out = vec![S::zero(); rows * kcols];
    for ni in 0..n {
        for oi in 0..ho {
            let hi0 = (oi * stride) as isize - pad as isize;
            for oj in 0..wo {
                let wi0 = (oj * stride) as isize - pad as isize;
                let row = ((ni * ho + oi) * wo + oj) * kcols;
                for ci in 0..c {
                    let plane = (ni * c + ci) * h;
                    let col0 = row + ci * kernel * kernel;
                    for ki in 0..kernel {
                        let hi = hi0 + ki as isize;
                        if hi < 0 || hi >= h as isize {
                            continue;
                        }
                        let src = (plane + hi as usize) * w;
                        let dst = col0 + ki * kernel;
                        for kj in 0..kernel {
                            let wi = wi0 + kj as isize;
                            if wi < 0 || wi >= w as isize {
                                continue;
                            }
                            out[dst + kj] = xs[src + wi as usize];
                        }
                    }
                }
            }
        }
    }
    (Array2::from_shape_vec((rows, kcols), out).unwrap(), ho, wo)
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back onto the image grid.
fn col2im<S: Scalar>(
    cols: &Array2<S>,
    shape: &[usize],
    kernel: usize,
    stride: usize,
    pad: usize,
) -> ArrayD<S> {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let ho = conv_out_dim(h, kernel, stride, pad);
    let wo = conv_out_dim(w, kernel, stride, pad);
    let kcols = c * kernel * kernel;
    let cs = cols.as_slice().expect("standard layout");
    let mut out = vec![S::zero(); n * c * h * w];
    for ni in 0..n {
        for oi in 0..ho {
            let hi0 = (oi * stride) as isize - pad as isize;
            for oj in 0..wo {
                let wi0 = (oj * stride) as isize - pad as isize;
                let row = ((ni * ho + oi) * wo + oj) * kcols;
                for ci in 0..c {
                    let plane = (ni * c + ci) * h;
                    let col0 = row + ci * kernel * kernel;
                    for ki in 0..kernel {
                        let hi = hi0 + ki as isize;
                        if hi < 0 || hi >= h as isize {
                            continue;
                        }
                        let dst = (plane + hi as usize) * w;
                        let src = col0 + ki * kernel;
                        for kj in 0..kernel {
                            let wi = wi0 + kj as isize;
                            if wi < 0 || wi >= w as isize {
                                continue;
                            }
                            out[dst + wi as usize] += cs[src + kj];
                        }
                    }
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), out).unwrap()
}

impl<'t, S: Scalar> Var<'t, S> {
    /// `x (N, Cin, H, W) * w (Cout, Cin, k, k) + b (Cout,)` with zero padding.
    pub fn conv2d(self, weight: Var<'t, S>, bias: Var<'t, S>, stride: usize, pad: usize) -> Self {
        let x = self.value();
        let wv = weight.value();
        let bv = bias.value();
        assert_eq!(x.ndim(), 4, "conv2d input must be NCHW");
        assert_eq!(wv.ndim(), 4, "conv2d weight must be (Cout, Cin, k, k)");
        let (n, cin) = (x.shape()[0], x.shape()[1]);
        let (cout, wcin, kernel) = (wv.shape()[0], wv.shape()[1], wv.shape()[2]);
        assert_eq!(wv.shape()[2], wv.shape()[3], "conv2d kernel must be square");
        assert_eq!(cin, wcin, "conv2d: channel mismatch");
        assert_eq!(bv.shape(), [cout], "conv2d: bias dim mismatch");

        let (cols, ho, wo) = im2col(&x, kernel, stride, pad);
        let w2 = wv.view().into_shape((cout, cin * kernel * kernel)).unwrap();
        let mut y2 = cols.dot(&w2.t());
        y2 += &bv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let y = y2
            .into_shape((n, ho, wo, cout))
            .unwrap()
            .permuted_axes([0, 3, 1, 2])
            .as_standard_layout()
            .to_owned()
            .into_dyn();

        let cols = Rc::new(cols);
        let xshape = x.shape().to_vec();
        let wshape = wv.shape().to_vec();
        let back = move |g: &ArrayD<S>| {
            let g2 = g
                .view()
                .permuted_axes(&[0, 2, 3, 1][..])
                .as_standard_layout()
                .to_owned()
                .into_shape((n * ho * wo, cout))
                .unwrap();
            let w2 = wv.view().into_shape((cout, cin * kernel * kernel)).unwrap();
            let gw = g2
                .t()
                .dot(&*cols)
                .into_shape(IxDyn(&wshape))
                .unwrap();
            let gcols = g2.dot(&w2);
            let gx = col2im(&gcols, &xshape, kernel, stride, pad);
            let gb = g2.sum_axis(Axis(0)).into_dyn();
            vec![gx, gw, gb]
        };
        self.tape
            .push_var(y, vec![self.idx, weight.idx, bias.idx], Some(Box::new(back)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{gradcheck, Tape, Var};
    use ndarray::ArrayD;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded(shape: &[usize], seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-1.0..1.0))
    }

    /// Direct sliding-window convolution used as the forward oracle.
    fn conv_reference(
        x: &ArrayD<f64>,
        w: &ArrayD<f64>,
        b: &ArrayD<f64>,
        stride: usize,
        pad: usize,
    ) -> ArrayD<f64> {
        let (n, cin, h, wdim) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        let ho = conv_out_dim(h, k, stride, pad);
        let wo = conv_out_dim(wdim, k, stride, pad);
        let mut y = ArrayD::zeros(IxDyn(&[n, cout, ho, wo]));
        for ni in 0..n {
            for co in 0..cout {
                for oi in 0..ho {
                    for oj in 0..wo {
                        let mut acc = b[[co]];
                        for ci in 0..cin {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let hi = (oi * stride + ki) as isize - pad as isize;
                                    let wi = (oj * stride + kj) as isize - pad as isize;
                                    if hi < 0 || wi < 0 || hi >= h as isize || wi >= wdim as isize {
                                        continue;
                                    }
                                    acc += x[[ni, ci, hi as usize, wi as usize]]
                                        * w[[co, ci, ki, kj]];
                                }
                            }
                        }
                        y[[ni, co, oi, oj]] = acc;
                    }
                }
            }
        }
        y
    }

    fn forward_matches_reference(xsh: &[usize], wsh: &[usize], stride: usize, pad: usize) {
        let x = seeded(xsh, 100);
        let w = seeded(wsh, 101);
        let b = seeded(&[wsh[0]], 102);
        let tape: Tape<f64> = Tape::new();
        let y = tape
            .constant(x.clone())
            .conv2d(tape.constant(w.clone()), tape.constant(b.clone()), stride, pad);
        let want = conv_reference(&x, &w, &b, stride, pad);
        let diff = (&*y.value() - &want).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v));
        assert!(diff < 1e-10, "forward mismatch {diff}");
    }

    #[test]
    fn forward_oracle_geometries() {
        forward_matches_reference(&[2, 3, 8, 8], &[4, 3, 3, 3], 1, 1);
        forward_matches_reference(&[1, 2, 8, 8], &[3, 2, 4, 4], 2, 1);
        forward_matches_reference(&[1, 3, 8, 8], &[2, 3, 7, 7], 1, 3);
        forward_matches_reference(&[2, 4, 5, 5], &[2, 4, 1, 1], 1, 0);
    }

    fn grad_case(
        xsh: &'static [usize],
        wsh: &'static [usize],
        stride: usize,
        pad: usize,
        wrt: usize,
    ) {
        let inputs = [seeded(xsh, 110), seeded(wsh, 111), seeded(&[wsh[0]], 112)];
        let run = |arrays: &[ArrayD<f64>; 3]| -> (f64, ArrayD<f64>) {
            let tape: Tape<f64> = Tape::new();
            let vars: Vec<Var<f64>> = arrays.iter().map(|a| tape.constant(a.clone())).collect();
            let y = vars[0].conv2d(vars[1], vars[2], stride, pad);
            let m = tape.constant(seeded(&y.shape(), 113));
            let loss = (y * m).sum_all();
            let g = tape.backward(loss);
            (loss.scalar(), g.get(vars[wrt]).unwrap().clone())
        };
        let (_, analytic) = run(&inputs);
        let mut f = |v: &ArrayD<f64>| {
            let mut arrays = inputs.clone();
            arrays[wrt] = v.clone();
            run(&arrays).0
        };
        let numeric = gradcheck::central_diff(&mut f, &inputs[wrt], 1e-5);
        let err = gradcheck::max_rel_err(&analytic, &numeric);
        assert!(err < 1e-6, "conv grad wrt input {wrt}: rel err {err}");
    }

    #[test]
    fn gradient_wrt_input() {
        grad_case(&[2, 2, 5, 5], &[3, 2, 3, 3], 1, 1, 0);
        grad_case(&[1, 2, 6, 6], &[2, 2, 4, 4], 2, 1, 0);
    }

    #[test]
    fn gradient_wrt_weight_and_bias() {
        grad_case(&[2, 2, 5, 5], &[3, 2, 3, 3], 1, 1, 1);
        grad_case(&[1, 2, 6, 6], &[2, 2, 4, 4], 2, 1, 1);
        grad_case(&[2, 2, 5, 5], &[3, 2, 3, 3], 1, 1, 2);
    }

    #[test]
    fn empty_batch_conv() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.constant(ArrayD::zeros(IxDyn(&[0, 3, 4, 4])));
        let w = tape.constant(seeded(&[2, 3, 3, 3], 120));
        let b = tape.constant(seeded(&[2], 121));
        let y = x.conv2d(w, b, 1, 1);
        assert_eq!(y.shape(), vec![0, 2, 4, 4]);
        let g = tape.backward(y.sum_all());
        assert!(g.get(w).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn geometry_must_be_exact() {
        let r = std::panic::catch_unwind(|| conv_out_dim(7, 4, 2, 1));
        assert!(r.is_err());
    }
}
