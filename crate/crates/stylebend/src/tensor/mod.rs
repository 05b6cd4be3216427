//! Reverse-mode automatic differentiation on dynamically shaped arrays.
//!
//! A [`Tape`] records each operation as a node holding the forward value, the
//! parent indices, and a backward closure that maps the node's cotangent to
//! one cotangent per parent. Nodes are appended in execution order, which is
//! already a topological order, so a single reverse sweep in
//! [`Tape::backward`] propagates gradients. Parameter leaves are memoized per
//! tape: using a weight twice in one forward pass yields one leaf whose
//! gradient accumulates across both uses.

pub mod conv;
pub mod gradcheck;
pub mod optim;
pub mod store;

pub use optim::Adam;
pub use store::{Param, ParamId, ParamStore};

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{ArrayD, Axis, Ix2, IxDyn};

use crate::Scalar;

type BackFn<S> = Box<dyn Fn(&ArrayD<S>) -> Vec<ArrayD<S>>>;

struct Node<S: Scalar> {
    value: Rc<ArrayD<S>>,
    parents: Vec<usize>,
    back: Option<BackFn<S>>,
}

/// Records a computation graph for one forward pass.
pub struct Tape<S: Scalar> {
    nodes: RefCell<Vec<Node<S>>>,
    param_nodes: RefCell<HashMap<ParamId, usize>>,
}

/// Cheap handle to a node on a [`Tape`].
pub struct Var<'t, S: Scalar> {
    tape: &'t Tape<S>,
    idx: usize,
}

impl<'t, S: Scalar> Clone for Var<'t, S> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<'t, S: Scalar> Copy for Var<'t, S> {}

/// Square patch crop request used by [`Var::extract_patches`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchSpec {
    /// Batch index of the source image.
    pub image: usize,
    /// Row of the patch's top edge.
    pub top: usize,
    /// Column of the patch's left edge.
    pub left: usize,
    /// Number of clockwise quarter turns applied to the crop.
    pub rot: u8,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            param_nodes: RefCell::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_var(&self, value: ArrayD<S>, parents: Vec<usize>, back: Option<BackFn<S>>) -> Var<'_, S> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            parents,
            back,
        });
        Var { tape: self, idx }
    }

    fn value_of(&self, idx: usize) -> Rc<ArrayD<S>> {
        Rc::clone(&self.nodes.borrow()[idx].value)
    }

    /// Leaf holding data that receives no gradient of its own.
    pub fn constant(&self, value: ArrayD<S>) -> Var<'_, S> {
        let value = if value.as_slice().is_some() {
            value
        } else {
            value.as_standard_layout().to_owned()
        };
        self.push_var(value, Vec::new(), None)
    }

    /// Leaf for a stored parameter, memoized so repeated use shares one node.
    pub fn param(&self, store: &ParamStore<S>, id: ParamId) -> Var<'_, S> {
        if let Some(&idx) = self.param_nodes.borrow().get(&id) {
            return Var { tape: self, idx };
        }
        let var = self.push_var_rc(Rc::clone(store.value(id)));
        self.param_nodes.borrow_mut().insert(id, var.idx);
        var
    }

    fn push_var_rc(&self, value: Rc<ArrayD<S>>) -> Var<'_, S> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        nodes.push(Node {
            value,
            parents: Vec::new(),
            back: None,
        });
        Var { tape: self, idx }
    }

    /// Column-wise concatenation of two-dimensional inputs.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t, S>]) -> Var<'t, S> {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let values: Vec<Rc<ArrayD<S>>> = parts.iter().map(|p| p.value()).collect();
        let rows = values[0].shape()[0];
        let mut widths = Vec::with_capacity(values.len());
        for v in &values {
            assert_eq!(v.ndim(), 2, "concat_cols expects rank-2 inputs");
            assert_eq!(v.shape()[0], rows, "concat_cols: row count mismatch");
            widths.push(v.shape()[1]);
        }
        let views: Vec<_> = values
            .iter()
            .map(|v| v.view().into_dimensionality::<Ix2>().unwrap())
            .collect();
        let y = ndarray::concatenate(Axis(1), &views).unwrap().into_dyn();
        let back = move |g: &ArrayD<S>| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let mut out = Vec::with_capacity(widths.len());
            let mut start = 0;
            for w in &widths {
                out.push(g2.slice(ndarray::s![.., start..start + w]).to_owned().into_dyn());
                start += w;
            }
            out
        };
        self.push_var(y, parts.iter().map(|p| p.idx).collect(), Some(Box::new(back)))
    }

    /// Reverse sweep from a one-element `root`. Gradients of interior nodes
    /// are dropped as soon as they have been propagated; leaves keep theirs.
    pub fn backward(&self, root: Var<'_, S>) -> Gradients<S> {
        debug_assert!(std::ptr::eq(root.tape, self), "root from another tape");
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root.idx].value;
        assert_eq!(root_value.len(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<ArrayD<S>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.idx] = Some(ArrayD::from_elem(root_value.raw_dim(), S::one()));
        for i in (0..=root.idx).rev() {
            let node = &nodes[i];
            let Some(back) = node.back.as_ref() else { continue };
            let Some(g) = grads[i].take() else { continue };
            let parent_grads = back(&g);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, gp) in node.parents.iter().zip(parent_grads) {
                debug_assert_eq!(gp.shape(), nodes[p].value.shape(), "gradient shape mismatch");
                match &mut grads[p] {
                    Some(acc) => *acc += &gp,
                    slot @ None => *slot = Some(gp),
                }
            }
        }
        Gradients {
            grads,
            param_nodes: self.param_nodes.borrow().clone(),
        }
    }
}

/// Gradients left at tape leaves after a backward sweep.
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<ArrayD<S>>>,
    param_nodes: HashMap<ParamId, usize>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, var: Var<'_, S>) -> Option<&ArrayD<S>> {
        self.grads.get(var.idx).and_then(|g| g.as_ref())
    }

    /// Gradient of a stored parameter, `None` when it did not participate.
    pub fn param_grad(&self, id: ParamId) -> Option<&ArrayD<S>> {
        let idx = *self.param_nodes.get(&id)?;
        self.grads[idx].as_ref()
    }
}

fn scalar_of<S: Scalar>(g: &ArrayD<S>) -> S {
    debug_assert_eq!(g.len(), 1);
    *g.first().unwrap()
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn value(self) -> Rc<ArrayD<S>> {
        self.tape.value_of(self.idx)
    }

    pub fn shape(self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn ndim(self) -> usize {
        self.value().ndim()
    }

    /// The single element of a one-element node.
    pub fn scalar(self) -> S {
        let v = self.value();
        assert_eq!(v.len(), 1, "scalar() on a non-scalar node");
        *v.first().unwrap()
    }

    fn assert_same_tape(self, other: Var<'t, S>) {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    /// Copies the value onto the tape as a fresh leaf, cutting gradient flow.
    pub fn detach(self) -> Self {
        self.tape.push_var_rc(self.value())
    }

    pub fn add_scalar(self, c: S) -> Self {
        let x = self.value();
        let y = x.mapv(|v| v + c);
        self.tape
            .push_var(y, vec![self.idx], Some(Box::new(|g| vec![g.clone()])))
    }

    pub fn scale(self, c: S) -> Self {
        let x = self.value();
        let y = x.mapv(|v| v * c);
        self.tape
            .push_var(y, vec![self.idx], Some(Box::new(move |g| vec![g.mapv(|v| v * c)])))
    }

    pub fn relu(self) -> Self {
        let x = self.value();
        let y = x.mapv(|v| if v > S::zero() { v } else { S::zero() });
        let back = move |g: &ArrayD<S>| {
            vec![ndarray::Zip::from(g)
                .and(&*x)
                .map_collect(|&g, &x| if x > S::zero() { g } else { S::zero() })]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    pub fn leaky_relu(self, slope: S) -> Self {
        let x = self.value();
        let y = x.mapv(|v| if v > S::zero() { v } else { v * slope });
        let back = move |g: &ArrayD<S>| {
            vec![ndarray::Zip::from(g)
                .and(&*x)
                .map_collect(|&g, &x| if x > S::zero() { g } else { g * slope })]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    pub fn tanh(self) -> Self {
        let x = self.value();
        let y = x.mapv(|v| v.tanh());
        let yr = Rc::new(y.clone());
        let back = move |g: &ArrayD<S>| {
            vec![ndarray::Zip::from(g)
                .and(&*yr)
                .map_collect(|&g, &y| g * (S::one() - y * y))]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    pub fn abs(self) -> Self {
        let x = self.value();
        let y = x.mapv(|v| v.abs());
        let back = move |g: &ArrayD<S>| {
            vec![ndarray::Zip::from(g).and(&*x).map_collect(|&g, &x| {
                if x > S::zero() {
                    g
                } else if x < S::zero() {
                    -g
                } else {
                    S::zero()
                }
            })]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// Square root clamped at zero, with a zero subgradient near zero so
    /// constant inputs cannot produce infinite gradients.
    pub fn sqrt0(self) -> Self {
        let x = self.value();
        let y = x.mapv(|v| if v > S::zero() { v.sqrt() } else { S::zero() });
        let yr = Rc::new(y.clone());
        let tiny = S::cast(1e-12);
        let half = S::cast(0.5);
        let back = move |g: &ArrayD<S>| {
            vec![ndarray::Zip::from(g)
                .and(&*yr)
                .map_collect(|&g, &y| if y > tiny { g * half / y } else { S::zero() })]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// Clamp with a pass-through subgradient inside `[lo, hi]`.
    pub fn clamp(self, lo: S, hi: S) -> Self {
        let x = self.value();
        let y = x.mapv(|v| if v < lo { lo } else if v > hi { hi } else { v });
        let back = move |g: &ArrayD<S>| {
            vec![ndarray::Zip::from(g)
                .and(&*x)
                .map_collect(|&g, &x| if x >= lo && x <= hi { g } else { S::zero() })]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    pub fn mean_all(self) -> Self {
        let x = self.value();
        let n = x.len();
        assert!(n > 0, "mean_all of an empty array");
        let inv = S::one() / S::cast(n as f64);
        let y = ArrayD::from_elem(IxDyn(&[]), x.sum() * inv);
        let shape = x.raw_dim();
        let back = move |g: &ArrayD<S>| vec![ArrayD::from_elem(shape.clone(), scalar_of(g) * inv)];
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    pub fn sum_all(self) -> Self {
        let x = self.value();
        let y = ArrayD::from_elem(IxDyn(&[]), x.sum());
        let shape = x.raw_dim();
        let back = move |g: &ArrayD<S>| vec![ArrayD::from_elem(shape.clone(), scalar_of(g))];
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// `(N, C, H, W) -> (N, C)`: mean over the spatial axes.
    pub fn spatial_mean(self) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 4, "spatial_mean expects NCHW");
        let (h, w) = (x.shape()[2], x.shape()[3]);
        assert!(h * w > 0, "spatial_mean over empty plane");
        let inv = S::one() / S::cast((h * w) as f64);
        let y = x.sum_axis(Axis(3)).sum_axis(Axis(2)).mapv(|v| v * inv);
        let shape = x.raw_dim();
        let back = move |g: &ArrayD<S>| {
            let gb = g.clone().insert_axis(Axis(2)).insert_axis(Axis(3));
            vec![gb.broadcast(shape.clone()).unwrap().mapv(|v| v * inv)]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// `(N, C) -> (N, C, H, W)`: repeat each entry over a spatial plane.
    pub fn bc_nchw(self, h: usize, w: usize) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 2, "bc_nchw expects rank 2");
        let (n, c) = (x.shape()[0], x.shape()[1]);
        let y = x
            .as_ref()
            .clone()
            .insert_axis(Axis(2))
            .insert_axis(Axis(3))
            .broadcast(IxDyn(&[n, c, h, w]))
            .unwrap()
            .to_owned();
        let back = move |g: &ArrayD<S>| vec![g.sum_axis(Axis(3)).sum_axis(Axis(2))];
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// `(N, ...) -> (N,)`: mean over everything but the batch axis.
    pub fn per_sample_mean(self) -> Self {
        let x = self.value();
        assert!(x.ndim() >= 1, "per_sample_mean expects a batch axis");
        let n = x.shape()[0];
        let k: usize = x.shape()[1..].iter().product();
        assert!(k > 0, "per_sample_mean over empty samples");
        let inv = S::one() / S::cast(k as f64);
        let flat = x.view().into_shape(IxDyn(&[n, k])).unwrap();
        let y = flat.sum_axis(Axis(1)).mapv(|v| v * inv);
        let shape = x.raw_dim();
        let back = move |g: &ArrayD<S>| {
            let gb = g.clone().insert_axis(Axis(1));
            let full = gb.broadcast(IxDyn(&[n, k])).unwrap().mapv(|v| v * inv);
            vec![full.into_shape(shape.clone()).unwrap()]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// `(N,) -> (N, C, H, W)`: repeat each sample's entry everywhere.
    pub fn bc_sample(self, c: usize, h: usize, w: usize) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 1, "bc_sample expects rank 1");
        let n = x.shape()[0];
        let y = x
            .as_ref()
            .clone()
            .insert_axis(Axis(1))
            .insert_axis(Axis(2))
            .insert_axis(Axis(3))
            .broadcast(IxDyn(&[n, c, h, w]))
            .unwrap()
            .to_owned();
        let back =
            move |g: &ArrayD<S>| vec![g.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(1))];
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// `(C,) -> (N, C, H, W)`: repeat a per-channel vector over batch and plane.
    pub fn bc_c(self, n: usize, h: usize, w: usize) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 1, "bc_c expects rank 1");
        let c = x.shape()[0];
        let y = x
            .as_ref()
            .clone()
            .insert_axis(Axis(0))
            .insert_axis(Axis(2))
            .insert_axis(Axis(3))
            .broadcast(IxDyn(&[n, c, h, w]))
            .unwrap()
            .to_owned();
        let back =
            move |g: &ArrayD<S>| vec![g.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0))];
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// `(N, D) -> (D,)`: mean over the batch axis.
    pub fn sample_mean(self) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 2, "sample_mean expects rank 2");
        let n = x.shape()[0];
        assert!(n > 0, "sample_mean over an empty batch");
        let inv = S::one() / S::cast(n as f64);
        let y = x.sum_axis(Axis(0)).mapv(|v| v * inv);
        let d = x.shape()[1];
        let back = move |g: &ArrayD<S>| {
            let gb = g.clone().insert_axis(Axis(0));
            vec![gb.broadcast(IxDyn(&[n, d])).unwrap().mapv(|v| v * inv)]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// `(D,) -> (N, D)`: repeat a vector across the batch axis.
    pub fn bc_rows(self, n: usize) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 1, "bc_rows expects rank 1");
        let d = x.shape()[0];
        let y = x
            .as_ref()
            .clone()
            .insert_axis(Axis(0))
            .broadcast(IxDyn(&[n, d]))
            .unwrap()
            .to_owned();
        let back = move |g: &ArrayD<S>| vec![g.sum_axis(Axis(0))];
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// `(N, D) -> (N,)`: sum over columns.
    pub fn sum_cols(self) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 2, "sum_cols expects rank 2");
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let y = x.sum_axis(Axis(1));
        let back = move |g: &ArrayD<S>| {
            let gb = g.clone().insert_axis(Axis(1));
            vec![gb.broadcast(IxDyn(&[n, d])).unwrap().to_owned()]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// `x (N, I) * w (I, O) + b (O,)`.
    pub fn linear(self, w: Var<'t, S>, b: Var<'t, S>) -> Self {
        self.assert_same_tape(w);
        self.assert_same_tape(b);
        let xv = self.value();
        let wv = w.value();
        let bv = b.value();
        assert_eq!(xv.ndim(), 2, "linear input must be rank 2");
        assert_eq!(wv.ndim(), 2, "linear weight must be rank 2");
        assert_eq!(xv.shape()[1], wv.shape()[0], "linear: inner dim mismatch");
        assert_eq!(bv.shape(), [wv.shape()[1]], "linear: bias dim mismatch");
        let x2 = xv.view().into_dimensionality::<Ix2>().unwrap();
        let w2 = wv.view().into_dimensionality::<Ix2>().unwrap();
        let mut y = x2.dot(&w2);
        y += &bv.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let (xc, wc) = (Rc::clone(&xv), Rc::clone(&wv));
        let back = move |g: &ArrayD<S>| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let x2 = xc.view().into_dimensionality::<Ix2>().unwrap();
            let w2 = wc.view().into_dimensionality::<Ix2>().unwrap();
            vec![
                g2.dot(&w2.t()).into_dyn(),
                x2.t().dot(&g2).into_dyn(),
                g2.sum_axis(Axis(0)).into_dyn(),
            ]
        };
        self.tape
            .push_var(y.into_dyn(), vec![self.idx, w.idx, b.idx], Some(Box::new(back)))
    }

    /// Nearest-neighbour two-fold upsampling of NCHW input.
    pub fn upsample2(self) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 4, "upsample2 expects NCHW");
        let sh = x.shape().to_vec();
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        let (h2, w2) = (2 * h, 2 * w);
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![S::zero(); n * c * h2 * w2];
        for nc in 0..n * c {
            for i in 0..h {
                for j in 0..w {
                    let v = xs[(nc * h + i) * w + j];
                    let base = (nc * h2 + 2 * i) * w2 + 2 * j;
                    out[base] = v;
                    out[base + 1] = v;
                    out[base + w2] = v;
                    out[base + w2 + 1] = v;
                }
            }
        }
        let y = ArrayD::from_shape_vec(IxDyn(&[n, c, h2, w2]), out).unwrap();
        let back = move |g: &ArrayD<S>| {
            let gl = g.as_standard_layout();
            let gs = gl.as_slice().unwrap();
            let mut gx = vec![S::zero(); n * c * h * w];
            for nc in 0..n * c {
                for i in 0..h {
                    for j in 0..w {
                        let base = (nc * h2 + 2 * i) * w2 + 2 * j;
                        gx[(nc * h + i) * w + j] =
                            gs[base] + gs[base + 1] + gs[base + w2] + gs[base + w2 + 1];
                    }
                }
            }
            vec![ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), gx).unwrap()]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// 2x2 average pooling with stride 2; spatial dims must be even.
    pub fn avgpool2(self) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 4, "avgpool2 expects NCHW");
        let sh = x.shape().to_vec();
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        assert!(h % 2 == 0 && w % 2 == 0, "avgpool2 needs even spatial dims");
        let (ho, wo) = (h / 2, w / 2);
        let quarter = S::cast(0.25);
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![S::zero(); n * c * ho * wo];
        for nc in 0..n * c {
            for i in 0..ho {
                for j in 0..wo {
                    let base = (nc * h + 2 * i) * w + 2 * j;
                    out[(nc * ho + i) * wo + j] =
                        (xs[base] + xs[base + 1] + xs[base + w] + xs[base + w + 1]) * quarter;
                }
            }
        }
        let y = ArrayD::from_shape_vec(IxDyn(&[n, c, ho, wo]), out).unwrap();
        let back = move |g: &ArrayD<S>| {
            let gl = g.as_standard_layout();
            let gs = gl.as_slice().unwrap();
            let mut gx = vec![S::zero(); n * c * h * w];
            for nc in 0..n * c {
                for i in 0..ho {
                    for j in 0..wo {
                        let gv = gs[(nc * ho + i) * wo + j] * quarter;
                        let base = (nc * h + 2 * i) * w + 2 * j;
                        gx[base] = gv;
                        gx[base + 1] = gv;
                        gx[base + w] = gv;
                        gx[base + w + 1] = gv;
                    }
                }
            }
            vec![ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), gx).unwrap()]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// Softmax over a rank-1 input.
    pub fn softmax1d(self) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 1, "softmax1d expects rank 1");
        assert!(!x.is_empty(), "softmax1d of an empty vector");
        let max = x.iter().copied().fold(S::neg_infinity(), S::max);
        let e = x.mapv(|v| (v - max).exp());
        let sum = e.sum();
        let y = e.mapv(|v| v / sum);
        let yr = Rc::new(y.clone());
        let back = move |g: &ArrayD<S>| {
            let dot = g.iter().zip(yr.iter()).map(|(&g, &s)| g * s).sum::<S>();
            vec![ndarray::Zip::from(g)
                .and(&*yr)
                .map_collect(|&g, &s| s * (g - dot))]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// Scalar element `x[i]` of a rank-1 input.
    pub fn index1(self, i: usize) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 1, "index1 expects rank 1");
        let k = x.shape()[0];
        assert!(i < k, "index1 out of range");
        let y = ArrayD::from_elem(IxDyn(&[]), x[[i]]);
        let back = move |g: &ArrayD<S>| {
            let mut gx = ArrayD::zeros(IxDyn(&[k]));
            gx[[i]] = scalar_of(g);
            vec![gx]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// Multiply a whole array by a scalar node.
    pub fn scale_by(self, s: Var<'t, S>) -> Self {
        self.assert_same_tape(s);
        let x = self.value();
        let sv = s.value();
        assert_eq!(sv.len(), 1, "scale_by factor must be a scalar node");
        let c = *sv.first().unwrap();
        let y = x.mapv(|v| v * c);
        let sshape = sv.raw_dim();
        let back = move |g: &ArrayD<S>| {
            let gs = g.iter().zip(x.iter()).map(|(&g, &x)| g * x).sum::<S>();
            vec![g.mapv(|v| v * c), ArrayD::from_elem(sshape.clone(), gs)]
        };
        self.tape
            .push_var(y, vec![self.idx, s.idx], Some(Box::new(back)))
    }

    /// Columns `[start, end)` of a rank-2 input.
    pub fn slice_cols(self, start: usize, end: usize) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 2, "slice_cols expects rank 2");
        let (n, d) = (x.shape()[0], x.shape()[1]);
        assert!(start <= end && end <= d, "slice_cols out of range");
        let x2 = x.view().into_dimensionality::<Ix2>().unwrap();
        let y = x2.slice(ndarray::s![.., start..end]).to_owned().into_dyn();
        let back = move |g: &ArrayD<S>| {
            let mut gx = ndarray::Array2::<S>::zeros((n, d));
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            gx.slice_mut(ndarray::s![.., start..end]).assign(&g2);
            vec![gx.into_dyn()]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }

    /// Crops square patches from NCHW input and rotates each by quarter
    /// turns clockwise. Output is `(P, C, size, size)`. Overlapping patches
    /// accumulate gradient at shared pixels.
    pub fn extract_patches(self, specs: &[PatchSpec], size: usize) -> Self {
        let x = self.value();
        assert_eq!(x.ndim(), 4, "extract_patches expects NCHW");
        let sh = x.shape().to_vec();
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        assert!(size > 0, "patch size must be positive");
        for s in specs {
            assert!(s.image < n, "patch image index out of range");
            assert!(s.top + size <= h && s.left + size <= w, "patch out of bounds");
        }
        let p = specs.len();
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![S::zero(); p * c * size * size];
        for (pi, spec) in specs.iter().enumerate() {
            for ci in 0..c {
                let src_plane = (spec.image * c + ci) * h;
                let dst_plane = (pi * c + ci) * size;
                for i in 0..size {
                    for j in 0..size {
                        let (si, sj) = rot_source(spec.rot, i, j, size);
                        out[(dst_plane + i) * size + j] =
                            xs[(src_plane + spec.top + si) * w + spec.left + sj];
                    }
                }
            }
        }
        let y = ArrayD::from_shape_vec(IxDyn(&[p, c, size, size]), out).unwrap();
        let specs = specs.to_vec();
        let back = move |g: &ArrayD<S>| {
            let gl = g.as_standard_layout();
            let gs = gl.as_slice().unwrap();
            let mut gx = vec![S::zero(); n * c * h * w];
            for (pi, spec) in specs.iter().enumerate() {
                for ci in 0..c {
                    let src_plane = (spec.image * c + ci) * h;
                    let dst_plane = (pi * c + ci) * size;
                    for i in 0..size {
                        for j in 0..size {
                            let (si, sj) = rot_source(spec.rot, i, j, size);
                            gx[(src_plane + spec.top + si) * w + spec.left + sj] +=
                                gs[(dst_plane + i) * size + j];
                        }
                    }
                }
            }
            vec![ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), gx).unwrap()]
        };
        self.tape.push_var(y, vec![self.idx], Some(Box::new(back)))
    }
}

/// Source coordinates within an unrotated patch for output cell `(i, j)` of
/// a patch rotated `rot` quarter turns clockwise.
fn rot_source(rot: u8, i: usize, j: usize, size: usize) -> (usize, usize) {
    match rot & 3 {
        0 => (i, j),
        1 => (size - 1 - j, i),
        2 => (size - 1 - i, size - 1 - j),
        _ => (j, size - 1 - i),
    }
}

impl<'t, S: Scalar> std::ops::Add for Var<'t, S> {
    type Output = Var<'t, S>;
    fn add(self, rhs: Self) -> Self::Output {
        self.assert_same_tape(rhs);
        let a = self.value();
        let b = rhs.value();
        assert_eq!(a.shape(), b.shape(), "add: shape mismatch");
        let y = &*a + &*b;
        self.tape.push_var(
            y,
            vec![self.idx, rhs.idx],
            Some(Box::new(|g| vec![g.clone(), g.clone()])),
        )
    }
}

impl<'t, S: Scalar> std::ops::Sub for Var<'t, S> {
    type Output = Var<'t, S>;
    fn sub(self, rhs: Self) -> Self::Output {
        self.assert_same_tape(rhs);
        let a = self.value();
        let b = rhs.value();
        assert_eq!(a.shape(), b.shape(), "sub: shape mismatch");
        let y = &*a - &*b;
        self.tape.push_var(
            y,
            vec![self.idx, rhs.idx],
            Some(Box::new(|g| vec![g.clone(), g.mapv(|v| -v)])),
        )
    }
}

impl<'t, S: Scalar> std::ops::Mul for Var<'t, S> {
    type Output = Var<'t, S>;
    fn mul(self, rhs: Self) -> Self::Output {
        self.assert_same_tape(rhs);
        let a = self.value();
        let b = rhs.value();
        assert_eq!(a.shape(), b.shape(), "mul: shape mismatch");
        let y = &*a * &*b;
        let back = move |g: &ArrayD<S>| vec![g * &*b, g * &*a];
        self.tape
            .push_var(y, vec![self.idx, rhs.idx], Some(Box::new(back)))
    }
}

impl<'t, S: Scalar> std::ops::Div for Var<'t, S> {
    type Output = Var<'t, S>;
    fn div(self, rhs: Self) -> Self::Output {
        self.assert_same_tape(rhs);
        let a = self.value();
        let b = rhs.value();
        assert_eq!(a.shape(), b.shape(), "div: shape mismatch");
        let y = &*a / &*b;
        let back = move |g: &ArrayD<S>| {
            let gx = g / &*b;
            let gb = ndarray::Zip::from(g)
                .and(&*a)
                .and(&*b)
                .map_collect(|&g, &a, &b| -g * a / (b * b));
            vec![gx, gb]
        };
        self.tape
            .push_var(y, vec![self.idx, rhs.idx], Some(Box::new(back)))
    }
}

impl<'t, S: Scalar> std::ops::Neg for Var<'t, S> {
    type Output = Var<'t, S>;
    fn neg(self) -> Self::Output {
        self.scale(-S::one())
    }
}
