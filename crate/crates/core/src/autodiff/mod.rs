//! Define-by-run reverse-mode differentiation over batched real matrices.
//!
//! Every tape value is an `Array2<f64>` with one row per sample. Complex
//! quantities use the planar `[Re | Im]` column layout of
//! [`CapsuleState`](crate::layers::CapsuleState), so complex parameters are
//! differentiated as pairs of real arrays; [`wirtinger`] converts a real
//! Jacobian back into `(∂/∂z, ∂/∂z̄)` blocks.

mod conv;
mod wirtinger;

use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Result, SsbError};
use crate::layers::{block_matmul, capsule_norms, complex_matmul, radial_backward, radial_forward};

pub use conv::ConvGrid;
pub use wirtinger::{wirtinger, WirtingerJacobian};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `y = x wᵀ`
    Linear {
        x: Var,
        w: Var,
    },
    /// `y = x + b` with `b` a single row broadcast over the batch.
    AddBias {
        x: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    /// `y = scale·x + shift`
    Affine {
        x: Var,
        scale: f64,
    },
    ComplexMatmul {
        x: Var,
        re: Var,
        im: Var,
    },
    BlockMatmul {
        x: Var,
        a: Var,
        k: usize,
    },
    Radial {
        x: Var,
        n: usize,
        k: usize,
        eps: f64,
    },
    Magnitude {
        x: Var,
        n: usize,
        k: usize,
    },
    /// Real per-capsule factor times a capsule state.
    CapsuleScale {
        g: Var,
        x: Var,
        n: usize,
        k: usize,
    },
    Sigmoid {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Relu {
        x: Var,
    },
    SumSquares {
        x: Var,
    },
    /// Mean softmax cross-entropy over rows with integer targets.
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Array2<f64>,
    },
    ComplexConv {
        x: Var,
        re: Var,
        im: Var,
        grid: ConvGrid,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
    needs_grad: bool,
    param: Option<usize>,
}

/// Gradients keyed by parameter id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientSet {
    grads: BTreeMap<usize, Array2<f64>>,
}

impl GradientSet {
    pub fn get(&self, id: usize) -> Option<&Array2<f64>> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Array2<f64>)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (usize, &mut Array2<f64>)> {
        self.grads.iter_mut().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// `sqrt(Σ g²)` over every entry of every gradient.
    pub fn global_norm(&self) -> f64 {
        self.grads
            .values()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.values_mut() {
            g.mapv_inplace(|v| v * factor);
        }
    }

    pub fn insert(&mut self, id: usize, g: Array2<f64>) {
        self.grads.insert(id, g);
    }
}

/// Recorded computation. Build it forward, then call [`Tape::backward`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Array2<f64>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: &[Var]) -> bool {
        v.iter().any(|x| self.nodes[x.0].needs_grad)
    }

    /// A leaf that is not differentiated.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// A differentiable leaf that is not a parameter (e.g. a network input
    /// for Jacobians).
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A differentiable leaf whose gradient is reported under `id`.
    pub fn param(&mut self, id: usize, value: Array2<f64>) -> Var {
        let v = self.push(Op::Leaf, value, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ncols() != wv.ncols() {
            return Err(SsbError::shape(
                format!("{} input columns", wv.ncols()),
                format!("{}", xv.ncols()),
            ));
        }
        let y = xv.dot(&wv.t());
        let ng = self.ng(&[x, w]);
        Ok(self.push(Op::Linear { x, w }, y, ng))
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.nrows() != 1 || bv.ncols() != xv.ncols() {
            return Err(SsbError::shape(
                format!("1x{}", xv.ncols()),
                format!("{}x{}", bv.nrows(), bv.ncols()),
            ));
        }
        let y = xv + &bv.row(0);
        let ng = self.ng(&[x, b]);
        Ok(self.push(Op::AddBias { x, b }, y, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let y = self.value(a) + self.value(b);
        let ng = self.ng(&[a, b]);
        Ok(self.push(Op::Add { a, b }, y, ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let y = self.value(a) * self.value(b);
        let ng = self.ng(&[a, b]);
        Ok(self.push(Op::Mul { a, b }, y, ng))
    }

    /// `scale·x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let y = self.value(x).mapv(|v| scale * v + shift);
        let ng = self.ng(&[x]);
        self.push(Op::Affine { x, scale }, y, ng)
    }

    pub fn complex_matmul(&mut self, x: Var, re: Var, im: Var) -> Result<Var> {
        let (rv, iv) = (self.value(re), self.value(im));
        if rv.dim() != iv.dim() || self.value(x).ncols() != 2 * rv.ncols() {
            return Err(SsbError::shape(
                format!("re/im {:?}, input {} columns", rv.dim(), 2 * rv.ncols()),
                format!("im {:?}, input {} columns", iv.dim(), self.value(x).ncols()),
            ));
        }
        let y = complex_matmul(self.value(x).view(), rv.view(), iv.view());
        let ng = self.ng(&[x, re, im]);
        Ok(self.push(Op::ComplexMatmul { x, re, im }, y, ng))
    }

    pub fn block_matmul(&mut self, x: Var, a: Var, k: usize) -> Result<Var> {
        let av = self.value(a);
        if self.value(x).ncols() != av.ncols() * k {
            return Err(SsbError::shape(
                format!("{} columns", av.ncols() * k),
                format!("{}", self.value(x).ncols()),
            ));
        }
        let y = block_matmul(self.value(x).view(), av.view(), k);
        let ng = self.ng(&[x, a]);
        Ok(self.push(Op::BlockMatmul { x, a, k }, y, ng))
    }

    pub fn radial(&mut self, x: Var, n: usize, k: usize, eps: f64) -> Result<Var> {
        self.check_capsules(x, n, k)?;
        let y = radial_forward(self.value(x).view(), n, k, eps);
        let ng = self.ng(&[x]);
        Ok(self.push(Op::Radial { x, n, k, eps }, y, ng))
    }

    /// Capsule magnitudes, `batch × N`.
    pub fn magnitude(&mut self, x: Var, n: usize, k: usize) -> Result<Var> {
        self.check_capsules(x, n, k)?;
        let y = capsule_norms(self.value(x).view(), n, k);
        let ng = self.ng(&[x]);
        Ok(self.push(Op::Magnitude { x, n, k }, y, ng))
    }

    /// `y_{b, a·N+α} = g_{b,α} · x_{b, a·N+α}`.
    pub fn capsule_scale(&mut self, g: Var, x: Var, n: usize, k: usize) -> Result<Var> {
        self.check_capsules(x, n, k)?;
        let (gv, xv) = (self.value(g), self.value(x));
        if gv.dim() != (xv.nrows(), n) {
            return Err(SsbError::shape(
                format!("{}x{n}", xv.nrows()),
                format!("{}x{}", gv.nrows(), gv.ncols()),
            ));
        }
        let y = Array2::from_shape_fn(xv.raw_dim(), |(b, c)| gv[[b, c % n]] * xv[[b, c]]);
        let ng = self.ng(&[g, x]);
        Ok(self.push(Op::CapsuleScale { g, x, n, k }, y, ng))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(sigmoid);
        let ng = self.ng(&[x]);
        self.push(Op::Sigmoid { x }, y, ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(f64::tanh);
        let ng = self.ng(&[x]);
        self.push(Op::Tanh { x }, y, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(|v| v.max(0.0));
        let ng = self.ng(&[x]);
        self.push(Op::Relu { x }, y, ng)
    }

    /// `Σ x²` as a `1×1` node.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|v| v * v).sum::<f64>();
        let ng = self.ng(&[x]);
        self.push(Op::SumSquares { x }, Array2::from_elem((1, 1), v), ng)
    }

    /// Mean over rows of `−log softmax(logits)[target]`, as a `1×1` node.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if targets.len() != lv.nrows() {
            return Err(SsbError::shape(
                format!("{} targets", lv.nrows()),
                format!("{}", targets.len()),
            ));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= lv.ncols()) {
            return Err(SsbError::arg(format!("target {t} out of {} classes", lv.ncols())));
        }
        let probs = softmax_rows(lv.view());
        let loss = cross_entropy_rows(lv.view(), targets).iter().sum::<f64>() / targets.len() as f64;
        let ng = self.ng(&[logits]);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            Array2::from_elem((1, 1), loss),
            ng,
        ))
    }

    /// Complex 3×3 convolution with zero padding; see [`ConvGrid`] for layout.
    pub fn complex_conv(&mut self, x: Var, re: Var, im: Var, grid: ConvGrid) -> Result<Var> {
        let (rv, iv) = (self.value(re), self.value(im));
        let c = grid.channels;
        if rv.dim() != (c, 9 * c) || iv.dim() != (c, 9 * c) {
            return Err(SsbError::shape(
                format!("{c}x{}", 9 * c),
                format!("{:?}", rv.dim()),
            ));
        }
        if self.value(x).ncols() != 2 * grid.sites() {
            return Err(SsbError::shape(
                format!("{} columns", 2 * grid.sites()),
                format!("{}", self.value(x).ncols()),
            ));
        }
        let y = conv::forward(self.value(x).view(), rv.view(), iv.view(), grid);
        let ng = self.ng(&[x, re, im]);
        Ok(self.push(Op::ComplexConv { x, re, im, grid }, y, ng))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dim() != bv.dim() {
            return Err(SsbError::shape(
                format!("{:?}", av.dim()),
                format!("{:?}", bv.dim()),
            ));
        }
        Ok(())
    }

    fn check_capsules(&self, x: Var, n: usize, k: usize) -> Result<()> {
        if self.value(x).ncols() != n * k {
            return Err(SsbError::shape(
                format!("{} columns (N={n}, k={k})", n * k),
                format!("{}", self.value(x).ncols()),
            ));
        }
        Ok(())
    }

    /// Gradients of a scalar loss with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<GradientSet> {
        let lv = self.value(loss);
        if lv.dim() != (1, 1) {
            return Err(SsbError::arg(format!(
                "backward needs a scalar loss, got {}x{}",
                lv.nrows(),
                lv.ncols()
            )));
        }
        let grads = self.backprop(loss, Array2::ones((1, 1)))?;
        let mut set = GradientSet::default();
        for (node, g) in self.nodes.iter().zip(grads) {
            if let (Some(id), Some(g)) = (node.param, g) {
                match set.grads.get_mut(&id) {
                    Some(acc) => *acc += &g,
                    None => {
                        set.grads.insert(id, g);
                    }
                }
            }
        }
        // parameters that do not influence the loss still get a zero entry
        for node in &self.nodes {
            if let Some(id) = node.param {
                set.grads
                    .entry(id)
                    .or_insert_with(|| Array2::zeros(node.value.raw_dim()));
            }
        }
        Ok(set)
    }

    /// Vector-Jacobian product: gradient of `⟨seed, root⟩` with respect to
    /// each node in `wrt`.
    pub fn vjp(&self, root: Var, seed: Array2<f64>, wrt: &[Var]) -> Result<Vec<Array2<f64>>> {
        let grads = self.backprop(root, seed)?;
        Ok(wrt
            .iter()
            .map(|v| {
                grads[v.0]
                    .clone()
                    .unwrap_or_else(|| Array2::zeros(self.nodes[v.0].value.raw_dim()))
            })
            .collect())
    }

    /// Full real Jacobian `∂output/∂input` for a single-row pass, built from
    /// one backward sweep per output coordinate.
    pub fn jacobian_rows(&self, output: Var, input: Var) -> Result<Array2<f64>> {
        let (ov, iv) = (self.value(output), self.value(input));
        if ov.nrows() != 1 || iv.nrows() != 1 {
            return Err(SsbError::arg("jacobian_rows needs single-row input and output"));
        }
        let (m, n) = (ov.ncols(), iv.ncols());
        let mut jac = Array2::zeros((m, n));
        if output == input {
            jac.diag_mut().fill(1.0);
            return Ok(jac);
        }
        for i in 0..m {
            let mut seed = Array2::zeros((1, m));
            seed[[0, i]] = 1.0;
            let g = self.vjp(output, seed, &[input])?;
            jac.row_mut(i).assign(&g[0].row(0));
        }
        Ok(jac)
    }

    fn backprop(&self, root: Var, seed: Array2<f64>) -> Result<Vec<Option<Array2<f64>>>> {
        if seed.dim() != self.value(root).dim() {
            return Err(SsbError::shape(
                format!("{:?}", self.value(root).dim()),
                format!("{:?}", seed.dim()),
            ));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed);
        for idx in (0..=root.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Ok(grads)
    }

    fn propagate(&self, op: &Op, y: &Array2<f64>, dy: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let acc = |v: Var, g: Array2<f64>, grads: &mut [Option<Array2<f64>>]| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(a) => *a += &g,
                slot @ None => *slot = Some(g),
            }
        };
        match op {
            Op::Leaf => {}
            Op::Linear { x, w } => {
                acc(*x, dy.dot(self.value(*w)), grads);
                acc(*w, dy.t().dot(self.value(*x)), grads);
            }
            Op::AddBias { x, b } => {
                acc(*x, dy.clone(), grads);
                acc(*b, dy.sum_axis(Axis(0)).insert_axis(Axis(0)), grads);
            }
            Op::Add { a, b } => {
                acc(*a, dy.clone(), grads);
                acc(*b, dy.clone(), grads);
            }
            Op::Mul { a, b } => {
                acc(*a, dy * self.value(*b), grads);
                acc(*b, dy * self.value(*a), grads);
            }
            Op::Affine { x, scale } => acc(*x, dy * *scale, grads),
            Op::ComplexMatmul { x, re, im } => {
                let (xv, rv, iv) = (self.value(*x), self.value(*re), self.value(*im));
                let n = rv.nrows();
                let m = rv.ncols();
                let dyr = dy.slice(s![.., ..n]);
                let dyi = dy.slice(s![.., n..]);
                let xr = xv.slice(s![.., ..m]);
                let xi = xv.slice(s![.., m..]);
                if self.nodes[x.0].needs_grad {
                    let mut dx = Array2::zeros(xv.raw_dim());
                    dx.slice_mut(s![.., ..m]).assign(&(dyr.dot(rv) + dyi.dot(iv)));
                    dx.slice_mut(s![.., m..]).assign(&(dyi.dot(rv) - dyr.dot(iv)));
                    acc(*x, dx, grads);
                }
                acc(*re, dyr.t().dot(&xr) + dyi.t().dot(&xi), grads);
                acc(*im, dyi.t().dot(&xr) - dyr.t().dot(&xi), grads);
            }
            Op::BlockMatmul { x, a, k } => {
                let (xv, av) = (self.value(*x), self.value(*a));
                let n_out = av.nrows();
                let n_in = av.ncols();
                if self.nodes[x.0].needs_grad {
                    let mut dx = Array2::zeros(xv.raw_dim());
                    for c in 0..*k {
                        let d = dy.slice(s![.., c * n_out..(c + 1) * n_out]);
                        dx.slice_mut(s![.., c * n_in..(c + 1) * n_in]).assign(&d.dot(av));
                    }
                    acc(*x, dx, grads);
                }
                if self.nodes[a.0].needs_grad {
                    let mut da = Array2::zeros(av.raw_dim());
                    for c in 0..*k {
                        let d = dy.slice(s![.., c * n_out..(c + 1) * n_out]);
                        let xc = xv.slice(s![.., c * n_in..(c + 1) * n_in]);
                        da += &d.t().dot(&xc);
                    }
                    acc(*a, da, grads);
                }
            }
            Op::Radial { x, n, k, eps } => {
                let dx = radial_backward(self.value(*x).view(), dy.view(), *n, *k, *eps);
                acc(*x, dx, grads);
            }
            Op::Magnitude { x, n, k } => {
                let xv = self.value(*x);
                let dx = Array2::from_shape_fn(xv.raw_dim(), |(b, c)| {
                    let r = y[[b, c % n]];
                    if r > 0.0 {
                        dy[[b, c % n]] * xv[[b, c]] / r
                    } else {
                        0.0
                    }
                });
                let _ = k;
                acc(*x, dx, grads);
            }
            Op::CapsuleScale { g, x, n, k } => {
                let (gv, xv) = (self.value(*g), self.value(*x));
                if self.nodes[x.0].needs_grad {
                    let dx = Array2::from_shape_fn(xv.raw_dim(), |(b, c)| gv[[b, c % n]] * dy[[b, c]]);
                    acc(*x, dx, grads);
                }
                if self.nodes[g.0].needs_grad {
                    let mut dg = Array2::zeros(gv.raw_dim());
                    for b in 0..xv.nrows() {
                        for a in 0..*k {
                            for alpha in 0..*n {
                                let c = a * n + alpha;
                                dg[[b, alpha]] += dy[[b, c]] * xv[[b, c]];
                            }
                        }
                    }
                    acc(*g, dg, grads);
                }
            }
            Op::Sigmoid { x } => acc(*x, dy * &y.mapv(|s| s * (1.0 - s)), grads),
            Op::Tanh { x } => acc(*x, dy * &y.mapv(|t| 1.0 - t * t), grads),
            Op::Relu { x } => {
                let xv = self.value(*x);
                let dx = Array2::from_shape_fn(
                    xv.raw_dim(),
                    |(b, c)| {
                        if xv[[b, c]] > 0.0 {
                            dy[[b, c]]
                        } else {
                            0.0
                        }
                    },
                );
                acc(*x, dx, grads);
            }
            Op::SumSquares { x } => acc(*x, self.value(*x) * (2.0 * dy[[0, 0]]), grads),
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = dy[[0, 0]] / targets.len() as f64;
                let mut d = probs.clone();
                for (b, &t) in targets.iter().enumerate() {
                    d[[b, t]] -= 1.0;
                }
                d.mapv_inplace(|v| v * scale);
                acc(*logits, d, grads);
            }
            Op::ComplexConv { x, re, im, grid } => {
                let (dx, dre, dim) = conv::backward(
                    self.value(*x).view(),
                    self.value(*re).view(),
                    self.value(*im).view(),
                    dy.view(),
                    *grid,
                );
                acc(*x, dx, grads);
                acc(*re, dre, grads);
                acc(*im, dim, grads);
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

/// Per-row `−log softmax(logits)[target]`, computed with log-sum-exp.
pub fn cross_entropy_rows(logits: ArrayView2<f64>, targets: &[usize]) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .zip(targets)
        .map(|(row, &t)| {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[t]
        })
        .collect()
}
