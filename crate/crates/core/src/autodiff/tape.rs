//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its forward value and the inputs
//! needed by its backward rule. Because a node can only reference nodes that
//! already exist, the tape is topologically ordered by construction and
//! [`Tape::backward`] is a single reverse sweep.
//!
//! Gradients of leaf nodes persist across `backward` calls until
//! [`Tape::zero_grad`]; intermediate gradients live only for one sweep.

use std::sync::Arc;

use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{AplError, Result};

/// SELU scale λ.
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
/// SELU negative-branch coefficient α.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Sigmoid(Var),
    Log(Var),
    ClampMin(Var, f64),
    Selu(Var),
    SoftmaxRows(Var),
    MeanRows(Var),
    Concat(Vec<Var>),
    Reshape(Var),
    Gather(Var, Vec<usize>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. Gradients are only tracked when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.leaf_shared(Arc::new(value), requires_grad)
    }

    /// Records a tensor that does not participate in differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Records a shared tensor without copying its storage.
    pub fn leaf_shared(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.push_node(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, `None` if no gradient reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn push_node(&mut self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        debug_assert!(
            !inputs.iter().all(|v| self.nodes[v.0].value.all_finite()) || value.all_finite(),
            "non-finite output from {op:?}"
        );
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(Arc::new(value), op, requires_grad)
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        self.value(v)
            .dims2()
            .ok_or_else(|| AplError::shape(op, self.shape(v), &[0, 0]))
    }

    // ---- forward operations ----------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(AplError::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ` without materialising the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul_nt", a)?;
        let (n, k2) = self.dims2("matmul_nt", b)?;
        if k != k2 {
            return Err(AplError::shape("matmul_nt", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::MatMulNT(a, b),
            &[a, b],
        ))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(AplError::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims2("add_row", a)?;
        if self.value(row).len() != n {
            return Err(AplError::shape("add_row", self.shape(a), self.shape(row)));
        }
        let bias = self.value(row).data();
        let mut out = self.value(a).data().to_vec();
        for r in 0..m {
            for (o, &b) in out[r * n..(r + 1) * n].iter_mut().zip(bias) {
                *o += b;
            }
        }
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::AddRow(a, row), &[a, row]))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::Shift(a), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.mul_scalar(a, -1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    /// Natural log. Inputs must be strictly positive; pair with
    /// [`Tape::clamp_min`] when that is not guaranteed.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(AplError::NonFinite(format!("log of non-positive value {bad}")));
        }
        let out = self.value(a).map(f64::ln);
        Ok(self.push(out, Op::Log(a), &[a]))
    }

    pub fn clamp_min(&mut self, a: Var, min: f64) -> Var {
        let out = self.value(a).map(|x| if x < min { min } else { x });
        self.push(out, Op::ClampMin(a, min), &[a])
    }

    pub fn selu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(selu);
        self.push(out, Op::Selu(a), &[a])
    }

    /// Row-wise softmax with max subtraction. A rank-1 input is one row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = *t.shape().last().expect("non-empty shape");
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let out = Tensor::from_parts(t.shape().to_vec(), out);
        self.push(out, Op::SoftmaxRows(a), &[a])
    }

    /// Column means of an `m×n` matrix, shape `[n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims2("mean_rows", a)?;
        let data = self.value(a).data();
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, &x) in out.iter_mut().zip(&data[r * n..(r + 1) * n]) {
                *o += x;
            }
        }
        let inv = 1.0 / m as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(self.push(Tensor::from_parts(vec![n], out), Op::MeanRows(a), &[a]))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.concat_rows_many(&[a, b])
    }

    /// Stacks rank-2 tensors with a common column count.
    pub fn concat_rows_many(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(AplError::EmptyInput { op: "concat_rows" })?;
        let (_, n) = self.dims2("concat_rows", first)?;
        let mut rows = 0;
        for &p in parts {
            let (m, c) = self.dims2("concat_rows", p)?;
            if c != n {
                return Err(AplError::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += m;
        }
        let mut out = Vec::with_capacity(rows * n);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(
            Tensor::from_parts(vec![rows, n], out),
            Op::Concat(parts.to_vec()),
            parts,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.len() || shape.contains(&0) {
            return Err(AplError::shape("reshape", t.shape(), shape));
        }
        let out = t.clone().with_shape(shape.to_vec());
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Picks elements by flat index into a rank-1 result.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        if indices.is_empty() {
            return Err(AplError::EmptyInput { op: "gather" });
        }
        let t = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= t.len()) {
            return Err(AplError::shape("gather", t.shape(), &[bad]));
        }
        let data = indices.iter().map(|&i| t.data()[i]).collect();
        let out = Tensor::from_parts(vec![indices.len()], data);
        Ok(self.push(out, Op::Gather(a, indices.to_vec()), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// `x · w + b` with `w` stored `in×out` and `b` of length `out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    // ---- reverse sweep ---------------------------------------------------

    /// Accumulates `d root / d leaf` into every reachable leaf that requires
    /// gradients.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(AplError::NonScalarRoot(root_value.shape().to_vec()));
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Tensor::from_parts(root_value.shape().to_vec(), vec![1.0]));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            self.backward_node(id, g, &mut grads);
        }
        Ok(())
    }

    fn backward_node(&mut self, id: usize, g: Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let val = |v: Var| -> &Tensor { &nodes[v.0].value };
        let mut acc = |v: Var, delta: Tensor| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let out = &nodes[id].value;

        match &nodes[id].op {
            Op::Leaf => {
                match &mut self.leaf_grads[id] {
                    Some(existing) => existing.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            &Op::MatMul(a, b) => {
                let (m, k) = val(a).dims2().unwrap();
                let (_, n) = val(b).dims2().unwrap();
                if nodes[a.0].requires_grad {
                    let mut ga = vec![0.0; m * k];
                    gemm_nt(g.data(), val(b).data(), &mut ga, m, n, k);
                    acc(a, Tensor::from_parts(vec![m, k], ga));
                }
                if nodes[b.0].requires_grad {
                    let mut gb = vec![0.0; k * n];
                    gemm_tn(val(a).data(), g.data(), &mut gb, m, k, n);
                    acc(b, Tensor::from_parts(vec![k, n], gb));
                }
            }
            &Op::MatMulNT(a, b) => {
                let (m, k) = val(a).dims2().unwrap();
                let (n, _) = val(b).dims2().unwrap();
                if nodes[a.0].requires_grad {
                    let mut ga = vec![0.0; m * k];
                    gemm_nn(g.data(), val(b).data(), &mut ga, m, n, k);
                    acc(a, Tensor::from_parts(vec![m, k], ga));
                }
                if nodes[b.0].requires_grad {
                    let mut gb = vec![0.0; n * k];
                    gemm_tn(g.data(), val(a).data(), &mut gb, m, n, k);
                    acc(b, Tensor::from_parts(vec![n, k], gb));
                }
            }
            &Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g);
            }
            &Op::Sub(a, b) => {
                acc(b, g.map(|x| -x));
                acc(a, g);
            }
            &Op::Mul(a, b) => {
                let ga = zip(&g, val(b), |gi, bi| gi * bi);
                let gb = zip(&g, val(a), |gi, ai| gi * ai);
                acc(a, ga);
                acc(b, gb);
            }
            &Op::AddRow(a, row) => {
                let n = val(row).len();
                let mut gr = vec![0.0; n];
                for chunk in g.data().chunks(n) {
                    for (o, &x) in gr.iter_mut().zip(chunk) {
                        *o += x;
                    }
                }
                acc(row, Tensor::from_parts(val(row).shape().to_vec(), gr));
                acc(a, g);
            }
            &Op::Scale(a, c) => acc(a, g.map(|x| x * c)),
            &Op::Shift(a) => acc(a, g),
            &Op::Sigmoid(a) => acc(a, zip(&g, out, |gi, y| gi * y * (1.0 - y))),
            &Op::Log(a) => acc(a, zip(&g, val(a), |gi, x| gi / x)),
            &Op::ClampMin(a, min) => {
                acc(a, zip(&g, val(a), |gi, x| if x >= min { gi } else { 0.0 }))
            }
            &Op::Selu(a) => acc(
                a,
                zip(&g, val(a), |gi, x| {
                    if x > 0.0 {
                        gi * SELU_LAMBDA
                    } else {
                        gi * SELU_LAMBDA * SELU_ALPHA * x.exp()
                    }
                }),
            ),
            &Op::SoftmaxRows(a) => {
                let n = *out.shape().last().unwrap();
                let mut gx = vec![0.0; out.len()];
                for ((gx_row, g_row), y_row) in gx
                    .chunks_mut(n)
                    .zip(g.data().chunks(n))
                    .zip(out.data().chunks(n))
                {
                    let dotp: f64 = g_row.iter().zip(y_row).map(|(a, b)| a * b).sum();
                    for ((o, &gi), &yi) in gx_row.iter_mut().zip(g_row).zip(y_row) {
                        *o = yi * (gi - dotp);
                    }
                }
                acc(a, Tensor::from_parts(out.shape().to_vec(), gx));
            }
            &Op::MeanRows(a) => {
                let (m, n) = val(a).dims2().unwrap();
                let inv = 1.0 / m as f64;
                let mut gx = Vec::with_capacity(m * n);
                for _ in 0..m {
                    gx.extend(g.data().iter().map(|x| x * inv));
                }
                acc(a, Tensor::from_parts(vec![m, n], gx));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    if nodes[p.0].requires_grad {
                        let slice = g.data()[offset..offset + len].to_vec();
                        acc(p, Tensor::from_parts(val(p).shape().to_vec(), slice));
                    }
                    offset += len;
                }
            }
            &Op::Reshape(a) => {
                let shape = val(a).shape().to_vec();
                acc(a, g.with_shape(shape));
            }
            Op::Gather(a, indices) => {
                let mut gx = Tensor::zeros(val(*a).shape());
                for (&i, &gi) in indices.iter().zip(g.data()) {
                    gx.data_mut()[i] += gi;
                }
                acc(*a, gx);
            }
            &Op::Sum(a) => {
                let mut gx = Tensor::zeros(val(a).shape());
                gx.fill(g.data()[0]);
                acc(a, gx);
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_values() {
        let mut t = Tape::new();
        let i = t.constant(Tensor::identity(2));
        let b = t.constant(mat(&[&[3.0, 4.0], &[5.0, 6.0]]));
        let p = t.matmul(i, b).unwrap();
        assert_eq!(t.value(p).data(), &[3.0, 4.0, 5.0, 6.0]);

        let a = t.constant(mat(&[&[1.0, 2.0]]));
        let c = t.constant(mat(&[&[3.0], &[4.0]]));
        let p = t.matmul(a, c).unwrap();
        assert_eq!(t.value(p).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let mut t = Tape::new();
        let x = t.constant(mat(&[&[0.0, 0.0, 0.0], &[1000.0, 0.0, -1000.0]]));
        let y = t.softmax_rows(x);
        let y = t.value(y);
        for j in 0..3 {
            assert!((y.get2(0, j) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(y.get2(1, 0), 1.0);
        assert!(y.get2(1, 1) < 1e-300);
    }

    #[test]
    fn softmax_matches_high_precision_reference() {
        // exp-normalise of [1,2,3] evaluated at 40 significant digits
        let expected = [
            0.090_030_573_170_380_457_998,
            0.244_728_471_054_797_652_473,
            0.665_240_955_774_821_889_529,
        ];
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap());
        let y = t.softmax_rows(x);
        for (got, want) in t.value(y).data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn selu_reference_points() {
        assert_eq!(selu(0.0), 0.0);
        assert_eq!(selu(1.0), 1.050_700_987_355_480_5);
        // λ·α·(e⁻¹ − 1) at 40 digits
        assert!((selu(-1.0) - (-1.111_330_737_812_562_761_8)).abs() < 1e-15);
    }

    #[test]
    fn mean_rows_values_and_empty() {
        let mut t = Tape::new();
        let x = t.constant(mat(&[&[2.0, 4.0], &[4.0, 8.0]]));
        let m = t.mean_rows(x).unwrap();
        assert_eq!(t.value(m).data(), &[3.0, 6.0]);
        let x = t.constant(mat(&[&[7.0, 7.0]]));
        let m = t.mean_rows(x).unwrap();
        assert_eq!(t.value(m).data(), &[7.0, 7.0]);
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
    }

    #[test]
    fn concat_rows_shapes_and_split() {
        let mut t = Tape::new();
        let a = t.constant(mat(&[&[1.0]]));
        let b = t.constant(mat(&[&[2.0]]));
        let c = t.concat_rows(a, b).unwrap();
        assert_eq!(t.shape(c), &[2, 1]);
        assert_eq!(t.value(c).data(), &[1.0, 2.0]);

        let a = t.constant(Tensor::zeros(&[300, 256]));
        let b = t.constant(Tensor::zeros(&[128, 256]));
        let c = t.concat_rows(a, b).unwrap();
        assert_eq!(t.shape(c), &[428, 256]);

        let bad = t.constant(Tensor::zeros(&[1, 3]));
        assert!(t.concat_rows(a, bad).is_err());
    }

    #[test]
    fn scalar_ops() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::scalar(0.0));
        let s = t.sigmoid(z);
        assert_eq!(t.value(s).data()[0], 0.5);
        let one = t.constant(Tensor::scalar(1.0));
        let l = t.log(one).unwrap();
        assert_eq!(t.value(l).data()[0], 0.0);
        let tiny = t.constant(Tensor::scalar(1e-30));
        let c = t.clamp_min(tiny, 1e-12);
        assert_eq!(t.value(c).data()[0], 1e-12);
        assert!(t.log(z).is_err());
    }

    #[test]
    fn clamp_blocks_gradient_where_clamped() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1e-30, 0.5]).unwrap(), true);
        let c = t.clamp_min(x, 1e-12);
        let s = t.sum(c);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn square_derivative_and_accumulation() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0), true);
        let y = t.mul(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[6.0]);
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[12.0]);
        t.zero_grad();
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn softmax_mean_gradient_sums_to_zero() {
        let mut t = Tape::new();
        let x = t.leaf(mat(&[&[0.3, -1.2, 2.0, 0.7]]), true);
        let y = t.softmax_rows(x);
        let m = t.mean_rows(y).unwrap();
        let s = t.sum(m);
        t.backward(s).unwrap();
        let total: f64 = t.grad(x).unwrap().data().iter().sum();
        assert!(total.abs() < 1e-10);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[2]), true);
        assert!(matches!(t.backward(x), Err(AplError::NonScalarRoot(_))));
    }

    #[test]
    fn gather_scatters_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap(), true);
        let g = t.gather(x, &[2, 0, 2]).unwrap();
        let s = t.sum(g);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[1.0, 0.0, 2.0]);
        assert!(t.gather(x, &[3]).is_err());
    }
}
