//! Reverse-mode differentiation over whole-tensor operations.
//!
//! A [`Tape`] records every operation as a node. [`Tape::backward`] walks the
//! nodes in reverse creation order, so the node list is already a topological
//! order. Gradients are those of the *sum of all entries* of the output node.

use log::debug;

use super::params::ParamStore;
use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    Transpose(Var),
    Add(Var, Var),
    AddBias(Var, Var),
    SubSlices(Var, Var),
    GraphMix(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    RowSoftmax(Var),
    Reshape(Var),
    SumSquares(Var),
    Contrastive { emb: Var, same: Vec<bool>, margin: f64 },
    Bce { probs: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Lower/upper clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Input that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Copies a named parameter onto the tape and remembers the binding so
    /// that gradients can be written back with [`ParamStore::load_grads`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some((_, var)) = self.params.iter().find(|(n, _)| n == name) {
            return Ok(*var);
        }
        let value = store.value(name)?.clone();
        let var = self.leaf(value);
        self.params.push((name.to_string(), var));
        Ok(var)
    }

    /// `(name, var)` pairs for every parameter placed on this tape.
    pub fn param_bindings(&self) -> &[(String, Var)] {
        &self.params
    }

    /// Matrix product. A rank-3 `a` of shape `n×r×k` is multiplied slice by
    /// slice, which is the same as treating it as an `(n·r)×k` matrix.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.as_matrix_dims();
        let (k2, n) = bv.dims2()?;
        if av.rank() < 2 || k != k2 {
            return Err(Error::shape_mismatch("matmul", av.shape(), bv.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(&mut out, av.data(), bv.data(), m, k, n);
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let t = Tensor::new(&shape, out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose()?;
        let rg = self.needs(&[a]);
        Ok(self.push(t, Op::Transpose(a), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape_mismatch("add", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(av.shape(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    /// Adds a vector along the last axis.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        let (_, cols) = av.as_matrix_dims();
        if bv.rank() != 1 || bv.len() != cols {
            return Err(Error::shape_mismatch("add_bias", av.shape(), bv.shape()));
        }
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols.max(1)) {
            for (x, b) in row.iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        let t = Tensor::new(av.shape(), data)?;
        let rg = self.needs(&[a, bias]);
        Ok(self.push(t, Op::AddBias(a, bias), rg))
    }

    /// `a[s] - b` for every leading slice `s` of a rank-3 `a`.
    pub fn sub_slices(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 3 || bv.rank() != 2 || av.shape()[1..] != *bv.shape() {
            return Err(Error::shape_mismatch("sub_slices", av.shape(), bv.shape()));
        }
        let slice = bv.len();
        let mut data = av.data().to_vec();
        if slice > 0 {
            for chunk in data.chunks_mut(slice) {
                for (x, y) in chunk.iter_mut().zip(bv.data()) {
                    *x -= y;
                }
            }
        }
        let t = Tensor::new(av.shape(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::SubSlices(a, b), rg))
    }

    /// Left-multiplies every node-axis slice of `x` by the square matrix `adj`.
    /// `x` is either `N×c` (one slice) or `n×N×c`.
    pub fn graph_mix(&mut self, adj: Var, x: Var) -> Result<Var> {
        let (gv, xv) = (self.value(adj), self.value(x));
        let (r, c) = gv.dims2()?;
        let nodes = match xv.shape() {
            [nodes, _] | [_, nodes, _] => *nodes,
            _ => return Err(Error::shape_mismatch("graph_mix", gv.shape(), xv.shape())),
        };
        if r != c || nodes != r {
            return Err(Error::shape_mismatch("graph_mix", gv.shape(), xv.shape()));
        }
        let width = *xv.shape().last().unwrap();
        let slice = nodes * width;
        let mut out = vec![0.0; xv.len()];
        if slice > 0 {
            for (o, xs) in out.chunks_mut(slice).zip(xv.data().chunks(slice)) {
                gemm_acc(o, gv.data(), xs, nodes, nodes, width);
            }
        }
        let t = Tensor::new(xv.shape(), out)?;
        let rg = self.needs(&[adj, x]);
        Ok(self.push(t, Op::GraphMix(adj, x), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * factor).collect();
        let t = Tensor::new(av.shape(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(t, Op::Scale(a, factor), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| if x < 0.0 { 0.0 } else { x }).collect();
        let t = Tensor::new(av.shape(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(t, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| sigmoid(x)).collect();
        let t = Tensor::new(av.shape(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(t, Op::Sigmoid(a), rg)
    }

    /// Exp-normalizes each row of a rank-2 tensor.
    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (_, cols) = av.dims2()?;
        let mut data = av.data().to_vec();
        if cols > 0 {
            for row in data.chunks_mut(cols) {
                softmax_in_place(row);
            }
        }
        let t = Tensor::new(av.shape(), data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(t, Op::RowSoftmax(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshaped(shape)?;
        let rg = self.needs(&[a]);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Sum of squared entries, as a one-element tensor.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|x| x * x).sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::SumSquares(a), rg)
    }

    /// Margin contrastive loss over all unordered row pairs of `emb` (`n×D`).
    ///
    /// `same[i*n + j]` marks positive pairs. Each pair contributes
    /// `d²` when positive and `max(0, margin² - d²)` otherwise, where `d` is
    /// the Euclidean distance between rows; the result is the mean over pairs.
    /// Fewer than two rows yields zero.
    pub fn contrastive(&mut self, emb: Var, same: Vec<bool>, margin: f64) -> Result<Var> {
        let ev = self.value(emb);
        let (n, width) = ev.dims2()?;
        if same.len() != n * n {
            return Err(Error::Shape(format!(
                "contrastive: pair mask has {} entries for {n} rows",
                same.len()
            )));
        }
        let value = if n < 2 {
            debug!("contrastive loss on a batch of {n}: no pairs, returning 0");
            0.0
        } else {
            let m2 = margin * margin;
            let mut total = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    let d2 = sq_dist(&ev.data()[i * width..(i + 1) * width], &ev.data()[j * width..(j + 1) * width]);
                    total += if same[i * n + j] { d2 } else { (m2 - d2).max(0.0) };
                }
            }
            total / pair_count(n)
        };
        let rg = self.needs(&[emb]);
        Ok(self.push(Tensor::scalar(value), Op::Contrastive { emb, same, margin }, rg))
    }

    /// Binary cross-entropy summed over labels and averaged over rows.
    pub fn bce(&mut self, probs: Var, targets: &Tensor) -> Result<Var> {
        let pv = self.value(probs);
        if pv.shape() != targets.shape() {
            return Err(Error::shape_mismatch("bce", pv.shape(), targets.shape()));
        }
        let (rows, _) = pv.as_matrix_dims();
        let mut total = 0.0;
        for (&p, &y) in pv.data().iter().zip(targets.data()) {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total += -y * p.ln() - (1.0 - y) * (1.0 - p).ln();
        }
        let value = if rows == 0 { 0.0 } else { total / rows as f64 };
        let rg = self.needs(&[probs]);
        let op = Op::Bce { probs, targets: targets.data().to_vec() };
        Ok(self.push(Tensor::scalar(value), op, rg))
    }

    /// Gradients of the sum of `output`'s entries with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        let out = &self.nodes[output.0].value;
        grads[output.0] = Some(Tensor::filled(out.shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.as_matrix_dims();
                let n = bv.shape()[1];
                if self.rg(*a) {
                    let ga = grad_slot(grads, *a, av);
                    gemm_nt_acc(ga.data_mut(), g.data(), bv.data(), m, n, k);
                }
                if self.rg(*b) {
                    let gb = grad_slot(grads, *b, bv);
                    gemm_tn_acc(gb.data_mut(), av.data(), g.data(), m, k, n);
                }
            }
            Op::Transpose(a) => {
                if self.rg(*a) {
                    let gt = g.transpose().expect("rank-2");
                    accumulate(grads, *a, self.value(*a), gt.data());
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.rg(*v) {
                        accumulate(grads, *v, self.value(*v), g.data());
                    }
                }
            }
            Op::AddBias(a, bias) => {
                if self.rg(*a) {
                    accumulate(grads, *a, self.value(*a), g.data());
                }
                if self.rg(*bias) {
                    let bv = self.value(*bias);
                    let gb = grad_slot(grads, *bias, bv);
                    let cols = bv.len();
                    if cols > 0 {
                        for row in g.data().chunks(cols) {
                            for (o, x) in gb.data_mut().iter_mut().zip(row) {
                                *o += x;
                            }
                        }
                    }
                }
            }
            Op::SubSlices(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, self.value(*a), g.data());
                }
                if self.rg(*b) {
                    let bv = self.value(*b);
                    let gb = grad_slot(grads, *b, bv);
                    let slice = bv.len();
                    if slice > 0 {
                        for chunk in g.data().chunks(slice) {
                            for (o, x) in gb.data_mut().iter_mut().zip(chunk) {
                                *o -= x;
                            }
                        }
                    }
                }
            }
            Op::GraphMix(adj, x) => {
                let (gv, xv) = (self.value(*adj), self.value(*x));
                let nodes = gv.shape()[0];
                let width = *xv.shape().last().unwrap();
                let slice = nodes * width;
                if slice == 0 {
                    return;
                }
                if self.rg(*adj) {
                    let ga = grad_slot(grads, *adj, gv);
                    for (gs, xs) in g.data().chunks(slice).zip(xv.data().chunks(slice)) {
                        gemm_nt_acc(ga.data_mut(), gs, xs, nodes, width, nodes);
                    }
                }
                if self.rg(*x) {
                    let gx = grad_slot(grads, *x, xv);
                    for (o, gs) in gx.data_mut().chunks_mut(slice).zip(g.data().chunks(slice)) {
                        gemm_tn_acc(o, gv.data(), gs, nodes, nodes, width);
                    }
                }
            }
            Op::Scale(a, factor) => {
                if self.rg(*a) {
                    let scaled: Vec<f64> = g.data().iter().map(|x| x * factor).collect();
                    accumulate(grads, *a, self.value(*a), &scaled);
                }
            }
            Op::Relu(a) => {
                if self.rg(*a) {
                    let av = self.value(*a);
                    let local: Vec<f64> =
                        av.data().iter().zip(g.data()).map(|(&x, &gy)| if x > 0.0 { gy } else { 0.0 }).collect();
                    accumulate(grads, *a, av, &local);
                }
            }
            Op::Sigmoid(a) => {
                if self.rg(*a) {
                    let local: Vec<f64> =
                        node.value.data().iter().zip(g.data()).map(|(&s, &gy)| gy * s * (1.0 - s)).collect();
                    accumulate(grads, *a, self.value(*a), &local);
                }
            }
            Op::RowSoftmax(a) => {
                if self.rg(*a) {
                    let cols = node.value.shape()[1];
                    let mut local = vec![0.0; node.value.len()];
                    if cols > 0 {
                        for ((o, s), gy) in local
                            .chunks_mut(cols)
                            .zip(node.value.data().chunks(cols))
                            .zip(g.data().chunks(cols))
                        {
                            let dot: f64 = s.iter().zip(gy).map(|(a, b)| a * b).sum();
                            for ((o, &si), &gi) in o.iter_mut().zip(s).zip(gy) {
                                *o = si * (gi - dot);
                            }
                        }
                    }
                    accumulate(grads, *a, self.value(*a), &local);
                }
            }
            Op::Reshape(a) => {
                if self.rg(*a) {
                    accumulate(grads, *a, self.value(*a), g.data());
                }
            }
            Op::SumSquares(a) => {
                if self.rg(*a) {
                    let g0 = g.data()[0];
                    let local: Vec<f64> = self.value(*a).data().iter().map(|x| 2.0 * x * g0).collect();
                    accumulate(grads, *a, self.value(*a), &local);
                }
            }
            Op::Contrastive { emb, same, margin } => {
                let ev = self.value(*emb);
                let (n, width) = (ev.shape()[0], ev.shape()[1]);
                if n < 2 || !self.rg(*emb) {
                    return;
                }
                let m2 = margin * margin;
                let scale = g.data()[0] / pair_count(n);
                let data = ev.data();
                let ge = grad_slot(grads, *emb, ev);
                for i in 0..n {
                    for j in i + 1..n {
                        let (ri, rj) = (&data[i * width..(i + 1) * width], &data[j * width..(j + 1) * width]);
                        let coeff = if same[i * n + j] {
                            2.0
                        } else if sq_dist(ri, rj) < m2 {
                            -2.0
                        } else {
                            continue;
                        };
                        let gd = ge.data_mut();
                        for c in 0..width {
                            let d = coeff * scale * (ri[c] - rj[c]);
                            gd[i * width + c] += d;
                            gd[j * width + c] -= d;
                        }
                    }
                }
            }
            Op::Bce { probs, targets } => {
                if !self.rg(*probs) {
                    return;
                }
                let pv = self.value(*probs);
                let (rows, _) = pv.as_matrix_dims();
                let scale = g.data()[0] / rows.max(1) as f64;
                let local: Vec<f64> = pv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&p, &y)| {
                        if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
                            0.0
                        } else {
                            scale * (-y / p + (1.0 - y) / (1.0 - p))
                        }
                    })
                    .collect();
                accumulate(grads, *probs, pv, &local);
            }
        }
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }
}

fn grad_slot<'a>(grads: &'a mut [Option<Tensor>], var: Var, like: &Tensor) -> &'a mut Tensor {
    grads[var.0].get_or_insert_with(|| Tensor::zeros(like.shape()))
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, like: &Tensor, delta: &[f64]) {
    let slot = grad_slot(grads, var, like);
    for (o, d) in slot.data_mut().iter_mut().zip(delta) {
        *o += d;
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn pair_count(n: usize) -> f64 {
    (n * (n - 1) / 2) as f64
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = tape.constant(t2(&[&[1., 0.], &[0., 1.]]));
        let b = tape.constant(t2(&[&[3.], &[4.]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[3., 4.]);
    }

    #[test]
    fn matmul_row_by_column() {
        let mut tape = Tape::new();
        let a = tape.constant(t2(&[&[1., 2.]]));
        let b = tape.constant(t2(&[&[3.], &[4.]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[11.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 2]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn matmul_rank3_is_per_slice() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(&[2, 1, 2], vec![1., 2., 3., 4.]).unwrap());
        let b = tape.constant(t2(&[&[1.], &[1.]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 1, 1]);
        assert_eq!(tape.value(c).data(), &[3., 7.]);
    }

    #[test]
    fn relu_sign_cases() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(&[3], vec![-1., 0., 2.]).unwrap());
        let r = tape.relu(a);
        assert_eq!(tape.value(r).data(), &[0., 0., 2.]);
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(t2(&[&[0., 0.]]));
        let s = tape.row_softmax(a).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);

        let b = tape.constant(t2(&[&[1., 0.]]));
        let s = tape.row_softmax(b).unwrap();
        let e = std::f64::consts::E;
        assert!((tape.value(s).data()[0] - 0.7311).abs() < 1e-4);
        assert!((tape.value(s).data()[1] - 0.2689).abs() < 1e-4);
        assert!((tape.value(s).data()[0] - e / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn softmax_requires_rank2() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[3]));
        assert!(tape.row_softmax(a).is_err());
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0).is_finite());
        assert!(sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn backward_of_sum_through_matmul() {
        // d/dA sum(A·B) = 1·Bᵀ
        let mut tape = Tape::new();
        let a = tape.leaf(t2(&[&[1., 2.], &[3., 4.]]));
        let b = tape.constant(t2(&[&[5., 6.], &[7., 8.]]));
        let c = tape.matmul(a, b).unwrap();
        let grads = tape.backward(c).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[11., 15., 11., 15.]);
        assert!(grads.get(b).is_none());
    }

    #[test]
    fn reused_node_accumulates() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(&[2], vec![1., -3.]).unwrap());
        let s = tape.add(a, a).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[2., 2.]);
    }

    #[test]
    fn contrastive_hand_values() {
        let mut tape = Tape::new();
        let e = tape.leaf(t2(&[&[1., 2.], &[1., 2.]]));
        let same = tape.contrastive(e, vec![false, true, true, false], 1.0).unwrap();
        assert_eq!(tape.value(same).data(), &[0.0]);
        let diff = tape.contrastive(e, vec![false; 4], 1.0).unwrap();
        assert_eq!(tape.value(diff).data(), &[1.0]);

        let far = tape.leaf(t2(&[&[0., 0.], &[3., 0.]]));
        let l = tape.contrastive(far, vec![false; 4], 1.0).unwrap();
        assert_eq!(tape.value(l).data(), &[0.0]);
    }

    #[test]
    fn contrastive_single_row_is_zero() {
        let mut tape = Tape::new();
        let e = tape.leaf(t2(&[&[1., 2.]]));
        let l = tape.contrastive(e, vec![true], 1.0).unwrap();
        assert_eq!(tape.value(l).data(), &[0.0]);
        let grads = tape.backward(l).unwrap();
        assert!(grads.get(e).is_none());
    }

    #[test]
    fn bce_half_probabilities() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::filled(&[1, 4], 0.5));
        let y = Tensor::new(&[1, 4], vec![1., 0., 1., 1.]).unwrap();
        let l = tape.bce(p, &y).unwrap();
        assert!((tape.value(l).data()[0] - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert!((tape.value(l).data()[0] - 2.7726).abs() < 1e-4);
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let mut tape = Tape::new();
        let y = Tensor::new(&[2, 3], vec![1., 0., 1., 0., 0., 1.]).unwrap();
        let p = tape.constant(y.clone());
        let l = tape.bce(p, &y).unwrap();
        assert!(tape.value(l).data()[0] < 1e-10);
    }

    #[test]
    fn bce_flip_symmetry() {
        let probs = vec![0.1, 0.7, 0.35, 0.9];
        let ys = vec![1., 0., 0., 1.];
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::new(&[2, 2], probs.clone()).unwrap());
        let l1 = tape.bce(p, &Tensor::new(&[2, 2], ys.clone()).unwrap()).unwrap();
        let pf = tape.constant(Tensor::new(&[2, 2], probs.iter().map(|x| 1.0 - x).collect()).unwrap());
        let yf = Tensor::new(&[2, 2], ys.iter().map(|y| 1.0 - y).collect()).unwrap();
        let l2 = tape.bce(pf, &yf).unwrap();
        assert!((tape.value(l1).data()[0] - tape.value(l2).data()[0]).abs() < 1e-12);
    }
}
