//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every forward op appends one node holding its value and the data its
//! backward rule needs. Nodes are only ever appended, so inputs always
//! precede outputs and a single reverse sweep visits each node once.
//! Nodes whose inputs do not require gradients are recorded as constants
//! and skipped by the sweep.

use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

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
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Dropout(Var, Vec<f64>),
    Gather(Var, Rc<[usize]>),
    ScatterSum(Var, Rc<[usize]>),
    SegmentMean(Var, Rc<[usize]>, Vec<f64>),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    RowSum(Var),
    Sum(Var),
    Bce {
        logits: Var,
        targets: Vec<f64>,
        mask: Vec<bool>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Mean and unbiased variance of a train-mode batch norm call, for updating
/// running statistics.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var_unbiased: Vec<f64>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<Tensor> {
        self.grads[var.0]
            .as_ref()
            .map(|g| Tensor::new(self.shapes[var.0].clone(), g.clone()).expect("grad shape"))
    }

    pub fn data(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: if requires_grad { op } else { Op::Leaf },
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    /// `x[B×d] + bias[d]`, broadcasting the bias over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let w = vx.cols();
        if !vx.is_matrix() || vb.numel() != w {
            return Err(shape_err("add_row", vx, vb));
        }
        let b = vb.data();
        let data = vx
            .data()
            .chunks(w.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, rg, Op::AddRow(x, bias)))
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        let vx = self.value(x);
        let out = Tensor::new(vx.shape().to_vec(), vx.data().iter().map(|v| v * c).collect())
            .expect("same shape");
        let rg = self.rg(x);
        self.push(out, rg, Op::Scale(x, c))
    }

    /// `s · x` with `s` a one-element tensor on the tape.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let (vx, vs) = (self.value(x), self.value(s));
        if vs.numel() != 1 {
            return Err(shape_err("scale_by", vx, vs));
        }
        let c = vs.data()[0];
        let out = Tensor::new(vx.shape().to_vec(), vx.data().iter().map(|v| c * v).collect())?;
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(out, rg, Op::ScaleBy(x, s)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    /// `x[B×d] ⊙ w[d]`, broadcasting the weights over rows.
    pub fn mul_row(&mut self, x: Var, w: Var) -> Result<Var> {
        let (vx, vw) = (self.value(x), self.value(w));
        let width = vx.cols();
        if !vx.is_matrix() || vw.numel() != width {
            return Err(shape_err("mul_row", vx, vw));
        }
        let wd = vw.data();
        let data = vx
            .data()
            .chunks(width.max(1))
            .flat_map(|row| row.iter().zip(wd).map(|(x, y)| x * y))
            .collect();
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(out, rg, Op::MulRow(x, w)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let out = Tensor::new(
            vx.shape().to_vec(),
            vx.data().iter().map(|v| v.max(0.0)).collect(),
        )
        .expect("same shape");
        let rg = self.rg(x);
        self.push(out, rg, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let out = Tensor::new(vx.shape().to_vec(), vx.data().iter().map(|&v| sigmoid(v)).collect())
            .expect("same shape");
        let rg = self.rg(x);
        self.push(out, rg, Op::Sigmoid(x))
    }

    /// Inverted dropout. Identity when `train` is false or `p == 0`.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, train: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Argument(format!("dropout probability {p} not in [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let vx = self.value(x);
        let mask: Vec<f64> = (0..vx.numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = vx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, rg, Op::Dropout(x, mask)))
    }

    /// Row gather: `out[e] = x[index[e]]`.
    pub fn gather(&mut self, x: Var, index: Rc<[usize]>) -> Result<Var> {
        let vx = self.value(x);
        let rows = vx.shape()[0];
        let w = vx.cols();
        let mut data = Vec::with_capacity(index.len() * w);
        for &i in index.iter() {
            if i >= rows {
                return Err(Error::Index {
                    op: "gather",
                    index: i,
                    extent: rows,
                });
            }
            data.extend_from_slice(vx.row(i));
        }
        let out = Tensor::new(vec![index.len(), w], data)?;
        let rg = self.rg(x);
        Ok(self.push(out, rg, Op::Gather(x, index)))
    }

    /// `out[s] = Σ values[e]` over `e` with `segment_ids[e] == s`.
    pub fn scatter_sum(
        &mut self,
        values: Var,
        segment_ids: Rc<[usize]>,
        num_segments: usize,
    ) -> Result<Var> {
        let out = scatter_rows(self.value(values), &segment_ids, num_segments, "scatter_sum")?;
        let rg = self.rg(values);
        Ok(self.push(out, rg, Op::ScatterSum(values, segment_ids)))
    }

    /// Per-segment mean of rows; segments without rows yield zero rows.
    pub fn segment_mean(
        &mut self,
        values: Var,
        segment_ids: Rc<[usize]>,
        num_segments: usize,
    ) -> Result<Var> {
        let mut out = scatter_rows(self.value(values), &segment_ids, num_segments, "segment_mean")?;
        let mut counts = vec![0.0; num_segments];
        for &s in segment_ids.iter() {
            counts[s] += 1.0;
        }
        let w = out.cols();
        let inv: Vec<f64> = counts.iter().map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 }).collect();
        for (s, row) in out.data_mut().chunks_mut(w.max(1)).enumerate() {
            row.iter_mut().for_each(|v| *v *= inv[s]);
        }
        let rg = self.rg(values);
        Ok(self.push(out, rg, Op::SegmentMean(values, segment_ids, inv)))
    }

    /// Train-mode batch normalization over rows with biased batch variance.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats)> {
        let vx = self.value(x);
        let (b, d) = (vx.rows(), vx.cols());
        self.check_affine(x, gamma, beta)?;
        if b < 2 {
            return Err(Error::DegenerateBatch { rows: b });
        }
        let mut mean = vec![0.0; d];
        for row in vx.data().chunks(d) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= b as f64);
        let mut var = vec![0.0; d];
        for row in vx.data().chunks(d) {
            for j in 0..d {
                let c = row[j] - mean[j];
                var[j] += c * c;
            }
        }
        let var_unbiased = var.iter().map(|v| v / (b - 1) as f64).collect();
        var.iter_mut().for_each(|v| *v /= b as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = self.normalize(x, gamma, beta, &mean, inv_std, true);
        Ok((out, BatchStats { mean, var_unbiased }))
    }

    /// Eval-mode batch normalization with fixed statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        self.check_affine(x, gamma, beta)?;
        let d = self.value(x).cols();
        if running_mean.len() != d || running_var.len() != d {
            return Err(Error::Shape {
                op: "batch_norm",
                left: vec![d],
                right: vec![running_mean.len(), running_var.len()],
            });
        }
        let inv_std = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        Ok(self.normalize(x, gamma, beta, running_mean, inv_std, false))
    }

    fn check_affine(&self, x: Var, gamma: Var, beta: Var) -> Result<()> {
        let vx = self.value(x);
        let d = vx.cols();
        for p in [gamma, beta] {
            if !vx.is_matrix() || self.value(p).numel() != d {
                return Err(shape_err("batch_norm", vx, self.value(p)));
            }
        }
        Ok(())
    }

    fn normalize(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: Vec<f64>,
        train: bool,
    ) -> Var {
        let vx = self.value(x);
        let d = vx.cols();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut x_hat = Vec::with_capacity(vx.numel());
        let mut data = Vec::with_capacity(vx.numel());
        for row in vx.data().chunks(d.max(1)) {
            for j in 0..d {
                let h = (row[j] - mean[j]) * inv_std[j];
                x_hat.push(h);
                data.push(g[j] * h + bt[j]);
            }
        }
        let out = Tensor::new(vx.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            out,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                train,
            },
        )
    }

    /// `[B×d] → [B×1]` row sums.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let w = vx.cols();
        let rows = vx.rows();
        let data: Vec<f64> = if w == 0 {
            vec![0.0; rows]
        } else {
            vx.data().chunks(w).map(|r| r.iter().sum()).collect()
        };
        let out = Tensor::new(vec![rows, 1], data).expect("row sums");
        let rg = self.rg(x);
        self.push(out, rg, Op::RowSum(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), rg, Op::Sum(x))
    }

    /// Mean binary cross-entropy with logits over entries where `mask` is true.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], mask: &[bool]) -> Result<Var> {
        let vz = self.value(logits);
        if vz.numel() != targets.len() || vz.numel() != mask.len() {
            return Err(Error::Shape {
                op: "bce_with_logits",
                left: vz.shape().to_vec(),
                right: vec![targets.len(), mask.len()],
            });
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyLoss);
        }
        let mut total = 0.0;
        for ((&z, &y), &m) in vz.data().iter().zip(targets).zip(mask) {
            if m {
                total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            }
        }
        let out = Tensor::scalar(total / count as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            out,
            rg,
            Op::Bce {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                count,
            },
        ))
    }

    /// Reverse sweep from a one-element output.
    pub fn backward(&self, output: Var) -> Gradients {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let out_len = self.nodes[output.0].value.numel();
        grads[output.0] = Some(vec![1.0; out_len]);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                acc(*a, &mut |ga| gemm(m, n, k, g, false, vb.data(), true, ga, true));
                acc(*b, &mut |gb| gemm(k, m, n, va.data(), true, g, false, gb, true));
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    acc(*v, &mut |gv| gv.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                }
            }
            Op::AddRow(x, bias) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += b));
                let w = self.value(*x).cols();
                acc(*bias, &mut |gb| {
                    for row in g.chunks(w.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                });
            }
            Op::Scale(x, c) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += c * b));
            }
            Op::ScaleBy(x, s) => {
                let c = self.value(*s).data()[0];
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += c * b));
                let vx = self.value(*x).data();
                acc(*s, &mut |gs| gs[0] += vx.iter().zip(g).map(|(a, b)| a * b).sum::<f64>());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * vb[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[i] * va[i];
                    }
                });
            }
            Op::MulRow(x, w) => {
                let vx = self.value(*x);
                let width = vx.cols().max(1);
                let vw = self.value(*w).data();
                acc(*x, &mut |gx| {
                    for (i, v) in gx.iter_mut().enumerate() {
                        *v += g[i] * vw[i % width];
                    }
                });
                acc(*w, &mut |gw| {
                    for (i, v) in vx.data().iter().enumerate() {
                        gw[i % width] += g[i] * v;
                    }
                });
            }
            Op::Relu(x) => {
                let vx = self.value(*x).data();
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        if vx[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Dropout(x, mask) => {
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] += g[i] * mask[i];
                    }
                });
            }
            Op::Gather(x, index) => {
                let w = self.value(*x).cols();
                acc(*x, &mut |gx| {
                    for (e, &i) in index.iter().enumerate() {
                        let src = &g[e * w..(e + 1) * w];
                        gx[i * w..(i + 1) * w]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, b)| *a += b);
                    }
                });
            }
            Op::ScatterSum(v, ids) => {
                let w = self.value(*v).cols();
                acc(*v, &mut |gv| {
                    for (e, &s) in ids.iter().enumerate() {
                        let src = &g[s * w..(s + 1) * w];
                        gv[e * w..(e + 1) * w]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, b)| *a += b);
                    }
                });
            }
            Op::SegmentMean(v, ids, inv) => {
                let w = self.value(*v).cols();
                acc(*v, &mut |gv| {
                    for (e, &s) in ids.iter().enumerate() {
                        let src = &g[s * w..(s + 1) * w];
                        gv[e * w..(e + 1) * w]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, b)| *a += b * inv[s]);
                    }
                });
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                train,
            } => {
                let vx = self.value(*x);
                let (b, d) = (vx.rows(), vx.cols());
                let gam = self.value(*gamma).data();
                let mut sum_g = vec![0.0; d];
                let mut sum_gx = vec![0.0; d];
                for r in 0..b {
                    for j in 0..d {
                        let gi = g[r * d + j];
                        sum_g[j] += gi;
                        sum_gx[j] += gi * x_hat[r * d + j];
                    }
                }
                acc(*beta, &mut |gb| gb.iter_mut().zip(&sum_g).for_each(|(a, s)| *a += s));
                acc(*gamma, &mut |gg| gg.iter_mut().zip(&sum_gx).for_each(|(a, s)| *a += s));
                acc(*x, &mut |gx| {
                    let bf = b as f64;
                    for r in 0..b {
                        for j in 0..d {
                            let i = r * d + j;
                            if *train {
                                gx[i] += gam[j] * inv_std[j] / bf
                                    * (bf * g[i] - sum_g[j] - x_hat[i] * sum_gx[j]);
                            } else {
                                gx[i] += gam[j] * inv_std[j] * g[i];
                            }
                        }
                    }
                });
            }
            Op::RowSum(x) => {
                let w = self.value(*x).cols();
                acc(*x, &mut |gx| {
                    for (i, v) in gx.iter_mut().enumerate() {
                        *v += g[i / w.max(1)];
                    }
                });
            }
            Op::Sum(x) => {
                acc(*x, &mut |gx| gx.iter_mut().for_each(|v| *v += g[0]));
            }
            Op::Bce {
                logits,
                targets,
                mask,
                count,
            } => {
                let z = self.value(*logits).data();
                let scale = g[0] / *count as f64;
                acc(*logits, &mut |gz| {
                    for i in 0..gz.len() {
                        if mask[i] {
                            gz[i] += scale * (sigmoid(z[i]) - targets[i]);
                        }
                    }
                });
            }
        }
    }
}

fn scatter_rows(values: &Tensor, ids: &[usize], segments: usize, op: &'static str) -> Result<Tensor> {
    if values.numel() > 0 && values.rows() != ids.len() {
        return Err(Error::Shape {
            op,
            left: values.shape().to_vec(),
            right: vec![ids.len()],
        });
    }
    let w = if values.is_matrix() { values.cols() } else { 1 };
    let mut out = vec![0.0; segments * w];
    for (e, &s) in ids.iter().enumerate() {
        if s >= segments {
            return Err(Error::Index {
                op,
                index: s,
                extent: segments,
            });
        }
        out[s * w..(s + 1) * w]
            .iter_mut()
            .zip(values.row(e))
            .for_each(|(a, b)| *a += b);
    }
    Tensor::new(vec![segments, w], out)
}
