//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records an append-only, topologically ordered list of nodes
//! with eagerly computed values. [`Tape::backward`] walks the tape in
//! reverse, accumulating gradients in double precision for every node on a
//! path from the loss to an input marked as requiring gradients.
//!
//! The op set is deliberately small and enumerable; each rule is checked by
//! finite differences (see [`grad_check`]).

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::TapeError;
use crate::operator::GraphOperator;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    /// Fixed sparse/dense graph operator times the parent.
    Spmm(Arc<GraphOperator>),
    MatMul,
    /// Parent 0 plus parent 1 (a 1xC bias) broadcast over rows.
    AddBias,
    Relu,
    /// Row-wise normalization with learned gain/bias (parents: x, gain, bias).
    LayerNormRows,
    /// Inverted dropout; identity in eval mode.
    Dropout { mask: Option<Array2<f64>> },
    LogSoftmax,
    /// Select rows of the parent.
    GatherRows(Vec<usize>),
    /// Vertical stack of two parents.
    ConcatRows,
    /// Horizontal stack of parents.
    ConcatCols,
    /// Parent 0 with rows at the given indices replaced by parent 1.
    RowUpdate(Vec<usize>),
    /// alpha * parent0 + beta * parent1.
    ScaleAdd { alpha: f64, beta: f64 },
    SumAll,
    /// Mean negative log-likelihood of per-row labels on log-probabilities.
    NllLoss(Vec<u32>),
    /// Sum over rows of max(0, z_label - max_{l != label} z_l).
    CwMargin(Vec<u32>),
}

struct Node {
    op: Op,
    parents: Vec<usize>,
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
    needs_grad: bool,
}

/// Append-only computation tape.
pub struct Tape {
    nodes: Vec<Node>,
    training: bool,
    rng: ChaCha8Rng,
}

impl Tape {
    /// `training` enables dropout; `seed` drives the dropout masks.
    pub fn new(training: bool, seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward pass, if this node required one.
    pub fn grad(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, op: Op, parents: Vec<usize>, value: Array2<f64>) -> NodeId {
        let needs_grad = parents.iter().any(|&p| self.nodes[p].needs_grad);
        self.nodes.push(Node {
            op,
            parents,
            value,
            grad: None,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf node; `requires_grad` marks it as a differentiation target.
    pub fn input(&mut self, value: Array2<f64>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Input,
            parents: Vec::new(),
            value,
            grad: None,
            needs_grad: requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.input(value, false)
    }

    pub fn spmm(&mut self, op: &Arc<GraphOperator>, x: NodeId) -> Result<NodeId, TapeError> {
        let xv = &self.nodes[x.0].value;
        if op.dim() != xv.nrows() {
            return Err(TapeError::ShapeMismatch {
                op: "spmm",
                detail: format!("operator dim {} vs {} rows", op.dim(), xv.nrows()),
            });
        }
        let value = op.apply(&xv.view());
        Ok(self.push(Op::Spmm(Arc::clone(op)), vec![x.0], value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.ncols() != bv.nrows() {
            return Err(TapeError::ShapeMismatch {
                op: "matmul",
                detail: format!("{}x{} times {}x{}", av.nrows(), av.ncols(), bv.nrows(), bv.ncols()),
            });
        }
        let value = av.dot(bv);
        Ok(self.push(Op::MatMul, vec![a.0, b.0], value))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, TapeError> {
        let (xv, bv) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        if bv.nrows() != 1 || bv.ncols() != xv.ncols() {
            return Err(TapeError::ShapeMismatch {
                op: "add_bias",
                detail: format!("bias {}x{} for {} columns", bv.nrows(), bv.ncols(), xv.ncols()),
            });
        }
        let value = xv + &bv.row(0);
        Ok(self.push(Op::AddBias, vec![x.0, bias.0], value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.mapv(|v| v.max(0.0));
        self.push(Op::Relu, vec![x.0], value)
    }

    /// Normalize each row to zero mean/unit variance, then apply gain and
    /// bias (both 1xD). Uses `LAYER_NORM_EPS` in the denominator.
    pub fn layer_norm_rows(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, TapeError> {
        let xv = &self.nodes[x.0].value;
        let d = xv.ncols();
        for (name, id) in [("gain", gain), ("bias", bias)] {
            let v = &self.nodes[id.0].value;
            if v.nrows() != 1 || v.ncols() != d {
                return Err(TapeError::ShapeMismatch {
                    op: "layer_norm_rows",
                    detail: format!("{name} is {}x{} for width {d}", v.nrows(), v.ncols()),
                });
            }
        }
        let normalized = normalize_rows(xv);
        let gv = self.nodes[gain.0].value.row(0).to_owned();
        let bv = self.nodes[bias.0].value.row(0).to_owned();
        let value = &normalized * &gv + &bv;
        Ok(self.push(Op::LayerNormRows, vec![x.0, gain.0, bias.0], value))
    }

    /// Inverted dropout: scales kept entries by `1/(1-rate)` at train time
    /// so the eval path is a plain identity.
    pub fn dropout(&mut self, x: NodeId, rate: f64) -> NodeId {
        if !self.training || rate <= 0.0 {
            let value = self.nodes[x.0].value.clone();
            return self.push(Op::Dropout { mask: None }, vec![x.0], value);
        }
        let keep = 1.0 - rate;
        let shape = self.nodes[x.0].value.raw_dim();
        let mask = Array2::from_shape_simple_fn(shape, || {
            if self.rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let value = &self.nodes[x.0].value * &mask;
        self.push(Op::Dropout { mask: Some(mask) }, vec![x.0], value)
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let mut value = xv.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
            row.mapv_inplace(|v| v - lse);
        }
        self.push(Op::LogSoftmax, vec![x.0], value)
    }

    pub fn gather_rows(&mut self, x: NodeId, rows: &[usize]) -> Result<NodeId, TapeError> {
        let xv = &self.nodes[x.0].value;
        if let Some(&bad) = rows.iter().find(|&&r| r >= xv.nrows()) {
            return Err(TapeError::ShapeMismatch {
                op: "gather_rows",
                detail: format!("row {bad} out of {}", xv.nrows()),
            });
        }
        let mut value = Array2::zeros((rows.len(), xv.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            value.row_mut(i).assign(&xv.row(r));
        }
        Ok(self.push(Op::GatherRows(rows.to_vec()), vec![x.0], value))
    }

    /// Vertical stack: rows of `a` followed by rows of `b`.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.ncols() != bv.ncols() {
            return Err(TapeError::ShapeMismatch {
                op: "concat_rows",
                detail: format!("widths {} vs {}", av.ncols(), bv.ncols()),
            });
        }
        let value = ndarray::concatenate(Axis(0), &[av.view(), bv.view()]).unwrap();
        Ok(self.push(Op::ConcatRows, vec![a.0, b.0], value))
    }

    /// Horizontal stack of several nodes with equal row counts.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TapeError> {
        if parts.is_empty() {
            return Err(TapeError::ShapeMismatch {
                op: "concat_cols",
                detail: "no parents".into(),
            });
        }
        let rows = self.nodes[parts[0].0].value.nrows();
        if parts.iter().any(|p| self.nodes[p.0].value.nrows() != rows) {
            return Err(TapeError::ShapeMismatch {
                op: "concat_cols",
                detail: "row counts differ".into(),
            });
        }
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).unwrap();
        Ok(self.push(Op::ConcatCols, parts.iter().map(|p| p.0).collect(), value))
    }

    /// Copy of `base` with rows at `indices` replaced by the rows of `rows`.
    pub fn row_update(
        &mut self,
        base: NodeId,
        rows: NodeId,
        indices: &[usize],
    ) -> Result<NodeId, TapeError> {
        let (bv, rv) = (&self.nodes[base.0].value, &self.nodes[rows.0].value);
        if rv.nrows() != indices.len() || rv.ncols() != bv.ncols() {
            return Err(TapeError::ShapeMismatch {
                op: "row_update",
                detail: format!(
                    "{} replacement rows of width {} for {} indices (base width {})",
                    rv.nrows(),
                    rv.ncols(),
                    indices.len(),
                    bv.ncols()
                ),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&r| r >= bv.nrows()) {
            return Err(TapeError::ShapeMismatch {
                op: "row_update",
                detail: format!("row {bad} out of {}", bv.nrows()),
            });
        }
        let mut value = bv.clone();
        for (i, &r) in indices.iter().enumerate() {
            value.row_mut(r).assign(&rv.row(i));
        }
        Ok(self.push(Op::RowUpdate(indices.to_vec()), vec![base.0, rows.0], value))
    }

    pub fn scale_add(
        &mut self,
        alpha: f64,
        a: NodeId,
        beta: f64,
        b: NodeId,
    ) -> Result<NodeId, TapeError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.raw_dim() != bv.raw_dim() {
            return Err(TapeError::ShapeMismatch {
                op: "scale_add",
                detail: format!(
                    "{}x{} vs {}x{}",
                    av.nrows(),
                    av.ncols(),
                    bv.nrows(),
                    bv.ncols()
                ),
            });
        }
        let value = av * alpha + bv * beta;
        Ok(self.push(Op::ScaleAdd { alpha, beta }, vec![a.0, b.0], value))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self.nodes[x.0].value.sum();
        self.push(Op::SumAll, vec![x.0], Array2::from_elem((1, 1), s))
    }

    /// Mean negative log-likelihood: parent holds log-probabilities, one
    /// label per row.
    pub fn nll_loss(&mut self, log_probs: NodeId, labels: &[u32]) -> Result<NodeId, TapeError> {
        let lp = &self.nodes[log_probs.0].value;
        if labels.len() != lp.nrows() {
            return Err(TapeError::ShapeMismatch {
                op: "nll_loss",
                detail: format!("{} labels for {} rows", labels.len(), lp.nrows()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= lp.ncols()) {
            return Err(TapeError::ShapeMismatch {
                op: "nll_loss",
                detail: format!("label {bad} out of {} classes", lp.ncols()),
            });
        }
        let m = labels.len().max(1) as f64;
        let s = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| lp[[i, l as usize]])
            .sum::<f64>();
        let value = Array2::from_elem((1, 1), -s / m);
        Ok(self.push(Op::NllLoss(labels.to_vec()), vec![log_probs.0], value))
    }

    /// Margin objective summed over rows: max(0, z_label - max_{l != label} z_l).
    /// Driving it to zero pushes each labeled logit below its runner-up.
    pub fn cw_margin(&mut self, logits: NodeId, labels: &[u32]) -> Result<NodeId, TapeError> {
        let z = &self.nodes[logits.0].value;
        if labels.len() != z.nrows() || z.ncols() < 2 {
            return Err(TapeError::ShapeMismatch {
                op: "cw_margin",
                detail: format!(
                    "{} labels for {}x{} logits",
                    labels.len(),
                    z.nrows(),
                    z.ncols()
                ),
            });
        }
        let mut total = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let row = z.row(i);
            let correct = row[l as usize];
            let runner_up = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != l as usize)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            total += (correct - runner_up).max(0.0);
        }
        let value = Array2::from_elem((1, 1), total);
        Ok(self.push(Op::CwMargin(labels.to_vec()), vec![logits.0], value))
    }

    /// Reverse pass from a scalar loss node.
    ///
    /// Gradients are zeroed first, so calling backward twice yields
    /// identical results. Only subgraphs reaching a gradient-requiring
    /// input are visited.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TapeError> {
        let lv = &self.nodes[loss.0].value;
        if lv.nrows() != 1 || lv.ncols() != 1 {
            return Err(TapeError::NonScalarLoss {
                rows: lv.nrows(),
                cols: lv.ncols(),
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[loss.0].needs_grad {
            return Ok(()); // loss does not depend on any gradient target
        }
        self.nodes[loss.0].grad = Some(Array2::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            if self.nodes[idx].grad.is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let grad = self.nodes[idx].grad.as_ref().unwrap().clone();
            let parents = self.nodes[idx].parents.clone();
            let parent_grads: Vec<(usize, Array2<f64>)> = {
                let node = &self.nodes[idx];
                match &node.op {
                    Op::Input => Vec::new(),
                    Op::Spmm(op) => {
                        vec![(parents[0], op.apply_transposed(&grad.view()))]
                    }
                    Op::MatMul => {
                        let a = &self.nodes[parents[0]].value;
                        let b = &self.nodes[parents[1]].value;
                        let mut out = Vec::new();
                        if self.nodes[parents[0]].needs_grad {
                            out.push((parents[0], grad.dot(&b.t())));
                        }
                        if self.nodes[parents[1]].needs_grad {
                            out.push((parents[1], a.t().dot(&grad)));
                        }
                        out
                    }
                    Op::AddBias => {
                        let mut out = vec![(parents[0], grad.clone())];
                        if self.nodes[parents[1]].needs_grad {
                            let col_sums = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                            out.push((parents[1], col_sums));
                        }
                        out
                    }
                    Op::Relu => {
                        let x = &self.nodes[parents[0]].value;
                        let gx = ndarray::Zip::from(&grad)
                            .and(x)
                            .map_collect(|&g, &v| if v > 0.0 { g } else { 0.0 });
                        vec![(parents[0], gx)]
                    }
                    Op::LayerNormRows => {
                        layer_norm_backward(self, &parents, &grad)
                    }
                    Op::Dropout { mask } => match mask {
                        Some(m) => vec![(parents[0], &grad * m)],
                        None => vec![(parents[0], grad.clone())],
                    },
                    Op::LogSoftmax => {
                        let y = &node.value;
                        let mut gx = grad.clone();
                        for (mut grow, yrow) in gx.rows_mut().into_iter().zip(y.rows()) {
                            let gsum: f64 = grow.sum();
                            for (g, &lv) in grow.iter_mut().zip(yrow.iter()) {
                                *g -= lv.exp() * gsum;
                            }
                        }
                        vec![(parents[0], gx)]
                    }
                    Op::GatherRows(rows) => {
                        let shape = self.nodes[parents[0]].value.raw_dim();
                        let mut gx = Array2::zeros(shape);
                        for (i, &r) in rows.iter().enumerate() {
                            let mut dst = gx.row_mut(r);
                            dst += &grad.row(i);
                        }
                        vec![(parents[0], gx)]
                    }
                    Op::ConcatRows => {
                        let na = self.nodes[parents[0]].value.nrows();
                        let mut out = Vec::new();
                        if self.nodes[parents[0]].needs_grad {
                            out.push((parents[0], grad.slice(ndarray::s![..na, ..]).to_owned()));
                        }
                        if self.nodes[parents[1]].needs_grad {
                            out.push((parents[1], grad.slice(ndarray::s![na.., ..]).to_owned()));
                        }
                        out
                    }
                    Op::ConcatCols => {
                        let mut out = Vec::new();
                        let mut start = 0usize;
                        for &p in parents.iter() {
                            let w = self.nodes[p].value.ncols();
                            if self.nodes[p].needs_grad {
                                out.push((
                                    p,
                                    grad.slice(ndarray::s![.., start..start + w]).to_owned(),
                                ));
                            }
                            start += w;
                        }
                        out
                    }
                    Op::RowUpdate(indices) => {
                        let mut out = Vec::new();
                        if self.nodes[parents[0]].needs_grad {
                            let mut gb = grad.clone();
                            for &r in indices {
                                gb.row_mut(r).fill(0.0);
                            }
                            out.push((parents[0], gb));
                        }
                        if self.nodes[parents[1]].needs_grad {
                            let mut gr =
                                Array2::zeros((indices.len(), grad.ncols()));
                            for (i, &r) in indices.iter().enumerate() {
                                gr.row_mut(i).assign(&grad.row(r));
                            }
                            out.push((parents[1], gr));
                        }
                        out
                    }
                    Op::ScaleAdd { alpha, beta } => {
                        let mut out = Vec::new();
                        if self.nodes[parents[0]].needs_grad {
                            out.push((parents[0], &grad * *alpha));
                        }
                        if self.nodes[parents[1]].needs_grad {
                            out.push((parents[1], &grad * *beta));
                        }
                        out
                    }
                    Op::SumAll => {
                        let shape = self.nodes[parents[0]].value.raw_dim();
                        vec![(parents[0], Array2::from_elem(shape, grad[[0, 0]]))]
                    }
                    Op::NllLoss(labels) => {
                        let shape = self.nodes[parents[0]].value.raw_dim();
                        let mut gx = Array2::zeros(shape);
                        let m = labels.len().max(1) as f64;
                        let g = grad[[0, 0]];
                        for (i, &l) in labels.iter().enumerate() {
                            gx[[i, l as usize]] = -g / m;
                        }
                        vec![(parents[0], gx)]
                    }
                    Op::CwMargin(labels) => {
                        let z = &self.nodes[parents[0]].value;
                        let mut gx = Array2::zeros(z.raw_dim());
                        let g = grad[[0, 0]];
                        for (i, &l) in labels.iter().enumerate() {
                            let row = z.row(i);
                            let correct = row[l as usize];
                            let (runner_idx, runner_val) = row
                                .iter()
                                .enumerate()
                                .filter(|&(j, _)| j != l as usize)
                                .fold((0usize, f64::NEG_INFINITY), |acc, (j, &v)| {
                                    if v > acc.1 {
                                        (j, v)
                                    } else {
                                        acc
                                    }
                                });
                            if correct - runner_val > 0.0 {
                                gx[[i, l as usize]] += g;
                                gx[[i, runner_idx]] -= g;
                            }
                        }
                        vec![(parents[0], gx)]
                    }
                }
            };
            for (p, pg) in parent_grads {
                if !self.nodes[p].needs_grad {
                    continue;
                }
                match &mut self.nodes[p].grad {
                    Some(acc) => *acc += &pg,
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }
}

/// (input value, output gradient) for every graph-operator application that
/// received a gradient in the last backward pass. The dense
/// adjacency-gradient attack assembles `dL/dP = sum grad_out * input^T`
/// from these pairs.
pub fn spmm_io_pairs(tape: &Tape) -> Vec<(&Array2<f64>, &Array2<f64>)> {
    let mut out = Vec::new();
    for node in &tape.nodes {
        if let Op::Spmm(_) = node.op {
            if let Some(grad) = &node.grad {
                out.push((&tape.nodes[node.parents[0]].value, grad));
            }
        }
    }
    out
}

fn normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let d = x.ncols() as f64;
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / d;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

fn layer_norm_backward(
    tape: &Tape,
    parents: &[usize],
    grad: &Array2<f64>,
) -> Vec<(usize, Array2<f64>)> {
    let x = &tape.nodes[parents[0]].value;
    let gain = tape.nodes[parents[1]].value.row(0).to_owned();
    let normalized = normalize_rows(x);
    let mut out = Vec::new();
    if tape.nodes[parents[2]].needs_grad {
        let gb = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
        out.push((parents[2], gb));
    }
    if tape.nodes[parents[1]].needs_grad {
        let gg = (grad * &normalized)
            .sum_axis(Axis(0))
            .insert_axis(Axis(0));
        out.push((parents[1], gg));
    }
    if tape.nodes[parents[0]].needs_grad {
        let d = x.ncols() as f64;
        let mut gx = Array2::zeros(x.raw_dim());
        for r in 0..x.nrows() {
            let row = x.row(r);
            let mean = row.sum() / d;
            let var = row.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / d;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            // d_hat = upstream grad routed through the gain
            let xhat = normalized.row(r);
            let dhat: Vec<f64> = grad
                .row(r)
                .iter()
                .zip(gain.iter())
                .map(|(&g, &w)| g * w)
                .collect();
            let dhat_mean = dhat.iter().sum::<f64>() / d;
            let dhat_dot = dhat
                .iter()
                .zip(xhat.iter())
                .map(|(&a, &b)| a * b)
                .sum::<f64>()
                / d;
            for (c, gx_v) in gx.row_mut(r).iter_mut().enumerate() {
                *gx_v = inv * (dhat[c] - dhat_mean - xhat[c] * dhat_dot);
            }
        }
        out.push((parents[0], gx));
    }
    out
}

/// Maximum relative error between the analytic gradient and central finite
/// differences of `f` at `x`.
///
/// `analytic` must be the gradient of `f` at `x` computed by the caller; `f`
/// must be pure. Relative error per entry is
/// `|g - ĝ| / (|g| + |ĝ| + 1e-8)`.
pub fn grad_check<F>(f: F, x: &Array2<f64>, analytic: &Array2<f64>, h: f64) -> f64
where
    F: Fn(&Array2<f64>) -> f64,
{
    assert!(h > 0.0);
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let orig = probe[[i, j]];
            probe[[i, j]] = orig + h;
            let fp = f(&probe);
            probe[[i, j]] = orig - h;
            let fm = f(&probe);
            probe[[i, j]] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let g = analytic[[i, j]];
            let rel = (g - numeric).abs() / (g.abs() + numeric.abs() + 1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBundle;
    use crate::operator::gcn_normalize;
    use ndarray::arr2;

    #[test]
    fn relu_forward_and_backward() {
        let mut t = Tape::new(false, 0);
        let x = t.input(arr2(&[[-1.0, 2.0]]), true);
        let r = t.relu(x);
        assert_eq!(t.value(r), &arr2(&[[0.0, 2.0]]));
        let loss = t.sum_all(r);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap(), &arr2(&[[0.0, 1.0]]));
    }

    #[test]
    fn backward_twice_identical() {
        let mut t = Tape::new(false, 0);
        let x = t.input(arr2(&[[1.0, -3.0], [2.0, 0.5]]), true);
        let r = t.relu(x);
        let loss = t.sum_all(r);
        t.backward(loss).unwrap();
        let g1 = t.grad(x).unwrap().clone();
        t.backward(loss).unwrap();
        assert_eq!(&g1, t.grad(x).unwrap());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new(false, 0);
        let x = t.input(arr2(&[[1.0, 2.0]]), true);
        assert!(matches!(
            t.backward(x),
            Err(TapeError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn spmm_backward_matches_column_sums() {
        // loss = sum(A*X) => dL/dX = A^T * ones = column sums replicated.
        let g = GraphBundle::from_edge_list(
            "t",
            3,
            &[(0, 1), (1, 2)],
            Array2::zeros((3, 1)),
            vec![0; 3],
            1,
        )
        .unwrap();
        let op = Arc::new(gcn_normalize(&g));
        let mut t = Tape::new(false, 0);
        let x = t.input(arr2(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), true);
        let y = t.spmm(&op, x).unwrap();
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        let dense = match op.as_ref() {
            crate::operator::GraphOperator::Sparse { forward, .. } => forward.to_dense(),
            _ => unreachable!(),
        };
        let expect_col = dense.sum_axis(Axis(0));
        let gx = t.grad(x).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                assert!((gx[[r, c]] - expect_col[r]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spmm_two_node_hand_multiply() {
        let g = GraphBundle::from_edge_list(
            "t",
            2,
            &[(0, 1)],
            Array2::zeros((2, 1)),
            vec![0; 2],
            1,
        )
        .unwrap();
        let op = Arc::new(gcn_normalize(&g));
        let mut t = Tape::new(false, 0);
        let x = t.constant(arr2(&[[1.0, 0.0], [0.0, 1.0]]));
        let y = t.spmm(&op, x).unwrap();
        for &v in t.value(y).iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero_before_affine() {
        let mut t = Tape::new(false, 0);
        let x = t.input(arr2(&[[3.0, 3.0, 3.0]]), false);
        let gain = t.constant(arr2(&[[1.0, 1.0, 1.0]]));
        let bias = t.constant(arr2(&[[0.0, 0.0, 0.0]]));
        let y = t.layer_norm_rows(x, gain, bias).unwrap();
        for &v in t.value(y).iter() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn log_softmax_rows_sum_to_one() {
        let mut t = Tape::new(false, 0);
        let x = t.input(arr2(&[[1.0, 2.0, 3.0], [-5.0, 0.0, 5.0]]), false);
        let y = t.log_softmax(x);
        for row in t.value(y).rows() {
            let s: f64 = row.iter().map(|&v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut t = Tape::new(false, 7);
        let x = t.input(arr2(&[[1.0, 2.0], [3.0, 4.0]]), false);
        let y = t.dropout(x, 0.5);
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn dropout_train_scales_kept_entries() {
        let mut t = Tape::new(true, 7);
        let x = t.input(Array2::from_elem((20, 20), 1.0), false);
        let y = t.dropout(x, 0.5);
        for &v in t.value(y).iter() {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        let zero = Array2::zeros((2, 2));
        let err = grad_check(|_| 5.0, &x, &zero, 1e-3);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn sum_of_squares_grad_check() {
        let x = arr2(&[[0.5, -1.2, 2.0], [0.1, 0.0, -0.7], [1.5, 2.5, -3.0]]);
        let analytic = &x * 2.0;
        let err = grad_check(|m| m.iter().map(|&v| v * v).sum(), &x, &analytic, 1e-3);
        assert!(err < 1e-6, "relative error {err}");
    }

    /// Runs `build` twice: once to get the analytic gradient of the scalar
    /// output w.r.t. the input, then as a closure for finite differences.
    fn check_op<F>(build: F, x0: Array2<f64>, tol: f64)
    where
        F: Fn(&mut Tape, NodeId) -> NodeId,
    {
        let eval = |m: &Array2<f64>| -> f64 {
            let mut t = Tape::new(false, 0);
            let x = t.input(m.clone(), false);
            let out = build(&mut t, x);
            t.value(out)[[0, 0]]
        };
        let mut t = Tape::new(false, 0);
        let x = t.input(x0.clone(), true);
        let out = build(&mut t, x);
        t.backward(out).unwrap();
        let analytic = t.grad(x).unwrap().clone();
        let err = grad_check(eval, &x0, &analytic, 1e-5);
        assert!(err < tol, "relative error {err}");
    }

    #[test]
    fn per_op_grad_checks() {
        let x0 = arr2(&[
            [0.31, -1.2, 0.77],
            [1.5, 0.42, -0.9],
            [-0.25, 0.8, 1.1],
            [2.0, -0.5, 0.33],
        ]);
        let w = arr2(&[[0.2, -0.4], [0.75, 0.3], [-0.6, 0.1]]);
        let b = arr2(&[[0.05, -0.02]]);

        check_op(
            |t, x| {
                let w = t.constant(w.clone());
                let b = t.constant(b.clone());
                let h = t.matmul(x, w).unwrap();
                let h = t.add_bias(h, b).unwrap();
                let h = t.relu(h);
                t.sum_all(h)
            },
            x0.clone(),
            1e-6,
        );

        check_op(
            |t, x| {
                let gain = t.constant(arr2(&[[1.1, 0.9, 1.3]]));
                let bias = t.constant(arr2(&[[0.1, -0.2, 0.0]]));
                let h = t.layer_norm_rows(x, gain, bias).unwrap();
                let h = t.relu(h);
                t.sum_all(h)
            },
            x0.clone(),
            1e-5,
        );

        check_op(
            |t, x| {
                let h = t.log_softmax(x);
                t.nll_loss(h, &[0, 2, 1, 0]).unwrap()
            },
            x0.clone(),
            1e-6,
        );

        check_op(
            |t, x| {
                let g = t.gather_rows(x, &[2, 0, 2]).unwrap();
                let h = t.relu(g);
                t.sum_all(h)
            },
            x0.clone(),
            1e-6,
        );

        check_op(
            |t, x| {
                let other = t.constant(arr2(&[[1.0, 0.5, -0.5], [0.0, 1.0, 2.0]]));
                let cat = t.concat_rows(other, x).unwrap();
                let h = t.relu(cat);
                t.sum_all(h)
            },
            x0.clone(),
            1e-6,
        );

        check_op(
            |t, x| {
                let y = t.scale_add(0.7, x, -0.3, x).unwrap();
                let h = t.relu(y);
                t.sum_all(h)
            },
            x0.clone(),
            1e-6,
        );

        check_op(
            |t, x| {
                let base = t.constant(Array2::from_elem((6, 3), 0.25));
                let upd = t.row_update(base, x, &[0, 2, 4, 5]).unwrap();
                let h = t.relu(upd);
                t.sum_all(h)
            },
            x0.clone(),
            1e-6,
        );

        check_op(
            |t, x| t.cw_margin(x, &[0, 1, 2, 0]).unwrap(),
            x0.clone(),
            1e-5,
        );

        check_op(
            |t, x| {
                let two = t.concat_cols(&[x, x]).unwrap();
                let h = t.relu(two);
                t.sum_all(h)
            },
            x0,
            1e-6,
        );
    }
}
