//! Graph propagation operators: sparse CSR and dense forms with forward and
//! transposed application against dense matrices.

use ndarray::{Array2, ArrayView2};

use crate::graph::GraphBundle;

/// Weighted CSR matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Multiply against a dense matrix: `self * x`.
    pub fn matmul(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.cols, x.nrows(), "operator/input shape mismatch");
        let width = x.ncols();
        let mut out = Array2::zeros((self.rows, width));
        // One output row per sparse row keeps the reduction order fixed.
        for r in 0..self.rows {
            let lo = self.row_offsets[r];
            let hi = self.row_offsets[r + 1];
            let mut row = out.row_mut(r);
            for k in lo..hi {
                let c = self.col_indices[k] as usize;
                let w = self.values[k];
                let src = x.row(c);
                for (o, &s) in row.iter_mut().zip(src.iter()) {
                    *o += w * s;
                }
            }
        }
        out
    }

    /// Transpose of this matrix as CSR.
    pub fn transpose(&self) -> CsrMatrix {
        let nnz = self.col_indices.len();
        let mut counts = vec![0usize; self.cols];
        for &c in &self.col_indices {
            counts[c as usize] += 1;
        }
        let mut row_offsets = Vec::with_capacity(self.cols + 1);
        row_offsets.push(0usize);
        let mut acc = 0usize;
        for &c in &counts {
            acc += c;
            row_offsets.push(acc);
        }
        let mut col_indices = vec![0u32; nnz];
        let mut values = vec![0.0f64; nnz];
        let mut cursor = row_offsets.clone();
        for r in 0..self.rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[k] as usize;
                col_indices[cursor[c]] = r as u32;
                values[cursor[c]] = self.values[k];
                cursor[c] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                out[[r, self.col_indices[k] as usize]] = self.values[k];
            }
        }
        out
    }
}

/// Propagation operator used by model forward passes.
#[derive(Debug, Clone)]
pub enum GraphOperator {
    Sparse {
        forward: CsrMatrix,
        /// Absent when the operator is symmetric.
        transposed: Option<CsrMatrix>,
    },
    Dense(Array2<f64>),
}

impl GraphOperator {
    pub fn dim(&self) -> usize {
        match self {
            GraphOperator::Sparse { forward, .. } => forward.rows,
            GraphOperator::Dense(m) => m.nrows(),
        }
    }

    pub fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        match self {
            GraphOperator::Sparse { forward, .. } => forward.matmul(x),
            GraphOperator::Dense(m) => m.dot(x),
        }
    }

    pub fn apply_transposed(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        match self {
            GraphOperator::Sparse {
                forward,
                transposed,
            } => match transposed {
                Some(t) => t.matmul(x),
                None => forward.matmul(x),
            },
            GraphOperator::Dense(m) => m.t().dot(x),
        }
    }
}

fn with_self_loops(g: &GraphBundle) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
    let n = g.num_nodes();
    let offs = g.row_offsets();
    let cols = g.col_indices();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(cols.len() + n);
    row_offsets.push(0usize);
    for v in 0..n {
        let mut placed = false;
        for &c in &cols[offs[v]..offs[v + 1]] {
            if !placed && c as usize > v {
                col_indices.push(v as u32);
                placed = true;
            }
            col_indices.push(c);
        }
        if !placed {
            col_indices.push(v as u32);
        }
        row_offsets.push(col_indices.len());
    }
    let values = vec![1.0; col_indices.len()];
    (row_offsets, col_indices, values)
}

/// Symmetric normalization with a virtual self-loop per node:
/// entry (u, v) of `(A+I)` scaled by `1/sqrt(deg(u)+1)/sqrt(deg(v)+1)`.
pub fn gcn_normalize(g: &GraphBundle) -> GraphOperator {
    let n = g.num_nodes();
    let degrees = g.degrees();
    let scale: Vec<f64> = degrees
        .iter()
        .map(|&d| 1.0 / ((d as f64 + 1.0).sqrt()))
        .collect();
    let (row_offsets, col_indices, mut values) = with_self_loops(g);
    for r in 0..n {
        for k in row_offsets[r]..row_offsets[r + 1] {
            values[k] = scale[r] * scale[col_indices[k] as usize];
        }
    }
    GraphOperator::Sparse {
        forward: CsrMatrix {
            rows: n,
            cols: n,
            row_offsets,
            col_indices,
            values,
        },
        transposed: None,
    }
}

/// Row normalization with a virtual self-loop: mean over `{v} ∪ N(v)`.
/// Asymmetric, so the transpose is materialized for backward passes.
pub fn row_normalize(g: &GraphBundle) -> GraphOperator {
    let n = g.num_nodes();
    let degrees = g.degrees();
    let (row_offsets, col_indices, mut values) = with_self_loops(g);
    for r in 0..n {
        let inv = 1.0 / (degrees[r] as f64 + 1.0);
        for v in &mut values[row_offsets[r]..row_offsets[r + 1]] {
            *v = inv;
        }
    }
    let forward = CsrMatrix {
        rows: n,
        cols: n,
        row_offsets,
        col_indices,
        values,
    };
    let transposed = forward.transpose();
    GraphOperator::Sparse {
        forward,
        transposed: Some(transposed),
    }
}

/// The raw unit-weight adjacency (no self-loops): sum aggregation.
pub fn raw_adjacency(g: &GraphBundle) -> GraphOperator {
    let n = g.num_nodes();
    GraphOperator::Sparse {
        forward: CsrMatrix {
            rows: n,
            cols: n,
            row_offsets: g.row_offsets().to_vec(),
            col_indices: g.col_indices().to_vec(),
            values: vec![1.0; g.col_indices().len()],
        },
        transposed: None,
    }
}

/// Symmetric GCN normalization of an arbitrary dense adjacency.
///
/// Virtual degrees come from row sums plus one and are clamped away from
/// zero, which keeps low-rank reconstructions with small negative entries
/// usable.
pub fn gcn_normalize_dense(adj: &Array2<f64>) -> GraphOperator {
    let n = adj.nrows();
    assert_eq!(n, adj.ncols(), "adjacency must be square");
    let mut scale = Vec::with_capacity(n);
    for r in 0..n {
        let d = adj.row(r).sum() + 1.0;
        scale.push(1.0 / d.max(1e-6).sqrt());
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let a = adj[[i, j]] + if i == j { 1.0 } else { 0.0 };
            out[[i, j]] = a * scale[i] * scale[j];
        }
    }
    GraphOperator::Dense(out)
}

/// Row normalization of an arbitrary dense adjacency (mean aggregation).
pub fn row_normalize_dense(adj: &Array2<f64>) -> GraphOperator {
    let n = adj.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let d = adj.row(i).sum() + 1.0;
        let inv = 1.0 / d.max(1e-6);
        for j in 0..n {
            let a = adj[[i, j]] + if i == j { 1.0 } else { 0.0 };
            out[[i, j]] = a * inv;
        }
    }
    GraphOperator::Dense(out)
}
