use ndarray::Array2;

use crate::gnn::Backbone;
use crate::graph::Graph;

/// Square sparse matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Builds from per-row `(col, value)` lists.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for row in rows {
            for (c, v) in row {
                debug_assert!(c < n);
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        SparseOperator {
            n,
            offsets,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// `self * x`.
    pub fn matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "operator/matrix row mismatch");
        let mut out = Array2::zeros((self.n, x.ncols()));
        for i in 0..self.n {
            let mut dst = out.row_mut(i);
            for (c, v) in self.row(i) {
                dst.scaled_add(v, &x.row(c));
            }
        }
        out
    }

    /// `self^T * x`, accumulated in row order.
    pub fn matmul_transpose(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "operator/matrix row mismatch");
        let mut out = Array2::zeros((self.n, x.ncols()));
        for i in 0..self.n {
            let src = x.row(i);
            for (c, v) in self.row(i) {
                out.row_mut(c).scaled_add(v, &src);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                d[[i, c]] += v;
            }
        }
        d
    }
}

/// Aggregation operator for a backbone.
///
/// GCN: `D^-1/2 (A + I) D^-1/2` with `D` the degree of `A + I`.
/// SAGE-mean: row-normalised `A` without self-loops; isolated rows are empty.
pub fn normalized_adjacency(graph: &Graph, backbone: Backbone) -> SparseOperator {
    let n = graph.num_nodes();
    let rows = match backbone {
        Backbone::Gcn => {
            let inv_sqrt: Vec<f64> = (0..n)
                .map(|v| 1.0 / ((graph.degree(v) + 1) as f64).sqrt())
                .collect();
            (0..n)
                .map(|v| {
                    let mut cols: Vec<usize> = graph.neighbors(v).to_vec();
                    let pos = cols.partition_point(|&u| u < v);
                    cols.insert(pos, v);
                    cols.into_iter()
                        .map(|u| (u, inv_sqrt[v] * inv_sqrt[u]))
                        .collect()
                })
                .collect()
        }
        Backbone::SageMean => (0..n)
            .map(|v| {
                let nb = graph.neighbors(v);
                let w = 1.0 / nb.len().max(1) as f64;
                nb.iter().map(|&u| (u, w)).collect()
            })
            .collect(),
    };
    SparseOperator::from_rows(rows)
}
