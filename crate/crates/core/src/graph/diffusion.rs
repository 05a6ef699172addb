use ndarray::Array2;

use super::{GraphError, InfluenceGraph};

/// The diffusion operator `Γ = γ A D⁻¹`, stored column-compressed.
///
/// Column `j` holds `γ / d_j` at every row `i` with `(i, j)` an edge, so each
/// column sums to `γ` and the induced 1-norm of the operator is `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperator {
    gamma: f64,
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl DiffusionOperator {
    pub fn new(graph: &InfluenceGraph, gamma: f64) -> Result<Self, GraphError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(GraphError::InvalidGamma(gamma));
        }
        let n = graph.n();
        if let Some(i) = (0..n).find(|&i| !graph.has_edge(i, i)) {
            return Err(GraphError::MissingSelfLoop(i));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(graph.edge_count());
        let mut values = Vec::with_capacity(graph.edge_count());
        col_ptr.push(0);
        for j in 0..n {
            let rows = graph.in_neighbours(j);
            let w = gamma / rows.len() as f64;
            row_idx.extend_from_slice(rows);
            values.extend(std::iter::repeat_n(w, rows.len()));
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            gamma,
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries of column `j` as `(row, value)` pairs.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// `Γ v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, GraphError> {
        let mut out = vec![0.0; self.n];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<(), GraphError> {
        for len in [v.len(), out.len()] {
            if len != self.n {
                return Err(GraphError::DimensionMismatch {
                    expected: self.n,
                    got: len,
                });
            }
        }
        out.fill(0.0);
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[self.row_idx[k]] += self.values[k] * vj;
            }
        }
        Ok(())
    }

    /// `Γᵏ v`.
    pub fn power_apply(&self, v: &[f64], k: usize) -> Result<Vec<f64>, GraphError> {
        let mut cur = v.to_vec();
        if cur.len() != self.n {
            return Err(GraphError::DimensionMismatch {
                expected: self.n,
                got: cur.len(),
            });
        }
        let mut next = vec![0.0; self.n];
        for _ in 0..k {
            self.apply_into(&cur, &mut next)?;
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Truncated Neumann sum `Σ_{t<terms} Γ^{t+1} v`.
    pub fn neumann_apply(&self, v: &[f64], terms: usize) -> Result<Vec<f64>, GraphError> {
        let mut acc = vec![0.0; self.n];
        let mut term = v.to_vec();
        let mut next = vec![0.0; self.n];
        for _ in 0..terms {
            self.apply_into(&term, &mut next)?;
            std::mem::swap(&mut term, &mut next);
            acc.iter_mut().zip(&term).for_each(|(a, t)| *a += t);
        }
        Ok(acc)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.column(j).map(|(_, v)| v).sum()).collect()
    }

    /// Induced 1-norm `max_j Σ_i |Γ_ij|`.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| self.column(j).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                m[[i, j]] = v;
            }
        }
        m
    }

    /// Overwrite one stored entry; used to inject faults into check suites.
    #[doc(hidden)]
    pub fn perturb_entry(&mut self, k: usize, delta: f64) {
        self.values[k] += delta;
    }
}
