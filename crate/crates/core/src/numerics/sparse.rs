//! Sparse storage for transition matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate-format matrix: triplets sorted row-major, no duplicate
/// positions and no stored zeros.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Sorts, sums duplicates and drops exact zeros.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|t| t.2 != 0.0);
        Self {
            rows,
            cols,
            triplets: merged,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            triplets: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Self {
        let mut t = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = data[r * cols + c];
                if v != 0.0 {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(rows, cols, t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.triplets
            .binary_search_by_key(&(r, c), |&(i, j, _)| (i, j))
            .map_or(0.0, |k| self.triplets[k].2)
    }

    pub fn is_zero(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self::from_triplets(
            self.rows,
            self.cols,
            self.triplets.iter().map(|&(r, c, v)| (r, c, alpha * v)).collect(),
        )
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows * self.cols];
        for &(r, c, v) in &self.triplets {
            d[r * self.cols + c] = v;
        }
        d
    }

    pub fn to_csr(&self) -> Csr {
        let mut row_ptr = vec![0usize; self.rows + 1];
        for &(r, _, _) in &self.triplets {
            row_ptr[r + 1] += 1;
        }
        for r in 0..self.rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx: self.triplets.iter().map(|t| t.1).collect(),
            values: self.triplets.iter().map(|t| t.2).collect(),
        }
    }
}

/// Compressed sparse rows, used for repeated products.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `out = A x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    /// `out = A x + b`.
    pub fn affine(&self, x: &[f64], b: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = b[r];
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[r * self.cols + self.col_idx[k]] = self.values[k];
            }
        }
        d
    }
}

/// `A(β) = A0 + β A1 + β² A2` on the union sparsity pattern.
#[derive(Clone, Debug)]
pub struct BetaMatrix {
    pattern: Csr,
    coeffs: Vec<[f64; 3]>,
}

impl BetaMatrix {
    pub fn new(parts: &[SparseMatrix; 3]) -> Result<Self> {
        let (rows, cols) = (parts[0].rows(), parts[0].cols());
        for p in parts.iter() {
            if p.rows() != rows || p.cols() != cols {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    got: p.rows(),
                });
            }
        }
        let mut all: Vec<(usize, usize, usize, f64)> = parts
            .iter()
            .enumerate()
            .flat_map(|(d, m)| m.triplets().iter().map(move |&(r, c, v)| (r, c, d, v)))
            .collect();
        all.sort_unstable_by_key(|&(r, c, d, _)| (r, c, d));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::new();
        let mut coeffs: Vec<[f64; 3]> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, d, v) in all {
            if last != Some((r, c)) {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                coeffs.push([0.0; 3]);
                last = Some((r, c));
            }
            coeffs.last_mut().unwrap()[d] += v;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let pattern = Csr {
            rows,
            cols,
            row_ptr,
            col_idx,
            values: vec![0.0; coeffs.len()],
        };
        Ok(Self { pattern, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.pattern.rows
    }

    pub fn at(&self, beta: f64) -> Csr {
        let mut m = self.pattern.clone();
        for (v, c) in m.values.iter_mut().zip(&self.coeffs) {
            *v = c[0] + beta * (c[1] + beta * c[2]);
        }
        m
    }
}
