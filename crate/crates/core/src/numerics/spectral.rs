//! Spectral radius of real sparse matrices.
//!
//! Small matrices go through a dense Schur decomposition. Larger ones use a
//! restarted Arnoldi iteration: a power-type method whose Krylov subspace
//! captures complex-conjugate dominant pairs that plain power iteration
//! oscillates on.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Csr;
use crate::error::{Error, Result};

/// Dimension up to which the dense eigensolver is used.
pub const DENSE_LIMIT: usize = 512;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMethod {
    Dense,
    Arnoldi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub rho: f64,
    pub method: SpectralMethod,
    /// Restart cycles (0 for the dense path).
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions {
    pub tol: f64,
    pub dense_limit: usize,
    /// Krylov subspace dimension per cycle.
    pub krylov_dim: usize,
    pub max_restarts: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            dense_limit: DENSE_LIMIT,
            krylov_dim: 80,
            max_restarts: 400,
        }
    }
}

pub fn spectral_radius(a: &Csr, tol: f64) -> Result<f64> {
    let opts = SpectralOptions {
        tol,
        ..SpectralOptions::default()
    };
    Ok(spectral_radius_with(a, &opts)?.rho)
}

pub fn spectral_radius_with(a: &Csr, opts: &SpectralOptions) -> Result<SpectralEstimate> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            got: a.cols,
        });
    }
    if a.rows == 0 {
        return Ok(SpectralEstimate {
            rho: 0.0,
            method: SpectralMethod::Dense,
            iterations: 0,
        });
    }
    if a.rows <= opts.dense_limit {
        Ok(SpectralEstimate {
            rho: dense_spectral_radius(a),
            method: SpectralMethod::Dense,
            iterations: 0,
        })
    } else {
        arnoldi_spectral_radius(&balanced(a), opts)
    }
}

/// All eigenvalues via real Schur form of the balanced matrix; returns the
/// largest modulus.
pub fn dense_spectral_radius(a: &Csr) -> f64 {
    let mut m = DMatrix::from_row_slice(a.rows, a.cols, &a.to_dense());
    balance(&mut m);
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Diagonal similarity scaling by powers of two that equalises row and
/// column norms. Moment matrices mix entries of very different magnitude,
/// and unbalanced Schur iterations lose several digits on them.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut cc, mut rr) = (c, r);
            while cc < rr / radix {
                cc *= radix;
                rr /= radix;
                f *= radix;
            }
            while cc >= rr * radix {
                cc /= radix;
                rr *= radix;
                f /= radix;
            }
            if (cc + rr) < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Sparse counterpart of [`balance`]: returns `D⁻¹ A D`.
fn balanced(a: &Csr) -> Csr {
    let n = a.rows;
    let mut d = vec![1.0f64; n];
    let mut col = vec![0.0; n];
    let mut row = vec![0.0; n];
    for _ in 0..50 {
        col.iter_mut().for_each(|v| *v = 0.0);
        row.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let c = a.col_idx[k];
                if c != r {
                    let v = (a.values[k] * d[c] / d[r]).abs();
                    row[r] += v;
                    col[c] += v;
                }
            }
        }
        let mut changed = false;
        for i in 0..n {
            if col[i] == 0.0 || row[i] == 0.0 {
                continue;
            }
            // Scaling by f multiplies column sums by f and divides row sums by f.
            let f = 2f64.powi(((row[i] / col[i]).log2() / 2.0).round() as i32);
            if f != 1.0 && (col[i] * f + row[i] / f) < 0.95 * (col[i] + row[i]) {
                d[i] *= f;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = a.clone();
    for r in 0..n {
        for k in out.row_ptr[r]..out.row_ptr[r + 1] {
            out.values[k] *= d[out.col_idx[k]] / d[r];
        }
    }
    out
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Eigenvector of a small complex-shifted Hessenberg matrix by inverse
/// iteration.
fn ritz_vector(h: &DMatrix<f64>, lambda: Complex<f64>) -> DVector<Complex<f64>> {
    let k = h.nrows();
    let shift = lambda + Complex::new(1e-10 * (1.0 + lambda.norm()), 1e-12);
    let shifted = DMatrix::from_fn(k, k, |i, j| {
        let v = Complex::new(h[(i, j)], 0.0);
        if i == j {
            v - shift
        } else {
            v
        }
    });
    let lu = shifted.lu();
    let mut y = DVector::from_element(k, Complex::new(1.0, 0.0));
    for _ in 0..3 {
        match lu.solve(&y) {
            Some(next) => {
                let n = next.norm();
                if !n.is_finite() || n == 0.0 {
                    break;
                }
                y = next.unscale(n);
            }
            None => break,
        }
    }
    y
}

fn arnoldi_spectral_radius(a: &Csr, opts: &SpectralOptions) -> Result<SpectralEstimate> {
    let n = a.rows;
    let m = opts.krylov_dim.clamp(2, n);
    // Deterministic start vector with no special structure.
    let mut start: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).fract())
        .collect();
    let mut prev = f64::NAN;
    let mut best = (0.0f64, f64::INFINITY);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut w = vec![0.0; n];

    for cycle in 1..=opts.max_restarts {
        let s = norm(&start);
        if s == 0.0 || !s.is_finite() {
            return Ok(SpectralEstimate {
                rho: 0.0,
                method: SpectralMethod::Arnoldi,
                iterations: cycle,
            });
        }
        basis.clear();
        basis.push(start.iter().map(|x| x / s).collect());
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut size = m;
        let mut invariant = false;
        for j in 0..m {
            a.matvec(&basis[j], &mut w);
            // Two passes of Gram-Schmidt keep the basis orthogonal.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[(i, j)] += c;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= c * vk;
                    }
                }
            }
            let hn = norm(&w);
            h[(j + 1, j)] = hn;
            let scale = h.view((0, 0), (j + 1, j + 1)).norm().max(f64::MIN_POSITIVE);
            if hn <= 1e-13 * scale {
                size = j + 1;
                invariant = true;
                break;
            }
            basis.push(w.iter().map(|x| x / hn).collect());
        }

        let hm = h.view((0, 0), (size, size)).into_owned();
        let eig = hm.clone().complex_eigenvalues();
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&i, &j| eig[j].norm().total_cmp(&eig[i].norm()));
        let lambda = eig[order[0]];
        let rho = lambda.norm();
        if invariant {
            return Ok(SpectralEstimate {
                rho,
                method: SpectralMethod::Arnoldi,
                iterations: cycle,
            });
        }

        let y = ritz_vector(&hm, lambda);
        let beta_next = h[(size, size - 1)];
        let residual = beta_next * y[size - 1].norm() / y.norm().max(f64::MIN_POSITIVE);
        if residual < best.1 {
            best = (rho, residual);
        }
        let settled = (rho - prev).abs() <= opts.tol * rho.max(f64::MIN_POSITIVE);
        if residual <= opts.tol * rho.max(1e-300) || (settled && residual <= opts.tol.sqrt() * rho) {
            return Ok(SpectralEstimate {
                rho,
                method: SpectralMethod::Arnoldi,
                iterations: cycle,
            });
        }
        prev = rho;

        // Restart from a blend of the leading Ritz vectors; taking real and
        // imaginary parts keeps both members of a conjugate pair.
        start.iter_mut().for_each(|x| *x = 0.0);
        let lead = order.len().min(6);
        for (rank, &idx) in order.iter().take(lead).enumerate() {
            let yi = if rank == 0 { y.clone() } else { ritz_vector(&hm, eig[idx]) };
            let weight = 1.0 / (1.0 + rank as f64);
            for (col, v) in basis.iter().take(size).enumerate() {
                let c = weight * (yi[col].re + yi[col].im);
                if c != 0.0 {
                    for (sk, vk) in start.iter_mut().zip(v) {
                        *sk += c * vk;
                    }
                }
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_restarts,
        lo: best.0 - best.1,
        hi: best.0 + best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SparseMatrix;

    fn csr(n: usize, data: &[f64]) -> Csr {
        SparseMatrix::from_dense(n, n, data).to_csr()
    }

    #[test]
    fn identity_and_diagonal() {
        assert!((spectral_radius(&SparseMatrix::identity(4).to_csr(), 1e-10).unwrap() - 1.0).abs() < 1e-12);
        let d = csr(2, &[0.5, 0.0, 0.0, -2.0]);
        assert!((spectral_radius(&d, 1e-10).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_pair_through_arnoldi() {
        // Block-diagonal: a scaled rotation (modulus 0.9) dominating a decaying tail.
        let n = 600;
        let mut t = Vec::new();
        let (c, s) = (0.9 * 0.3f64.cos(), 0.9 * 0.3f64.sin());
        t.extend([(0, 0, c), (0, 1, -s), (1, 0, s), (1, 1, c)]);
        for i in 2..n {
            t.push((i, i, 0.8 * ((i as f64) / n as f64)));
            t.push((i, i - 1, 0.05));
        }
        let a = SparseMatrix::from_triplets(n, n, t).to_csr();
        let opts = SpectralOptions {
            tol: 1e-10,
            ..SpectralOptions::default()
        };
        let est = spectral_radius_with(&a, &opts).unwrap();
        assert_eq!(est.method, SpectralMethod::Arnoldi);
        assert!((est.rho - 0.9).abs() < 1e-8, "{est:?}");
    }
}
