//! Linear-algebra services for the state-space models: iteration,
//! steady states, spectral radius and the stability-bound search.

mod solve;
mod sparse;
mod spectral;
mod stability;

pub use solve::{gmres, GmresOutcome};
pub use sparse::{BetaMatrix, Csr, SparseMatrix};
pub use spectral::{
    dense_spectral_radius, spectral_radius, spectral_radius_with, SpectralEstimate, SpectralMethod,
    SpectralOptions, DENSE_LIMIT, DEFAULT_TOL,
};
pub use stability::{
    find_beta_max, find_beta_max_with, model_spectral_radius, RhoSample, ScanOptions, StabilityReport,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::closure::StateSpaceModel;
use crate::error::{Error, Result};

/// Norm beyond which an iterated state is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Largest dimension solved with a dense LU factorisation.
pub const DENSE_SOLVE_LIMIT: usize = 2500;

/// Output values of a model recorded along an iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub names: Vec<String>,
    /// Iteration indices at which outputs were recorded.
    pub k: Vec<usize>,
    /// `values[r][o]`: output `o` at iteration `k[r]`.
    pub values: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

impl Trajectory {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let o = self.names.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|row| row[o]).collect())
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.values.last().map(Vec::as_slice)
    }
}

/// Steady state `y = (I - A)⁻¹ b` and the outputs evaluated there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub beta: f64,
    pub state: Vec<f64>,
    pub names: Vec<String>,
    pub outputs: Vec<f64>,
    pub spectral_radius: f64,
}

impl SteadyState {
    pub fn output(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.outputs[i])
    }
}

fn outputs_at(model: &StateSpaceModel, y: &[f64], beta: f64) -> Vec<f64> {
    model.outputs.iter().map(|o| o.evaluate(y, beta)).collect()
}

/// Runs `y(k+1) = A(β) y(k) + b(β)` for `k_max` steps, recording every output
/// at every iteration including `k = 0`.
pub fn iterate(model: &StateSpaceModel, beta: f64, k_max: usize, y0: &[f64]) -> Result<Trajectory> {
    iterate_every(model, beta, k_max, y0, 1)
}

/// As [`iterate`] but records only every `stride`-th iteration (and the last).
pub fn iterate_every(
    model: &StateSpaceModel,
    beta: f64,
    k_max: usize,
    y0: &[f64],
    stride: usize,
) -> Result<Trajectory> {
    if y0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: y0.len(),
        });
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidConfig(format!("step size must be positive, got {beta}")));
    }
    let stride = stride.max(1);
    let a = BetaMatrix::new(&model.transition)?.at(beta);
    let b = model.forcing_at(beta);
    let mut y = y0.to_vec();
    let mut next = vec![0.0; y.len()];
    let mut traj = Trajectory {
        names: model.output_names(),
        k: vec![0],
        values: vec![outputs_at(model, &y, beta)],
        final_state: Vec::new(),
    };
    for k in 1..=k_max {
        a.affine(&y, &b, &mut next);
        std::mem::swap(&mut y, &mut next);
        let sq: f64 = y.iter().map(|v| v * v).sum();
        if !sq.is_finite() || sq > DIVERGENCE_NORM * DIVERGENCE_NORM {
            return Err(Error::Diverged { iteration: k });
        }
        if k % stride == 0 || k == k_max {
            traj.k.push(k);
            traj.values.push(outputs_at(model, &y, beta));
        }
    }
    traj.final_state = y;
    Ok(traj)
}

/// Closed-form steady state. Fails with [`Error::Unstable`] when
/// `ρ(A(β)) ≥ 1`.
pub fn steady_state(model: &StateSpaceModel, beta: f64) -> Result<SteadyState> {
    let bm = BetaMatrix::new(&model.transition)?;
    let a = bm.at(beta);
    let rho = spectral_radius(&a, DEFAULT_TOL)?;
    if !(rho < 1.0) {
        return Err(Error::Unstable { beta, rho });
    }
    let b = model.forcing_at(beta);
    let y = solve_fixed_point(&a, &b)?;
    let residual = fixed_point_residual(&a, &b, &y);
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual > 1e-10 * bnorm.max(f64::MIN_POSITIVE) && bnorm > 0.0 {
        return Err(Error::Unstable { beta, rho });
    }
    Ok(SteadyState {
        beta,
        outputs: outputs_at(model, &y, beta),
        names: model.output_names(),
        state: y,
        spectral_radius: rho,
    })
}

fn fixed_point_residual(a: &Csr, b: &[f64], y: &[f64]) -> f64 {
    let mut ay = vec![0.0; y.len()];
    a.matvec(y, &mut ay);
    y.iter()
        .zip(&ay)
        .zip(b)
        .map(|((yi, ai), bi)| (yi - ai - bi).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Solves `(I - A) y = b`, refining once against the sparse residual.
fn solve_fixed_point(a: &Csr, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows;
    if b.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    if n <= DENSE_SOLVE_LIMIT {
        let dense = a.to_dense();
        let m = DMatrix::from_fn(n, n, |i, j| f64::from(i == j) - dense[i * n + j]);
        let lu = m.lu();
        let rhs = DVector::from_column_slice(b);
        let mut y = lu
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidConfig("I - A is singular".into()))?;
        for _ in 0..2 {
            let mut ay = vec![0.0; n];
            a.matvec(y.as_slice(), &mut ay);
            let r = DVector::from_fn(n, |i, _| b[i] - (y[i] - ay[i]));
            if let Some(dy) = lu.solve(&r) {
                y += dy;
            }
        }
        Ok(y.as_slice().to_vec())
    } else {
        let out = gmres(a, b, 1e-12, 200, 20_000);
        Ok(out.solution)
    }
}

/// `A ⊗ B` for dense row-major-free nalgebra matrices.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-stacking `vec(X)`.
pub fn vec_of(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec_of`] for an `rows × cols` matrix.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}
