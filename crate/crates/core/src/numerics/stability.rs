//! Largest stable step size of a β-polynomial model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{spectral_radius_with, BetaMatrix, SpectralMethod, SpectralOptions};
use crate::closure::StateSpaceModel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoSample {
    pub beta: f64,
    pub rho: f64,
}

/// Outcome of [`find_beta_max`]: `ρ(A(lo)) < 1 ≤ ρ(A(hi))` for the bracket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub beta_max: f64,
    pub bracket: (f64, f64),
    /// Scan points followed by bisection points, in evaluation order.
    pub samples: Vec<RhoSample>,
    pub bisection_steps: usize,
    pub tolerance: f64,
    pub method: SpectralMethod,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ScanOptions {
    pub points: usize,
    /// Relative width of the final bracket.
    pub tol: f64,
    pub spectral: SpectralOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            points: 64,
            tol: 1e-5,
            spectral: SpectralOptions::default(),
        }
    }
}

/// `ρ(A(β))` of a model.
pub fn model_spectral_radius(model: &StateSpaceModel, beta: f64) -> Result<f64> {
    let bm = BetaMatrix::new(&model.transition)?;
    Ok(spectral_radius_with(&bm.at(beta), &SpectralOptions::default())?.rho)
}

pub fn find_beta_max(model: &StateSpaceModel, range: (f64, f64), tol: f64) -> Result<StabilityReport> {
    find_beta_max_with(
        model,
        range,
        &ScanOptions {
            tol,
            ..ScanOptions::default()
        },
    )
}

/// Brackets the first upward crossing of `ρ = 1` on a geometric grid over
/// `range`, then bisects it.
pub fn find_beta_max_with(model: &StateSpaceModel, range: (f64, f64), opts: &ScanOptions) -> Result<StabilityReport> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!("invalid scan range ({lo}, {hi})")));
    }
    let bm = BetaMatrix::new(&model.transition)?;
    let rho = |beta: f64| -> Result<(f64, SpectralMethod)> {
        let est = spectral_radius_with(&bm.at(beta), &opts.spectral)?;
        Ok((est.rho, est.method))
    };
    let points = opts.points.max(2);
    let ratio = (hi / lo).powf(1.0 / (points - 1) as f64);
    let grid: Vec<f64> = (0..points)
        .map(|i| if i + 1 == points { hi } else { lo * ratio.powi(i as i32) })
        .collect();
    let scanned: Vec<(f64, SpectralMethod)> = grid.par_iter().map(|&b| rho(b)).collect::<Result<_>>()?;
    let method = scanned[0].1;
    let mut samples: Vec<RhoSample> = grid
        .iter()
        .zip(&scanned)
        .map(|(&beta, &(rho, _))| RhoSample { beta, rho })
        .collect();

    let first = samples.iter().position(|s| s.rho >= 1.0);
    let (mut a, mut b) = match first {
        Some(i) if i > 0 => (samples[i - 1].beta, samples[i].beta),
        _ => {
            return Err(Error::NoCrossing {
                lo,
                hi,
                rho_lo: samples[0].rho,
                rho_hi: samples[points - 1].rho,
            })
        }
    };
    let mut steps = 0;
    while b - a > 0.5 * opts.tol * a {
        let mid = 0.5 * (a + b);
        let (r, _) = rho(mid)?;
        samples.push(RhoSample { beta: mid, rho: r });
        if r < 1.0 {
            a = mid;
        } else {
            b = mid;
        }
        steps += 1;
    }
    Ok(StabilityReport {
        beta_max: 0.5 * (a + b),
        bracket: (a, b),
        samples,
        bisection_steps: steps,
        tolerance: opts.tol,
        method,
        dim: model.dim(),
    })
}
