//! Monte Carlo simulation of the deficient-length LMS filter.
//!
//! Trial `t` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to stream
//! `t`, so each trial's randomness depends only on `(seed, t)`. Trials are
//! grouped in fixed-size chunks whose statistics are merged in chunk order,
//! which makes results bit-identical for any number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Distribution, SystemConfig};
use crate::error::{Error, Result};

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 10.0;

/// Trials per reduction leaf; fixed so that the reduction tree does not
/// depend on the thread pool.
const CHUNK: usize = 64;

#[derive(Clone, Debug)]
pub struct TrialPlan {
    pub cfg: SystemConfig,
    pub trials: usize,
    pub iterations: usize,
    pub seed: u64,
    /// A trial diverges once any `|w_i(k)|` exceeds this.
    pub divergence_threshold: f64,
}

impl TrialPlan {
    pub fn new(cfg: SystemConfig, trials: usize, iterations: usize, seed: u64) -> Self {
        Self {
            cfg,
            trials,
            iterations,
            seed,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidPlan("trials must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidPlan("iterations must be >= 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidPlan("divergence threshold must be positive".into()));
        }
        if self.cfg.moments.distribution() == Distribution::Custom {
            return Err(Error::InvalidPlan("custom moment sets cannot be sampled".into()));
        }
        self.cfg.validate()
    }
}

/// Ensemble statistics over the trials that did not diverge. Index `k` holds
/// `w(k)` (before the `k`-th update) and `e²(k)`; `w(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// `mean_weights[k][i]` = ensemble mean of `w_i(k)`.
    pub mean_weights: Vec<Vec<f64>>,
    pub standard_error_weights: Vec<Vec<f64>>,
    pub mse: Vec<f64>,
    pub standard_error_mse: Vec<f64>,
    pub diverged_trials: usize,
    pub trials_completed: usize,
}

/// Unit-variance draw from `distribution`.
pub fn sample<R: Rng + ?Sized>(distribution: Distribution, rng: &mut R) -> Result<f64> {
    match distribution {
        Distribution::GaussianUnit => Ok(rng.sample(StandardNormal)),
        Distribution::LaplacianUnit => {
            // Inverse CDF with scale 1/√2.
            let u: f64 = rng.random::<f64>() - 0.5;
            let mag = -(1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln();
            Ok(std::f64::consts::FRAC_1_SQRT_2 * mag * u.signum())
        }
        Distribution::Custom => Err(Error::UnknownDistribution("custom".into())),
    }
}

/// Per-series running statistics (count, mean, sum of squared deviations).
#[derive(Clone, Debug)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        if other.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return other.clone();
        }
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.n / n;
            self.m2[i] += other.m2[i] + d * d * self.n * other.n / n;
        }
        self.n = n;
        self
    }

    fn standard_error(&self, i: usize) -> f64 {
        if self.n < 2.0 {
            return f64::NAN;
        }
        (self.m2[i] / (self.n - 1.0) / self.n).sqrt()
    }
}

struct Chunk {
    stats: Moments,
    diverged: usize,
}

fn merge_tree(mut level: Vec<Chunk>) -> Chunk {
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(Chunk {
                    stats: a.stats.merge(&b.stats),
                    diverged: a.diverged + b.diverged,
                }),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop().expect("at least one chunk")
}

/// One trial; fills `record` (row-major `iterations × (N + 1)`: weights then
/// `e²`) and returns `false` if the trial diverged.
fn run_trial(plan: &TrialPlan, trial: u64, record: Option<&mut [f64]>) -> Result<bool> {
    let cfg = &plan.cfg;
    let (n, p) = (cfg.n_adaptive, cfg.p_excess);
    let b = &cfg.b_coeffs;
    let taps = n + p;
    let dist = cfg.moments.distribution();
    let sigma = cfg.noise_variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(trial);

    // u[j] = u(k - j). Every slot starts with a stationary draw; the first
    // shift discards the oldest one.
    let mut u = vec![0.0; taps + b.len() - 1];
    for v in u.iter_mut() {
        *v = sample(dist, &mut rng)?;
    }
    let mut w = vec![0.0; n];
    let mut x = vec![0.0; taps];
    let stride = n + 1;
    let mut record = record;
    for k in 0..plan.iterations {
        u.rotate_right(1);
        u[0] = sample(dist, &mut rng)?;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = b.iter().enumerate().map(|(m, bm)| bm * u[i + m]).sum();
        }
        let noise: f64 = if sigma > 0.0 {
            sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let d: f64 = cfg.w_star.iter().zip(&x).map(|(ws, xi)| ws * xi).sum::<f64>() + noise;
        let y: f64 = w.iter().zip(&x).map(|(wi, xi)| wi * xi).sum();
        let e = d - y;
        if let Some(rec) = record.as_deref_mut() {
            let row = &mut rec[k * stride..(k + 1) * stride];
            row[..n].copy_from_slice(&w);
            row[n] = e * e;
        }
        for (wi, xi) in w.iter_mut().zip(&x) {
            *wi += cfg.beta * e * xi;
        }
        if w.iter().any(|wi| !(wi.abs() <= plan.divergence_threshold)) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn run(plan: &TrialPlan) -> Result<SimulationResult> {
    plan.validate()?;
    let n = plan.cfg.n_adaptive;
    let stride = n + 1;
    let len = plan.iterations * stride;
    let chunks: Vec<usize> = (0..plan.trials.div_ceil(CHUNK)).collect();
    let partial: Vec<Chunk> = chunks
        .par_iter()
        .map(|&c| -> Result<Chunk> {
            let mut stats = Moments::new(len);
            let mut diverged = 0;
            let mut buf = vec![0.0; len];
            for t in c * CHUNK..((c + 1) * CHUNK).min(plan.trials) {
                if run_trial(plan, t as u64, Some(&mut buf))? {
                    stats.push(&buf);
                } else {
                    diverged += 1;
                }
            }
            Ok(Chunk { stats, diverged })
        })
        .collect::<Result<_>>()?;
    let total = merge_tree(partial);
    let s = &total.stats;
    let rows = |f: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
        (0..plan.iterations)
            .map(|k| (0..n).map(|i| f(k * stride + i)).collect())
            .collect()
    };
    Ok(SimulationResult {
        mean_weights: rows(&|j| if s.n > 0.0 { s.mean[j] } else { f64::NAN }),
        standard_error_weights: rows(&|j| s.standard_error(j)),
        mse: (0..plan.iterations)
            .map(|k| if s.n > 0.0 { s.mean[k * stride + n] } else { f64::NAN })
            .collect(),
        standard_error_mse: (0..plan.iterations)
            .map(|k| s.standard_error(k * stride + n))
            .collect(),
        diverged_trials: total.diverged,
        trials_completed: plan.trials - total.diverged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergencePoint {
    pub beta: f64,
    pub probability: f64,
    pub diverged: usize,
    pub trials: usize,
}

/// Fraction of diverged trials for each step size.
pub fn divergence_probability(
    cfg: &SystemConfig,
    beta_grid: &[f64],
    trials: usize,
    iterations: usize,
    seed: u64,
) -> Result<Vec<DivergencePoint>> {
    beta_grid
        .iter()
        .map(|&beta| {
            let plan = TrialPlan::new(cfg.clone().with_beta(beta), trials, iterations, seed);
            plan.validate()?;
            let diverged: usize = (0..trials)
                .into_par_iter()
                .map(|t| run_trial(&plan, t as u64, None).map(|ok| usize::from(!ok)))
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            Ok(DivergencePoint {
                beta,
                probability: diverged as f64 / trials as f64,
                diverged,
                trials,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset_scenario;

    fn plan(dist: Distribution, trials: usize) -> TrialPlan {
        let cfg = preset_scenario("config1", 2, 2, 1, 0.02, dist).unwrap();
        TrialPlan::new(cfg, trials, 50, 7)
    }

    #[test]
    fn sampler_moments() {
        for (dist, g4) in [(Distribution::GaussianUnit, 3.0), (Distribution::LaplacianUnit, 6.0)] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let n = 2_000_000;
            let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
            for _ in 0..n {
                let x = sample(dist, &mut rng).unwrap();
                s1 += x;
                s2 += x * x;
                s4 += x.powi(4);
            }
            let nf = n as f64;
            assert!((s1 / nf).abs() < 3e-3, "{dist:?} mean");
            assert!((s2 / nf - 1.0).abs() < 0.01, "{dist:?} variance");
            assert!((s4 / nf - g4).abs() < 0.04 * g4, "{dist:?} fourth moment");
        }
    }

    #[test]
    fn zero_plant_stays_zero() {
        let mut p = plan(Distribution::GaussianUnit, 20);
        p.cfg.w_star.iter_mut().for_each(|w| *w = 0.0);
        p.cfg.noise_variance = 0.0;
        let r = run(&p).unwrap();
        assert!(r.mse.iter().all(|&v| v == 0.0));
        assert!(r.mean_weights.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_across_pools() {
        let p = plan(Distribution::LaplacianUnit, 300);
        let a = run(&p).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run(&p).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.trials_completed, 300);
    }

    #[test]
    fn huge_step_diverges() {
        let cfg = preset_scenario("config1", 2, 2, 1, 0.02, Distribution::GaussianUnit).unwrap();
        let pts = divergence_probability(&cfg, &[0.001, 3.0], 50, 200, 1).unwrap();
        assert_eq!(pts[0].probability, 0.0);
        assert_eq!(pts[1].probability, 1.0);
        let r = run(&TrialPlan::new(cfg.with_beta(3.0), 10, 200, 1)).unwrap();
        assert_eq!(r.diverged_trials, 10);
        assert!(r.mse[0].is_nan());
    }

    #[test]
    fn invalid_plans() {
        let mut p = plan(Distribution::GaussianUnit, 1);
        p.trials = 0;
        assert!(matches!(run(&p), Err(Error::InvalidPlan(_))));
        let mut p = plan(Distribution::GaussianUnit, 1);
        p.divergence_threshold = 0.0;
        assert!(p.validate().is_err());
    }
}
