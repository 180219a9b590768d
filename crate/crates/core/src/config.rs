//! Experiment description: filter and plant lengths, the moving-average
//! input model, measurement noise and the even moments of the white
//! driving noise.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of the white driving noise `u(k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    GaussianUnit,
    LaplacianUnit,
    Custom,
}

impl Distribution {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag.to_ascii_lowercase().as_str() {
            "gaussian" | "gaussian-unit" | "normal" => Ok(Self::GaussianUnit),
            "laplacian" | "laplacian-unit" | "laplace" => Ok(Self::LaplacianUnit),
            "custom" => Ok(Self::Custom),
            _ => Err(Error::UnknownDistribution(tag.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::GaussianUnit => "gaussian",
            Self::LaplacianUnit => "laplacian",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Even moments `γ_n = E[u^n]` of an even-symmetric, zero-mean distribution.
///
/// Odd moments are identically zero. Orders above the stored maximum are an
/// error rather than an extrapolation.
#[derive(Debug)]
pub struct MomentSpec {
    /// `even[h] = γ_{2h}`, with `even[0] = 1`.
    even: Vec<f64>,
    distribution: Distribution,
    odd_queries: AtomicUsize,
}

impl Clone for MomentSpec {
    fn clone(&self) -> Self {
        Self {
            even: self.even.clone(),
            distribution: self.distribution,
            odd_queries: AtomicUsize::new(self.odd_queries.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for MomentSpec {
    fn eq(&self, other: &Self) -> bool {
        self.even == other.even && self.distribution == other.distribution
    }
}

impl MomentSpec {
    /// Moments of one of the unit-variance presets up to `max_order`.
    pub fn preset(distribution: Distribution, max_order: usize) -> Result<Self> {
        if max_order < 2 || max_order % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "maximum moment order must be even and >= 2, got {max_order}"
            )));
        }
        let halves = max_order / 2;
        let mut even = Vec::with_capacity(halves + 1);
        even.push(1.0);
        match distribution {
            // (2m-1)!!
            Distribution::GaussianUnit => {
                for m in 1..=halves {
                    let prev = even[m - 1];
                    even.push(prev * (2 * m - 1) as f64);
                }
            }
            // (2m)! / 2^m, the moments of Laplace(0, 1/sqrt 2)
            Distribution::LaplacianUnit => {
                for m in 1..=halves {
                    let prev = even[m - 1];
                    even.push(prev * ((2 * m - 1) * (2 * m)) as f64 / 2.0);
                }
            }
            Distribution::Custom => {
                return Err(Error::InvalidConfig(
                    "custom moments must be given explicitly".into(),
                ))
            }
        }
        Ok(Self {
            even,
            distribution,
            odd_queries: AtomicUsize::new(0),
        })
    }

    /// User-supplied moments. Every even order `2..=max_order` must be present.
    pub fn custom(moments: &BTreeMap<usize, f64>, max_order: usize) -> Result<Self> {
        if max_order < 2 || max_order % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "maximum moment order must be even and >= 2, got {max_order}"
            )));
        }
        let mut even = vec![1.0];
        for order in (2..=max_order).step_by(2) {
            let value = moments.get(&order).copied().ok_or_else(|| {
                Error::InvalidConfig(format!("custom moments lack gamma_{order}"))
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "gamma_{order} must be finite and non-negative"
                )));
            }
            even.push(value);
        }
        Ok(Self {
            even,
            distribution: Distribution::Custom,
            odd_queries: AtomicUsize::new(0),
        })
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution
    }

    pub fn max_order(&self) -> usize {
        2 * (self.even.len() - 1)
    }

    /// `γ_n`. Odd orders are zero; they are counted so tests can check that
    /// the reduction never asks for them.
    pub fn gamma(&self, order: usize) -> Result<f64> {
        if order % 2 == 1 {
            self.odd_queries.fetch_add(1, Ordering::Relaxed);
            return Ok(0.0);
        }
        self.gamma_even(order / 2)
    }

    /// `γ_{2h}`.
    #[inline]
    pub fn gamma_even(&self, half: usize) -> Result<f64> {
        self.even
            .get(half)
            .copied()
            .ok_or(Error::MomentUnavailable {
                order: 2 * half,
                max: self.max_order(),
            })
    }

    /// Number of odd-order queries made through [`MomentSpec::gamma`].
    pub fn odd_queries(&self) -> usize {
        self.odd_queries.load(Ordering::Relaxed)
    }

    pub fn even_moments(&self) -> BTreeMap<usize, f64> {
        self.even
            .iter()
            .enumerate()
            .map(|(h, &g)| (2 * h, g))
            .collect()
    }
}

/// Preset moments for a distribution tag.
pub fn moments_for(distribution: Distribution, max_order: usize) -> Result<MomentSpec> {
    MomentSpec::preset(distribution, max_order)
}

/// Highest moment order any closure of the given size can ask for.
///
/// A state variable of deviation degree `d` carries at most `2d` u-factors
/// per lag it has travelled through, and lags never exceed `N+P+M-2`.
pub fn required_moment_order(n: usize, m: usize, p: usize, order: usize) -> usize {
    let max_lag = n + p + m - 2;
    2 * order.max(1) * (max_lag + 1)
}

/// Full description of one deficient-length LMS experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    /// Adaptive filter length `N`.
    pub n_adaptive: usize,
    /// Unmodelled plant tail length `P`.
    pub p_excess: usize,
    /// Order `M` of the moving-average input model.
    pub ma_order: usize,
    /// `b_0..b_{M-1}`.
    pub b_coeffs: Vec<f64>,
    /// Full plant response, first `N` entries modelled, last `P` the tail.
    pub w_star: Vec<f64>,
    pub beta: f64,
    pub noise_variance: f64,
    pub moments: MomentSpec,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_adaptive == 0 {
            return bad("filter length N must be positive".into());
        }
        if self.ma_order == 0 {
            return bad("MA order M must be positive".into());
        }
        if self.b_coeffs.len() != self.ma_order {
            return bad(format!(
                "expected {} MA coefficients, got {}",
                self.ma_order,
                self.b_coeffs.len()
            ));
        }
        if self.w_star.len() != self.n_adaptive + self.p_excess {
            return bad(format!(
                "plant response must have N+P = {} entries, got {}",
                self.n_adaptive + self.p_excess,
                self.w_star.len()
            ));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.beta));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            ));
        }
        if self
            .b_coeffs
            .iter()
            .chain(self.w_star.iter())
            .any(|v| !v.is_finite())
        {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }

    /// Modelled part `w★` of the plant.
    pub fn w_modeled(&self) -> &[f64] {
        &self.w_star[..self.n_adaptive]
    }

    /// Unmodelled tail `w̄★` of the plant.
    pub fn w_tail(&self) -> &[f64] {
        &self.w_star[self.n_adaptive..]
    }

    /// Largest u-lag appearing in `x(k)` and `x̄(k)`.
    pub fn max_lag(&self) -> usize {
        self.n_adaptive + self.p_excess + self.ma_order - 2
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Replace preset moments so that closures of `order` never run out.
    pub fn with_moments_for_order(mut self, order: usize) -> Result<Self> {
        let needed =
            required_moment_order(self.n_adaptive, self.ma_order, self.p_excess, order);
        if self.moments.max_order() < needed {
            match self.moments.distribution() {
                Distribution::Custom => {}
                d => self.moments = MomentSpec::preset(d, needed)?,
            }
        }
        Ok(self)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ConfigFile = serde_json::from_str(&text)?;
        file.resolve()
    }

    pub fn to_file_spec(&self) -> ConfigFile {
        let custom = self.moments.distribution() == Distribution::Custom;
        ConfigFile {
            n: self.n_adaptive,
            m: self.ma_order,
            p: self.p_excess,
            b: Some(self.b_coeffs.clone()),
            w_star: self.w_star.clone(),
            beta: self.beta,
            noise_variance: self.noise_variance,
            distribution: self.moments.distribution().name().to_string(),
            moments: custom.then(|| {
                self.moments
                    .even_moments()
                    .into_iter()
                    .filter(|(k, _)| *k > 0)
                    .map(|(k, v)| (k.to_string(), v))
                    .collect()
            }),
        }
    }
}

/// Flat JSON form of a [`SystemConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Defaults to the preset input filter when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    pub w_star: Vec<f64>,
    pub beta: f64,
    pub noise_variance: f64,
    pub distribution: String,
    /// Even moments keyed by order, only for `"distribution": "custom"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<BTreeMap<String, f64>>,
}

impl ConfigFile {
    pub fn resolve(&self) -> Result<SystemConfig> {
        let distribution = Distribution::parse(&self.distribution)?;
        let moments = match distribution {
            Distribution::Custom => {
                let raw = self.moments.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("custom distribution needs a `moments` table".into())
                })?;
                let mut table = BTreeMap::new();
                for (key, value) in raw {
                    let order: usize = key.parse().map_err(|_| {
                        Error::InvalidConfig(format!("moment key `{key}` is not an integer"))
                    })?;
                    table.insert(order, *value);
                }
                let max = table.keys().copied().filter(|o| o % 2 == 0).max().unwrap_or(0);
                MomentSpec::custom(&table, max)?
            }
            d => MomentSpec::preset(d, 2)?,
        };
        let cfg = SystemConfig {
            n_adaptive: self.n,
            p_excess: self.p,
            ma_order: self.m,
            b_coeffs: self.b.clone().unwrap_or_else(|| preset_input_filter(self.m)),
            w_star: self.w_star.clone(),
            beta: self.beta,
            noise_variance: self.noise_variance,
            moments,
        };
        cfg.validate()?;
        cfg.with_moments_for_order(2)
    }
}

/// Coefficients of the preset input filter. `M = 2` is `1 - 0.9 z^-1`; other
/// orders continue the geometric sequence `(-0.9)^m`.
pub fn preset_input_filter(m: usize) -> Vec<f64> {
    let mut b = Vec::with_capacity(m);
    let mut c = 1.0;
    for _ in 0..m {
        b.push(c);
        c *= -0.9;
    }
    b
}

/// Noise variance shared by both preset scenarios.
pub const PRESET_NOISE_VARIANCE: f64 = 0.01;

/// One of the two plant configurations used throughout the experiments:
/// `config1` has every plant coefficient equal to one, `config2` keeps the
/// modelled part at one and shrinks the tail to 0.01.
pub fn preset_scenario(
    name: &str,
    n: usize,
    m: usize,
    p: usize,
    beta: f64,
    distribution: Distribution,
) -> Result<SystemConfig> {
    let tail = match name {
        "config1" => 1.0,
        "config2" => 0.01,
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("N and M must be positive".into()));
    }
    let mut w_star = vec![1.0; n];
    w_star.extend(std::iter::repeat_n(tail, p));
    let cfg = SystemConfig {
        n_adaptive: n,
        p_excess: p,
        ma_order: m,
        b_coeffs: preset_input_filter(m),
        w_star,
        beta,
        noise_variance: PRESET_NOISE_VARIANCE,
        moments: MomentSpec::preset(distribution, 2)?,
    };
    cfg.validate()?;
    cfg.with_moments_for_order(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson integration of `x^n f(x)` over a wide symmetric range.
    fn integrate_moment(n: i32, density: impl Fn(f64) -> f64) -> f64 {
        let (a, b, steps) = (-60.0f64, 60.0f64, 1_200_000usize);
        let h = (b - a) / steps as f64;
        let f = |x: f64| x.powi(n) * density(x);
        let mut acc = f(a) + f(b);
        for i in 1..steps {
            let x = a + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * h / 3.0
    }

    fn normal(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn laplace(x: f64) -> f64 {
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        (-x.abs() / scale).exp() / (2.0 * scale)
    }

    #[test]
    fn gaussian_moments_match_quadrature() {
        let spec = moments_for(Distribution::GaussianUnit, 8).unwrap();
        for order in (2..=8).step_by(2) {
            let numeric = integrate_moment(order as i32, normal);
            let exact = spec.gamma(order).unwrap();
            assert!(((exact - numeric) / numeric).abs() < 1e-9, "order {order}");
        }
        assert_eq!(spec.gamma(4).unwrap(), 3.0);
        assert_eq!(spec.gamma(8).unwrap(), 105.0);
    }

    #[test]
    fn laplacian_moments_match_quadrature() {
        let spec = moments_for(Distribution::LaplacianUnit, 6).unwrap();
        assert_eq!(spec.gamma(2).unwrap(), 1.0);
        assert_eq!(spec.gamma(4).unwrap(), 6.0);
        // the kink at zero costs Simpson some accuracy
        for order in [2usize, 4, 6] {
            let numeric = integrate_moment(order as i32, laplace);
            let exact = spec.gamma(order).unwrap();
            assert!(((exact - numeric) / numeric).abs() < 1e-7, "order {order}");
        }
    }

    #[test]
    fn odd_moments_vanish_and_high_orders_error() {
        let spec = moments_for(Distribution::GaussianUnit, 4).unwrap();
        assert_eq!(spec.gamma(0).unwrap(), 1.0);
        for order in [1, 3, 5, 7, 101] {
            assert_eq!(spec.gamma(order).unwrap(), 0.0);
        }
        assert_eq!(spec.odd_queries(), 5);
        assert!(matches!(
            spec.gamma(6),
            Err(Error::MomentUnavailable { order: 6, max: 4 })
        ));
    }

    #[test]
    fn moment_orders_must_be_even() {
        assert!(moments_for(Distribution::GaussianUnit, 3).is_err());
        assert!(moments_for(Distribution::GaussianUnit, 0).is_err());
        assert!(moments_for(Distribution::Custom, 4).is_err());
        assert!(Distribution::parse("cauchy").is_err());
    }

    #[test]
    fn custom_moments_require_every_even_order() {
        let mut table = BTreeMap::new();
        table.insert(2, 1.0);
        table.insert(6, 15.0);
        assert!(MomentSpec::custom(&table, 6).is_err());
        table.insert(4, 3.0);
        let spec = MomentSpec::custom(&table, 6).unwrap();
        assert_eq!(spec.gamma(6).unwrap(), 15.0);
    }

    #[test]
    fn preset_scenarios() {
        let c1 = preset_scenario("config1", 3, 2, 2, 0.01, Distribution::GaussianUnit).unwrap();
        assert_eq!(c1.w_star, vec![1.0; 5]);
        assert_eq!(c1.b_coeffs, vec![1.0, -0.9]);
        assert_eq!(c1.noise_variance, 0.01);

        let c2 = preset_scenario("config2", 2, 2, 2, 0.01, Distribution::GaussianUnit).unwrap();
        assert_eq!(c2.w_star, vec![1.0, 1.0, 0.01, 0.01]);

        let white = preset_scenario("config1", 1, 1, 0, 0.01, Distribution::GaussianUnit).unwrap();
        assert_eq!(white.w_star, vec![1.0]);
        assert_eq!(white.p_excess, 0);
        assert!(white.w_tail().is_empty());

        assert!(matches!(
            preset_scenario("config3", 1, 1, 0, 0.01, Distribution::GaussianUnit),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let mut cfg = preset_scenario("config1", 2, 2, 1, 0.01, Distribution::GaussianUnit).unwrap();
        cfg.w_star.pop();
        assert!(cfg.validate().is_err());
        let cfg = preset_scenario("config1", 2, 2, 1, 0.01, Distribution::GaussianUnit)
            .unwrap()
            .with_beta(0.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_file_round_trip() {
        let text = r#"{"n":3,"m":2,"p":2,"b":[1.0,-0.9],"w_star":[1,1,1,1,1],
                      "beta":0.004,"noise_variance":0.01,"distribution":"laplacian"}"#;
        let file: ConfigFile = serde_json::from_str(text).unwrap();
        let cfg = file.resolve().unwrap();
        assert_eq!(cfg.moments.distribution(), Distribution::LaplacianUnit);
        assert!(cfg.moments.max_order() >= required_moment_order(3, 2, 2, 2));
        assert_eq!(cfg.to_file_spec().resolve().unwrap(), cfg);
    }
}
