#![allow(dead_code)]

use std::collections::BTreeMap;

use exact_lms::config::{preset_scenario, Distribution, MomentSpec, SystemConfig};
use exact_lms::symbolic::{Expression, Generator};

pub fn config1(n: usize, m: usize, p: usize, beta: f64, dist: Distribution) -> SystemConfig {
    preset_scenario("config1", n, m, p, beta, dist).unwrap()
}

/// `(N, M, P) = (1, 2, 1)` with arbitrary input filter, moments and tail.
pub fn scalar_colored(b0: f64, b1: f64, g2: f64, g4: f64, w0: f64, tail: f64, beta: f64) -> SystemConfig {
    let moments = BTreeMap::from([(2, g2), (4, g4)]);
    SystemConfig {
        n_adaptive: 1,
        p_excess: 1,
        ma_order: 2,
        b_coeffs: vec![b0, b1],
        w_star: vec![w0, tail],
        beta,
        noise_variance: 0.01,
        moments: MomentSpec::custom(&moments, 4).unwrap(),
    }
}

/// Hand-derived mean recursion for `(1, 2, 1)` over
/// `[E w̃0(k), E u²(k-1) w̃0(k)]`: returns `(A, b)` row-major.
pub fn scalar_colored_mean_recursion(
    b0: f64,
    b1: f64,
    g2: f64,
    g4: f64,
    tail: f64,
    beta: f64,
) -> ([f64; 4], [f64; 2]) {
    let a = [
        1.0 - beta * b0 * b0 * g2,
        -beta * b1 * b1,
        g2 - beta * b0 * b0 * g4,
        -beta * b1 * b1 * g2,
    ];
    let b = [-beta * b0 * b1 * tail * g2, -beta * b0 * b1 * tail * g2 * g2];
    (a, b)
}

/// Eigenvalue moduli of the recursion above from its discriminant. With
/// `sign = +1` the discriminant is `T² - 4 det A`; `sign = -1` flips the
/// `b1²` in the linear term.
pub fn scalar_colored_rho(b0: f64, b1: f64, g2: f64, g4: f64, beta: f64, sign: f64) -> f64 {
    let (s0, s1) = (b0 * b0, b1 * b1);
    let trace = 1.0 - beta * g2 * (s0 + s1);
    let delta = beta * beta * g2 * g2 * (s0 * s0 + s1 * s1) + s0 * s1 * beta * beta * (4.0 * g4 - 2.0 * g2 * g2)
        - 2.0 * beta * g2 * (s0 + sign * s1)
        + 1.0;
    if delta >= 0.0 {
        let r = delta.sqrt();
        ((trace - r) / 2.0).abs().max(((trace + r) / 2.0).abs())
    } else {
        // complex pair: |λ|² = (T² + |Δ|) / 4
        ((trace * trace - delta) / 4.0).sqrt()
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Evaluates an expression at concrete generator values.
pub fn eval(e: &Expression, beta: f64, value: impl Fn(Generator) -> f64) -> f64 {
    e.terms()
        .iter()
        .map(|t| {
            let mut v = t.coeff() * beta.powi(t.beta_degree() as i32);
            for &(g, p) in t.factors() {
                v *= value(g).powi(p as i32);
            }
            v
        })
        .sum()
}

/// `z` scores of model values against ensemble estimates, skipping zero
/// standard errors only when the values coincide exactly.
pub fn z_scores(model: &[f64], mc: &[f64], se: &[f64]) -> Vec<f64> {
    model
        .iter()
        .zip(mc)
        .zip(se)
        .map(|((m, c), s)| {
            if *s > 0.0 {
                (m - c) / s
            } else if m == c {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}
