//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes plain numbers and strings and returns a JSON document;
//! errors come back as their message. The `*_json` functions hold the logic
//! and are what the native tests exercise.

use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use exact_lms::classical::{ia_beta_bound_mean, ia_second_order};
use exact_lms::closure::{derive_model_with, ClosureOptions, ModelOrder, StateSpaceModel};
use exact_lms::config::{preset_scenario, Distribution, SystemConfig};
use exact_lms::numerics::{find_beta_max, iterate_every, steady_state};
use exact_lms::{Error, Result};

/// Largest exact model the page will build; bigger ones freeze the tab.
pub const BROWSER_CAP: usize = 20_000;

/// Points kept per learning curve.
const CURVE_POINTS: usize = 400;

fn system(preset: &str, n: usize, m: usize, p: usize, beta: f64, dist: &str) -> Result<SystemConfig> {
    preset_scenario(preset, n, m, p, beta, Distribution::parse(dist)?)
}

fn models(cfg: &SystemConfig) -> Result<(StateSpaceModel, StateSpaceModel)> {
    let opts = ClosureOptions {
        cap: BROWSER_CAP,
        ..ClosureOptions::default()
    };
    Ok((derive_model_with(cfg, ModelOrder::Second, &opts)?, ia_second_order(cfg)?))
}

fn curves(model: &StateSpaceModel, beta: f64, iterations: usize) -> Result<Value> {
    let stride = iterations.div_ceil(CURVE_POINTS).max(1);
    let t = iterate_every(model, beta, iterations, &model.initial_state, stride)?;
    let mut out = serde_json::Map::new();
    out.insert("k".into(), json!(t.k));
    for name in &t.names {
        out.insert(name.clone(), json!(t.column(name)));
    }
    Ok(Value::Object(out))
}

pub fn learning_curves_json(
    preset: &str,
    n: usize,
    m: usize,
    p: usize,
    beta: f64,
    dist: &str,
    iterations: usize,
) -> Result<Value> {
    let cfg = system(preset, n, m, p, beta, dist)?;
    let (exact, ia) = models(&cfg)?;
    Ok(json!({
        "dim": { "exact": exact.dim(), "ia": ia.dim() },
        "w_star": cfg.w_modeled(),
        "exact": curves(&exact, beta, iterations)?,
        "ia": curves(&ia, beta, iterations)?,
    }))
}

pub fn stability_json(preset: &str, n: usize, m: usize, p: usize, dist: &str) -> Result<Value> {
    let cfg = system(preset, n, m, p, 0.01, dist)?;
    let (exact, ia) = models(&cfg)?;
    let range = (1e-4, 2.0 * ia_beta_bound_mean(&cfg)?);
    let e = find_beta_max(&exact, range, 1e-5)?;
    let i = find_beta_max(&ia, range, 1e-5)?;
    Ok(json!({
        "mean_bound": range.1 / 2.0,
        "exact": { "beta_max": e.beta_max, "dim": e.dim, "samples": e.samples },
        "ia": { "beta_max": i.beta_max, "dim": i.dim, "samples": i.samples },
    }))
}

/// Steady-state MSE in dB of both models over `points` step sizes up to
/// `fraction` of the exact stability bound.
pub fn steady_state_sweep_json(
    preset: &str,
    n: usize,
    m: usize,
    p: usize,
    dist: &str,
    points: usize,
    fraction: f64,
) -> Result<Value> {
    if points == 0 || !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig("need points >= 1 and 0 < fraction < 1".into()));
    }
    let cfg = system(preset, n, m, p, 0.01, dist)?;
    let (exact, ia) = models(&cfg)?;
    let bmax = find_beta_max(&exact, (1e-4, 2.0 * ia_beta_bound_mean(&cfg)?), 1e-5)?.beta_max;
    let mut betas = Vec::with_capacity(points);
    let (mut e_db, mut i_db) = (Vec::new(), Vec::new());
    for j in 1..=points {
        let beta = fraction * bmax * j as f64 / points as f64;
        let db = |model: &StateSpaceModel| -> Result<Option<f64>> {
            match steady_state(model, beta) {
                Ok(ss) => Ok(ss.output("mse").map(|v| 10.0 * v.log10())),
                Err(Error::Unstable { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        };
        betas.push(beta);
        e_db.push(db(&exact)?);
        i_db.push(db(&ia)?);
    }
    Ok(json!({ "beta_max": bmax, "beta": betas, "exact_db": e_db, "ia_db": i_db }))
}

fn finish(r: Result<Value>) -> Result<String, String> {
    r.map(|v| v.to_string()).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn learning_curves(
    preset: &str,
    n: usize,
    m: usize,
    p: usize,
    beta: f64,
    dist: &str,
    iterations: usize,
) -> Result<String, String> {
    finish(learning_curves_json(preset, n, m, p, beta, dist, iterations))
}

#[wasm_bindgen]
pub fn stability(preset: &str, n: usize, m: usize, p: usize, dist: &str) -> Result<String, String> {
    finish(stability_json(preset, n, m, p, dist))
}

#[wasm_bindgen]
pub fn steady_state_sweep(
    preset: &str,
    n: usize,
    m: usize,
    p: usize,
    dist: &str,
    points: usize,
    fraction: f64,
) -> Result<String, String> {
    finish(steady_state_sweep_json(preset, n, m, p, dist, points, fraction))
}
