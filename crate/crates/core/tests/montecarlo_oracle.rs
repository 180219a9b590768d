mod common;

use exact_lms::closure::{derive_model, ModelOrder};
use exact_lms::config::Distribution;
use exact_lms::montecarlo::{divergence_probability, run, TrialPlan};
use exact_lms::numerics::iterate;

use common::{config1, z_scores};

/// The exact mean recursion tracks the ensemble mean of the simulated filter
/// on a coloured, under-modelled setup where the classical analysis is biased.
#[test]
fn first_order_model_tracks_simulation() {
    let beta = 0.1;
    let cfg = config1(1, 2, 1, beta, Distribution::LaplacianUnit);
    let model = derive_model(&cfg, ModelOrder::First).unwrap();
    let traj = iterate(&model, beta, 100, &model.initial_state).unwrap();
    let mut plan = TrialPlan::new(cfg, 50_000, 101, 21);
    plan.divergence_threshold = 1e6;
    let mc = run(&plan).unwrap();
    assert_eq!(mc.diverged_trials, 0);
    let w = traj.column("mean_w0").unwrap();
    let mcw: Vec<f64> = mc.mean_weights.iter().map(|v| v[0]).collect();
    let se: Vec<f64> = mc.standard_error_weights.iter().map(|v| v[0]).collect();
    let z = z_scores(&w[1..], &mcw[1..], &se[1..]);
    let rms = (z.iter().map(|z| z * z).sum::<f64>() / z.len() as f64).sqrt();
    // consecutive k are strongly correlated, so judge the whole curve
    assert!(rms < 1.5, "rms z {rms}");
    assert!(z.iter().all(|z| z.abs() < 4.5), "{z:?}");
}

#[test]
fn simulation_is_reproducible() {
    let cfg = config1(2, 2, 1, 0.05, Distribution::GaussianUnit);
    let a = run(&TrialPlan::new(cfg.clone(), 500, 50, 3)).unwrap();
    let b = run(&TrialPlan::new(cfg.clone(), 500, 50, 3)).unwrap();
    let c = run(&TrialPlan::new(cfg, 500, 50, 4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.mse, c.mse);
}

#[test]
fn divergence_probability_rises_with_step() {
    let cfg = config1(2, 2, 0, 0.01, Distribution::GaussianUnit);
    let table = divergence_probability(&cfg, &[0.01, 0.5, 2.0], 400, 300, 1).unwrap();
    assert_eq!(table[0].diverged, 0);
    assert!(table[0].probability <= table[1].probability);
    assert!(table[1].probability <= table[2].probability);
    assert_eq!(table[2].probability, 1.0);
}
