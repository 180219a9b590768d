mod common;

use exact_lms::classical::{compute_moment_matrices, ia_second_order, kronecker_transition};
use exact_lms::closure::{derive_model, ModelOrder, StateVariable};
use exact_lms::config::Distribution;
use exact_lms::montecarlo::sample;
use exact_lms::nalgebra::DMatrix;
use exact_lms::numerics::{iterate_every, steady_state};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{config1, rel_close};

fn pair(i: usize, j: usize) -> StateVariable {
    if i == j {
        StateVariable::deviation(&[(i as u16, 2)])
    } else {
        StateVariable::deviation(&[(i as u16, 1), (j as u16, 1)])
    }
}

/// The covariance block of the engine's IA model equals the Kronecker form
/// `I - β(R⊗I + I⊗R) + β² K4` folded onto symmetric matrices, with forcing
/// `β² σ² vec(R_x)`. Without a tail the mean does not feed the covariance.
#[test]
fn independence_model_matches_kronecker_assembly() {
    for (n, m, dist) in [
        (2, 1, Distribution::GaussianUnit),
        (3, 1, Distribution::LaplacianUnit),
        (3, 2, Distribution::GaussianUnit),
        (2, 3, Distribution::LaplacianUnit),
    ] {
        let cfg = config1(n, m, 0, 0.01, dist);
        let model = ia_second_order(&cfg).unwrap();
        let mm = compute_moment_matrices(&cfg).unwrap();
        let kron = kronecker_transition(&mm);
        let vec_index = |r: usize, c: usize| r + c * n;
        for i in 0..n {
            for j in i..n {
                let row = model.index_of(&pair(i, j)).unwrap();
                for a in 0..n {
                    for b in a..n {
                        let col = model.index_of(&pair(a, b)).unwrap();
                        for d in 0..3 {
                            let k = &kron[d];
                            let mut want = k[(vec_index(i, j), vec_index(a, b))];
                            if a != b {
                                want += k[(vec_index(i, j), vec_index(b, a))];
                            }
                            let got = model.transition[d].get(row, col);
                            assert!(
                                (got - want).abs() < 1e-12 * want.abs().max(1.0),
                                "({n},{m}) {dist} deg {d} s{i}{j} <- s{a}{b}: {got} vs {want}"
                            );
                        }
                    }
                }
                let forcing = model.forcing[2][row];
                let want = cfg.noise_variance * mm.r_x[(i, j)];
                assert!((forcing - want).abs() < 1e-15, "forcing s{i}{j}");
                assert_eq!(model.forcing[0][row], 0.0);
                assert_eq!(model.forcing[1][row], 0.0);
            }
        }
    }
}

#[test]
fn scalar_white_models_coincide() {
    let cfg = config1(1, 1, 0, 0.01, Distribution::GaussianUnit);
    let exact = derive_model(&cfg, ModelOrder::Second).unwrap();
    let var = StateVariable::deviation(&[(0, 2)]);
    let i = exact.index_of(&var).unwrap();
    let coef: Vec<f64> = exact.transition.iter().map(|a| a.get(i, i)).collect();
    assert_eq!(coef, vec![1.0, -2.0, 3.0]);
}

#[test]
fn white_input_has_positive_excess_mse() {
    let cfg = config1(3, 1, 0, 0.01, Distribution::GaussianUnit);
    let model = derive_model(&cfg, ModelOrder::Second).unwrap();
    for beta in [0.01, 0.05, 0.1] {
        let t = iterate_every(&model, beta, 20_000, &model.initial_state, 20_000).unwrap();
        let mse = t.column("mse").unwrap();
        assert!(*mse.last().unwrap() > cfg.noise_variance);
    }
}

#[test]
fn small_step_models_agree() {
    let cfg = config1(2, 2, 2, 1e-4, Distribution::GaussianUnit);
    let exact = steady_state(&derive_model(&cfg, ModelOrder::Second).unwrap(), 1e-4).unwrap();
    let ia = steady_state(&ia_second_order(&cfg).unwrap(), 1e-4).unwrap();
    let (e, i) = (exact.output("mse").unwrap(), ia.output("mse").unwrap());
    assert!(rel_close(e, i, 0.01), "{e} vs {i}");
}

/// Sample estimate of `E[x_a x_b x_c x_d]` on the same index layout as K4.
fn sampled_k4(b: &[f64], n: usize, dist: Distribution, samples: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let len = n + b.len() - 1;
    let mut sum = DMatrix::<f64>::zeros(n * n, n * n);
    let mut sq = DMatrix::<f64>::zeros(n * n, n * n);
    let mut u = vec![0.0; len];
    for _ in 0..samples {
        for v in u.iter_mut() {
            *v = sample(dist, &mut rng).unwrap();
        }
        let x: Vec<f64> = (0..n).map(|i| b.iter().enumerate().map(|(m, c)| c * u[i + m]).sum()).collect();
        for a in 0..n {
            for bb in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = x[a] * x[bb] * x[c] * x[d];
                        sum[(a * n + c, bb * n + d)] += v;
                        sq[(a * n + c, bb * n + d)] += v * v;
                    }
                }
            }
        }
    }
    let s = samples as f64;
    let mean = &sum / s;
    let se = DMatrix::from_fn(n * n, n * n, |i, j| {
        ((sq[(i, j)] / s - mean[(i, j)] * mean[(i, j)]) / (s - 1.0)).sqrt()
    });
    (mean, se)
}

#[test]
fn fourth_moments_match_simulation() {
    for (n, m) in [(1, 1), (2, 2)] {
        for dist in [Distribution::GaussianUnit, Distribution::LaplacianUnit] {
            let cfg = config1(n, m, 0, 0.01, dist);
            let k4 = compute_moment_matrices(&cfg).unwrap().k4;
            assert!(k4.relative_eq(&k4.transpose(), 1e-14, 0.0));
            let (mean, se) = sampled_k4(&cfg.b_coeffs, n, dist, 1_000_000);
            for i in 0..n * n {
                for j in 0..n * n {
                    let z = (k4[(i, j)] - mean[(i, j)]) / se[(i, j)];
                    assert!(z.abs() <= 3.0, "({n},{m}) {dist} [{i},{j}] {} vs {}", k4[(i, j)], mean[(i, j)]);
                }
            }
        }
    }
}
