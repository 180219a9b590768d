//! Classical analysis under the independence assumption (IA): the weights
//! are treated as independent of the current regressor.

use nalgebra::{DMatrix, DVector};

use crate::closure::{
    derive_model_with, mean_weight_functionals, ClosureOptions, ModelKind, ModelMeta, ModelOrder,
    StateSpaceModel, StateVariable,
};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::numerics::SparseMatrix;
use crate::symbolic::{input_sample, multiply, take_expectation, ExpectationMode, Expression};

/// Second- and fourth-order input moments, computed exactly from the
/// moving-average structure.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrices {
    /// `E[x xᵀ]`, `N × N`.
    pub r_x: DMatrix<f64>,
    /// `E[x x̄ᵀ]`, `N × P`.
    pub r_xbar: DMatrix<f64>,
    /// `E[x̄ x̄ᵀ]`, `P × P`.
    pub r_xbarxbar: DMatrix<f64>,
    /// `E[x xᵀ ⊗ x xᵀ]`, `N² × N²`.
    pub k4: DMatrix<f64>,
}

fn pure_moment(factors: &[Expression], cfg: &SystemConfig) -> Result<f64> {
    let product = factors
        .iter()
        .fold(Expression::constant(1.0), |acc, f| multiply(&acc, f));
    let lc = take_expectation(&product, &cfg.moments, cfg.noise_variance)?;
    debug_assert!(lc.terms.is_empty());
    Ok(lc.constant.eval(0.0))
}

pub fn compute_moment_matrices(cfg: &SystemConfig) -> Result<MomentMatrices> {
    cfg.validate()?;
    let (n, p) = (cfg.n_adaptive, cfg.p_excess);
    let x: Vec<Expression> = (0..n + p).map(|d| input_sample(&cfg.b_coeffs, d)).collect();
    let mut r = DMatrix::zeros(n + p, n + p);
    for i in 0..n + p {
        for j in i..n + p {
            let v = pure_moment(&[x[i].clone(), x[j].clone()], cfg)?;
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    let mut k4 = DMatrix::zeros(n * n, n * n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    // (x xᵀ ⊗ x xᵀ)[(a,c),(b,d)] = x_a x_b x_c x_d.
                    k4[(a * n + c, b * n + d)] =
                        pure_moment(&[x[a].clone(), x[b].clone(), x[c].clone(), x[d].clone()], cfg)?;
                }
            }
        }
    }
    Ok(MomentMatrices {
        r_x: r.view((0, 0), (n, n)).into_owned(),
        r_xbar: r.view((0, n), (n, p)).into_owned(),
        r_xbarxbar: r.view((n, n), (p, p)).into_owned(),
        k4,
    })
}

/// `E[w̃(k+1)] = (I - β R_x) E[w̃(k)] - β R_x̄ w̄★`.
pub fn ia_first_order(cfg: &SystemConfig) -> Result<StateSpaceModel> {
    let mm = compute_moment_matrices(cfg)?;
    let n = cfg.n_adaptive;
    let variables: Vec<StateVariable> = (0..n).map(|i| StateVariable::deviation(&[(i as u16, 1)])).collect();
    let minus_r: Vec<f64> = (0..n * n).map(|k| -mm.r_x[(k / n, k % n)]).collect();
    let w_tail = DVector::from_column_slice(cfg.w_tail());
    let forcing = -(&mm.r_xbar * w_tail);
    let model = StateSpaceModel::from_parts(
        variables,
        [
            SparseMatrix::identity(n),
            SparseMatrix::from_dense(n, n, &minus_r),
            SparseMatrix::zeros(n, n),
        ],
        [vec![0.0; n], forcing.as_slice().to_vec(), vec![0.0; n]],
        cfg.w_modeled().to_vec(),
        ModelMeta {
            n,
            m: cfg.ma_order,
            p: cfg.p_excess,
            order: 1,
            kind: ModelKind::IndependenceAssumption,
        },
    );
    let mut model = model?;
    for out in mean_weight_functionals(cfg, &model)? {
        model.set_output(out)?;
    }
    Ok(model)
}

/// Second-order IA model over `E[w̃_i w̃_j]` (`i ≤ j`) and `E[w̃_i]`, with
/// the mean-weight and `mse` outputs.
///
/// Built by the closure engine with every expectation factorised between
/// weights and input; for white input its transition block coincides with
/// `I - β(R_x ⊗ I + I ⊗ R_x) + β² K4` restricted to symmetric matrices.
pub fn ia_second_order(cfg: &SystemConfig) -> Result<StateSpaceModel> {
    let opts = ClosureOptions {
        mode: ExpectationMode::Independence,
        ..ClosureOptions::default()
    };
    derive_model_with(cfg, ModelOrder::Second, &opts)
}

/// Mean-convergence bound `2 / Tr(R_x)`.
pub fn ia_beta_bound_mean(cfg: &SystemConfig) -> Result<f64> {
    let mm = compute_moment_matrices(cfg)?;
    let tr = mm.r_x.trace();
    if !(tr > 0.0) {
        return Err(Error::InvalidConfig("input has zero energy".into()));
    }
    Ok(2.0 / tr)
}

/// IA steady-state mean weights `w★ + R_x⁻¹ R_x̄ w̄★`.
pub fn ia_mean_steady_state(cfg: &SystemConfig) -> Result<Vec<f64>> {
    let mm = compute_moment_matrices(cfg)?;
    let bias = mm
        .r_x
        .clone()
        .lu()
        .solve(&(&mm.r_xbar * DVector::from_column_slice(cfg.w_tail())))
        .ok_or_else(|| Error::InvalidConfig("singular input autocorrelation".into()))?;
    Ok(cfg
        .w_modeled()
        .iter()
        .zip(bias.iter())
        .map(|(w, b)| w + b)
        .collect())
}

/// Kronecker-form transition `[I, -(R_x ⊗ I + I ⊗ R_x), K4]` of `vec(R_w̃)`,
/// as powers of β.
pub fn kronecker_transition(mm: &MomentMatrices) -> [DMatrix<f64>; 3] {
    let n = mm.r_x.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    [
        DMatrix::identity(n * n, n * n),
        -(mm.r_x.kronecker(&eye) + eye.kronecker(&mm.r_x)),
        mm.k4.clone(),
    ]
}
