//! Moment closure: derives a finite, closed set of linear recursions for the
//! joint moments `E[∏ u^p(k-j) ∏ w̃_i^q(k)]` of the deficient-length LMS.
//!
//! Starting from the moments of interest, every state variable is pushed one
//! step forward through the deviation update, multiplied out, and reduced
//! with the expectation rules. Joint moments that have not been seen yet are
//! queued. The moving-average input has finite memory, so the lags stay
//! bounded and the worklist empties.

use std::fmt;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::numerics::SparseMatrix;
use crate::symbolic::{
    error_signal, expand_deviation_update, expect_product, multiply, take_expectation_with,
    BetaPoly, ExpectationMode, Expression, Factors, Generator,
};

/// Default limit on the number of state variables of one closure.
pub const DEFAULT_CAP: usize = 2_000_000;

/// Canonical joint moment `E[∏_j u^{p_j}(k-j) ∏_i w̃_i^{q_i}(k)]`.
///
/// Lags are strictly positive; `u(k)` is always reduced away because it is
/// independent of `w̃(k)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateVariable {
    /// `(lag, power)`, sorted by lag.
    pub u_part: SmallVec<[(u16, u8); 6]>,
    /// `(coefficient index, power)`, sorted by index.
    pub w_part: SmallVec<[(u16, u8); 2]>,
}

impl StateVariable {
    pub fn new(u_part: &[(u16, u8)], w_part: &[(u16, u8)]) -> Self {
        let mut u: SmallVec<[(u16, u8); 6]> = u_part.iter().copied().filter(|p| p.1 > 0).collect();
        let mut w: SmallVec<[(u16, u8); 2]> = w_part.iter().copied().filter(|p| p.1 > 0).collect();
        u.sort_unstable();
        w.sort_unstable();
        Self { u_part: u, w_part: w }
    }

    /// `E[∏ w̃_i^q(k)]` with no input factors.
    pub fn deviation(w_part: &[(u16, u8)]) -> Self {
        Self::new(&[], w_part)
    }

    pub fn deviation_degree(&self) -> u32 {
        self.w_part.iter().map(|&(_, q)| q as u32).sum()
    }

    pub fn max_lag(&self) -> u16 {
        self.u_part.last().map_or(0, |&(lag, _)| lag)
    }

    /// The input factors rewritten at time `k+1`: `u(k+1-j) = u(k-(j-1))`.
    fn advanced_input_factors(&self) -> Factors {
        self.u_part
            .iter()
            .map(|&(lag, p)| (Generator::Noise(lag - 1), p))
            .collect()
    }
}

impl fmt::Display for StateVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("E[")?;
        let mut sep = "";
        for &(lag, p) in &self.u_part {
            f.write_str(sep)?;
            if p == 1 {
                write!(f, "u(k-{lag})")?;
            } else {
                write!(f, "u^{p}(k-{lag})")?;
            }
            sep = " ";
        }
        for &(i, q) in &self.w_part {
            f.write_str(sep)?;
            if q == 1 {
                write!(f, "w{i}(k)")?;
            } else {
                write!(f, "w{i}^{q}(k)")?;
            }
            sep = " ";
        }
        f.write_str("]")
    }
}

/// First-order (mean) or second-order (mean-square) closure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelOrder {
    First,
    Second,
}

impl ModelOrder {
    pub fn from_int(order: usize) -> Result<Self> {
        match order {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            o => Err(Error::InvalidConfig(format!("model order must be 1 or 2, got {o}"))),
        }
    }

    pub fn as_int(self) -> usize {
        match self {
            Self::First => 1,
            Self::Second => 2,
        }
    }
}

/// Which expectation rules produced a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Exact,
    IndependenceAssumption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub order: usize,
    pub kind: ModelKind,
}

/// Named linear functional `row · y + constant(β)` of the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Output {
    pub name: String,
    /// `(state index, coefficient)`, sorted by index.
    pub row: Vec<(usize, f64)>,
    pub constant: BetaPoly,
}

impl Output {
    pub fn evaluate(&self, state: &[f64], beta: f64) -> f64 {
        self.constant.eval(beta) + self.row.iter().map(|&(i, c)| c * state[i]).sum::<f64>()
    }
}

/// `y(k+1) = A(β) y(k) + b(β)` with `A(β) = A0 + β A1 + β² A2` and
/// `b(β) = f0 + β f1 + β² f2`.
#[derive(Clone, Debug)]
pub struct StateSpaceModel {
    pub variables: Vec<StateVariable>,
    pub transition: [SparseMatrix; 3],
    pub forcing: [Vec<f64>; 3],
    pub outputs: Vec<Output>,
    /// State at `k = 0`: `w(0) = 0` and a stationary input history.
    pub initial_state: Vec<f64>,
    pub meta: ModelMeta,
    index: FxHashMap<StateVariable, usize>,
}

impl StateSpaceModel {
    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn index_of(&self, var: &StateVariable) -> Option<usize> {
        self.index.get(var).copied()
    }

    pub fn output(&self, name: &str) -> Option<&Output> {
        self.outputs.iter().find(|o| o.name == name)
    }

    pub fn output_names(&self) -> Vec<String> {
        self.outputs.iter().map(|o| o.name.clone()).collect()
    }

    /// `b(β)`.
    pub fn forcing_at(&self, beta: f64) -> Vec<f64> {
        (0..self.dim())
            .map(|i| BetaPoly([self.forcing[0][i], self.forcing[1][i], self.forcing[2][i]]).eval(beta))
            .collect()
    }

    /// Registers (or replaces) an output functional.
    pub fn set_output(&mut self, output: Output) -> Result<()> {
        if let Some(&(i, _)) = output.row.iter().find(|(i, _)| *i >= self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: i + 1,
            });
        }
        match self.outputs.iter_mut().find(|o| o.name == output.name) {
            Some(slot) => *slot = output,
            None => self.outputs.push(output),
        }
        Ok(())
    }

    /// Assembles a model from explicit parts. Rows of the transition
    /// matrices and forcing vectors follow the order of `variables`.
    pub fn from_parts(
        variables: Vec<StateVariable>,
        transition: [SparseMatrix; 3],
        forcing: [Vec<f64>; 3],
        initial_state: Vec<f64>,
        meta: ModelMeta,
    ) -> Result<Self> {
        let dim = variables.len();
        for a in &transition {
            if a.rows() != dim || a.cols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.rows().max(a.cols()),
                });
            }
        }
        for v in forcing.iter().chain(std::iter::once(&initial_state)) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        let index = variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        Ok(Self {
            variables,
            transition,
            forcing,
            outputs: Vec::new(),
            initial_state,
            meta,
            index,
        })
    }

    pub fn export(&self) -> ModelExport {
        ModelExport {
            meta: self.meta.clone(),
            variables: self.variables.iter().map(ToString::to_string).collect(),
            transition: self
                .transition
                .iter()
                .map(|a| a.triplets().to_vec())
                .collect(),
            forcing: self.forcing.to_vec(),
            initial_state: self.initial_state.clone(),
            outputs: self.outputs.clone(),
        }
    }
}

/// Self-describing, deterministic serialisation of a [`StateSpaceModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub meta: ModelMeta,
    pub variables: Vec<String>,
    /// Triplets `(row, col, value)` of `A0`, `A1`, `A2`.
    pub transition: Vec<Vec<(usize, usize, f64)>>,
    /// `f0`, `f1`, `f2`.
    pub forcing: Vec<Vec<f64>>,
    pub initial_state: Vec<f64>,
    pub outputs: Vec<Output>,
}

#[derive(Clone, Copy, Debug)]
pub struct ClosureOptions {
    pub cap: usize,
    pub mode: ExpectationMode,
    /// Seed second-order closures with every moment of the MSE functional.
    pub seed_mse: bool,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            mode: ExpectationMode::Exact,
            seed_mse: true,
        }
    }
}

/// Per-deviation-monomial right-hand sides, with measurement noise reduced.
struct Propagators {
    first: Vec<Expression>,
    /// `second[i][j - i]` is `w̃_i(k+1) w̃_j(k+1)` for `i <= j`.
    second: Vec<Vec<Expression>>,
}

impl Propagators {
    fn new(cfg: &SystemConfig, order: ModelOrder) -> Result<Self> {
        let raw = expand_deviation_update(cfg)?;
        let first = raw
            .iter()
            .map(|e| e.reduce_measurement_noise(cfg.noise_variance))
            .collect::<Result<Vec<_>>>()?;
        let mut second = Vec::new();
        if order == ModelOrder::Second {
            for i in 0..raw.len() {
                let row = (i..raw.len())
                    .map(|j| multiply(&raw[i], &raw[j]).reduce_measurement_noise(cfg.noise_variance))
                    .collect::<Result<Vec<_>>>()?;
                second.push(row);
            }
        }
        Ok(Self { first, second })
    }

    fn for_variable(&self, var: &StateVariable) -> &Expression {
        match var.w_part.as_slice() {
            [(i, 1)] => &self.first[*i as usize],
            [(i, 2)] => &self.second[*i as usize][0],
            [(i, 1), (j, 1)] => &self.second[*i as usize][(*j - *i) as usize],
            other => unreachable!("deviation part {other:?} outside the closure"),
        }
    }
}

struct Closure {
    variables: Vec<StateVariable>,
    index: FxHashMap<StateVariable, usize>,
    triplets: [Vec<(usize, usize, f64)>; 3],
    forcing: [Vec<f64>; 3],
}

impl Closure {
    fn intern(&mut self, var: StateVariable, cap: usize) -> Result<usize> {
        if let Some(&i) = self.index.get(&var) {
            return Ok(i);
        }
        if self.variables.len() >= cap {
            return Err(Error::CapExceeded {
                cap,
                reached: self.variables.len() + 1,
            });
        }
        let i = self.variables.len();
        self.index.insert(var.clone(), i);
        self.variables.push(var);
        Ok(i)
    }
}

fn seed_variables(
    cfg: &SystemConfig,
    order: ModelOrder,
    opts: &ClosureOptions,
) -> Result<Vec<StateVariable>> {
    let n = cfg.n_adaptive as u16;
    let mut seeds = Vec::new();
    if order == ModelOrder::Second {
        for i in 0..n {
            for j in i..n {
                seeds.push(if i == j {
                    StateVariable::deviation(&[(i, 2)])
                } else {
                    StateVariable::deviation(&[(i, 1), (j, 1)])
                });
            }
        }
        if opts.seed_mse {
            let e = error_signal(cfg);
            let mse = take_expectation_with(&multiply(&e, &e), &cfg.moments, cfg.noise_variance, opts.mode)?;
            seeds.extend(mse.terms.into_iter().map(|(v, _)| v));
        }
    }
    seeds.extend((0..n).map(|i| StateVariable::deviation(&[(i, 1)])));
    Ok(seeds)
}

fn run_closure(
    cfg: &SystemConfig,
    order: ModelOrder,
    opts: &ClosureOptions,
    store: bool,
) -> Result<Closure> {
    cfg.validate()?;
    let props = Propagators::new(cfg, order)?;
    let mut closure = Closure {
        variables: Vec::new(),
        index: FxHashMap::default(),
        triplets: Default::default(),
        forcing: Default::default(),
    };
    for seed in seed_variables(cfg, order, opts)? {
        closure.intern(seed, opts.cap)?;
    }

    let mut row: FxHashMap<StateVariable, BetaPoly> = FxHashMap::default();
    let mut entries: Vec<(StateVariable, BetaPoly)> = Vec::new();
    let mut next = 0;
    while next < closure.variables.len() {
        let var = closure.variables[next].clone();
        let prefix = var.advanced_input_factors();
        let rhs = props.for_variable(&var);
        let mut constant = BetaPoly::ZERO;
        row.clear();
        expect_product(
            &prefix,
            1.0,
            rhs,
            &cfg.moments,
            cfg.noise_variance,
            opts.mode,
            |degree, c, v| match v {
                None => constant.add_term(degree, c),
                Some(v) => row.entry(v).or_default().add_term(degree, c),
            },
        )?;
        entries.clear();
        entries.extend(row.drain().filter(|(_, c)| !c.is_zero()));
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        for (v, c) in entries.drain(..) {
            let col = closure.intern(v, opts.cap)?;
            if store {
                for d in 0..3 {
                    if c.0[d] != 0.0 {
                        closure.triplets[d].push((next, col, c.0[d]));
                    }
                }
            }
        }
        if store {
            for d in 0..3 {
                closure.forcing[d].push(constant.0[d]);
            }
        }
        next += 1;
    }
    Ok(closure)
}

/// Value of every variable at `k = 0`, where `w̃(0) = w★` and the input
/// history is stationary and independent of the initial weights.
pub fn initial_values(cfg: &SystemConfig, variables: &[StateVariable]) -> Result<Vec<f64>> {
    variables
        .iter()
        .map(|v| {
            let mut value = 1.0;
            for &(_, p) in &v.u_part {
                if p % 2 == 1 {
                    return Ok(0.0);
                }
                value *= cfg.moments.gamma_even(p as usize / 2)?;
            }
            for &(i, q) in &v.w_part {
                value *= cfg.w_star[i as usize].powi(q as i32);
            }
            Ok(value)
        })
        .collect()
}

/// Derives the closed exact-expectation model of the given order and
/// registers the mean-weight outputs (and the MSE for second order).
pub fn derive_model(cfg: &SystemConfig, order: ModelOrder) -> Result<StateSpaceModel> {
    derive_model_with(cfg, order, &ClosureOptions::default())
}

pub fn derive_model_with(
    cfg: &SystemConfig,
    order: ModelOrder,
    opts: &ClosureOptions,
) -> Result<StateSpaceModel> {
    let closure = run_closure(cfg, order, opts, true)?;
    let dim = closure.variables.len();
    let [t0, t1, t2] = closure.triplets;
    let transition = [
        SparseMatrix::from_triplets(dim, dim, t0),
        SparseMatrix::from_triplets(dim, dim, t1),
        SparseMatrix::from_triplets(dim, dim, t2),
    ];
    let initial_state = initial_values(cfg, &closure.variables)?;
    let meta = ModelMeta {
        n: cfg.n_adaptive,
        m: cfg.ma_order,
        p: cfg.p_excess,
        order: order.as_int(),
        kind: match opts.mode {
            ExpectationMode::Exact => ModelKind::Exact,
            ExpectationMode::Independence => ModelKind::IndependenceAssumption,
        },
    };
    let mut model = StateSpaceModel {
        variables: closure.variables,
        transition,
        forcing: closure.forcing,
        outputs: Vec::new(),
        initial_state,
        meta,
        index: closure.index,
    };
    for out in mean_weight_functionals(cfg, &model)? {
        model.set_output(out)?;
    }
    if order == ModelOrder::Second && opts.seed_mse {
        let mse = mse_functional(cfg, &model)?;
        model.set_output(mse)?;
    }
    Ok(model)
}

/// Number of state variables of the closed system, without storing it.
pub fn count_equations(n: usize, m: usize, p: usize, order: ModelOrder, cap: usize) -> Result<usize> {
    let cfg = counting_config(n, m, p, order)?;
    let opts = ClosureOptions {
        cap,
        ..ClosureOptions::default()
    };
    Ok(run_closure(&cfg, order, &opts, false)?.variables.len())
}

/// Configuration with generic (non-cancelling) coefficients, used when only
/// the structure of the closure matters.
fn counting_config(n: usize, m: usize, p: usize, order: ModelOrder) -> Result<SystemConfig> {
    use crate::config::{Distribution, MomentSpec};
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("N and M must be positive".into()));
    }
    let b_coeffs = (0..m).map(|i| 1.0 / (1.0 + 0.37 * i as f64)).collect();
    let w_star = (0..n + p).map(|i| 1.0 + 0.13 * i as f64).collect();
    let cfg = SystemConfig {
        n_adaptive: n,
        p_excess: p,
        ma_order: m,
        b_coeffs,
        w_star,
        beta: 0.01,
        noise_variance: 0.01,
        moments: MomentSpec::preset(Distribution::GaussianUnit, 2)?,
    };
    cfg.with_moments_for_order(order.as_int())
}

/// `E[e²(k)]` as a functional of the state, where
/// `e(k) = xᵀ(k) w̃(k) + x̄ᵀ(k) w̄★ + ν(k)`.
pub fn mse_functional(cfg: &SystemConfig, model: &StateSpaceModel) -> Result<Output> {
    let mode = match model.meta.kind {
        ModelKind::Exact => ExpectationMode::Exact,
        ModelKind::IndependenceAssumption => ExpectationMode::Independence,
    };
    let e = error_signal(cfg);
    let lc = take_expectation_with(&multiply(&e, &e), &cfg.moments, cfg.noise_variance, mode)?;
    let mut row = Vec::with_capacity(lc.terms.len());
    for (var, c) in &lc.terms {
        let idx = model
            .index_of(var)
            .ok_or_else(|| Error::UnseededVariable(var.to_string()))?;
        row.push((idx, c.eval(0.0)));
    }
    row.sort_unstable_by_key(|&(i, _)| i);
    Ok(Output {
        name: "mse".into(),
        row,
        constant: lc.constant,
    })
}

/// `E[w_i(k)] = w_i★ - E[w̃_i(k)]` for every adaptive coefficient.
pub fn mean_weight_functionals(cfg: &SystemConfig, model: &StateSpaceModel) -> Result<Vec<Output>> {
    (0..cfg.n_adaptive)
        .map(|i| {
            let var = StateVariable::deviation(&[(i as u16, 1)]);
            let idx = model
                .index_of(&var)
                .ok_or_else(|| Error::UnseededVariable(var.to_string()))?;
            Ok(Output {
                name: format!("mean_w{i}"),
                row: vec![(idx, -1.0)],
                constant: BetaPoly::constant(cfg.w_star[i]),
            })
        })
        .collect()
}
