//! Polynomial algebra over the lagged driving noise `u(k-j)`, the weight
//! deviations `w̃_i(k)` and the measurement noise `ν(k)`, together with the
//! expectation rules that turn a polynomial into a linear combination of
//! joint moments.
//!
//! Numeric data (MA coefficients, plant tail, moments) is folded into the
//! coefficients at expansion time. The step size is the one symbol kept
//! formal: every monomial records its power of `β`, so a single derivation
//! yields `A(β) = A0 + β A1 + β² A2`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::closure::StateVariable;
use crate::config::{MomentSpec, SystemConfig};
use crate::error::{Error, Result};

/// Factor of a monomial. The derived order (kind, then lag or index) is the
/// canonical factor order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Generator {
    /// `u(k - lag)`.
    Noise(u16),
    /// `w̃_i(k)`.
    Deviation(u16),
    /// `ν(k)`.
    Measurement,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Generator::Noise(0) => f.write_str("u(k)"),
            Generator::Noise(lag) => write!(f, "u(k-{lag})"),
            Generator::Deviation(i) => write!(f, "w{i}(k)"),
            Generator::Measurement => f.write_str("nu(k)"),
        }
    }
}

pub type Factors = SmallVec<[(Generator, u8); 8]>;

/// Polynomial in `β` of degree at most two.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BetaPoly(pub [f64; 3]);

impl BetaPoly {
    pub const ZERO: BetaPoly = BetaPoly([0.0; 3]);

    pub fn constant(c: f64) -> Self {
        BetaPoly([c, 0.0, 0.0])
    }

    pub fn monomial(degree: u8, c: f64) -> Self {
        let mut p = Self::ZERO;
        p.0[degree as usize] = c;
        p
    }

    #[inline]
    pub fn eval(&self, beta: f64) -> f64 {
        self.0[0] + beta * (self.0[1] + beta * self.0[2])
    }

    #[inline]
    pub fn add_term(&mut self, degree: u8, c: f64) {
        self.0[degree as usize] += c;
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn degree(&self) -> Option<usize> {
        (0..3).rev().find(|&d| self.0[d] != 0.0)
    }
}

impl fmt::Display for BetaPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (d, c) in self.0.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            match d {
                0 => write!(f, "{c:?}")?,
                1 => write!(f, "{c:?}*beta")?,
                _ => write!(f, "{c:?}*beta^2")?,
            }
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

/// `coeff · β^beta_degree · ∏ factor^power`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    factors: Factors,
    beta_degree: u8,
    coeff: f64,
}

impl Monomial {
    /// Builds a monomial from arbitrary factors, sorting and merging them.
    pub fn new(coeff: f64, beta_degree: u8, factors: &[(Generator, u8)]) -> Self {
        let mut sorted: Factors = factors.iter().copied().filter(|&(_, p)| p > 0).collect();
        sorted.sort_unstable_by_key(|&(g, _)| g);
        let mut merged = Factors::new();
        for (g, p) in sorted {
            match merged.last_mut() {
                Some((last, q)) if *last == g => *q += p,
                _ => merged.push((g, p)),
            }
        }
        Self {
            factors: merged,
            beta_degree,
            coeff,
        }
    }

    pub fn factors(&self) -> &[(Generator, u8)] {
        &self.factors
    }

    pub fn beta_degree(&self) -> u8 {
        self.beta_degree
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn power_of(&self, g: Generator) -> u8 {
        self.factors
            .iter()
            .find(|(h, _)| *h == g)
            .map_or(0, |&(_, p)| p)
    }

    pub fn deviation_degree(&self) -> u32 {
        self.factors
            .iter()
            .filter(|(g, _)| matches!(g, Generator::Deviation(_)))
            .map(|&(_, p)| p as u32)
            .sum()
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coeff)?;
        match self.beta_degree {
            0 => {}
            1 => f.write_str("*beta")?,
            d => write!(f, "*beta^{d}")?,
        }
        for (g, p) in &self.factors {
            if *p == 1 {
                write!(f, "*{g}")?;
            } else {
                write!(f, "*{g}^{p}")?;
            }
        }
        Ok(())
    }
}

/// Merge two canonical factor lists, adding powers of shared generators.
#[inline]
pub(crate) fn merge_factors(a: &[(Generator, u8)], b: &[(Generator, u8)], out: &mut Factors) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (ga, pa) = a[i];
        let (gb, pb) = b[j];
        match ga.cmp(&gb) {
            std::cmp::Ordering::Less => {
                out.push((ga, pa));
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push((gb, pb));
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((ga, pa + pb));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Sum of monomials in canonical form: sorted by `(β degree, factors)`, like
/// terms merged, exact zeros removed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Expression {
    terms: Vec<Monomial>,
}

impl Expression {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms(vec![Monomial::new(c, 0, &[])])
    }

    pub fn generator(g: Generator) -> Self {
        Self::from_terms(vec![Monomial::new(1.0, 0, &[(g, 1)])])
    }

    /// The formal step size `β`.
    pub fn beta() -> Self {
        Self::from_terms(vec![Monomial::new(1.0, 1, &[])])
    }

    pub fn from_terms(terms: Vec<Monomial>) -> Self {
        let mut acc: FxHashMap<(u8, Factors), f64> = FxHashMap::default();
        for t in terms {
            *acc.entry((t.beta_degree, t.factors)).or_insert(0.0) += t.coeff;
        }
        let mut terms: Vec<Monomial> = acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((beta_degree, factors), coeff)| Monomial {
                factors,
                beta_degree,
                coeff,
            })
            .collect();
        terms.sort_unstable_by(|a, b| {
            (a.beta_degree, &a.factors[..]).cmp(&(b.beta_degree, &b.factors[..]))
        });
        Self { terms }
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| Monomial {
                    coeff: t.coeff * c,
                    ..t.clone()
                })
                .collect(),
        )
    }

    pub fn max_beta_degree(&self) -> u8 {
        self.terms.iter().map(|t| t.beta_degree).max().unwrap_or(0)
    }

    /// Coefficient of the term with exactly these factors and β degree.
    pub fn coefficient(&self, beta_degree: u8, factors: &[(Generator, u8)]) -> f64 {
        let probe = Monomial::new(1.0, beta_degree, factors);
        self.terms
            .iter()
            .find(|t| t.beta_degree == beta_degree && t.factors == probe.factors)
            .map_or(0.0, |t| t.coeff)
    }

    /// Applies the measurement-noise rules: `ν` alone averages to zero and
    /// `ν²` becomes `σ_ν²`. Higher powers are rejected.
    pub fn reduce_measurement_noise(&self, noise_variance: f64) -> Result<Self> {
        let mut out = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            match t.power_of(Generator::Measurement) {
                0 => out.push(t.clone()),
                1 => {}
                2 => {
                    let factors: Factors = t
                        .factors
                        .iter()
                        .copied()
                        .filter(|(g, _)| *g != Generator::Measurement)
                        .collect();
                    out.push(Monomial {
                        factors,
                        beta_degree: t.beta_degree,
                        coeff: t.coeff * noise_variance,
                    });
                }
                p => return Err(Error::NoisePower(p as u32)),
            }
        }
        Ok(Self::from_terms(out))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0\n");
        }
        for t in &self.terms {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Distributes `a · b` and merges like terms; β degrees add.
pub fn multiply(a: &Expression, b: &Expression) -> Expression {
    let mut acc: FxHashMap<(u8, Factors), f64> = FxHashMap::default();
    acc.reserve(a.terms.len() * b.terms.len());
    let mut merged = Factors::new();
    for s in &a.terms {
        for t in &b.terms {
            merge_factors(&s.factors, &t.factors, &mut merged);
            *acc.entry((s.beta_degree + t.beta_degree, merged.clone()))
                .or_insert(0.0) += s.coeff * t.coeff;
        }
    }
    let terms = acc
        .into_iter()
        .map(|((beta_degree, factors), coeff)| Monomial {
            factors,
            beta_degree,
            coeff,
        })
        .collect();
    Expression::from_terms(terms)
}

impl Add for &Expression {
    type Output = Expression;
    fn add(self, rhs: &Expression) -> Expression {
        let mut terms = self.terms.clone();
        terms.extend(rhs.terms.iter().cloned());
        Expression::from_terms(terms)
    }
}

impl Sub for &Expression {
    type Output = Expression;
    fn sub(self, rhs: &Expression) -> Expression {
        self + &rhs.scale(-1.0)
    }
}

impl Mul for &Expression {
    type Output = Expression;
    fn mul(self, rhs: &Expression) -> Expression {
        multiply(self, rhs)
    }
}

impl Neg for &Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        self.scale(-1.0)
    }
}

/// `x(k - delay) = Σ_m b_m u(k - delay - m)`.
pub fn input_sample(b_coeffs: &[f64], delay: usize) -> Expression {
    Expression::from_terms(
        b_coeffs
            .iter()
            .enumerate()
            .map(|(m, &b)| Monomial::new(b, 0, &[(Generator::Noise((delay + m) as u16), 1)]))
            .collect(),
    )
}

/// `x̄ᵀ(k) w̄★ = Σ_p w̄_p★ x(k - N - p)`.
pub fn tail_output(cfg: &SystemConfig) -> Expression {
    let n = cfg.n_adaptive;
    let mut acc = Expression::zero();
    for (p, &w) in cfg.w_tail().iter().enumerate() {
        acc = &acc + &input_sample(&cfg.b_coeffs, n + p).scale(w);
    }
    acc
}

/// `e(k) = xᵀ(k) w̃(k) + x̄ᵀ(k) w̄★ + ν(k)`.
pub fn error_signal(cfg: &SystemConfig) -> Expression {
    let mut acc = tail_output(cfg);
    for i in 0..cfg.n_adaptive {
        let term = &input_sample(&cfg.b_coeffs, i) * &Expression::generator(Generator::Deviation(i as u16));
        acc = &acc + &term;
    }
    &acc + &Expression::generator(Generator::Measurement)
}

/// `w̃_i(k+1)` for every coefficient, written in the generators at time `k`:
///
/// ```text
/// w̃(k+1) = [I - β x xᵀ] w̃(k) - β x x̄ᵀ w̄★ - β x ν(k)
/// ```
///
/// with every input sample expanded through the moving-average model.
pub fn expand_deviation_update(cfg: &SystemConfig) -> Result<Vec<Expression>> {
    cfg.validate()?;
    let error = error_signal(cfg);
    let beta = Expression::beta();
    (0..cfg.n_adaptive)
        .map(|i| {
            let gradient = &(&beta * &input_sample(&cfg.b_coeffs, i)) * &error;
            Ok(&Expression::generator(Generator::Deviation(i as u16)) - &gradient)
        })
        .collect()
}

/// How joint moments of input samples and deviations are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExpectationMode {
    /// Only `u(k)` and `ν(k)` are independent of the deviations at time `k`.
    Exact,
    /// Every input sample is treated as independent of the deviations.
    Independence,
}

/// Constant plus a sum of coefficients times state variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearCombination {
    pub constant: BetaPoly,
    /// Sorted by variable, no zero coefficients.
    pub terms: Vec<(StateVariable, BetaPoly)>,
}

impl LinearCombination {
    pub fn coefficient(&self, var: &StateVariable) -> BetaPoly {
        self.terms
            .iter()
            .find(|(v, _)| v == var)
            .map_or(BetaPoly::ZERO, |(_, c)| *c)
    }
}

impl fmt::Display for LinearCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.constant)?;
        for (v, c) in &self.terms {
            write!(f, " + ({c}) {v}")?;
        }
        Ok(())
    }
}

/// Reduces one canonical monomial. Returns `None` for structural zeros,
/// otherwise the numeric factor pulled out and the remaining joint moment
/// (`None` when the monomial was deviation-free and fully reduced).
#[inline]
pub(crate) fn reduce_factors(
    factors: &[(Generator, u8)],
    moments: &MomentSpec,
    noise_variance: f64,
    mode: ExpectationMode,
) -> Result<Option<(f64, Option<StateVariable>)>> {
    let mut scale = 1.0;
    let mut var = StateVariable::default();
    for &(g, p) in factors {
        match g {
            Generator::Noise(lag) => {
                let independent = lag == 0 || mode == ExpectationMode::Independence;
                if independent {
                    if p % 2 == 1 {
                        return Ok(None);
                    }
                    scale *= moments.gamma_even(p as usize / 2)?;
                } else {
                    var.u_part.push((lag, p));
                }
            }
            Generator::Deviation(i) => var.w_part.push((i, p)),
            Generator::Measurement => match p {
                1 => return Ok(None),
                2 => scale *= noise_variance,
                _ => return Err(Error::NoisePower(p as u32)),
            },
        }
    }
    if var.w_part.is_empty() {
        // distinct lags of a white sequence are independent
        for &(_, p) in &var.u_part {
            if p % 2 == 1 {
                return Ok(None);
            }
            scale *= moments.gamma_even(p as usize / 2)?;
        }
        return Ok(Some((scale, None)));
    }
    Ok(Some((scale, Some(var))))
}

/// Streams `E[prefix · e]` term by term into `sink(β degree, coefficient,
/// variable)`, without materialising the product.
pub(crate) fn expect_product(
    prefix: &[(Generator, u8)],
    prefix_coeff: f64,
    e: &Expression,
    moments: &MomentSpec,
    noise_variance: f64,
    mode: ExpectationMode,
    mut sink: impl FnMut(u8, f64, Option<StateVariable>),
) -> Result<()> {
    let mut merged = Factors::new();
    for t in &e.terms {
        merge_factors(prefix, &t.factors, &mut merged);
        if let Some((scale, var)) = reduce_factors(&merged, moments, noise_variance, mode)? {
            sink(t.beta_degree, prefix_coeff * t.coeff * scale, var);
        }
    }
    Ok(())
}

/// `E[e]` under the noise assumption and the white, even-symmetric driving
/// noise model.
pub fn take_expectation(
    e: &Expression,
    moments: &MomentSpec,
    noise_variance: f64,
) -> Result<LinearCombination> {
    take_expectation_with(e, moments, noise_variance, ExpectationMode::Exact)
}

pub fn take_expectation_with(
    e: &Expression,
    moments: &MomentSpec,
    noise_variance: f64,
    mode: ExpectationMode,
) -> Result<LinearCombination> {
    let mut constant = BetaPoly::ZERO;
    let mut acc: FxHashMap<StateVariable, BetaPoly> = FxHashMap::default();
    expect_product(&[], 1.0, e, moments, noise_variance, mode, |d, c, var| match var {
        None => constant.add_term(d, c),
        Some(v) => acc.entry(v).or_default().add_term(d, c),
    })?;
    let mut terms: Vec<_> = acc.into_iter().filter(|(_, c)| !c.is_zero()).collect();
    terms.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    Ok(LinearCombination { constant, terms })
}
