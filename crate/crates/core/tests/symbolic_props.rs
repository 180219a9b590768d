mod common;

use exact_lms::config::{moments_for, Distribution};
use exact_lms::symbolic::{multiply, take_expectation, Expression, Generator, Monomial};
use proptest::prelude::*;

fn generator() -> impl Strategy<Value = Generator> {
    prop_oneof![
        (0u16..4).prop_map(Generator::Noise),
        (0u16..3).prop_map(Generator::Deviation),
        Just(Generator::Measurement),
    ]
}

/// Integer coefficients keep every sum and product exact.
fn monomial() -> impl Strategy<Value = Monomial> {
    (
        -4i32..=4,
        0u8..2,
        prop::collection::vec((generator(), 1u8..3), 0..4),
    )
        .prop_map(|(c, d, f)| Monomial::new(if c == 0 { 1.0 } else { c as f64 }, d, &f))
}

fn expression() -> impl Strategy<Value = Expression> {
    prop::collection::vec(monomial(), 0..5).prop_map(Expression::from_terms)
}

fn deviation_free() -> impl Strategy<Value = Expression> {
    noise_polynomial(1)
}

/// Every power a multiple of `step`.
fn noise_polynomial(step: u8) -> impl Strategy<Value = Expression> {
    prop::collection::vec(
        (-4i32..=4, prop::collection::btree_map(0u16..4, 1u8..3, 0..3)),
        1..4,
    )
    .prop_map(move |terms| {
        Expression::from_terms(
            terms
                .into_iter()
                .map(|(c, f)| {
                    let f: Vec<_> = f.into_iter().map(|(l, p)| (Generator::Noise(l), p * step)).collect();
                    Monomial::new(c as f64, 0, &f)
                })
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn addition_commutes_and_associates(a in expression(), b in expression(), c in expression()) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
        prop_assert!((&a - &a).is_empty());
        prop_assert_eq!(&a + &Expression::zero(), a.clone());
    }

    #[test]
    fn multiplication_is_a_commutative_ring(a in expression(), b in expression(), c in expression()) {
        prop_assert_eq!(multiply(&a, &b), multiply(&b, &a));
        prop_assert_eq!(multiply(&multiply(&a, &b), &c), multiply(&a, &multiply(&b, &c)));
        prop_assert_eq!(multiply(&a, &(&b + &c)), &multiply(&a, &b) + &multiply(&a, &c));
        prop_assert_eq!(multiply(&a, &Expression::constant(1.0)), a.clone());
        prop_assert!(multiply(&a, &Expression::zero()).is_empty());
    }

    #[test]
    fn canonical_form_is_order_independent(mut terms in prop::collection::vec(monomial(), 0..6)) {
        let forward = Expression::from_terms(terms.clone());
        terms.reverse();
        prop_assert_eq!(forward, Expression::from_terms(terms));
    }

    #[test]
    fn products_agree_with_pointwise_evaluation(
        a in expression(),
        b in expression(),
        values in prop::collection::vec(-2i32..=2, 8),
        beta in -2i32..=2,
    ) {
        let value = |g: Generator| match g {
            Generator::Noise(l) => values[l as usize] as f64,
            Generator::Deviation(i) => values[4 + i as usize] as f64,
            Generator::Measurement => values[7] as f64,
        };
        let beta = beta as f64;
        let lhs = common::eval(&multiply(&a, &b), beta, value);
        let rhs = common::eval(&a, beta, value) * common::eval(&b, beta, value);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn expectation_is_linear(a in expression(), b in expression(), s in -3i32..=3) {
        // ν(k) enters the update linearly, so only powers up to two are reducible
        let reducible = |e: &Expression| e.terms().iter().all(|t| t.power_of(Generator::Measurement) <= 2);
        prop_assume!(reducible(&a) && reducible(&b));
        let m = moments_for(Distribution::LaplacianUnit, 16).unwrap();
        let ea = take_expectation(&a, &m, 0.25).unwrap();
        let eb = take_expectation(&b, &m, 0.25).unwrap();
        let lhs = take_expectation(&(&a + &b.scale(s as f64)), &m, 0.25).unwrap();
        for d in 0..3 {
            prop_assert_eq!(lhs.constant.0[d], ea.constant.0[d] + s as f64 * eb.constant.0[d]);
        }
        for (v, _) in lhs.terms.iter().chain(&ea.terms).chain(&eb.terms) {
            for d in 0..3 {
                let want = ea.coefficient(v).0[d] + s as f64 * eb.coefficient(v).0[d];
                prop_assert_eq!(lhs.coefficient(v).0[d], want);
            }
        }
        prop_assert_eq!(m.odd_queries(), 0);
    }

    #[test]
    fn odd_powers_vanish(e in noise_polynomial(2), lag in 0u16..4) {
        let m = moments_for(Distribution::GaussianUnit, 16).unwrap();
        let odd = multiply(&e, &Expression::generator(Generator::Noise(lag)));
        let all_odd_somewhere = odd.terms().iter().all(|t| t.factors().iter().any(|&(_, p)| p % 2 == 1));
        prop_assert!(all_odd_somewhere);
        let lc = take_expectation(&odd, &m, 1.0).unwrap();
        prop_assert!(lc.constant.is_zero());
        prop_assert!(lc.terms.is_empty());
        prop_assert_eq!(m.odd_queries(), 0);
    }

    #[test]
    fn deviation_free_expectation_is_a_constant(e in deviation_free()) {
        let m = moments_for(Distribution::GaussianUnit, 16).unwrap();
        let lc = take_expectation(&e, &m, 1.0).unwrap();
        prop_assert!(lc.terms.is_empty());
        // Gaussian moments factor per lag: E[u^p] = (p-1)!! for even p
        let want: f64 = e
            .terms()
            .iter()
            .map(|t| {
                t.coeff()
                    * t.factors()
                        .iter()
                        .map(|&(_, p)| if p % 2 == 1 { 0.0 } else { (1..p).step_by(2).product::<u8>() as f64 })
                        .product::<f64>()
            })
            .sum();
        prop_assert_eq!(lc.constant.eval(0.0), want);
    }
}
