//! Grade and permission laws, checked against a set-based model: a grade
//! `lo..hi` stands for the naturals it contains, and every operation is
//! recomputed by enumerating them.

use gradebor_core::grade::{Grade, GradeValue, Permission, Semiring};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

const CASES: u32 = 1000;

fn bounds(g: &Grade) -> (u64, u64) {
    match g.value() {
        GradeValue::Nat(n) => (n, n),
        GradeValue::Interval(lo, hi) => (lo, hi),
    }
}

/// Hull of `{f(x, y) | x in a, y in b}` by enumeration.
fn model_op(a: (u64, u64), b: (u64, u64), f: impl Fn(u64, u64) -> u64) -> (u64, u64) {
    let mut out = (u64::MAX, 0);
    for x in a.0..=a.1 {
        for y in b.0..=b.1 {
            let v = f(x, y);
            out = (out.0.min(v), out.1.max(v));
        }
    }
    out
}

fn model_leq(s: Semiring, a: (u64, u64), b: (u64, u64)) -> bool {
    match s {
        Semiring::NatDiscrete => a == b,
        Semiring::NatOrdered => a.0 <= b.0,
        // inclusion of the denoted sets
        Semiring::Interval => (a.0..=a.1).all(|x| b.0 <= x && x <= b.1),
    }
}

fn grade(s: Semiring) -> impl Strategy<Value = Grade> {
    (0u64..8, 0u64..4).prop_map(move |(lo, w)| match s {
        Semiring::Interval => s.interval(lo, lo + w).unwrap(),
        _ => s.nat(lo),
    })
}

fn semiring() -> impl Strategy<Value = Semiring> {
    prop::sample::select(Semiring::ALL.to_vec())
}

fn triple() -> impl Strategy<Value = (Semiring, Grade, Grade, Grade)> {
    semiring().prop_flat_map(|s| (Just(s), grade(s), grade(s), grade(s)))
}

fn fraction() -> impl Strategy<Value = Permission> {
    (1i64..=1000).prop_flat_map(|d| (1i64..=d).prop_map(move |n| Permission::ratio(n, d).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn operations_match_the_model((s, a, b, _) in triple()) {
        prop_assert_eq!(bounds(&a.plus(&b).unwrap()), model_op(bounds(&a), bounds(&b), |x, y| x + y));
        prop_assert_eq!(bounds(&a.times(&b).unwrap()), model_op(bounds(&a), bounds(&b), |x, y| x * y));
        prop_assert_eq!(a.leq(&b).unwrap(), model_leq(s, bounds(&a), bounds(&b)));
    }

    #[test]
    fn semiring_axioms((s, a, b, c) in triple()) {
        let (zero, one) = (s.zero(), s.one());
        prop_assert_eq!(a.plus(&b).unwrap().plus(&c).unwrap(), a.plus(&b.plus(&c).unwrap()).unwrap());
        prop_assert_eq!(a.plus(&b).unwrap(), b.plus(&a).unwrap());
        prop_assert_eq!(a.plus(&zero).unwrap(), a);
        prop_assert_eq!(a.times(&b).unwrap().times(&c).unwrap(), a.times(&b.times(&c).unwrap()).unwrap());
        prop_assert_eq!(a.times(&one).unwrap(), a);
        prop_assert_eq!(one.times(&a).unwrap(), a);
        prop_assert_eq!(a.times(&zero).unwrap(), zero);
        prop_assert_eq!(zero.times(&a).unwrap(), zero);
        let bc = b.plus(&c).unwrap();
        prop_assert_eq!(a.times(&bc).unwrap(), a.times(&b).unwrap().plus(&a.times(&c).unwrap()).unwrap());
        prop_assert_eq!(bc.times(&a).unwrap(), b.times(&a).unwrap().plus(&c.times(&a).unwrap()).unwrap());
    }

    #[test]
    fn order_is_a_monotone_preorder((_, a, b, c) in triple()) {
        prop_assert!(a.leq(&a).unwrap());
        if a.leq(&b).unwrap() && b.leq(&c).unwrap() {
            prop_assert!(a.leq(&c).unwrap());
        }
        if a.leq(&b).unwrap() {
            prop_assert!(a.plus(&c).unwrap().leq(&b.plus(&c).unwrap()).unwrap());
            prop_assert!(a.times(&c).unwrap().leq(&b.times(&c).unwrap()).unwrap());
            prop_assert!(c.times(&a).unwrap().leq(&c.times(&b).unwrap()).unwrap());
        }
    }

    /// `residual` decides `∃r'. used + r' ⊑ r`; the witness search is
    /// exhaustive over grades up to the bound of `r`.
    #[test]
    fn residual_matches_witness_search((s, r, used, _) in triple()) {
        let (_, r_hi) = bounds(&r);
        let mut witnesses = Vec::new();
        for lo in 0..=r_hi {
            for hi in lo..=r_hi {
                let w = match s {
                    Semiring::Interval => s.interval(lo, hi).unwrap(),
                    _ if lo == hi => s.nat(lo),
                    _ => continue,
                };
                if used.plus(&w).unwrap().leq(&r).unwrap() {
                    witnesses.push(w);
                }
            }
        }
        match r.residual(&used).unwrap() {
            Some(rest) => {
                prop_assert!(witnesses.contains(&rest));
                // no witness allows more further use
                prop_assert!(witnesses.iter().all(|w| bounds(w).1 <= bounds(&rest).1));
            }
            None => prop_assert!(witnesses.is_empty()),
        }
    }

    #[test]
    fn halves_add_back(f in fraction()) {
        let h = f.half().unwrap();
        prop_assert_eq!(h.plus(&h).unwrap(), f.clone());
        let q = f.fraction().unwrap() / BigRational::from_integer(BigInt::from(2));
        prop_assert_eq!(h.fraction().unwrap(), &q);
    }

    #[test]
    fn permission_sums_are_exact(a in fraction(), b in fraction()) {
        let sum = a.fraction().unwrap() + b.fraction().unwrap();
        match a.plus(&b) {
            Ok(p) => prop_assert_eq!(p.fraction().unwrap(), &sum),
            Err(_) => prop_assert!(sum > BigRational::from_integer(BigInt::from(1))),
        }
    }
}

#[test]
fn star_neither_splits_nor_adds() {
    assert!(Permission::Star.half().is_err());
    assert!(Permission::Star.plus(&Permission::one()).is_err());
    assert!(Permission::one().plus(&Permission::Star).is_err());
}

#[test]
fn instances_do_not_mix() {
    assert!(Semiring::NatOrdered.one().plus(&Semiring::NatDiscrete.one()).is_err());
    assert!(Semiring::NatOrdered.interval(0, 1).is_err());
    assert!(Semiring::Interval.interval(2, 1).is_err());
}
