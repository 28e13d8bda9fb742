//! Heap compatibility against a brute-force reading of its rules: every
//! binding's remainder `r'` is searched for explicitly, and the demands a
//! stored value adds are known from how the value was built.

use std::collections::BTreeMap;

use gradebor_core::ast::{Term, Type};
use gradebor_core::grade::{Grade, GradeValue, Semiring};
use gradebor_core::interpreter::{Binding, Heap};
use gradebor_core::metatheory::heap_compat;
use gradebor_core::typechecker::{Entry, TypingContext};
use proptest::prelude::*;

/// One heap entry `x_i ↦_grade v` where `v = λu. x_j (x_k (... u))`,
/// calling the earlier entries listed in `calls`.
#[derive(Debug, Clone)]
struct HeapEntry {
    grade: (u64, u64),
    used: (u64, u64),
    calls: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Case {
    semiring: Semiring,
    entries: Vec<HeapEntry>,
    demands: Vec<(u64, u64)>,
}

fn fun_ty() -> Type {
    Type::fun(Type::Unit, Type::Unit)
}

fn name(i: usize) -> String {
    format!("x{i}")
}

fn mk(s: Semiring, (lo, hi): (u64, u64)) -> Grade {
    match s {
        Semiring::Interval => s.interval(lo, hi).unwrap(),
        _ => s.nat(lo),
    }
}

fn bounds(g: &Grade) -> (u64, u64) {
    match g.value() {
        GradeValue::Nat(n) => (n, n),
        GradeValue::Interval(lo, hi) => (lo, hi),
    }
}

fn value(calls: &[usize]) -> Term {
    let body = calls.iter().rev().fold(Term::var("u"), |acc, j| Term::app(Term::var(name(*j)), acc));
    Term::abs_ann("u", Type::Unit, body)
}

fn build(c: &Case) -> (Heap, TypingContext) {
    let s = c.semiring;
    let mut heap = Heap::new(s);
    for (i, e) in c.entries.iter().enumerate() {
        heap.push(Binding::Var {
            name: name(i),
            grade: mk(s, e.grade),
            used: mk(s, e.used),
            value: value(&e.calls),
            ty: Some(fun_ty()),
        });
    }
    let mut ctx = TypingContext::new(s);
    for (i, d) in c.demands.iter().enumerate() {
        ctx.push(Entry::Graded(name(i), fun_ty(), Some(mk(s, *d))));
    }
    (heap, ctx)
}

/// Every grade whose bounds lie within `0..=limit`.
fn all_grades(s: Semiring, limit: u64) -> Vec<Grade> {
    let mut out = Vec::new();
    for lo in 0..=limit {
        match s {
            Semiring::Interval => out.extend((lo..=limit).map(|hi| s.interval(lo, hi).unwrap())),
            _ => out.push(s.nat(lo)),
        }
    }
    out
}

fn oracle(c: &Case) -> bool {
    let s = c.semiring;
    let mut need: BTreeMap<usize, Grade> = c.demands.iter().enumerate().map(|(i, d)| (i, mk(s, *d))).collect();
    for (i, e) in c.entries.iter().enumerate().rev() {
        let demand = need.remove(&i).unwrap_or_else(|| s.zero());
        let r = mk(s, e.grade);
        let taken = mk(s, e.used).plus(&demand).unwrap();
        let fits = all_grades(s, e.grade.1).iter().any(|rest| taken.plus(rest).unwrap().leq(&r).unwrap());
        if !fits {
            return false;
        }
        // the value calls each listed entry once per occurrence
        for j in &e.calls {
            let slot = need.entry(*j).or_insert_with(|| s.zero());
            *slot = slot.plus(&demand).unwrap();
        }
    }
    need.values().all(|g| bounds(g) == (0, 0))
}

fn case() -> impl Strategy<Value = Case> {
    let semiring = prop::sample::select(Semiring::ALL.to_vec());
    (semiring, 1usize..=4).prop_flat_map(|(s, n)| {
        let grade = move |lo: u64, w: u64| {
            (0..lo, 0..w).prop_map(move |(lo, w)| if s == Semiring::Interval { (lo, lo + w) } else { (lo, lo) })
        };
        let entries: Vec<_> = (0..n)
            .map(|i| {
                let calls = if i == 0 { Just(Vec::new()).boxed() } else { prop::collection::vec(0..i, 0..4).boxed() };
                (grade(7, 3), grade(2, 2), calls).prop_map(|(grade, used, calls)| HeapEntry { grade, used, calls })
            })
            .collect();
        let demands = prop::collection::vec(grade(3, 2), n);
        (Just(s), entries, demands).prop_map(|(semiring, entries, demands)| Case { semiring, entries, demands })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn compat_agrees_with_the_oracle(c in case()) {
        let (heap, ctx) = build(&c);
        let j = heap_compat(&heap, &ctx);
        prop_assert_eq!(j.accepted, oracle(&c), "{:?}\n{}\n{:?}", c, heap, j);
    }
}

#[test]
fn both_verdicts_are_exercised() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, TestRunner};
    let mut runner = TestRunner::new(Config::default());
    let (mut yes, mut no) = (0, 0);
    for _ in 0..500 {
        let c = case().new_tree(&mut runner).unwrap().current();
        if oracle(&c) {
            yes += 1;
        } else {
            no += 1;
        }
    }
    assert!(yes > 50 && no > 50, "accepted {yes}, rejected {no}");
}

#[test]
fn transitive_demand_is_scaled() {
    // x0 is called twice by x1's value, and x1 is demanded twice
    let s = Semiring::NatOrdered;
    let entry = |g, calls| HeapEntry { grade: (g, g), used: (0, 0), calls };
    let tight = Case { semiring: s, entries: vec![entry(4, vec![]), entry(2, vec![0, 0])], demands: vec![(0, 0), (2, 2)] };
    assert!(oracle(&tight));
    let (h, ctx) = build(&tight);
    assert!(heap_compat(&h, &ctx).accepted);
    let short = Case { entries: vec![entry(3, vec![]), entry(2, vec![0, 0])], ..tight };
    assert!(!oracle(&short));
    let (h, ctx) = build(&short);
    assert!(!heap_compat(&h, &ctx).accepted);
}
