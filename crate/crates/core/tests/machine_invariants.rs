use std::collections::BTreeSet;

use gradebor_core::ast::Term;
use gradebor_core::grade::Semiring;
use gradebor_core::interpreter::{Binding, Heap, Machine, Trace};
use gradebor_core::metatheory::{check_preservation, check_uniqueness, generate_program, Coverage};
use gradebor_core::parser::parse_program;
use gradebor_core::typechecker::check_program;

fn traces(seeds: std::ops::Range<u64>) -> Vec<(u64, Trace)> {
    let mut out = Vec::new();
    for seed in seeds {
        let g = generate_program(seed, 4 + (seed % 10) as usize);
        let program = g.program.expect("generated programs parse");
        let checked = check_program(&program).expect("generated programs check");
        let (_, main) = checked.main.expect("main");
        let trace = Machine::new(program.semiring).eval(&main, &program.semiring.one(), 10_000).expect("runs");
        out.push((seed, trace));
    }
    out
}

/// Names bound in a heap, with duplicates reported.
fn binders(h: &Heap) -> Result<BTreeSet<String>, String> {
    let mut seen = BTreeSet::new();
    for b in h.bindings() {
        let name = match b {
            Binding::Var { name, .. } => format!("var {name}"),
            Binding::Ref { name, .. } => format!("ref {name}"),
            Binding::Res { id, .. } => format!("res {id}"),
        };
        if !seen.insert(name.clone()) {
            return Err(format!("{name} bound twice"));
        }
    }
    Ok(seen)
}

#[test]
fn steps_are_deterministic() {
    for (seed, trace) in traces(0..150) {
        for (k, st) in trace.steps.iter().enumerate() {
            let mut m = Machine::with_heap(st.pre.heap.clone());
            let (term, rule) = m.step(&st.pre.term, &st.grade).unwrap().expect("non-value steps");
            assert_eq!((&term, &rule), (&st.post.term, &st.rule), "seed {seed} step {k}");
            assert_eq!(m.heap, st.post.heap, "seed {seed} step {k}");
        }
    }
}

#[test]
fn fresh_names_never_collide() {
    for (seed, trace) in traces(150..300) {
        let mut ever = binders(&trace.initial.heap).unwrap();
        for (k, st) in trace.steps.iter().enumerate() {
            let pre = binders(&st.pre.heap).unwrap();
            let post = binders(&st.post.heap).unwrap_or_else(|e| panic!("seed {seed} step {k}: {e}"));
            for name in post.difference(&pre) {
                assert!(!ever.contains(name), "seed {seed} step {k} ({}): {name} reused", st.rule);
            }
            ever.extend(post);
        }
    }
}

#[test]
fn configurations_stay_closed() {
    for (seed, trace) in traces(300..450) {
        for (k, st) in trace.steps.iter().enumerate() {
            let heap_refs = st.post.heap.refs();
            for r in st.post.term.refs() {
                assert!(heap_refs.contains(&r), "seed {seed} step {k} ({}): {r} dangles", st.rule);
            }
            let names = st.post.heap.var_names();
            for x in st.post.term.free_vars() {
                assert!(names.contains(&x), "seed {seed} step {k}: {x} unbound");
            }
        }
    }
}

#[test]
fn every_constructor_is_generated_within_a_thousand_programs() {
    let mut coverage = Coverage::default();
    for seed in 0..1000 {
        if let Ok(p) = generate_program(seed, 1 + (seed % 13) as usize).program {
            coverage.record(&p.main().expect("main").body);
        }
    }
    assert!(coverage.missing().is_empty(), "{:?}", coverage.missing());
}

#[test]
fn values_take_no_steps() {
    let s = Semiring::NatOrdered;
    let v = Term::pair(Term::abs("x", Term::var("x")), Term::Unit);
    let trace = Machine::new(s).eval(&v, &s.one(), 10).unwrap();
    assert!(trace.steps.is_empty());
}

fn corpus_trace(name: &str) -> (Trace, gradebor_core::ast::Type) {
    let path = format!("{}/../../corpus/{name}.grb", env!("CARGO_MANIFEST_DIR"));
    let p = parse_program(&std::fs::read_to_string(path).unwrap()).unwrap();
    let (ty, main) = check_program(&p).unwrap().main.unwrap();
    (Machine::new(p.semiring).eval(&main, &p.semiring.one(), 10_000).unwrap(), ty)
}

#[test]
fn corpus_runs_end_unique() {
    for name in ["persimmon", "amethyst"] {
        let (trace, ty) = corpus_trace(name);
        check_preservation(&trace, &ty, &Semiring::NatOrdered.one()).unwrap();
        assert_eq!(check_uniqueness(&trace, &ty), Ok(true), "{name}");
    }
}

#[test]
fn shared_results_are_out_of_scope_for_uniqueness() {
    let src = "main : exists i . (Array i Float) [1]\nmain = unpack <i, a> = newArray 1 in pack <i, share a>\n";
    let p = parse_program(src).unwrap();
    let (ty, main) = check_program(&p).unwrap_or_else(|e| panic!("{}", e[0])).main.unwrap();
    let trace = Machine::new(Semiring::NatOrdered).eval(&main, &Semiring::NatOrdered.one(), 100).unwrap();
    assert!(trace.steps.iter().any(|s| s.rule.ends_with("share")));
    assert_eq!(check_uniqueness(&trace, &ty), Ok(false));
}
