//! Executable versions of the soundness results, checked on concrete
//! traces, plus a generator of well-typed programs to feed them.

mod compat;
mod generator;
mod suites;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use crate::ast::{PermExpr, RefName, Term, Type};
use crate::grade::{Grade, Permission};
use crate::interpreter::{Binding, Heap, Machine, Resource, Trace};
use crate::parser::print_term;
use crate::typechecker::{ctx_scale, Checker, Usage};

pub use compat::{heap_compat, heap_compat_demand, CompatJudgment, Demand};
pub use generator::{generate_program, Coverage, Generated};
pub use suites::{check_algebra, equational_instances, run_suites, SuiteOptions};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub property: &'static str,
    /// Index of the offending step (1-based) when there is one.
    pub step: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(k) => write!(f, "{} at step {k}: {}", self.property, self.message),
            None => write!(f, "{}: {}", self.property, self.message),
        }
    }
}

fn violation(property: &'static str, step: Option<usize>, message: impl Into<String>) -> Violation {
    Violation { property, step, message: message.into() }
}

/// Summary of one property over many cases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub property: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl Report {
    pub fn new(property: &'static str) -> Report {
        Report { property, cases: 0, failures: Vec::new() }
    }

    pub fn record(&mut self, result: Result<(), Violation>) {
        self.cases += 1;
        if let Err(v) = result {
            self.failures.push(v.to_string());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> Value {
        json!({ "property": self.property, "cases": self.cases, "failures": self.failures })
    }
}

/// Re-types one configuration: the type and `H ⋈ s·Γ'`.
fn check_configuration(heap: &Heap, term: &Term, expected: &Type, s: &Grade) -> Result<(), String> {
    let checker = Checker::new(heap.semiring);
    let (ty, usage, _) = checker.infer(&mut heap.context(), term).map_err(|e| format!("does not type: {e}"))?;
    if ty != *expected {
        return Err(format!("type changed to {}", crate::parser::print_type(&ty)));
    }
    let graded = Usage::from_grades(usage.as_grades(heap.semiring));
    let scaled = ctx_scale(s, &graded).map_err(|e| e.to_string())?;
    let demand = Demand::from_usage(&scaled, heap.semiring, term.refs());
    let j = heap_compat_demand(heap, &demand);
    if !j.accepted {
        return Err(format!("heap incompatible: {}", j.failure.unwrap_or_default()));
    }
    Ok(())
}

/// Every configuration in the trace has the initial type and a heap
/// compatible with its usage (with an empty ambient context).
pub fn check_preservation(trace: &Trace, expected: &Type, s: &Grade) -> Result<(), Violation> {
    check_configuration(&trace.initial.heap, &trace.initial.term, expected, s)
        .map_err(|m| violation("preservation", None, m))?;
    for (k, st) in trace.steps.iter().enumerate() {
        check_configuration(&st.post.heap, &st.post.term, expected, s)
            .map_err(|m| violation("preservation", Some(k + 1), format!("after {}: {m}", st.rule)))?;
    }
    Ok(())
}

/// A well-typed configuration is a value or can step.
pub fn check_progress(heap: &Heap, term: &Term, s: &Grade) -> Result<(), Violation> {
    let checker = Checker::new(heap.semiring);
    let Ok((_, usage, _)) = checker.infer(&mut heap.context(), term) else {
        return Ok(());
    };
    let demand = Demand::from_usage(&usage, heap.semiring, term.refs());
    if !heap_compat_demand(heap, &demand).accepted || term.is_value() {
        return Ok(());
    }
    match Machine::with_heap(heap.clone()).step(term, s) {
        Ok(Some(_)) => Ok(()),
        Ok(None) => Err(violation("progress", None, format!("non-value {} has no step", print_term(term)))),
        Err(e) => Err(violation("progress", None, format!("{} is stuck: {e}", print_term(term)))),
    }
}

/// Progress at every configuration of a trace, including the last.
pub fn check_progress_trace(trace: &Trace, s: &Grade) -> Result<(), Violation> {
    let mut configs = vec![&trace.initial];
    configs.extend(trace.steps.iter().map(|st| &st.post));
    for (k, c) in configs.into_iter().enumerate() {
        check_progress(&c.heap, &c.term, s).map_err(|v| Violation { step: Some(k), ..v })?;
    }
    Ok(())
}

/// References reachable from a term, following free variables into the
/// values the heap stores for them.
pub fn reachable_refs(heap: &Heap, term: &Term) -> BTreeSet<RefName> {
    let mut refs = term.refs();
    let mut seen = BTreeSet::new();
    let mut todo: Vec<String> = term.free_vars().into_iter().collect();
    while let Some(x) = todo.pop() {
        if !seen.insert(x.clone()) {
            continue;
        }
        if let Some(Binding::Var { value, .. }) = heap.var(&x) {
            refs.extend(value.refs());
            todo.extend(value.free_vars());
        }
    }
    refs
}

/// Sum of heap permissions, per identifier, over the given references.
pub fn permission_sums(heap: &Heap, refs: &BTreeSet<RefName>) -> BTreeMap<String, BigRational> {
    let mut sums = BTreeMap::new();
    for r in refs {
        if let Some((perm, id)) = heap.ref_binding(*r) {
            *sums.entry(id.to_string()).or_insert_with(BigRational::zero) += perm.value();
        }
    }
    sums
}

fn heap_ids(heap: &Heap) -> BTreeSet<String> {
    heap.bindings()
        .iter()
        .filter_map(|b| match b {
            Binding::Ref { id, .. } | Binding::Res { id, .. } => Some(id.clone()),
            Binding::Var { .. } => None,
        })
        .collect()
}

/// Per identifier: a whole permission before the step is whole or gone
/// after it; identifiers created by the step are held whole.
pub fn check_borrow_safety_step(pre: (&Heap, &Term), post: (&Heap, &Term)) -> Result<(), String> {
    let before = permission_sums(pre.0, &reachable_refs(pre.0, pre.1));
    let after = permission_sums(post.0, &reachable_refs(post.0, post.1));
    let one = BigRational::one();
    let zero = BigRational::zero();
    for (id, sum) in &before {
        if *sum == one {
            let now = after.get(id).unwrap_or(&zero);
            if *now != one && *now != zero {
                return Err(format!("{id} held with 1 before but {now} after"));
            }
        }
    }
    let old = heap_ids(pre.0);
    for (id, sum) in &after {
        if !old.contains(id) && *sum != one {
            return Err(format!("new identifier {id} held with {sum}"));
        }
    }
    Ok(())
}

pub fn check_borrow_safety(trace: &Trace) -> Result<(), Violation> {
    for (k, st) in trace.steps.iter().enumerate() {
        check_borrow_safety_step((&st.pre.heap, &st.pre.term), (&st.post.heap, &st.post.term))
            .map_err(|m| violation("borrow-safety", Some(k + 1), format!("{}: {m}", st.rule)))?;
    }
    Ok(())
}

/// Whether the uniqueness corollary applies to a result of this type.
pub fn unique_shaped(ty: &Type) -> bool {
    match ty {
        Type::Exists(_, a) => unique_shaped(a),
        Type::Borrow(PermExpr::Lit(Permission::Star), _) => true,
        _ => false,
    }
}

/// At the end of a run with ∗-shaped result, each identifier the value
/// refers to is held by exactly one reference, at permission 1.
/// `Ok(false)` when the type is out of scope.
pub fn check_uniqueness(trace: &Trace, ty: &Type) -> Result<bool, Violation> {
    if !unique_shaped(ty) {
        return Ok(false);
    }
    let last = trace.last();
    if !last.term.is_value() {
        return Err(violation("uniqueness", None, "run did not reach a value"));
    }
    let refs = reachable_refs(&last.heap, &last.term);
    let mut per_id: BTreeMap<String, Vec<RefName>> = BTreeMap::new();
    for r in &refs {
        let (_, id) = last.heap.ref_binding(*r).ok_or_else(|| violation("uniqueness", None, format!("{r} dangles")))?;
        per_id.entry(id.to_string()).or_default().push(*r);
    }
    for (id, rs) in &per_id {
        if rs.len() != 1 {
            return Err(violation("uniqueness", None, format!("{id} is reached by {} references", rs.len())));
        }
        let (perm, _) = last.heap.ref_binding(rs[0]).expect("checked above");
        if perm.value() != &BigRational::one() {
            return Err(violation("uniqueness", None, format!("{id} is held with {perm}")));
        }
        let others = last.heap.bindings().iter().any(|b| {
            matches!(b, Binding::Ref { name, perm, id: i } if i == id && *name != rs[0] && !perm.is_zero())
        });
        if others {
            return Err(violation("uniqueness", None, format!("{id} has another live reference")));
        }
    }
    Ok(true)
}

/// A value with every reference replaced by the resource it points to and
/// identifier names erased, for comparison across heaps.
pub fn observe(heap: &Heap, v: &Term) -> String {
    fn go(heap: &Heap, v: &Term, depth: usize, out: &mut String) {
        match v {
            Term::Ref(r) => match heap.deref(*r) {
                Ok((_, Resource::Array(a))) => out.push_str(&format!("<{a}>")),
                Ok((_, Resource::Ref(inner))) if depth < 16 => {
                    out.push('<');
                    go(heap, inner, depth + 1, out);
                    out.push('>');
                }
                _ => out.push_str("<?>"),
            },
            Term::Pair(a, b) => {
                out.push('(');
                go(heap, a, depth, out);
                out.push_str(", ");
                go(heap, b, depth, out);
                out.push(')');
            }
            Term::Uniq(p, a) => {
                out.push_str(&format!("*{{{p}}}"));
                go(heap, a, depth, out);
            }
            Term::Pack(_, a) => {
                out.push_str("pack ");
                go(heap, a, depth, out);
            }
            Term::Promote(r, a) => {
                out.push_str(&format!("[{}]", r.map(|r| r.to_string()).unwrap_or_default()));
                go(heap, a, depth, out);
            }
            Term::Var(x) => match heap.var(x) {
                Some(Binding::Var { value, .. }) if depth < 16 => go(heap, value, depth + 1, out),
                _ => out.push_str(x),
            },
            other => out.push_str(&print_term(other)),
        }
    }
    let mut out = String::new();
    go(heap, v, 0, &mut out);
    out
}

/// Evaluates both sides at grade 1 from the same heap and compares the
/// dereferenced results.
pub fn check_equational(lhs: &Term, rhs: &Term, heap: &Heap, fuel: usize) -> Result<(), Violation> {
    let one = heap.semiring.one();
    let run = |t: &Term| -> Result<String, Violation> {
        let mut m = Machine::with_heap(heap.clone());
        let tr = m.eval(t, &one, fuel).map_err(|(e, _)| violation("equational", None, format!("{}: {e}", print_term(t))))?;
        Ok(observe(&m.heap, &tr.last().term))
    };
    let (a, b) = (run(lhs)?, run(rhs)?);
    if a != b {
        return Err(violation("equational", None, format!("{a} differs from {b}")));
    }
    Ok(())
}
