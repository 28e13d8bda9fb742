use std::collections::BTreeMap;

use crate::ast::RefName;
use crate::grade::Grade;
use crate::interpreter::{Binding, Heap};
use crate::typechecker::{ctx_scale, Checker, Entry, TypingContext, Usage};

/// Outcome of `H ⋈ Γ`: the rules applied (innermost binding last) or the
/// entry that could not be accounted for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatJudgment {
    pub accepted: bool,
    pub derivation: Vec<String>,
    pub failure: Option<String>,
}

impl CompatJudgment {
    fn reject(derivation: Vec<String>, why: String) -> CompatJudgment {
        CompatJudgment { accepted: false, derivation, failure: Some(why) }
    }
}

/// The demands a context places on the heap: grades per variable (linear
/// assumptions demand `1`) and the references it mentions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Demand {
    pub vars: BTreeMap<String, Grade>,
    pub refs: Vec<RefName>,
}

impl Demand {
    pub fn from_context(ctx: &TypingContext) -> Demand {
        let mut d = Demand::default();
        for e in ctx.entries() {
            match e {
                Entry::Linear(x, _) => {
                    d.vars.insert(x.clone(), ctx.semiring.one());
                }
                Entry::Graded(x, _, Some(r)) => {
                    d.vars.insert(x.clone(), *r);
                }
                Entry::Graded(x, _, None) => {
                    d.vars.insert(x.clone(), ctx.semiring.zero());
                }
                Entry::RuntimeRef(r, ..) => d.refs.push(*r),
                Entry::Name(_) => {}
            }
        }
        d
    }

    pub fn from_usage(u: &Usage, semiring: crate::grade::Semiring, refs: impl IntoIterator<Item = RefName>) -> Demand {
        Demand { vars: u.as_grades(semiring), refs: refs.into_iter().collect() }
    }
}

/// `H ⋈ Γ`, decided by walking the heap from its last binding.
///
/// A variable binding `x ↦_r v` with `u` already used serves the demand `s`
/// on `x` when `∃r'. (u + s) + r' ≡ r`; its value's own dependencies, scaled
/// by `s`, are then demanded of the earlier heap. Resources not demanded are
/// garbage collected.
pub fn heap_compat(heap: &Heap, ctx: &TypingContext) -> CompatJudgment {
    heap_compat_demand(heap, &Demand::from_context(ctx))
}

pub fn heap_compat_demand(heap: &Heap, demand: &Demand) -> CompatJudgment {
    let mut need = demand.vars.clone();
    let mut derivation = Vec::new();
    let bindings = heap.bindings();
    let checker = Checker::new(heap.semiring);
    for r in &demand.refs {
        match heap.ref_binding(*r) {
            Some((_, id)) if heap.resource(id).is_some() => derivation.push(format!("extRes {r}")),
            _ => return CompatJudgment::reject(derivation, format!("reference {r} has no resource in the heap")),
        }
    }
    for (i, b) in bindings.iter().enumerate().rev() {
        let Binding::Var { name, grade, used, value, .. } = b else {
            derivation.push("gcArr".into());
            continue;
        };
        let s = need.remove(name).unwrap_or_else(|| heap.semiring.zero());
        let total = match used.plus(&s) {
            Ok(t) => t,
            Err(e) => return CompatJudgment::reject(derivation, e.to_string()),
        };
        match grade.residual(&total) {
            Ok(Some(_)) => {}
            _ => {
                let why = format!("{name} has grade {grade} with {used} used, which cannot cover {s}");
                return CompatJudgment::reject(derivation, why);
            }
        }
        derivation.push(format!("extGr {name}"));
        if s.is_zero() {
            continue;
        }
        // the stored value's own dependencies, typed against the earlier heap
        let mut prefix = heap.clone();
        prefix.truncate(i);
        let mut ctx = prefix.context();
        let usage = match checker.infer(&mut ctx, value) {
            Ok((_, u, _)) => u,
            Err(e) => return CompatJudgment::reject(derivation, format!("stored value of {name} does not type: {e}")),
        };
        let graded = Usage::from_grades(usage.as_grades(heap.semiring));
        let scaled = match ctx_scale(&s, &graded) {
            Ok(u) => u,
            Err(e) => return CompatJudgment::reject(derivation, e.to_string()),
        };
        for (y, g) in scaled.as_grades(heap.semiring) {
            let entry = need.entry(y).or_insert_with(|| heap.semiring.zero());
            match entry.plus(&g) {
                Ok(sum) => *entry = sum,
                Err(e) => return CompatJudgment::reject(derivation, e.to_string()),
            }
        }
        for r in value.refs() {
            if heap.deref(r).is_err() {
                return CompatJudgment::reject(derivation, format!("{name} holds dangling reference {r}"));
            }
        }
    }
    if let Some((x, _)) = need.iter().find(|(_, g)| !g.is_zero()) {
        return CompatJudgment::reject(derivation, format!("{x} is demanded but not in the heap"));
    }
    derivation.push("base".into());
    CompatJudgment { accepted: true, derivation, failure: None }
}
