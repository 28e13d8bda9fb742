//! Call-by-value heap machine.
//!
//! `step` reduces the leftmost-innermost redex (function before argument,
//! left component before right) and reports the rule chain that fired,
//! outermost congruence first, e.g. `appL/congPairR/var`.

mod heap;

use serde_json::{json, Value};
use thiserror::Error;

use crate::ast::{Prim, RefName, Term, Type};
use crate::grade::{Grade, GradeError, HeapPerm, Permission, Semiring};
use crate::parser::print_term;

pub use heap::{arr_read, arr_write, heap_zero_perms, ArrTerm, Binding, Heap, Resource};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("stuck: {0}")]
    Stuck(String),
    #[error("variable `{var}` has grade {grade} but {demand} is demanded")]
    GradeUnderflow { var: String, grade: Grade, demand: Grade },
    #[error("missing resource {0}")]
    MissingResource(String),
    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(usize),
    #[error(transparent)]
    Grade(#[from] GradeError),
}

/// Deliberate faults for checking that the metatheory suites can fail.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Mutation {
    /// `split` gives each new reference the whole permission.
    pub no_split_halving: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub heap: Heap,
    pub term: Term,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub rule: String,
    pub grade: Grade,
    pub pre: Configuration,
    pub post: Configuration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub initial: Configuration,
    pub steps: Vec<StepRecord>,
}

impl Trace {
    pub fn last(&self) -> &Configuration {
        self.steps.last().map_or(&self.initial, |s| &s.post)
    }

    /// One JSON object per step, then a final record with the value.
    pub fn json_lines(&self) -> Vec<Value> {
        let mut out: Vec<Value> = self
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| {
                json!({
                    "step": k + 1,
                    "rule": s.rule,
                    "grade": s.grade.to_string(),
                    "term": print_term(&s.post.term),
                    "heap": s.post.heap.to_json(),
                })
            })
            .collect();
        let last = self.last();
        out.push(json!({
            "step": self.steps.len(),
            "final": true,
            "value": print_term(&last.term),
            "heap": last.heap.to_json(),
        }));
        out
    }
}

type Fired = (Term, Vec<&'static str>);

pub struct Machine {
    pub heap: Heap,
    pub mutation: Mutation,
}

impl Machine {
    pub fn new(semiring: Semiring) -> Machine {
        Machine { heap: Heap::new(semiring), mutation: Mutation::default() }
    }

    pub fn with_heap(heap: Heap) -> Machine {
        Machine { heap, mutation: Mutation::default() }
    }

    fn semiring(&self) -> Semiring {
        self.heap.semiring
    }

    /// One reduction step at grade `s`; `None` for values.
    pub fn step(&mut self, t: &Term, s: &Grade) -> Result<Option<(Term, String)>, EvalError> {
        if t.is_value() {
            return Ok(None);
        }
        let (t2, mut rules) = self.reduce(t, s)?;
        rules.reverse();
        Ok(Some((t2, rules.join("/"))))
    }

    /// Runs to a value, recording every step.
    pub fn eval(&mut self, t: &Term, s: &Grade, fuel: usize) -> Result<Trace, (EvalError, Trace)> {
        let initial = Configuration { heap: self.heap.clone(), term: t.clone() };
        let mut trace = Trace { initial, steps: Vec::new() };
        let mut cur = t.clone();
        loop {
            if cur.is_value() {
                return Ok(trace);
            }
            if trace.steps.len() >= fuel {
                return Err((EvalError::FuelExhausted(fuel), trace));
            }
            let pre = trace.last().clone();
            match self.step(&cur, s) {
                Ok(Some((next, rule))) => {
                    let post = Configuration { heap: self.heap.clone(), term: next.clone() };
                    trace.steps.push(StepRecord { rule, grade: *s, pre, post });
                    cur = next;
                }
                Ok(None) => return Ok(trace),
                Err(e) => return Err((e, trace)),
            }
        }
    }

    /// Steps a subterm under a congruence named `rule`.
    fn cong(&mut self, t: &Term, s: &Grade, rule: &'static str, rebuild: impl FnOnce(Term) -> Term) -> Result<Fired, EvalError> {
        let (t2, mut rules) = self.reduce(t, s)?;
        rules.push(rule);
        Ok((rebuild(t2), rules))
    }

    fn stuck<T>(t: &Term) -> Result<T, EvalError> {
        Err(EvalError::Stuck(print_term(t)))
    }

    /// Rules are collected innermost first.
    fn reduce(&mut self, t: &Term, s: &Grade) -> Result<Fired, EvalError> {
        use Term as T;
        match t {
            T::Var(x) => Ok((self.heap.lookup(x, s)?, vec!["var"])),
            T::App(f, a) => {
                if !f.is_value() {
                    return self.cong(f, s, "appR", |f| T::app(f, (**a).clone()));
                }
                if !a.is_value() {
                    return self.cong(a, s, "appL", |a| T::app((**f).clone(), a));
                }
                if let T::Abs(x, ann, body) = &**f {
                    let x2 = self.bind(x, *s, (**a).clone(), ann.clone());
                    return Ok((body.subst(x, &T::var(x2)), vec!["beta"]));
                }
                self.prim(t)
            }
            T::Pair(a, b) => {
                if !a.is_value() {
                    return self.cong(a, s, "congPairL", |a| T::pair(a, (**b).clone()));
                }
                self.cong(b, s, "congPairR", |b| T::pair((**a).clone(), b))
            }
            T::LetPair(x, y, t1, t2) => {
                if !t1.is_value() {
                    return self.cong(t1, s, "congPairElim", |t1| T::let_pair(x.clone(), y.clone(), t1, (**t2).clone()));
                }
                let T::Pair(v1, v2) = &**t1 else { return Self::stuck(t) };
                let ty1 = self.heap.type_of(v1);
                let ty2 = self.heap.type_of(v2);
                let x2 = self.bind(x, *s, (**v1).clone(), ty1);
                let body = t2.subst(x, &T::var(x2.clone()));
                // y may not be renamed onto the x just bound
                let y2 = self.bind(y, *s, (**v2).clone(), ty2);
                let body = if y == x { body } else { body.subst(y, &T::var(y2)) };
                Ok((body, vec!["pairBeta"]))
            }
            T::LetUnit(t1, t2) => {
                if !t1.is_value() {
                    return self.cong(t1, s, "congUnitElim", |t1| T::let_unit(t1, (**t2).clone()));
                }
                match &**t1 {
                    T::Unit => Ok(((**t2).clone(), vec!["unitBeta"])),
                    _ => Self::stuck(t),
                }
            }
            T::Promote(r, inner) => {
                let r = r.ok_or_else(|| EvalError::Stuck("unelaborated box".into()))?;
                let sr = s.times(&r)?;
                let (t2, mut rules) = self.reduce(inner, &sr)?;
                rules.push("congPromotion");
                Ok((T::Promote(Some(r), Box::new(t2)), rules))
            }
            T::LetBox(x, ann, t1, t2) => {
                if !t1.is_value() {
                    return self.cong(t1, s, "congBoxElim", |t1| T::let_box(x.clone(), ann.clone(), t1, (**t2).clone()));
                }
                let T::Promote(Some(r), v) = &**t1 else { return Self::stuck(t) };
                let ty = match ann {
                    Some(Type::Graded(_, a)) => Some((**a).clone()),
                    _ => self.heap.type_of(v),
                };
                let x2 = self.bind(x, s.times(r)?, (**v).clone(), ty);
                Ok((t2.subst(x, &T::var(x2)), vec!["betaBox"]))
            }
            T::Pack(id, inner) => self.cong(inner, s, "congPack", |i| T::pack(id.clone(), i)),
            T::Unpack(id, x, t1, t2) => {
                if !t1.is_value() {
                    return self.cong(t1, s, "congUnpack", |t1| T::unpack(id.clone(), x.clone(), t1, (**t2).clone()));
                }
                let T::Pack(witness, v) = &**t1 else { return Self::stuck(t) };
                let body = t2.subst_id(id, witness);
                let ty = self.heap.type_of(v);
                let x2 = self.bind(x, *s, (**v).clone(), ty);
                Ok((body.subst(x, &T::var(x2)), vec!["existentialBeta"]))
            }
            T::WithBorrow(f, a) => {
                if !f.is_value() {
                    return self.cong(f, s, "congWithBorrowL", |f| T::with_borrow(f, (**a).clone()));
                }
                if !a.is_value() {
                    return self.cong(a, s, "congWithBorrowR", |a| T::with_borrow((**f).clone(), a));
                }
                let T::Uniq(Permission::Star, v) = &**a else { return Self::stuck(t) };
                let borrowed = T::uniq(Permission::one(), (**v).clone());
                let body = match &**f {
                    T::Abs(x, _, b) => b.subst(x, &borrowed),
                    _ => T::app((**f).clone(), borrowed),
                };
                Ok((T::unborrow(body), vec!["withBorrow"]))
            }
            T::Unborrow(inner) => {
                if !inner.is_value() {
                    return self.cong(inner, s, "congUnborrow", T::unborrow);
                }
                match &**inner {
                    T::Uniq(p, v) if *p == Permission::one() => Ok((T::uniq(Permission::Star, (**v).clone()), vec!["unborrowBorrow"])),
                    _ => Self::stuck(t),
                }
            }
            T::Split(inner) => {
                if !inner.is_value() {
                    return self.cong(inner, s, "congSplit", T::split);
                }
                self.split(t, inner)
            }
            T::Join(inner) => {
                if !inner.is_value() {
                    return self.cong(inner, s, "congJoin", T::join);
                }
                self.join(t, inner)
            }
            T::Push(inner) => {
                if !inner.is_value() {
                    return self.cong(inner, s, "congPush", T::push);
                }
                match &**inner {
                    T::Uniq(p, v) => match &**v {
                        T::Pair(a, b) => {
                            let rule = if *p == Permission::Star { "pushUnique" } else { "pushBorrow" };
                            let out = T::pair(T::uniq(p.clone(), (**a).clone()), T::uniq(p.clone(), (**b).clone()));
                            Ok((out, vec![rule]))
                        }
                        _ => Self::stuck(t),
                    },
                    _ => Self::stuck(t),
                }
            }
            T::Pull(inner) => {
                if !inner.is_value() {
                    return self.cong(inner, s, "congPull", T::pull);
                }
                match &**inner {
                    T::Pair(a, b) => match (&**a, &**b) {
                        (T::Uniq(p, v1), T::Uniq(q, v2)) if p == q => {
                            let rule = if *p == Permission::Star { "pullUnique" } else { "pullBorrow" };
                            Ok((T::uniq(p.clone(), T::pair((**v1).clone(), (**v2).clone())), vec![rule]))
                        }
                        _ => Self::stuck(t),
                    },
                    _ => Self::stuck(t),
                }
            }
            T::Share(r, inner) => {
                if !inner.is_value() {
                    return self.cong(inner, s, "congShare", |i| T::Share(*r, Box::new(i)));
                }
                let T::Uniq(Permission::Star, v) = &**inner else { return Self::stuck(t) };
                for rf in v.refs() {
                    self.heap.set_perm(rf, HeapPerm::zero());
                }
                let r = r.unwrap_or_else(|| self.semiring().one());
                Ok((T::Promote(Some(r), v.clone()), vec!["share"]))
            }
            T::Clone { var, ids, payload, source, body } => {
                if !source.is_value() {
                    return self.cong(source, s, "congClone", |src| T::Clone {
                        var: var.clone(),
                        ids: ids.clone(),
                        payload: payload.clone(),
                        source: Box::new(src),
                        body: body.clone(),
                    });
                }
                let T::Promote(_, v) = &**source else { return Self::stuck(t) };
                let old_ids = payload.as_ref().map(Type::free_ids).unwrap_or_default();
                let (theta, copied) = self.heap.copy(&v.refs(), &t.free_ids())?;
                let mut body = (**body).clone();
                let mut witnesses = Vec::new();
                for (bound, old) in ids.iter().zip(&old_ids) {
                    let new = match copied.iter().find(|(o, _)| o == old) {
                        Some((_, n)) => n.clone(),
                        None => self.heap.fresh_id(&t.free_ids()),
                    };
                    body = body.subst_id(bound, &new);
                    witnesses.push(new);
                }
                let mut ty = payload.clone();
                if let Some(a) = &mut ty {
                    for (old, new) in old_ids.iter().zip(&witnesses) {
                        *a = a.subst_id(old, new);
                    }
                }
                let copy = T::uniq(Permission::Star, v.rename_refs(&theta));
                let x2 = self.bind(var, *s, copy, ty.map(Type::unique));
                let body = body.subst(var, &T::var(x2));
                let packed = witnesses.iter().rev().fold(body, |b, id| T::pack(id.clone(), b));
                Ok((packed, vec!["copyBeta"]))
            }
            T::Uniq(p, inner) => self.cong(inner, s, "congUniq", |i| T::uniq(p.clone(), i)),
            T::Ann(inner, _) => Ok(((**inner).clone(), vec!["ann"])),
            _ => Self::stuck(t),
        }
    }

    fn bind(&mut self, x: &str, grade: Grade, v: Term, ty: Option<Type>) -> String {
        let x2 = self.heap.fresh_var(x);
        self.heap.bind_var(x2.clone(), grade, v, ty);
        x2
    }

    /// The reference wrapped by a (possibly borrowed) resource value.
    fn target(v: &Term) -> Option<(&Permission, RefName)> {
        match v {
            Term::Uniq(p, r) => match **r {
                Term::Ref(r) => Some((p, r)),
                _ => None,
            },
            _ => None,
        }
    }

    fn prim(&mut self, t: &Term) -> Result<Fired, EvalError> {
        let (head, args) = t.spine();
        let Term::Prim(p) = head else { return Self::stuck(t) };
        if args.len() != p.arity() {
            return Self::stuck(t);
        }
        let rule = p.name();
        let out = match p {
            Prim::NewArray => {
                let id = self.heap.fresh_id(&t.free_ids());
                let r = self.heap.fresh_ref();
                self.heap.push(Binding::Res { id: id.clone(), resource: Resource::Array(ArrTerm::init()) });
                self.heap.push(Binding::Ref { name: r, perm: HeapPerm::one(), id: id.clone() });
                Term::pack(id, Term::uniq(Permission::Star, Term::Ref(r)))
            }
            Prim::NewRef => {
                let id = self.heap.fresh_id(&t.free_ids());
                let r = self.heap.fresh_ref();
                self.heap.push(Binding::Res { id: id.clone(), resource: Resource::Ref(args[0].clone()) });
                self.heap.push(Binding::Ref { name: r, perm: HeapPerm::one(), id: id.clone() });
                Term::pack(id, Term::uniq(Permission::Star, Term::Ref(r)))
            }
            Prim::ReadArray => {
                let (Some((_, r)), Term::Nat(n)) = (Self::target(args[0]), args[1]) else { return Self::stuck(t) };
                let Resource::Array(a) = self.heap.deref(r)?.1 else { return Self::stuck(t) };
                Term::pair(Term::Float(arr_read(a, *n)), args[0].clone())
            }
            Prim::WriteArray => {
                let (Some((_, r)), Term::Nat(n), Term::Float(x)) = (Self::target(args[0]), args[1], args[2]) else {
                    return Self::stuck(t);
                };
                let id = self.heap.deref(r)?.0.to_string();
                match self.heap.resource_mut(&id) {
                    Some(Resource::Array(a)) => *a = arr_write(a, *n, *x),
                    _ => return Self::stuck(t),
                }
                args[0].clone()
            }
            Prim::DeleteArray | Prim::DeleteRef => {
                let Some((Permission::Star, r)) = Self::target(args[0]) else { return Self::stuck(t) };
                let id = self.heap.deref(r)?.0.to_string();
                self.heap.remove_ref(r);
                match (p, self.heap.remove_res(&id)) {
                    (Prim::DeleteArray, Some(Resource::Array(_))) => Term::Unit,
                    (Prim::DeleteRef, Some(Resource::Ref(v))) => v,
                    _ => return Self::stuck(t),
                }
            }
            Prim::ReadRef => {
                let Some((_, r)) = Self::target(args[0]) else { return Self::stuck(t) };
                let id = self.heap.deref(r)?.0.to_string();
                let Some(Resource::Ref(Term::Promote(Some(g), v))) = self.heap.resource_mut(&id) else {
                    return Self::stuck(t);
                };
                let g2 = g.predecessor().ok_or_else(|| EvalError::Stuck(format!("reference {r} has no reads left")))?;
                let v = (**v).clone();
                *g = g2;
                Term::pair(v, args[0].clone())
            }
            Prim::SwapRef => {
                let Some((_, r)) = Self::target(args[0]) else { return Self::stuck(t) };
                let id = self.heap.deref(r)?.0.to_string();
                let Some(Resource::Ref(stored)) = self.heap.resource_mut(&id) else { return Self::stuck(t) };
                let old = std::mem::replace(stored, args[1].clone());
                Term::pair(old, args[0].clone())
            }
        };
        Ok((out, vec![rule]))
    }

    fn split(&mut self, t: &Term, v: &Term) -> Result<Fired, EvalError> {
        let Term::Uniq(p, inner) = v else { return Self::stuck(t) };
        let half = p.half().map_err(|e| EvalError::Stuck(e.to_string()))?;
        let rule = if matches!(**inner, Term::Ref(_)) { "splitRef" } else { "splitPair" };
        let (l, r) = self.split_value(t, inner)?;
        Ok((Term::pair(Term::uniq(half.clone(), l), Term::uniq(half, r)), vec![rule]))
    }

    fn split_value(&mut self, t: &Term, v: &Term) -> Result<(Term, Term), EvalError> {
        match v {
            Term::Ref(r) => {
                let (perm, id) = self.heap.remove_ref(*r).ok_or_else(|| EvalError::MissingResource(r.to_string()))?;
                let each = if self.mutation.no_split_halving { perm } else { perm.half() };
                let (r1, r2) = (self.heap.fresh_ref(), self.heap.fresh_ref());
                self.heap.push(Binding::Ref { name: r1, perm: each.clone(), id: id.clone() });
                self.heap.push(Binding::Ref { name: r2, perm: each, id });
                Ok((Term::Ref(r1), Term::Ref(r2)))
            }
            Term::Pair(a, b) => {
                let (a1, a2) = self.split_value(t, a)?;
                let (b1, b2) = self.split_value(t, b)?;
                Ok((Term::pair(a1, b1), Term::pair(a2, b2)))
            }
            Term::Unit | Term::Nat(_) | Term::Float(_) => Ok((v.clone(), v.clone())),
            _ => Self::stuck(t),
        }
    }

    fn join(&mut self, t: &Term, v: &Term) -> Result<Fired, EvalError> {
        let Term::Pair(a, b) = v else { return Self::stuck(t) };
        let (Term::Uniq(p, va), Term::Uniq(q, vb)) = (&**a, &**b) else { return Self::stuck(t) };
        let sum = p.plus(q).map_err(|e| EvalError::Stuck(e.to_string()))?;
        let rule = if matches!(**va, Term::Ref(_)) { "joinRef" } else { "joinPair" };
        let joined = self.join_value(t, va, vb)?;
        Ok((Term::uniq(sum, joined), vec![rule]))
    }

    fn join_value(&mut self, t: &Term, a: &Term, b: &Term) -> Result<Term, EvalError> {
        match (a, b) {
            (Term::Ref(r1), Term::Ref(r2)) => {
                let (p1, id1) = self.heap.ref_binding(*r1).ok_or_else(|| EvalError::MissingResource(r1.to_string()))?;
                let (p2, id2) = self.heap.ref_binding(*r2).ok_or_else(|| EvalError::MissingResource(r2.to_string()))?;
                if id1 != id2 {
                    return Err(EvalError::Stuck(format!("joining {r1} and {r2} which point to different resources")));
                }
                let sum = p1.plus(p2).ok_or_else(|| EvalError::Stuck(format!("joining {r1} and {r2} exceeds 1")))?;
                let id = id1.to_string();
                self.heap.remove_ref(*r1);
                self.heap.remove_ref(*r2);
                let r = self.heap.fresh_ref();
                self.heap.push(Binding::Ref { name: r, perm: sum, id });
                Ok(Term::Ref(r))
            }
            (Term::Pair(a1, a2), Term::Pair(b1, b2)) => {
                let l = self.join_value(t, a1, b1)?;
                let r = self.join_value(t, a2, b2)?;
                Ok(Term::pair(l, r))
            }
            (Term::Unit, Term::Unit) => Ok(Term::Unit),
            (Term::Nat(m), Term::Nat(n)) if m == n => Ok(a.clone()),
            (Term::Float(x), Term::Float(y)) if x == y => Ok(a.clone()),
            _ => Self::stuck(t),
        }
    }
}
