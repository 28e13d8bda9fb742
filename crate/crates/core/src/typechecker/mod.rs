//! Algorithmic typing by bottom-up usage synthesis.
//!
//! [`Checker::infer`] returns the type of a term, the exact usage of its free
//! variables and an elaborated copy of the term in which every binder is
//! annotated, every box carries its grade and top-level definitions have been
//! inlined at their (instantiated) types. Runtime forms are typed too, so the
//! same entry point re-types intermediate machine states.

mod context;

use std::collections::HashMap;

use crate::ast::{fresh_name, PermExpr, Prim, ResKind, Scheme, Term, Type};
use crate::grade::{Grade, PermError, Permission, Semiring};
use crate::parser::SourceProgram;

pub use context::{ctx_add, ctx_scale, Entry, TypeError, TypeErrorKind, TypingContext, Usage, UsageError, Use};

use TypeErrorKind as K;

type Out = (Type, Usage, Term);

fn err<T>(kind: TypeErrorKind, rule: &'static str, msg: impl Into<String>) -> Result<T, TypeError> {
    Err(TypeError::new(kind, rule, msg))
}

fn add(rule: &'static str, a: &Usage, b: &Usage) -> Result<Usage, TypeError> {
    ctx_add(a, b).map_err(|e| TypeError::from_usage(rule, e))
}

fn show(t: &Type) -> String {
    crate::parser::print_type(t)
}

/// Types whose values may be discarded without being consumed.
pub fn weakenable(ty: &Type) -> bool {
    matches!(ty, Type::Nat | Type::Float)
}

/// Types that `split` and `join` can act on: resources, scalars and
/// products of these.
pub fn splittable(ty: &Type) -> bool {
    match ty {
        Type::Res(..) | Type::Nat | Type::Float | Type::Unit => true,
        Type::Tensor(a, b) => splittable(a) && splittable(b),
        _ => false,
    }
}

fn writable(p: &PermExpr) -> bool {
    matches!(p, PermExpr::Lit(q) if q.is_writable())
}

/// Whether an allocation primitive sits in reduction position. Bodies of
/// abstractions are not inspected: nothing reduces under a lambda.
pub fn resource_allocator(t: &Term) -> bool {
    match t {
        Term::Var(_) | Term::Unit | Term::Nat(_) | Term::Float(_) | Term::Ref(_) | Term::Abs(..) => false,
        Term::Prim(p) => p.allocates(),
        Term::App(a, b)
        | Term::Pair(a, b)
        | Term::LetPair(_, _, a, b)
        | Term::LetUnit(a, b)
        | Term::LetBox(_, _, a, b)
        | Term::Unpack(_, _, a, b)
        | Term::WithBorrow(a, b) => resource_allocator(a) || resource_allocator(b),
        Term::Clone { source, body, .. } => resource_allocator(source) || resource_allocator(body),
        Term::Promote(_, a)
        | Term::Pack(_, a)
        | Term::Split(a)
        | Term::Join(a)
        | Term::Push(a)
        | Term::Pull(a)
        | Term::Share(_, a)
        | Term::Ann(a, _)
        | Term::Uniq(_, a)
        | Term::Unborrow(a) => resource_allocator(a),
    }
}

/// A checked top-level definition: its scheme and generic elaborated body.
#[derive(Debug, Clone)]
pub struct Global {
    pub scheme: Scheme,
    pub body: Term,
}

#[derive(Debug, Clone, Default)]
pub struct Checker {
    semiring: Semiring,
    globals: HashMap<String, Global>,
}

impl Checker {
    pub fn new(semiring: Semiring) -> Checker {
        Checker { semiring, globals: HashMap::new() }
    }

    pub fn semiring(&self) -> Semiring {
        self.semiring
    }

    pub fn add_global(&mut self, name: impl Into<String>, g: Global) {
        self.globals.insert(name.into(), g);
    }

    pub fn infer(&self, ctx: &mut TypingContext, t: &Term) -> Result<Out, TypeError> {
        self.synth(ctx, t, None)
    }

    pub fn check(&self, ctx: &mut TypingContext, t: &Term, expected: &Type) -> Result<(Usage, Term), TypeError> {
        let (ty, u, e) = self.synth(ctx, t, Some(expected))?;
        if ty != *expected {
            return err(K::Mismatch, "check", format!("expected {}, found {}", show(expected), show(&ty)));
        }
        Ok((u, e))
    }

    /// Infers, or checks when `expected` is given. The returned type is the
    /// synthesized one; callers compare it with `expected`.
    fn synth(&self, ctx: &mut TypingContext, t: &Term, expected: Option<&Type>) -> Result<Out, TypeError> {
        match t {
            Term::Var(x) => self.var(ctx, x, expected),
            Term::Abs(x, ann, body) => {
                let (dom, cod) = match (ann, expected) {
                    (Some(a), _) => (a.clone(), expected.and_then(codomain)),
                    (None, Some(Type::Fun(a, b))) => ((**a).clone(), Some(&**b)),
                    (None, _) => return err(K::AnnotationRequired, "abs", format!("cannot infer the type of `{x}`")),
                };
                let (b, u, body) = self.lambda(ctx, x, &dom, body, cod)?;
                Ok((Type::fun(dom.clone(), b), u, Term::Abs(x.clone(), Some(dom), Box::new(body))))
            }
            Term::App(..) => self.app(ctx, t, expected),
            Term::Pair(a, b) => {
                let (ea, eb) = match expected {
                    Some(Type::Tensor(x, y)) => (Some(&**x), Some(&**y)),
                    _ => (None, None),
                };
                let (ta, ua, a) = self.expect(ctx, a, ea)?;
                let (tb, ub, b) = self.expect(ctx, b, eb)?;
                Ok((Type::tensor(ta, tb), add("pair", &ua, &ub)?, Term::pair(a, b)))
            }
            Term::LetPair(x, y, t1, t2) => {
                let (t1ty, u1, e1) = self.infer(ctx, t1)?;
                let Type::Tensor(a, b) = t1ty else {
                    return err(K::Mismatch, "letPair", format!("expected a pair, found {}", show(&t1ty)));
                };
                ctx.push(Entry::Linear(x.clone(), (*a).clone()));
                ctx.push(Entry::Linear(y.clone(), (*b).clone()));
                let res = self.expect(ctx, t2, expected);
                ctx.truncate(ctx.len() - 2);
                let (ty, mut u2, e2) = res?;
                self.close_linear("letPair", &mut u2, y, &b)?;
                self.close_linear("letPair", &mut u2, x, &a)?;
                Ok((ty, add("letPair", &u1, &u2)?, Term::let_pair(x.clone(), y.clone(), e1, e2)))
            }
            Term::Unit => Ok((Type::Unit, Usage::empty(), Term::Unit)),
            Term::LetUnit(t1, t2) => {
                let (u1, e1) = self.check(ctx, t1, &Type::Unit)?;
                let (ty, u2, e2) = self.expect(ctx, t2, expected)?;
                Ok((ty, add("letUnit", &u1, &u2)?, Term::let_unit(e1, e2)))
            }
            Term::Promote(g, inner) => {
                let (r, a) = match (g, expected) {
                    (Some(r), _) => (*r, None),
                    (None, Some(Type::Graded(r, a))) => (*r, Some(&**a)),
                    (None, _) => return err(K::AnnotationRequired, "pr", "the grade of this box cannot be inferred"),
                };
                self.promote(ctx, inner, r, a)
            }
            Term::LetBox(x, ann, t1, t2) => self.let_box(ctx, x, ann.as_ref(), t1, t2, expected),
            Term::Pack(id, inner) => {
                let e = match expected {
                    Some(Type::Exists(b, a)) => Some(a.subst_id(b, id)),
                    _ => None,
                };
                let (a, u, e1) = self.expect(ctx, inner, e.as_ref())?;
                Ok((Type::exists(id.clone(), a), u, Term::pack(id.clone(), e1)))
            }
            Term::Unpack(id, x, t1, t2) => {
                let (t1ty, u1, e1) = self.infer(ctx, t1)?;
                let Type::Exists(b, a) = t1ty else {
                    return err(K::Mismatch, "unpack", format!("expected an existential, found {}", show(&t1ty)));
                };
                let (id, t2) = self.fresh_id(ctx, id, t2, expected);
                let a = a.subst_id(&b, &id);
                ctx.push(Entry::Name(id.clone()));
                ctx.push(Entry::Linear(x.clone(), a.clone()));
                let res = self.expect(ctx, &t2, expected);
                ctx.truncate(ctx.len() - 2);
                let (ty, mut u2, e2) = res?;
                self.close_linear("unpack", &mut u2, x, &a)?;
                if ty.mentions_id(&id) {
                    return err(K::IdEscapes, "unpack", format!("identifier `{id}` escapes in {}", show(&ty)));
                }
                Ok((ty, add("unpack", &u1, &u2)?, Term::unpack(id, x.clone(), e1, e2)))
            }
            Term::WithBorrow(f, arg) => {
                let (targ, ua, ea) = self.infer(ctx, arg)?;
                let a = match targ {
                    Type::Borrow(PermExpr::Lit(Permission::Star), a) => *a,
                    other => {
                        return err(K::Mismatch, "withBorrow", format!("can only borrow a unique value, found {}", show(&other)))
                    }
                };
                let dom = Type::borrow(Permission::one(), a);
                let (cod, uf, ef) = self.apply_to(ctx, f, &dom, None)?;
                let b = match cod {
                    Type::Borrow(PermExpr::Lit(p), b) if p == Permission::one() => *b,
                    other => {
                        return err(
                            K::Mismatch,
                            "withBorrow",
                            format!("the borrowing function must return & 1, found {}", show(&other)),
                        )
                    }
                };
                Ok((Type::unique(b), add("withBorrow", &uf, &ua)?, Term::with_borrow(ef, ea)))
            }
            Term::Split(inner) => {
                let (ty, u, e) = self.infer(ctx, inner)?;
                let Type::Borrow(p, a) = ty else {
                    return err(K::Mismatch, "split", format!("expected a borrow, found {}", show(&ty)));
                };
                let half = match &p {
                    PermExpr::Lit(q) => q.half().map_err(|e| perm_error("split", e))?,
                    PermExpr::Var(v) => {
                        return err(K::StarNotDivisible, "split", format!("permission variable `{v}` may stand for *"))
                    }
                };
                if !splittable(&a) {
                    return err(K::Mismatch, "split", format!("cannot split a borrow of {}", show(&a)));
                }
                let part = Type::borrow(half, (*a).clone());
                Ok((Type::tensor(part.clone(), part), u, Term::split(e)))
            }
            Term::Join(inner) => {
                let (ty, u, e) = self.infer(ctx, inner)?;
                let (p, a, q, b) = match ty {
                    Type::Tensor(l, r) => match (*l, *r) {
                        (Type::Borrow(p, a), Type::Borrow(q, b)) => (p, a, q, b),
                        (l, r) => {
                            let shown = show(&Type::tensor(l, r));
                            return err(K::Mismatch, "join", format!("expected a pair of borrows, found {shown}"));
                        }
                    },
                    other => return err(K::Mismatch, "join", format!("expected a pair of borrows, found {}", show(&other))),
                };
                if a != b {
                    return err(K::Mismatch, "join", format!("cannot join borrows of {} and {}", show(&a), show(&b)));
                }
                let sum = match (&p, &q) {
                    (PermExpr::Lit(p), PermExpr::Lit(q)) => p.plus(q).map_err(|e| perm_error("join", e))?,
                    _ => return err(K::StarNotAddable, "join", "permission variables may stand for * and cannot be added"),
                };
                Ok((Type::borrow(sum, *a), u, Term::join(e)))
            }
            Term::Push(inner) => {
                let (ty, u, e) = self.infer(ctx, inner)?;
                match ty {
                    Type::Borrow(p, ab) => match *ab {
                        Type::Tensor(a, b) => {
                            let ty = Type::tensor(Type::Borrow(p.clone(), a), Type::Borrow(p, b));
                            Ok((ty, u, Term::push(e)))
                        }
                        other => err(K::Mismatch, "push", format!("expected a borrowed pair, found {}", show(&other))),
                    },
                    other => err(K::Mismatch, "push", format!("expected a borrowed pair, found {}", show(&other))),
                }
            }
            Term::Pull(inner) => {
                let (ty, u, e) = self.infer(ctx, inner)?;
                let shown = show(&ty);
                if let Type::Tensor(l, r) = ty {
                    if let (Type::Borrow(p, a), Type::Borrow(q, b)) = (*l, *r) {
                        if p != q {
                            return err(K::Mismatch, "pull", format!("components are borrowed at {p} and {q}"));
                        }
                        return Ok((Type::Borrow(p, Box::new(Type::tensor(*a, *b))), u, Term::pull(e)));
                    }
                }
                err(K::Mismatch, "pull", format!("expected a pair of borrows, found {shown}"))
            }
            Term::Share(g, inner) => {
                let (r, a) = match (g, expected) {
                    (Some(r), _) => (*r, None),
                    (None, Some(Type::Graded(r, a))) => (*r, Some(Type::unique((**a).clone()))),
                    (None, _) => return err(K::AnnotationRequired, "share", "the grade of a shared value needs an annotation"),
                };
                let (ty, u, e) = self.expect(ctx, inner, a.as_ref())?;
                match ty {
                    Type::Borrow(PermExpr::Lit(Permission::Star), a) => {
                        Ok((Type::Graded(r, a), u, Term::Share(Some(r), Box::new(e))))
                    }
                    other => err(K::Mismatch, "share", format!("can only share a unique value, found {}", show(&other))),
                }
            }
            Term::Clone { var, ids, source, body, .. } => self.clone_term(ctx, var, ids, source, body, expected),
            Term::Nat(n) => Ok((Type::Nat, Usage::empty(), Term::Nat(*n))),
            Term::Float(x) => Ok((Type::Float, Usage::empty(), Term::Float(*x))),
            Term::Prim(p) => match expected {
                Some(Type::Fun(dom, _)) => Ok((self.prim_type(*p, dom)?, Usage::empty(), t.clone())),
                _ => err(K::AnnotationRequired, p.name(), "a bare primitive needs an expected type"),
            },
            Term::Ann(inner, ty) => {
                let (u, e) = self.check(ctx, inner, ty)?;
                Ok((ty.clone(), u, e))
            }
            Term::Uniq(p, inner) => {
                let e = match expected {
                    Some(Type::Borrow(PermExpr::Lit(q), a)) if q == p => Some(&**a),
                    _ => None,
                };
                let (a, u, e) = self.expect(ctx, inner, e)?;
                Ok((Type::borrow(p.clone(), a), u, Term::uniq(p.clone(), e)))
            }
            Term::Unborrow(inner) => {
                let (ty, u, e) = self.infer(ctx, inner)?;
                match ty {
                    Type::Borrow(PermExpr::Lit(p), b) if p == Permission::one() => Ok((Type::unique(*b), u, Term::unborrow(e))),
                    other => err(K::Mismatch, "unborrow", format!("expected a & 1 borrow, found {}", show(&other))),
                }
            }
            Term::Ref(r) => match ctx.lookup_ref(*r) {
                Some((k, id, a)) => Ok((Type::Res(k, id.to_string(), Box::new(a.clone())), Usage::empty(), t.clone())),
                None => err(K::UnboundVariable, "ref", format!("unknown reference {r}")),
            },
        }
    }

    /// `synth` followed by the equality check when a type is expected.
    fn expect(&self, ctx: &mut TypingContext, t: &Term, expected: Option<&Type>) -> Result<Out, TypeError> {
        match expected {
            Some(e) => {
                let (u, t) = self.check(ctx, t, e)?;
                Ok((e.clone(), u, t))
            }
            None => self.infer(ctx, t),
        }
    }

    fn var(&self, ctx: &TypingContext, x: &str, expected: Option<&Type>) -> Result<Out, TypeError> {
        match ctx.lookup_var(x) {
            Some(Entry::Linear(_, a)) => Ok((a.clone(), Usage::linear(x), Term::var(x))),
            // dereliction: a graded assumption used once
            Some(Entry::Graded(_, a, _)) => Ok((a.clone(), Usage::graded(x, self.semiring.one()), Term::var(x))),
            _ => match self.globals.get(x) {
                Some(_) => {
                    let (ty, body) = self.instantiate(x, expected, false)?;
                    Ok((ty, Usage::empty(), body))
                }
                None => err(K::UnboundVariable, "var", format!("unbound variable `{x}`")),
            },
        }
    }

    fn lambda(
        &self,
        ctx: &mut TypingContext,
        x: &str,
        dom: &Type,
        body: &Term,
        cod: Option<&Type>,
    ) -> Result<Out, TypeError> {
        ctx.push(Entry::Linear(x.to_string(), dom.clone()));
        let res = self.expect(ctx, body, cod);
        ctx.pop();
        let (b, mut u, e) = res?;
        self.close_linear("abs", &mut u, x, dom)?;
        Ok((b, u, e))
    }

    fn close_linear(&self, rule: &'static str, u: &mut Usage, x: &str, ty: &Type) -> Result<(), TypeError> {
        match u.remove(x) {
            Some(Use::Linear) => Ok(()),
            Some(Use::Graded(_)) => err(K::Mismatch, rule, format!("linear variable `{x}` used as graded")),
            None if weakenable(ty) => Ok(()),
            None => err(K::LinearUnused, rule, format!("linear variable `{x}` is never used")),
        }
    }

    fn close_graded(&self, rule: &'static str, u: &mut Usage, x: &str, r: &Grade) -> Result<Grade, TypeError> {
        let used = match u.remove(x) {
            None => self.semiring.zero(),
            Some(Use::Graded(g)) => g,
            Some(Use::Linear) => self.semiring.one(),
        };
        if !used.leq(r).map_err(|e| TypeError::from_grade(rule, e))? {
            return err(K::GradeExceeded, rule, format!("`{x}` is used at grade {used} but only {r} is available"));
        }
        Ok(used)
    }

    fn promote(&self, ctx: &mut TypingContext, inner: &Term, r: Grade, a: Option<&Type>) -> Result<Out, TypeError> {
        if r.semiring() != self.semiring {
            return err(K::InstanceMismatch, "pr", format!("grade {r} is from the {} semiring", r.semiring()));
        }
        if resource_allocator(inner) {
            return err(K::PromotionOfAllocator, "pr", "a resource allocator cannot be promoted");
        }
        let (ty, u, e) = self.expect(ctx, inner, a)?;
        let u = ctx_scale(&r, &u).map_err(|e| TypeError::from_usage("pr", e))?;
        Ok((Type::graded(r, ty), u, Term::Promote(Some(r), Box::new(e))))
    }

    fn let_box(
        &self,
        ctx: &mut TypingContext,
        x: &str,
        ann: Option<&Type>,
        t1: &Term,
        t2: &Term,
        expected: Option<&Type>,
    ) -> Result<Out, TypeError> {
        // `let [x] = [t] in ..` without annotation: the grade is x's usage
        if let (None, Term::Promote(None, inner)) = (ann, t1) {
            if resource_allocator(inner) {
                return err(K::PromotionOfAllocator, "pr", "a resource allocator cannot be promoted");
            }
            let (a, _, _) = self.infer(&mut ctx.clone(), inner)?;
            ctx.push(Entry::Graded(x.to_string(), a.clone(), None));
            let res = self.expect(ctx, t2, expected);
            ctx.pop();
            let (ty, mut u2, e2) = res?;
            let r = match u2.remove(x) {
                None => self.semiring.zero(),
                Some(Use::Graded(g)) => g,
                Some(Use::Linear) => self.semiring.one(),
            };
            let (boxed, u1, e1) = self.promote(ctx, inner, r, Some(&a))?;
            return Ok((ty, add("elim", &u1, &u2)?, Term::let_box(x, Some(boxed), e1, e2)));
        }
        let (t1ty, u1, e1) = self.expect(ctx, t1, ann)?;
        let Type::Graded(r, a) = &t1ty else {
            return err(K::Mismatch, "elim", format!("expected a box, found {}", show(&t1ty)));
        };
        ctx.push(Entry::Graded(x.to_string(), (**a).clone(), Some(*r)));
        let res = self.expect(ctx, t2, expected);
        ctx.pop();
        let (ty, mut u2, e2) = res?;
        self.close_graded("approx", &mut u2, x, r)?;
        Ok((ty, add("elim", &u1, &u2)?, Term::let_box(x, Some(t1ty.clone()), e1, e2)))
    }

    /// Renames a bound identifier away from those already in scope.
    fn fresh_id(&self, ctx: &TypingContext, id: &str, body: &Term, expected: Option<&Type>) -> (String, Term) {
        let clashes = |n: &str| ctx.has_name(n) || expected.is_some_and(|e| e.mentions_id(n));
        if !clashes(id) {
            return (id.to_string(), body.clone());
        }
        let used = body.free_ids();
        let fresh = fresh_name(id, |n| clashes(n) || used.contains(n));
        let renamed = body.subst_id(id, &fresh);
        (fresh, renamed)
    }

    fn clone_term(
        &self,
        ctx: &mut TypingContext,
        var: &str,
        ids: &[String],
        source: &Term,
        body: &Term,
        expected: Option<&Type>,
    ) -> Result<Out, TypeError> {
        let (sty, u1, e1) = self.infer(ctx, source)?;
        let Type::Graded(_, a) = &sty else {
            return err(K::Mismatch, "clone", format!("can only clone a box, found {}", show(&sty)));
        };
        let old = a.free_ids();
        if old.len() != ids.len() {
            return err(
                K::Mismatch,
                "clone",
                format!("{} identifiers given but {} has {}", ids.len(), show(a), old.len()),
            );
        }
        let base = ctx.len();
        let mut body = body.clone();
        let mut new_ids = Vec::new();
        for id in ids {
            let (fresh, b) = self.fresh_id(ctx, id, &body, None);
            body = b;
            ctx.push(Entry::Name(fresh.clone()));
            new_ids.push(fresh);
        }
        let payload = rename_ids(a, &old, &new_ids);
        ctx.push(Entry::Linear(var.to_string(), Type::unique(payload.clone())));
        let inner_expected = expected.and_then(|e| peel_exists(e, &new_ids));
        let res = self.expect(ctx, &body, inner_expected.as_ref());
        ctx.truncate(base);
        let (bty, mut u2, e2) = res?;
        self.close_linear("clone", &mut u2, var, &payload)?;
        let ty = new_ids.iter().rev().fold(bty, |t, id| Type::exists(id.clone(), t));
        let e = Term::Clone {
            var: var.to_string(),
            ids: new_ids,
            payload: Some((**a).clone()),
            source: Box::new(e1),
            body: Box::new(e2),
        };
        Ok((ty, add("clone", &u1, &u2)?, e))
    }

    fn app(&self, ctx: &mut TypingContext, t: &Term, expected: Option<&Type>) -> Result<Out, TypeError> {
        let (head, args) = t.spine();
        if let Term::Prim(p) = head {
            return self.prim_app(ctx, *p, &args);
        }
        let Term::App(f, a) = t else { unreachable!("app called on an application") };
        let deferred = match &**f {
            Term::Abs(_, None, _) => true,
            Term::Var(g) => ctx.lookup_var(g).is_none() && self.globals.get(g).is_some_and(|g| !g.scheme.is_mono()),
            _ => false,
        };
        if deferred {
            let (ta, ua, ea) = self.infer(ctx, a)?;
            let (cod, uf, ef) = self.apply_to(ctx, f, &ta, expected)?;
            return Ok((cod, add("app", &uf, &ua)?, Term::app(ef, ea)));
        }
        let (tf, uf, ef) = self.infer(ctx, f)?;
        let Type::Fun(dom, cod) = tf else {
            return err(K::Mismatch, "app", format!("applying a non-function of type {}", show(&tf)));
        };
        let (ua, ea) = self.check(ctx, a, &dom)?;
        Ok((*cod, add("app", &uf, &ua)?, Term::app(ef, ea)))
    }

    /// Types `f` as a function from `dom`, returning the codomain.
    fn apply_to(
        &self,
        ctx: &mut TypingContext,
        f: &Term,
        dom: &Type,
        cod: Option<&Type>,
    ) -> Result<Out, TypeError> {
        match f {
            Term::Abs(x, ann, body) => {
                if let Some(a) = ann {
                    if a != dom {
                        return err(K::Mismatch, "app", format!("expected {}, found {}", show(a), show(dom)));
                    }
                }
                let (b, u, e) = self.lambda(ctx, x, dom, body, cod)?;
                Ok((b, u, Term::Abs(x.clone(), Some(dom.clone()), Box::new(e))))
            }
            Term::Var(g) if ctx.lookup_var(g).is_none() && self.globals.contains_key(g) => {
                let (ty, body) = self.instantiate(g, Some(dom), true)?;
                match ty {
                    Type::Fun(_, b) => Ok((*b, Usage::empty(), body)),
                    other => err(K::Mismatch, "app", format!("`{g}` has non-function type {}", show(&other))),
                }
            }
            Term::Prim(p) => match self.prim_type(*p, dom)? {
                Type::Fun(_, b) => Ok((*b, Usage::empty(), f.clone())),
                _ => unreachable!("primitive types are functions"),
            },
            _ => {
                let (tf, u, e) = self.infer(ctx, f)?;
                match tf {
                    Type::Fun(a, b) if *a == *dom => Ok((*b, u, e)),
                    other => err(
                        K::Mismatch,
                        "app",
                        format!("expected a function from {}, found {}", show(dom), show(&other)),
                    ),
                }
            }
        }
    }

    fn prim_app(&self, ctx: &mut TypingContext, p: Prim, args: &[&Term]) -> Result<Out, TypeError> {
        let (t0, mut usage, e0) = match p {
            Prim::NewArray => {
                let (u, e) = self.check(ctx, args[0], &Type::Nat)?;
                (Type::Nat, u, e)
            }
            _ => self.infer(ctx, args[0])?,
        };
        let mut ty = self.prim_type(p, &t0)?;
        let mut term = Term::Prim(p);
        for (i, arg) in args.iter().enumerate() {
            let Type::Fun(dom, cod) = ty else {
                return err(K::Mismatch, p.name(), format!("{} takes {} arguments", p.name(), p.arity()));
            };
            let e = if i == 0 {
                e0.clone()
            } else {
                let (u, e) = self.check(ctx, arg, &dom)?;
                usage = add(p.name(), &usage, &u)?;
                e
            };
            term = Term::app(term, e);
            ty = *cod;
        }
        Ok((ty, usage, term))
    }

    /// The full type of a primitive, determined by its first argument.
    pub fn prim_type(&self, p: Prim, first: &Type) -> Result<Type, TypeError> {
        let rule = p.name();
        let bad = |what: &str| err(K::Mismatch, rule, format!("{rule} expects {what}, found {}", show(first)));
        let borrowed = |kind: ResKind| match first {
            Type::Borrow(q, r) => match &**r {
                Type::Res(k, id, a) if *k == kind => Some((q.clone(), id.clone(), (**a).clone())),
                _ => None,
            },
            _ => None,
        };
        let f = Type::fun;
        match p {
            Prim::NewArray => {
                if *first != Type::Nat {
                    return bad("Nat");
                }
                Ok(f(Type::Nat, Type::exists("id", Type::unique(Type::array("id")))))
            }
            Prim::NewRef => {
                let ids = first.free_ids();
                let id = if ids.iter().any(|i| i == "id") { fresh_name("id", |n| ids.iter().any(|i| i == n)) } else { "id".into() };
                Ok(f(first.clone(), Type::exists(id.clone(), Type::unique(Type::reference(id, first.clone())))))
            }
            Prim::ReadArray => match borrowed(ResKind::Array) {
                Some(_) => Ok(f(first.clone(), f(Type::Nat, Type::tensor(Type::Float, first.clone())))),
                None => bad("a borrowed array"),
            },
            Prim::WriteArray => match borrowed(ResKind::Array) {
                Some((q, _, _)) if !writable(&q) => {
                    err(K::PermissionNotWritable, rule, format!("writing needs permission 1 or *, found {q}"))
                }
                Some(_) => Ok(f(first.clone(), f(Type::Nat, f(Type::Float, first.clone())))),
                None => bad("a borrowed array"),
            },
            Prim::DeleteArray => match borrowed(ResKind::Array) {
                Some((PermExpr::Lit(Permission::Star), _, _)) => Ok(f(first.clone(), Type::Unit)),
                _ => bad("a unique array"),
            },
            Prim::ReadRef => match borrowed(ResKind::Ref) {
                Some((q, id, Type::Graded(g, a))) => {
                    let Some(r) = g.predecessor() else {
                        return err(K::GradeExceeded, rule, format!("a reference graded {g} cannot be read again"));
                    };
                    let after = Type::Borrow(q, Box::new(Type::reference(id, Type::graded(r, (*a).clone()))));
                    Ok(f(first.clone(), Type::tensor(*a, after)))
                }
                _ => bad("a borrowed reference to a box"),
            },
            Prim::SwapRef => match borrowed(ResKind::Ref) {
                Some((q, _, _)) if !writable(&q) => {
                    err(K::PermissionNotWritable, rule, format!("swapping needs permission 1 or *, found {q}"))
                }
                Some((_, _, a)) => Ok(f(first.clone(), f(a.clone(), Type::tensor(a, first.clone())))),
                None => bad("a borrowed reference"),
            },
            Prim::DeleteRef => match borrowed(ResKind::Ref) {
                Some((PermExpr::Lit(Permission::Star), _, a)) => Ok(f(first.clone(), a)),
                _ => bad("a unique reference"),
            },
        }
    }

    /// Instantiates a top-level definition, matching either its whole type
    /// or (when `domain_only`) its domain against `hint`.
    fn instantiate(&self, name: &str, hint: Option<&Type>, domain_only: bool) -> Result<(Type, Term), TypeError> {
        let g = &self.globals[name];
        if g.scheme.is_mono() {
            return Ok((g.scheme.ty.clone(), g.body.clone()));
        }
        let pattern = match (&g.scheme.ty, domain_only) {
            (Type::Fun(a, _), true) => &**a,
            (ty, _) => ty,
        };
        let Some(actual) = hint else {
            return err(K::AnnotationRequired, "var", format!("cannot instantiate `{name}` without an expected type"));
        };
        let mut m = Matcher::new(&g.scheme);
        if !m.go(pattern, actual, &mut Vec::new()) {
            return err(K::Mismatch, "var", format!("`{name}` cannot be used at {}", show(actual)));
        }
        let mut ty = g.scheme.ty.clone();
        let mut body = g.body.clone();
        // two phases so that swapped instantiations do not collide
        for (i, v) in g.scheme.perm_vars.iter().enumerate() {
            let tmp = PermExpr::Var(format!("%p{i}"));
            ty = ty.subst_perm(v, &tmp);
            body = body.subst_perm(v, &tmp);
        }
        for (i, v) in g.scheme.name_vars.iter().enumerate() {
            ty = ty.subst_id(v, &format!("%n{i}"));
            body = body.subst_id(v, &format!("%n{i}"));
        }
        for (i, v) in g.scheme.perm_vars.iter().enumerate() {
            let Some(p) = m.perms.get(v) else {
                return err(K::AnnotationRequired, "var", format!("cannot determine `{v}` when using `{name}`"));
            };
            ty = ty.subst_perm(&format!("%p{i}"), p);
            body = body.subst_perm(&format!("%p{i}"), p);
        }
        for (i, v) in g.scheme.name_vars.iter().enumerate() {
            let Some(id) = m.ids.get(v) else {
                return err(K::AnnotationRequired, "var", format!("cannot determine `{v}` when using `{name}`"));
            };
            ty = ty.subst_id(&format!("%n{i}"), id);
            body = body.subst_id(&format!("%n{i}"), id);
        }
        Ok((ty, body))
    }
}

fn codomain(t: &Type) -> Option<&Type> {
    match t {
        Type::Fun(_, b) => Some(b),
        _ => None,
    }
}

fn perm_error(rule: &'static str, e: PermError) -> TypeError {
    let kind = match e {
        PermError::StarNotDivisible => K::StarNotDivisible,
        PermError::StarNotAddable => K::StarNotAddable,
        PermError::PermissionOverflow(_) | PermError::OutOfRange(_) => K::PermissionOverflow,
    };
    TypeError::new(kind, rule, e.to_string())
}

/// Simultaneous renaming of identifiers.
fn rename_ids(ty: &Type, old: &[String], new: &[String]) -> Type {
    let mut out = ty.clone();
    for (i, o) in old.iter().enumerate() {
        out = out.subst_id(o, &format!("%c{i}"));
    }
    for (i, n) in new.iter().enumerate() {
        out = out.subst_id(&format!("%c{i}"), n);
    }
    out
}

fn peel_exists(ty: &Type, ids: &[String]) -> Option<Type> {
    let mut cur = ty.clone();
    for id in ids {
        match cur {
            Type::Exists(b, a) => cur = a.subst_id(&b, id),
            _ => return None,
        }
    }
    Some(cur)
}

struct Matcher<'s> {
    scheme: &'s Scheme,
    perms: HashMap<String, PermExpr>,
    ids: HashMap<String, String>,
}

impl<'s> Matcher<'s> {
    fn new(scheme: &'s Scheme) -> Matcher<'s> {
        Matcher { scheme, perms: HashMap::new(), ids: HashMap::new() }
    }

    fn go(&mut self, pat: &Type, act: &Type, bound: &mut Vec<(String, String)>) -> bool {
        match (pat, act) {
            (Type::Fun(a, b), Type::Fun(c, d)) | (Type::Tensor(a, b), Type::Tensor(c, d)) => {
                self.go(a, c, bound) && self.go(b, d, bound)
            }
            (Type::Unit, Type::Unit) | (Type::Nat, Type::Nat) | (Type::Float, Type::Float) => true,
            (Type::Graded(r, a), Type::Graded(s, b)) => r == s && self.go(a, b, bound),
            (Type::Borrow(p, a), Type::Borrow(q, b)) => {
                let ok = match p {
                    PermExpr::Var(v) if self.scheme.perm_vars.contains(v) => {
                        self.perms.entry(v.clone()).or_insert_with(|| q.clone()) == q
                    }
                    _ => p == q,
                };
                ok && self.go(a, b, bound)
            }
            (Type::Exists(i, a), Type::Exists(j, b)) => {
                bound.push((i.clone(), j.clone()));
                let ok = self.go(a, b, bound);
                bound.pop();
                ok
            }
            (Type::Res(k, i, a), Type::Res(l, j, b)) => {
                if k != l {
                    return false;
                }
                let ok = if let Some((_, bj)) = bound.iter().rev().find(|(bi, _)| bi == i) {
                    bj == j
                } else if bound.iter().any(|(_, bj)| bj == j) {
                    false
                } else if self.scheme.name_vars.contains(i) {
                    self.ids.entry(i.clone()).or_insert_with(|| j.clone()) == j
                } else {
                    i == j
                };
                ok && self.go(a, b, bound)
            }
            _ => false,
        }
    }
}

/// Result of checking a whole program.
#[derive(Debug, Clone)]
pub struct CheckedProgram {
    pub semiring: Semiring,
    /// Every definition with its generalized scheme, in source order.
    pub defs: Vec<(String, Scheme)>,
    /// `main`'s type and fully elaborated, closed body.
    pub main: Option<(Type, Term)>,
}

/// Implicitly generalizes free permission variables and identifiers.
pub fn generalize(s: &Scheme) -> Scheme {
    let mut perm_vars = s.perm_vars.clone();
    for v in s.ty.perm_vars() {
        if !perm_vars.contains(&v) {
            perm_vars.push(v);
        }
    }
    let mut name_vars = s.name_vars.clone();
    for id in s.ty.free_ids() {
        if !name_vars.contains(&id) {
            name_vars.push(id);
        }
    }
    Scheme { perm_vars, name_vars, ty: s.ty.clone() }
}

/// Checks every definition in order; earlier definitions are in scope for
/// later ones.
pub fn check_program(p: &SourceProgram) -> Result<CheckedProgram, Vec<TypeError>> {
    let semiring = p.semiring;
    let mut checker = Checker::new(semiring);
    let mut errors = Vec::new();
    let mut defs = Vec::new();
    let mut main = None;
    for d in &p.defs {
        let scheme = generalize(&d.scheme);
        let result = check_definition(&checker, &d.name, &scheme);
        let located = |mut e: TypeError| {
            e.definition = Some((d.name.clone(), d.line, d.col));
            e
        };
        match result.and_then(|_| checker.check_body(&d.name, &scheme, &d.body)) {
            Ok(body) => {
                defs.push((d.name.clone(), scheme.clone()));
                if d.name == "main" {
                    main = Some((scheme.ty.clone(), body));
                } else {
                    checker.add_global(d.name.clone(), Global { scheme, body });
                }
            }
            Err(e) => errors.push(located(e)),
        }
    }
    if errors.is_empty() {
        Ok(CheckedProgram { semiring, defs, main })
    } else {
        Err(errors)
    }
}

fn check_definition(_checker: &Checker, name: &str, scheme: &Scheme) -> Result<(), TypeError> {
    if name == "main" && !scheme.is_mono() {
        return err(K::Mismatch, "def", "main must have a closed, monomorphic type");
    }
    Ok(())
}

impl Checker {
    fn check_body(&self, name: &str, scheme: &Scheme, body: &Term) -> Result<Term, TypeError> {
        let mut ctx = TypingContext::new(self.semiring);
        for id in &scheme.name_vars {
            ctx.push(Entry::Name(id.clone()));
        }
        let (_, e) = self.check(&mut ctx, body, &scheme.ty)?;
        if name != "main" {
            if resource_allocator(&e) {
                return err(K::PromotionOfAllocator, "def", format!("`{name}` allocates and cannot be reused"));
            }
            if !e.is_value() {
                return err(K::NotAValue, "def", format!("`{name}` must be a value"));
            }
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_program, parse_term, parse_type};

    fn s() -> Semiring {
        Semiring::NatOrdered
    }

    fn infer_in(ctx: &mut TypingContext, src: &str) -> Result<Out, TypeError> {
        Checker::new(ctx.semiring).infer(ctx, &parse_term(src, ctx.semiring).unwrap())
    }

    fn kind_of(src: &str) -> TypeErrorKind {
        let p = parse_program(src).unwrap();
        check_program(&p).unwrap_err()[0].kind
    }

    #[test]
    fn worked_example() {
        let mut ctx = TypingContext::new(s());
        ctx.push(Entry::Graded("y".into(), Type::Unit, Some(s().nat(2))));
        let (ty, u, _) = infer_in(&mut ctx, r"(\x -> (x, y)) ((), y)").unwrap();
        assert_eq!(ty, Type::tensor(Type::tensor(Type::Unit, Type::Unit), Type::Unit));
        assert_eq!(u, Usage::graded("y", s().nat(2)));
    }

    #[test]
    fn identity_at_annotated_type() {
        let mut ctx = TypingContext::new(s());
        let (ty, u, _) = infer_in(&mut ctx, r"\(x : Nat) -> x").unwrap();
        assert_eq!(ty, Type::fun(Type::Nat, Type::Nat));
        assert!(u.is_empty());
    }

    #[test]
    fn half_borrow_is_not_writable() {
        let mut ctx = TypingContext::new(s());
        ctx.push(Entry::Name("id".into()));
        ctx.push(Entry::Linear("b".into(), parse_type("& 1/2 (Array id Float)", s()).unwrap()));
        let e = infer_in(&mut ctx, "writeArray b 0 1.0").unwrap_err();
        assert_eq!(e.kind, K::PermissionNotWritable);
    }

    #[test]
    fn allocator_promotion_is_rejected() {
        let src = "main : Unit\nmain = let [x] : ((*(Array id Float)) [2]) = [newArray 1] in ()";
        assert_eq!(kind_of(src), K::PromotionOfAllocator);
    }

    #[test]
    fn allocator_examples() {
        let t = |s: &str| parse_term(s, Semiring::NatOrdered).unwrap();
        assert!(resource_allocator(&t("newArray 1")));
        assert!(!resource_allocator(&t(r"\x -> newArray x")));
        assert!(resource_allocator(&t("([newRef ()], ())")));
    }

    #[test]
    fn linear_discipline() {
        assert_eq!(kind_of("f : Unit -o Unit * Unit\nf x = (x, x)\nmain : Unit\nmain = ()"), K::LinearReuse);
        assert_eq!(kind_of("f : Unit -o Unit\nf x = ()\nmain : Unit\nmain = ()"), K::LinearUnused);
        assert_eq!(kind_of("f : Unit -o Unit [2]\nf x = [x]\nmain : Unit\nmain = ()"), K::LinearUnderPromotion);
    }

    #[test]
    fn grades_are_checked_at_binders() {
        let over = "f : Unit [1] -o Unit * Unit\nf b = let [y] = b in (y, y)\nmain : Unit\nmain = ()";
        assert_eq!(kind_of(over), K::GradeExceeded);
        let exact = "#semiring nat\nf : Unit [2] -o Unit\nf b = let [y] = b in y\nmain : Unit\nmain = ()";
        assert_eq!(kind_of(exact), K::GradeExceeded);
        let loose = "f : Unit [2] -o Unit\nf b = let [y] = b in y\nmain : Unit\nmain = ()";
        assert!(check_program(&parse_program(loose).unwrap()).is_ok());
    }

    #[test]
    fn split_and_join_accounting() {
        let mut ctx = TypingContext::new(s());
        ctx.push(Entry::Name("a".into()));
        ctx.push(Entry::Linear("b".into(), parse_type("& 1 (Array a Float)", s()).unwrap()));
        let (ty, _, _) = infer_in(&mut ctx, "let (x, y) = split b in join (x, y)").unwrap();
        assert_eq!(ty, parse_type("& 1 (Array a Float)", s()).unwrap());

        let mut ctx = TypingContext::new(s());
        ctx.push(Entry::Name("a".into()));
        ctx.push(Entry::Linear("b".into(), parse_type("* (Array a Float)", s()).unwrap()));
        assert_eq!(infer_in(&mut ctx, "split b").unwrap_err().kind, K::StarNotDivisible);
    }

    #[test]
    fn unpack_rejects_escaping_ids() {
        let src = "main : Unit\nmain = unpack <i, a> = newArray 3 in a";
        let errs = check_program(&parse_program(src).unwrap()).unwrap_err();
        assert!(matches!(errs[0].kind, K::IdEscapes | K::Mismatch));
        let ok = "main : Unit\nmain = unpack <i, a> = newArray 3 in deleteArray a";
        assert!(check_program(&parse_program(ok).unwrap()).is_ok());
    }

    #[test]
    fn permission_polymorphism_instantiates() {
        let src = "observe : forall {p : Permission} . & p (Array a Float) -o & p (Array a Float)\n\
                   observe x = x\n\
                   main : Unit\n\
                   main = unpack <i, arr> = newArray 2 in\n  \
                   deleteArray (withBorrow (\\b -> let (x, y) = split b in join (observe x, y)) arr)";
        let checked = check_program(&parse_program(src).unwrap()).unwrap();
        assert_eq!(checked.main.unwrap().0, Type::Unit);
    }

    #[test]
    fn abstract_permissions_cannot_write() {
        let src = "poke : forall {p : Permission} . & p (Array a Float) -o & p (Array a Float)\n\
                   poke x = writeArray x 0 1.0\n\
                   main : Unit\nmain = ()";
        assert_eq!(kind_of(src), K::PermissionNotWritable);
    }
}
