//! Abstract syntax of types and terms, including the runtime-only forms
//! (`*t`, `unborrow t`, resource references) produced by the heap machine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::grade::{Grade, Permission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResKind {
    Array,
    Ref,
}

impl ResKind {
    pub fn name(self) -> &'static str {
        match self {
            ResKind::Array => "Array",
            ResKind::Ref => "Ref",
        }
    }
}

/// A permission in a type: a literal, or a prenex-bound permission variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PermExpr {
    Lit(Permission),
    Var(String),
}

impl PermExpr {
    pub fn star() -> PermExpr {
        PermExpr::Lit(Permission::Star)
    }

    pub fn lit(&self) -> Option<&Permission> {
        match self {
            PermExpr::Lit(p) => Some(p),
            PermExpr::Var(_) => None,
        }
    }
}

impl fmt::Display for PermExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PermExpr::Lit(p) => write!(f, "{p}"),
            PermExpr::Var(v) => f.write_str(v),
        }
    }
}

/// Types. `*A` is `Borrow(*, A)`; there is no separate uniqueness constructor.
#[derive(Debug, Clone)]
pub enum Type {
    Fun(Box<Type>, Box<Type>),
    Tensor(Box<Type>, Box<Type>),
    Unit,
    Graded(Grade, Box<Type>),
    Borrow(PermExpr, Box<Type>),
    Exists(String, Box<Type>),
    /// A resource indexed by an identifier. Arrays always hold `Float`.
    Res(ResKind, String, Box<Type>),
    Nat,
    Float,
}

impl Type {
    pub fn fun(a: Type, b: Type) -> Type {
        Type::Fun(Box::new(a), Box::new(b))
    }

    pub fn tensor(a: Type, b: Type) -> Type {
        Type::Tensor(Box::new(a), Box::new(b))
    }

    pub fn graded(r: Grade, a: Type) -> Type {
        Type::Graded(r, Box::new(a))
    }

    pub fn borrow(p: Permission, a: Type) -> Type {
        Type::Borrow(PermExpr::Lit(p), Box::new(a))
    }

    pub fn unique(a: Type) -> Type {
        Type::Borrow(PermExpr::star(), Box::new(a))
    }

    pub fn exists(id: impl Into<String>, a: Type) -> Type {
        Type::Exists(id.into(), Box::new(a))
    }

    pub fn array(id: impl Into<String>) -> Type {
        Type::Res(ResKind::Array, id.into(), Box::new(Type::Float))
    }

    pub fn reference(id: impl Into<String>, a: Type) -> Type {
        Type::Res(ResKind::Ref, id.into(), Box::new(a))
    }

    /// Identifiers occurring free in the type, in order of first occurrence.
    pub fn free_ids(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_ids(&mut Vec::new(), &mut out);
        out
    }

    fn collect_ids(&self, bound: &mut Vec<String>, out: &mut Vec<String>) {
        match self {
            Type::Fun(a, b) | Type::Tensor(a, b) => {
                a.collect_ids(bound, out);
                b.collect_ids(bound, out);
            }
            Type::Graded(_, a) | Type::Borrow(_, a) => a.collect_ids(bound, out),
            Type::Exists(id, a) => {
                bound.push(id.clone());
                a.collect_ids(bound, out);
                bound.pop();
            }
            Type::Res(_, id, a) => {
                if !bound.contains(id) && !out.contains(id) {
                    out.push(id.clone());
                }
                a.collect_ids(bound, out);
            }
            Type::Unit | Type::Nat | Type::Float => {}
        }
    }

    pub fn mentions_id(&self, id: &str) -> bool {
        self.free_ids().iter().any(|i| i == id)
    }

    /// Permission variables occurring in the type.
    pub fn perm_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let Type::Borrow(PermExpr::Var(v), _) = t {
                out.insert(v.clone());
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Type)) {
        f(self);
        match self {
            Type::Fun(a, b) | Type::Tensor(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Type::Graded(_, a) | Type::Borrow(_, a) | Type::Exists(_, a) | Type::Res(_, _, a) => a.visit(f),
            Type::Unit | Type::Nat | Type::Float => {}
        }
    }

    /// Capture-avoiding renaming of a free identifier.
    pub fn subst_id(&self, old: &str, new: &str) -> Type {
        match self {
            Type::Fun(a, b) => Type::fun(a.subst_id(old, new), b.subst_id(old, new)),
            Type::Tensor(a, b) => Type::tensor(a.subst_id(old, new), b.subst_id(old, new)),
            Type::Graded(r, a) => Type::graded(*r, a.subst_id(old, new)),
            Type::Borrow(p, a) => Type::Borrow(p.clone(), Box::new(a.subst_id(old, new))),
            Type::Exists(id, a) => {
                if id == old {
                    self.clone()
                } else if id == new {
                    let fresh = fresh_name(id, |n| a.mentions_id(n) || n == new || n == old);
                    let body = a.subst_id(id, &fresh).subst_id(old, new);
                    Type::exists(fresh, body)
                } else {
                    Type::exists(id.clone(), a.subst_id(old, new))
                }
            }
            Type::Res(k, id, a) => {
                let id = if id == old { new.to_string() } else { id.clone() };
                Type::Res(*k, id, Box::new(a.subst_id(old, new)))
            }
            Type::Unit | Type::Nat | Type::Float => self.clone(),
        }
    }

    pub fn subst_perm(&self, var: &str, p: &PermExpr) -> Type {
        self.map_perms(&|q| match q {
            PermExpr::Var(v) if v == var => p.clone(),
            other => other.clone(),
        })
    }

    fn map_perms(&self, f: &impl Fn(&PermExpr) -> PermExpr) -> Type {
        match self {
            Type::Fun(a, b) => Type::fun(a.map_perms(f), b.map_perms(f)),
            Type::Tensor(a, b) => Type::tensor(a.map_perms(f), b.map_perms(f)),
            Type::Graded(r, a) => Type::graded(*r, a.map_perms(f)),
            Type::Borrow(p, a) => Type::Borrow(f(p), Box::new(a.map_perms(f))),
            Type::Exists(id, a) => Type::exists(id.clone(), a.map_perms(f)),
            Type::Res(k, id, a) => Type::Res(*k, id.clone(), Box::new(a.map_perms(f))),
            Type::Unit | Type::Nat | Type::Float => self.clone(),
        }
    }

    fn alpha_eq(&self, other: &Type, env: &mut Vec<(String, String)>) -> bool {
        match (self, other) {
            (Type::Fun(a, b), Type::Fun(c, d)) | (Type::Tensor(a, b), Type::Tensor(c, d)) => {
                a.alpha_eq(c, env) && b.alpha_eq(d, env)
            }
            (Type::Unit, Type::Unit) | (Type::Nat, Type::Nat) | (Type::Float, Type::Float) => true,
            (Type::Graded(r, a), Type::Graded(s, b)) => r == s && a.alpha_eq(b, env),
            (Type::Borrow(p, a), Type::Borrow(q, b)) => p == q && a.alpha_eq(b, env),
            (Type::Exists(i, a), Type::Exists(j, b)) => {
                env.push((i.clone(), j.clone()));
                let eq = a.alpha_eq(b, env);
                env.pop();
                eq
            }
            (Type::Res(k, i, a), Type::Res(l, j, b)) => k == l && names_match(env, i, j) && a.alpha_eq(b, env),
            _ => false,
        }
    }
}

fn names_match(env: &[(String, String)], a: &str, b: &str) -> bool {
    for (x, y) in env.iter().rev() {
        if x == a || y == b {
            return x == a && y == b;
        }
    }
    a == b
}

impl PartialEq for Type {
    fn eq(&self, other: &Type) -> bool {
        self.alpha_eq(other, &mut Vec::new())
    }
}

impl Eq for Type {}

/// A top-level type with prenex permission and identifier variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheme {
    pub perm_vars: Vec<String>,
    pub name_vars: Vec<String>,
    pub ty: Type,
}

impl Scheme {
    pub fn mono(ty: Type) -> Scheme {
        Scheme { perm_vars: Vec::new(), name_vars: Vec::new(), ty }
    }

    pub fn is_mono(&self) -> bool {
        self.perm_vars.is_empty() && self.name_vars.is_empty()
    }
}

/// The eight resource primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prim {
    NewArray,
    ReadArray,
    WriteArray,
    DeleteArray,
    NewRef,
    ReadRef,
    SwapRef,
    DeleteRef,
}

impl Prim {
    pub const ALL: [Prim; 8] = [
        Prim::NewArray,
        Prim::ReadArray,
        Prim::WriteArray,
        Prim::DeleteArray,
        Prim::NewRef,
        Prim::ReadRef,
        Prim::SwapRef,
        Prim::DeleteRef,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Prim::NewArray => "newArray",
            Prim::ReadArray => "readArray",
            Prim::WriteArray => "writeArray",
            Prim::DeleteArray => "deleteArray",
            Prim::NewRef => "newRef",
            Prim::ReadRef => "readRef",
            Prim::SwapRef => "swapRef",
            Prim::DeleteRef => "deleteRef",
        }
    }

    pub fn from_name(name: &str) -> Option<Prim> {
        Prim::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Prim::ReadArray | Prim::SwapRef => 2,
            Prim::WriteArray => 3,
            _ => 1,
        }
    }

    pub fn allocates(self) -> bool {
        matches!(self, Prim::NewArray | Prim::NewRef)
    }
}

/// A heap reference (runtime only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RefName(pub u64);

impl fmt::Display for RefName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#ref{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub enum Term {
    Var(String),
    Abs(String, Option<Type>, Box<Term>),
    App(Box<Term>, Box<Term>),
    Pair(Box<Term>, Box<Term>),
    LetPair(String, String, Box<Term>, Box<Term>),
    Unit,
    LetUnit(Box<Term>, Box<Term>),
    /// `[t]`; the grade is filled in by elaboration.
    Promote(Option<Grade>, Box<Term>),
    /// `let [x] : T = t1 in t2`, where `T` annotates `t1`.
    LetBox(String, Option<Type>, Box<Term>, Box<Term>),
    Pack(String, Box<Term>),
    Unpack(String, String, Box<Term>, Box<Term>),
    WithBorrow(Box<Term>, Box<Term>),
    Split(Box<Term>),
    Join(Box<Term>),
    Push(Box<Term>),
    Pull(Box<Term>),
    /// `share t`; the grade of the resulting box is filled in by elaboration.
    Share(Option<Grade>, Box<Term>),
    /// `let *x = clone t1 as <ids> in t2`; `payload` is the elaborated type
    /// under the box of `t1`.
    Clone { var: String, ids: Vec<String>, payload: Option<Type>, source: Box<Term>, body: Box<Term> },
    Nat(u64),
    Float(f64),
    Prim(Prim),
    /// Type ascription `(t : A)`; removed by elaboration.
    Ann(Box<Term>, Type),
    /// Runtime `*t`, tagged with the permission it is viewed at.
    Uniq(Permission, Box<Term>),
    /// Runtime `unborrow t`.
    Unborrow(Box<Term>),
    /// Runtime resource reference.
    Ref(RefName),
}

/// Finite renaming of references used when cloning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenamingTheta {
    map: BTreeMap<RefName, RefName>,
}

impl RenamingTheta {
    pub fn new() -> RenamingTheta {
        RenamingTheta::default()
    }

    /// Adds `old ↦ new`. Returns false (and leaves the renaming unchanged) if
    /// this would break injectivity or make domain and range overlap.
    pub fn insert(&mut self, old: RefName, new: RefName) -> bool {
        let clash = self.map.contains_key(&old)
            || self.map.values().any(|v| *v == new || *v == old)
            || self.map.contains_key(&new)
            || old == new;
        if clash {
            return false;
        }
        self.map.insert(old, new);
        true
    }

    pub fn get(&self, r: RefName) -> Option<RefName> {
        self.map.get(&r).copied()
    }

    pub fn apply(&self, r: RefName) -> RefName {
        self.get(r).unwrap_or(r)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RefName, RefName)> + '_ {
        self.map.iter().map(|(a, b)| (*a, *b))
    }
}

pub(crate) fn fresh_name(base: &str, taken: impl Fn(&str) -> bool) -> String {
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit() || c == '_');
    let stem = if stem.is_empty() { "v" } else { stem };
    (1..)
        .map(|n| format!("{stem}_{n}"))
        .find(|cand| !taken(cand))
        .expect("unbounded supply of names")
}

impl Term {
    pub fn var(x: impl Into<String>) -> Term {
        Term::Var(x.into())
    }

    pub fn abs(x: impl Into<String>, body: Term) -> Term {
        Term::Abs(x.into(), None, Box::new(body))
    }

    pub fn abs_ann(x: impl Into<String>, ty: Type, body: Term) -> Term {
        Term::Abs(x.into(), Some(ty), Box::new(body))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    pub fn apps(f: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(f, Term::app)
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Pair(Box::new(a), Box::new(b))
    }

    pub fn let_pair(x: impl Into<String>, y: impl Into<String>, t1: Term, t2: Term) -> Term {
        Term::LetPair(x.into(), y.into(), Box::new(t1), Box::new(t2))
    }

    pub fn let_unit(t1: Term, t2: Term) -> Term {
        Term::LetUnit(Box::new(t1), Box::new(t2))
    }

    /// `let x = t1 in t2`, sugar for `(\x -> t2) t1`.
    pub fn let_in(x: impl Into<String>, t1: Term, t2: Term) -> Term {
        Term::app(Term::abs(x, t2), t1)
    }

    pub fn promote(t: Term) -> Term {
        Term::Promote(None, Box::new(t))
    }

    pub fn let_box(x: impl Into<String>, ann: Option<Type>, t1: Term, t2: Term) -> Term {
        Term::LetBox(x.into(), ann, Box::new(t1), Box::new(t2))
    }

    pub fn pack(id: impl Into<String>, t: Term) -> Term {
        Term::Pack(id.into(), Box::new(t))
    }

    pub fn unpack(id: impl Into<String>, x: impl Into<String>, t1: Term, t2: Term) -> Term {
        Term::Unpack(id.into(), x.into(), Box::new(t1), Box::new(t2))
    }

    pub fn with_borrow(f: Term, t: Term) -> Term {
        Term::WithBorrow(Box::new(f), Box::new(t))
    }

    pub fn split(t: Term) -> Term {
        Term::Split(Box::new(t))
    }

    pub fn join(t: Term) -> Term {
        Term::Join(Box::new(t))
    }

    pub fn push(t: Term) -> Term {
        Term::Push(Box::new(t))
    }

    pub fn pull(t: Term) -> Term {
        Term::Pull(Box::new(t))
    }

    pub fn share(t: Term) -> Term {
        Term::Share(None, Box::new(t))
    }

    pub fn uniq(p: Permission, t: Term) -> Term {
        Term::Uniq(p, Box::new(t))
    }

    pub fn unborrow(t: Term) -> Term {
        Term::Unborrow(Box::new(t))
    }

    /// Head and arguments of an application spine.
    pub fn spine(&self) -> (&Term, Vec<&Term>) {
        let mut args = Vec::new();
        let mut head = self;
        while let Term::App(f, a) = head {
            args.push(&**a);
            head = f;
        }
        args.reverse();
        (head, args)
    }

    /// Whether the term was written by a user, i.e. contains no runtime forms.
    pub fn is_user_writable(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |t| {
            if matches!(t, Term::Uniq(..) | Term::Unborrow(_) | Term::Ref(_)) {
                ok = false;
            }
        });
        ok
    }

    fn children(&self) -> Vec<&Term> {
        match self {
            Term::Var(_) | Term::Unit | Term::Nat(_) | Term::Float(_) | Term::Prim(_) | Term::Ref(_) => vec![],
            Term::Abs(_, _, t)
            | Term::Promote(_, t)
            | Term::Pack(_, t)
            | Term::Split(t)
            | Term::Join(t)
            | Term::Push(t)
            | Term::Pull(t)
            | Term::Share(_, t)
            | Term::Ann(t, _)
            | Term::Uniq(_, t)
            | Term::Unborrow(t) => vec![t],
            Term::App(a, b)
            | Term::Pair(a, b)
            | Term::LetPair(_, _, a, b)
            | Term::LetUnit(a, b)
            | Term::LetBox(_, _, a, b)
            | Term::Unpack(_, _, a, b)
            | Term::WithBorrow(a, b) => vec![a, b],
            Term::Clone { source, body, .. } => vec![source, body],
        }
    }

    pub fn visit(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Free term variables.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        let under = |bound: &mut Vec<String>, out: &mut BTreeSet<String>, names: &[&String], t: &Term| {
            let n = bound.len();
            bound.extend(names.iter().map(|s| (*s).clone()));
            t.collect_free(bound, out);
            bound.truncate(n);
        };
        match self {
            Term::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            Term::Abs(x, _, t) => under(bound, out, &[x], t),
            Term::LetPair(x, y, a, b) => {
                a.collect_free(bound, out);
                under(bound, out, &[x, y], b);
            }
            Term::LetBox(x, _, a, b) | Term::Unpack(_, x, a, b) => {
                a.collect_free(bound, out);
                under(bound, out, &[x], b);
            }
            Term::Clone { var, source, body, .. } => {
                source.collect_free(bound, out);
                under(bound, out, &[var], body);
            }
            _ => {
                for c in self.children() {
                    c.collect_free(bound, out);
                }
            }
        }
    }

    /// Free identifiers (in `pack`, clone lists and type annotations).
    pub fn free_ids(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_ids(&mut Vec::new(), &mut out);
        out
    }

    fn collect_ids(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        let add_ty = |ty: &Type, bound: &Vec<String>, out: &mut BTreeSet<String>| {
            for id in ty.free_ids() {
                if !bound.contains(&id) {
                    out.insert(id);
                }
            }
        };
        match self {
            Term::Abs(_, Some(ty), t) | Term::Ann(t, ty) => {
                add_ty(ty, bound, out);
                t.collect_ids(bound, out);
            }
            Term::LetBox(_, Some(ty), a, b) => {
                add_ty(ty, bound, out);
                a.collect_ids(bound, out);
                b.collect_ids(bound, out);
            }
            Term::Pack(id, t) => {
                if !bound.contains(id) {
                    out.insert(id.clone());
                }
                t.collect_ids(bound, out);
            }
            Term::Unpack(id, _, a, b) => {
                a.collect_ids(bound, out);
                bound.push(id.clone());
                b.collect_ids(bound, out);
                bound.pop();
            }
            Term::Clone { ids, payload, source, body, .. } => {
                if let Some(ty) = payload {
                    add_ty(ty, bound, out);
                }
                source.collect_ids(bound, out);
                let n = bound.len();
                bound.extend(ids.iter().cloned());
                body.collect_ids(bound, out);
                bound.truncate(n);
            }
            _ => {
                for c in self.children() {
                    c.collect_ids(bound, out);
                }
            }
        }
    }

    /// Every resource reference occurring in the term.
    pub fn refs(&self) -> BTreeSet<RefName> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let Term::Ref(r) = t {
                out.insert(*r);
            }
        });
        out
    }

    /// Applies `f` to every immediate subterm and every annotation, keeping
    /// the constructor and binders.
    fn map_children(&self, f: &mut impl FnMut(&Term) -> Term, g: &impl Fn(&Type) -> Type) -> Term {
        let b = |t: Term| Box::new(t);
        match self {
            Term::Var(_) | Term::Unit | Term::Nat(_) | Term::Float(_) | Term::Prim(_) | Term::Ref(_) => self.clone(),
            Term::Abs(x, ty, t) => Term::Abs(x.clone(), ty.as_ref().map(g), b(f(t))),
            Term::App(t1, t2) => Term::App(b(f(t1)), b(f(t2))),
            Term::Pair(t1, t2) => Term::Pair(b(f(t1)), b(f(t2))),
            Term::LetPair(x, y, t1, t2) => Term::LetPair(x.clone(), y.clone(), b(f(t1)), b(f(t2))),
            Term::LetUnit(t1, t2) => Term::LetUnit(b(f(t1)), b(f(t2))),
            Term::Promote(r, t) => Term::Promote(*r, b(f(t))),
            Term::LetBox(x, ty, t1, t2) => Term::LetBox(x.clone(), ty.as_ref().map(g), b(f(t1)), b(f(t2))),
            Term::Pack(id, t) => Term::Pack(id.clone(), b(f(t))),
            Term::Unpack(id, x, t1, t2) => Term::Unpack(id.clone(), x.clone(), b(f(t1)), b(f(t2))),
            Term::WithBorrow(t1, t2) => Term::WithBorrow(b(f(t1)), b(f(t2))),
            Term::Split(t) => Term::Split(b(f(t))),
            Term::Join(t) => Term::Join(b(f(t))),
            Term::Push(t) => Term::Push(b(f(t))),
            Term::Pull(t) => Term::Pull(b(f(t))),
            Term::Share(r, t) => Term::Share(*r, b(f(t))),
            Term::Clone { var, ids, payload, source, body } => Term::Clone {
                var: var.clone(),
                ids: ids.clone(),
                payload: payload.as_ref().map(g),
                source: b(f(source)),
                body: b(f(body)),
            },
            Term::Ann(t, ty) => Term::Ann(b(f(t)), g(ty)),
            Term::Uniq(p, t) => Term::Uniq(p.clone(), b(f(t))),
            Term::Unborrow(t) => Term::Unborrow(b(f(t))),
        }
    }

    /// Capture-avoiding substitution `self[s/x]`.
    pub fn subst(&self, x: &str, s: &Term) -> Term {
        let fv_s = s.free_vars();
        self.subst_with(x, s, &fv_s)
    }

    fn subst_with(&self, x: &str, s: &Term, fv_s: &BTreeSet<String>) -> Term {
        // renames binder `y` away from the free variables of `s` if needed
        let avoid = |y: &String, body: &Term| -> (String, Term) {
            if fv_s.contains(y) {
                let fv_b = body.free_vars();
                let fresh = fresh_name(y, |n| fv_s.contains(n) || fv_b.contains(n) || n == x);
                let renamed = body.subst(y, &Term::Var(fresh.clone()));
                (fresh, renamed)
            } else {
                (y.clone(), body.clone())
            }
        };
        match self {
            Term::Var(y) => {
                if y == x {
                    s.clone()
                } else {
                    self.clone()
                }
            }
            Term::Abs(y, ty, body) => {
                if y == x {
                    return self.clone();
                }
                let (y, body) = avoid(y, body);
                Term::Abs(y, ty.clone(), Box::new(body.subst_with(x, s, fv_s)))
            }
            Term::LetPair(y, z, t1, t2) => {
                let t1 = t1.subst_with(x, s, fv_s);
                if y == x || z == x {
                    return Term::LetPair(y.clone(), z.clone(), Box::new(t1), t2.clone());
                }
                let (y, t2) = avoid(y, t2);
                let (z, t2) = avoid(z, &t2);
                Term::LetPair(y, z, Box::new(t1), Box::new(t2.subst_with(x, s, fv_s)))
            }
            Term::LetBox(y, ty, t1, t2) => {
                let t1 = t1.subst_with(x, s, fv_s);
                if y == x {
                    return Term::LetBox(y.clone(), ty.clone(), Box::new(t1), t2.clone());
                }
                let (y, t2) = avoid(y, t2);
                Term::LetBox(y, ty.clone(), Box::new(t1), Box::new(t2.subst_with(x, s, fv_s)))
            }
            Term::Unpack(id, y, t1, t2) => {
                let t1 = t1.subst_with(x, s, fv_s);
                if y == x {
                    return Term::Unpack(id.clone(), y.clone(), Box::new(t1), t2.clone());
                }
                let (y, t2) = avoid(y, t2);
                let (id, t2) = avoid_id(id, &t2, &s.free_ids());
                Term::Unpack(id, y, Box::new(t1), Box::new(t2.subst_with(x, s, fv_s)))
            }
            Term::Clone { var, ids, payload, source, body } => {
                let source = Box::new(source.subst_with(x, s, fv_s));
                if var == x {
                    return Term::Clone { var: var.clone(), ids: ids.clone(), payload: payload.clone(), source, body: body.clone() };
                }
                let (var, mut body) = avoid(var, body);
                let ids_s = s.free_ids();
                let mut new_ids = Vec::new();
                for id in ids {
                    let (id, b) = avoid_id(id, &body, &ids_s);
                    body = b;
                    new_ids.push(id);
                }
                Term::Clone { var, ids: new_ids, payload: payload.clone(), source, body: Box::new(body.subst_with(x, s, fv_s)) }
            }
            _ => self.map_children(&mut |t| t.subst_with(x, s, fv_s), &|ty| ty.clone()),
        }
    }

    /// Renames a free identifier throughout terms and annotations.
    pub fn subst_id(&self, old: &str, new: &str) -> Term {
        let sty = |ty: &Type| ty.subst_id(old, new);
        match self {
            Term::Pack(id, t) => {
                let id = if id == old { new.to_string() } else { id.clone() };
                Term::Pack(id, Box::new(t.subst_id(old, new)))
            }
            Term::Unpack(id, x, t1, t2) => {
                let t1 = t1.subst_id(old, new);
                if id == old {
                    return Term::Unpack(id.clone(), x.clone(), Box::new(t1), t2.clone());
                }
                let taken: BTreeSet<String> = [new.to_string()].into();
                let (id, t2) = avoid_id(id, t2, &taken);
                Term::Unpack(id, x.clone(), Box::new(t1), Box::new(t2.subst_id(old, new)))
            }
            Term::Clone { var, ids, payload, source, body } => {
                let source = Box::new(source.subst_id(old, new));
                let payload = payload.as_ref().map(sty);
                if ids.iter().any(|i| i == old) {
                    return Term::Clone { var: var.clone(), ids: ids.clone(), payload, source, body: body.clone() };
                }
                let taken: BTreeSet<String> = [new.to_string()].into();
                let mut body = (**body).clone();
                let mut new_ids = Vec::new();
                for id in ids {
                    let (id, b) = avoid_id(id, &body, &taken);
                    body = b;
                    new_ids.push(id);
                }
                Term::Clone { var: var.clone(), ids: new_ids, payload, source, body: Box::new(body.subst_id(old, new)) }
            }
            _ => self.map_children(&mut |t| t.subst_id(old, new), &sty),
        }
    }

    /// Replaces a permission variable in every annotation.
    pub fn subst_perm(&self, var: &str, p: &PermExpr) -> Term {
        self.map_children(&mut |t| t.subst_perm(var, p), &|ty| ty.subst_perm(var, p))
    }

    /// Applies a reference renaming.
    pub fn rename_refs(&self, theta: &RenamingTheta) -> Term {
        match self {
            Term::Ref(r) => Term::Ref(theta.apply(*r)),
            _ => self.map_children(&mut |t| t.rename_refs(theta), &|ty| ty.clone()),
        }
    }

    /// Values: normal forms of the call-by-value machine.
    pub fn is_value(&self) -> bool {
        match self {
            Term::Pair(a, b) => a.is_value() && b.is_value(),
            Term::Unit | Term::Abs(..) | Term::Nat(_) | Term::Float(_) | Term::Prim(_) | Term::Ref(_) => true,
            Term::Promote(_, t) | Term::Pack(_, t) | Term::Uniq(_, t) => t.is_value(),
            // `unborrow *v` still reduces
            Term::Unborrow(t) => t.is_value() && !matches!(**t, Term::Uniq(..)),
            Term::App(..) => {
                let (head, args) = self.spine();
                matches!(head, Term::Prim(p) if args.len() < p.arity()) && args.iter().all(|a| a.is_value())
            }
            _ => false,
        }
    }

    fn alpha_eq(&self, other: &Term, vars: &mut Vec<(String, String)>, ids: &mut Vec<(String, String)>) -> bool {
        let ty_eq = |a: &Type, b: &Type, ids: &Vec<(String, String)>| {
            // rename bound ids of the right-hand side into the left's names
            let mut b = b.clone();
            for (l, r) in ids.iter() {
                if l != r {
                    b = b.subst_id(r, l);
                }
            }
            *a == b
        };
        let opt_ty_eq = |a: &Option<Type>, b: &Option<Type>, ids: &Vec<(String, String)>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => ty_eq(a, b, ids),
            _ => false,
        };
        match (self, other) {
            (Term::Var(a), Term::Var(b)) => names_match(vars, a, b),
            (Term::Abs(x, tx, a), Term::Abs(y, ty, b)) => {
                if !opt_ty_eq(tx, ty, ids) {
                    return false;
                }
                vars.push((x.clone(), y.clone()));
                let eq = a.alpha_eq(b, vars, ids);
                vars.pop();
                eq
            }
            (Term::App(a1, a2), Term::App(b1, b2))
            | (Term::Pair(a1, a2), Term::Pair(b1, b2))
            | (Term::LetUnit(a1, a2), Term::LetUnit(b1, b2))
            | (Term::WithBorrow(a1, a2), Term::WithBorrow(b1, b2)) => a1.alpha_eq(b1, vars, ids) && a2.alpha_eq(b2, vars, ids),
            (Term::LetPair(x1, y1, a1, a2), Term::LetPair(x2, y2, b1, b2)) => {
                if !a1.alpha_eq(b1, vars, ids) {
                    return false;
                }
                vars.push((x1.clone(), x2.clone()));
                vars.push((y1.clone(), y2.clone()));
                let eq = a2.alpha_eq(b2, vars, ids);
                vars.truncate(vars.len() - 2);
                eq
            }
            (Term::Unit, Term::Unit) => true,
            (Term::Promote(r, a), Term::Promote(s, b)) | (Term::Share(r, a), Term::Share(s, b)) => r == s && a.alpha_eq(b, vars, ids),
            (Term::LetBox(x, tx, a1, a2), Term::LetBox(y, ty, b1, b2)) => {
                if !opt_ty_eq(tx, ty, ids) || !a1.alpha_eq(b1, vars, ids) {
                    return false;
                }
                vars.push((x.clone(), y.clone()));
                let eq = a2.alpha_eq(b2, vars, ids);
                vars.pop();
                eq
            }
            (Term::Pack(i, a), Term::Pack(j, b)) => names_match(ids, i, j) && a.alpha_eq(b, vars, ids),
            (Term::Unpack(i, x, a1, a2), Term::Unpack(j, y, b1, b2)) => {
                if !a1.alpha_eq(b1, vars, ids) {
                    return false;
                }
                vars.push((x.clone(), y.clone()));
                ids.push((i.clone(), j.clone()));
                let eq = a2.alpha_eq(b2, vars, ids);
                vars.pop();
                ids.pop();
                eq
            }
            (Term::Split(a), Term::Split(b))
            | (Term::Join(a), Term::Join(b))
            | (Term::Push(a), Term::Push(b))
            | (Term::Pull(a), Term::Pull(b))
            | (Term::Unborrow(a), Term::Unborrow(b)) => a.alpha_eq(b, vars, ids),
            (
                Term::Clone { var: x, ids: is, payload: pa, source: a1, body: a2 },
                Term::Clone { var: y, ids: js, payload: pb, source: b1, body: b2 },
            ) => {
                if is.len() != js.len() || !opt_ty_eq(pa, pb, ids) || !a1.alpha_eq(b1, vars, ids) {
                    return false;
                }
                vars.push((x.clone(), y.clone()));
                let n = ids.len();
                ids.extend(is.iter().cloned().zip(js.iter().cloned()));
                let eq = a2.alpha_eq(b2, vars, ids);
                vars.pop();
                ids.truncate(n);
                eq
            }
            (Term::Nat(a), Term::Nat(b)) => a == b,
            (Term::Float(a), Term::Float(b)) => a.to_bits() == b.to_bits(),
            (Term::Prim(a), Term::Prim(b)) => a == b,
            (Term::Ann(a, ta), Term::Ann(b, tb)) => ty_eq(ta, tb, ids) && a.alpha_eq(b, vars, ids),
            (Term::Uniq(p, a), Term::Uniq(q, b)) => p == q && a.alpha_eq(b, vars, ids),
            (Term::Ref(a), Term::Ref(b)) => a == b,
            _ => false,
        }
    }
}

fn avoid_id(id: &String, body: &Term, taken: &BTreeSet<String>) -> (String, Term) {
    if taken.contains(id) {
        let ids_b = body.free_ids();
        let fresh = fresh_name(id, |n| taken.contains(n) || ids_b.contains(n));
        let renamed = body.subst_id(id, &fresh);
        (fresh, renamed)
    } else {
        (id.clone(), body.clone())
    }
}

/// Equality is alpha-equivalence on term variables and identifiers.
impl PartialEq for Term {
    fn eq(&self, other: &Term) -> bool {
        self.alpha_eq(other, &mut Vec::new(), &mut Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &str) -> Term {
        Term::var(x)
    }

    #[test]
    fn free_vars_examples() {
        let t = Term::abs("x", Term::pair(v("x"), v("y")));
        assert_eq!(t.free_vars(), ["y".to_string()].into());
        assert!(Term::Unit.free_vars().is_empty());
        let inner = Term::pair(v("a"), v("b"));
        let t = Term::unpack("id", "x", inner.clone(), v("x"));
        assert_eq!(t.free_vars(), inner.free_vars());
    }

    #[test]
    fn refs_examples() {
        let t = Term::pair(Term::Ref(RefName(1)), Term::promote(Term::Ref(RefName(2))));
        assert_eq!(t.refs(), [RefName(1), RefName(2)].into());
        assert!(Term::abs("x", v("x")).refs().is_empty());
        assert_eq!(Term::uniq(Permission::Star, Term::Ref(RefName(1))).refs(), [RefName(1)].into());
    }

    #[test]
    fn subst_examples() {
        let val = Term::Nat(3);
        assert_eq!(Term::pair(v("x"), v("y")).subst("x", &val), Term::pair(val.clone(), v("y")));
        let id = Term::abs("x", v("x"));
        assert_eq!(id.subst("x", &val), id);
        let star = Term::uniq(Permission::Star, Term::Ref(RefName(4)));
        let wb = Term::with_borrow(v("f"), v("x"));
        assert_eq!(wb.subst("x", &star), Term::with_borrow(v("f"), star.clone()));
    }

    #[test]
    fn subst_avoids_capture() {
        // (\y -> x)[y/x] must not capture
        let t = Term::abs("y", v("x"));
        let out = t.subst("x", &v("y"));
        match &out {
            Term::Abs(b, _, body) => {
                assert_ne!(b, "y");
                assert_eq!(**body, v("y"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(out.free_vars().contains("y"));
    }

    #[test]
    fn rename_refs_examples() {
        let mut theta = RenamingTheta::new();
        assert!(theta.insert(RefName(1), RefName(9)));
        let t = Term::pair(Term::Ref(RefName(1)), Term::Ref(RefName(1)));
        assert_eq!(t.rename_refs(&theta), Term::pair(Term::Ref(RefName(9)), Term::Ref(RefName(9))));
        let t = Term::pair(Term::Ref(RefName(1)), Term::Unit);
        assert_eq!(t.rename_refs(&RenamingTheta::new()), t);
        let id = Term::abs("x", v("x"));
        assert_eq!(id.rename_refs(&theta), id);
    }

    #[test]
    fn theta_stays_injective() {
        let mut theta = RenamingTheta::new();
        assert!(theta.insert(RefName(1), RefName(5)));
        assert!(!theta.insert(RefName(2), RefName(5)));
        assert!(!theta.insert(RefName(5), RefName(6)));
        assert!(!theta.insert(RefName(3), RefName(3)));
    }

    #[test]
    fn value_examples() {
        assert!(Term::pair(Term::abs("x", v("x")), Term::Unit).is_value());
        assert!(!v("x").is_value());
        let partial = Term::app(Term::Prim(Prim::ReadArray), Term::Ref(RefName(0)));
        assert!(partial.is_value());
        let full = Term::app(partial, Term::Nat(0));
        assert!(!full.is_value());
        let ub = Term::unborrow(Term::uniq(Permission::one(), Term::Ref(RefName(0))));
        assert!(!ub.is_value());
    }

    #[test]
    fn alpha_equivalence() {
        assert_eq!(Term::abs("x", v("x")), Term::abs("y", v("y")));
        assert_ne!(Term::abs("x", v("z")), Term::abs("y", v("y")));
        let a = Term::unpack("i", "x", v("t"), Term::pack("i", v("x")));
        let b = Term::unpack("j", "y", v("t"), Term::pack("j", v("y")));
        assert_eq!(a, b);
        let t1 = Type::exists("a", Type::array("a"));
        let t2 = Type::exists("b", Type::array("b"));
        assert_eq!(t1, t2);
        assert_ne!(Type::array("a"), Type::array("b"));
    }

    #[test]
    fn type_id_substitution_avoids_capture() {
        // (exists b . Array a * Array b)[b/a]
        let t = Type::exists("b", Type::tensor(Type::array("a"), Type::array("b")));
        let s = t.subst_id("a", "b");
        assert_eq!(s.free_ids(), vec!["b".to_string()]);
    }
}
