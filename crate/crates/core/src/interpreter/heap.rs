use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::{json, Value};

use crate::ast::{fresh_name, RefName, RenamingTheta, ResKind, Term, Type};
use crate::grade::{Grade, HeapPerm, Semiring};
use crate::parser::{print_term, print_type};
use crate::typechecker::{Checker, Entry, TypingContext};

use super::EvalError;

/// An array as the chain `init[n]=v...`, one binding per index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArrTerm {
    cells: BTreeMap<u64, f64>,
}

impl ArrTerm {
    pub fn init() -> ArrTerm {
        ArrTerm::default()
    }

    pub fn cells(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.cells.iter().map(|(k, v)| (*k, *v))
    }
}

/// Reads index `n`; unwritten cells read as `0.0`.
pub fn arr_read(a: &ArrTerm, n: u64) -> f64 {
    a.cells.get(&n).copied().unwrap_or(0.0)
}

pub fn arr_write(a: &ArrTerm, n: u64, x: f64) -> ArrTerm {
    let mut out = a.clone();
    out.cells.insert(n, x);
    out
}

impl fmt::Display for ArrTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("init")?;
        for (n, x) in &self.cells {
            write!(f, "[{n}]={}", print_term(&Term::Float(*x)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resource {
    Array(ArrTerm),
    /// The value stored in a polymorphic reference.
    Ref(Term),
}

impl Resource {
    pub fn kind(&self) -> ResKind {
        match self {
            Resource::Array(_) => ResKind::Array,
            Resource::Ref(_) => ResKind::Ref,
        }
    }

    pub fn refs(&self) -> BTreeSet<RefName> {
        match self {
            Resource::Array(_) => BTreeSet::new(),
            Resource::Ref(v) => v.refs(),
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resource::Array(a) => write!(f, "{a}"),
            Resource::Ref(v) => f.write_str(&print_term(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    /// `x ↦_r v : A`. `grade` is the annotation as bound; `used` counts the
    /// demand already served by lookups.
    Var { name: String, grade: Grade, used: Grade, value: Term, ty: Option<Type> },
    Ref { name: RefName, perm: HeapPerm, id: String },
    Res { id: String, resource: Resource },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heap {
    pub semiring: Semiring,
    bindings: Vec<Binding>,
    next: u64,
}

impl Heap {
    pub fn new(semiring: Semiring) -> Heap {
        Heap { semiring, bindings: Vec::new(), next: 0 }
    }

    pub fn bindings(&self) -> &[Binding] {
        &self.bindings
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// Keeps the first `n` bindings.
    pub fn truncate(&mut self, n: usize) {
        self.bindings.truncate(n);
    }

    pub fn push(&mut self, b: Binding) {
        self.bindings.push(b);
    }

    /// Binds a variable with nothing used yet.
    pub fn bind_var(&mut self, name: impl Into<String>, grade: Grade, value: Term, ty: Option<Type>) {
        let used = self.semiring.zero();
        self.push(Binding::Var { name: name.into(), grade, used, value, ty });
    }

    pub fn var(&self, x: &str) -> Option<&Binding> {
        self.bindings.iter().rev().find(|b| matches!(b, Binding::Var { name, .. } if name == x))
    }

    fn var_mut(&mut self, x: &str) -> Option<&mut Binding> {
        self.bindings.iter_mut().rev().find(|b| matches!(b, Binding::Var { name, .. } if name == x))
    }

    /// Heap-var: serves a demand of `s` from `x`'s grade.
    pub fn lookup(&mut self, x: &str, s: &Grade) -> Result<Term, EvalError> {
        let Some(Binding::Var { grade, used, value, .. }) = self.var_mut(x) else {
            return Err(EvalError::Stuck(format!("variable `{x}` is not in the heap")));
        };
        let demand = used.plus(s)?;
        if grade.residual(&demand)?.is_none() {
            return Err(EvalError::GradeUnderflow { var: x.to_string(), grade: *grade, demand });
        }
        *used = demand;
        Ok(value.clone())
    }

    /// What is left of `x`'s grade after the lookups so far.
    pub fn residual(&self, x: &str) -> Option<Grade> {
        match self.var(x)? {
            Binding::Var { grade, used, .. } => grade.residual(used).ok().flatten(),
            _ => None,
        }
    }

    pub fn ref_binding(&self, r: RefName) -> Option<(&HeapPerm, &str)> {
        self.bindings.iter().find_map(|b| match b {
            Binding::Ref { name, perm, id } if *name == r => Some((perm, id.as_str())),
            _ => None,
        })
    }

    pub fn resource(&self, id: &str) -> Option<&Resource> {
        self.bindings.iter().find_map(|b| match b {
            Binding::Res { id: i, resource } if i == id => Some(resource),
            _ => None,
        })
    }

    pub fn resource_mut(&mut self, id: &str) -> Option<&mut Resource> {
        self.bindings.iter_mut().find_map(|b| match b {
            Binding::Res { id: i, resource } if i == id => Some(resource),
            _ => None,
        })
    }

    /// The resource a reference points to.
    pub fn deref(&self, r: RefName) -> Result<(&str, &Resource), EvalError> {
        let (_, id) = self.ref_binding(r).ok_or_else(|| EvalError::MissingResource(r.to_string()))?;
        let res = self.resource(id).ok_or_else(|| EvalError::MissingResource(id.to_string()))?;
        Ok((id, res))
    }

    pub fn remove_ref(&mut self, r: RefName) -> Option<(HeapPerm, String)> {
        let i = self.bindings.iter().position(|b| matches!(b, Binding::Ref { name, .. } if *name == r))?;
        match self.bindings.remove(i) {
            Binding::Ref { perm, id, .. } => Some((perm, id)),
            _ => unreachable!(),
        }
    }

    pub fn remove_res(&mut self, id: &str) -> Option<Resource> {
        let i = self.bindings.iter().position(|b| matches!(b, Binding::Res { id: j, .. } if j == id))?;
        match self.bindings.remove(i) {
            Binding::Res { resource, .. } => Some(resource),
            _ => unreachable!(),
        }
    }

    pub fn set_perm(&mut self, r: RefName, p: HeapPerm) {
        for b in &mut self.bindings {
            if let Binding::Ref { name, perm, .. } = b {
                if *name == r {
                    *perm = p.clone();
                }
            }
        }
    }

    pub fn var_names(&self) -> BTreeSet<String> {
        self.bindings
            .iter()
            .filter_map(|b| match b {
                Binding::Var { name, .. } => Some(name.clone()),
                _ => None,
            })
            .collect()
    }

    /// Every identifier the heap knows about, including those mentioned only
    /// in variable types.
    pub fn ids(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for b in &self.bindings {
            match b {
                Binding::Var { ty, value, .. } => {
                    out.extend(ty.iter().flat_map(Type::free_ids));
                    out.extend(value.free_ids());
                }
                Binding::Ref { id, .. } | Binding::Res { id, .. } => {
                    out.insert(id.clone());
                }
            }
        }
        out
    }

    pub fn refs(&self) -> BTreeSet<RefName> {
        self.bindings
            .iter()
            .filter_map(|b| match b {
                Binding::Ref { name, .. } => Some(*name),
                _ => None,
            })
            .collect()
    }

    /// A variable name based on `base` that is not bound in the heap.
    pub fn fresh_var(&self, base: &str) -> String {
        let taken = self.var_names();
        if !taken.contains(base) {
            return base.to_string();
        }
        fresh_name(base, |n| taken.contains(n))
    }

    pub fn fresh_ref(&mut self) -> RefName {
        let taken = self.refs();
        loop {
            let r = RefName(self.next);
            self.next += 1;
            if !taken.contains(&r) {
                return r;
            }
        }
    }

    /// A fresh identifier, also avoiding `avoid` (free ids of the term).
    pub fn fresh_id(&mut self, avoid: &BTreeSet<String>) -> String {
        let taken = self.ids();
        loop {
            let id = format!("id{}", self.next);
            self.next += 1;
            if !taken.contains(&id) && !avoid.contains(&id) {
                return id;
            }
        }
    }

    /// Deep-copies the resources reachable from `refs`, appending the copy.
    /// Returns the renaming of references and the old-to-new identifier map.
    pub fn copy(&mut self, refs: &BTreeSet<RefName>, avoid: &BTreeSet<String>) -> Result<(RenamingTheta, Vec<(String, String)>), EvalError> {
        // close over references stored inside copied references
        let mut todo: Vec<RefName> = refs.iter().copied().collect();
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        while let Some(r) = todo.pop() {
            if !seen.insert(r) {
                continue;
            }
            let (_, res) = self.deref(r)?;
            todo.extend(res.refs());
            order.push(r);
        }
        order.sort();
        let mut theta = RenamingTheta::new();
        let mut ids: Vec<(String, String)> = Vec::new();
        let mut fragment = Vec::new();
        for r in &order {
            let new = self.fresh_ref();
            theta.insert(*r, new);
        }
        for r in &order {
            let (id, res) = self.deref(*r)?;
            let (id, res) = (id.to_string(), res.clone());
            let new_id = match ids.iter().find(|(o, _)| *o == id) {
                Some((_, n)) => n.clone(),
                None => {
                    let n = self.fresh_id(avoid);
                    let copied = match res {
                        Resource::Array(a) => Resource::Array(a),
                        Resource::Ref(v) => Resource::Ref(v.rename_refs(&theta)),
                    };
                    fragment.push(Binding::Res { id: n.clone(), resource: copied });
                    ids.push((id, n.clone()));
                    n
                }
            };
            fragment.push(Binding::Ref { name: theta.apply(*r), perm: HeapPerm::one(), id: new_id });
        }
        // resources are bound before their references
        fragment.sort_by_key(|b| !matches!(b, Binding::Res { .. }));
        self.bindings.extend(fragment);
        Ok((theta, ids))
    }

    /// Typing context for runtime terms over this heap: identifiers as
    /// names, references with the type of their resource, variables as
    /// graded assumptions.
    pub fn context(&self) -> TypingContext {
        let mut ctx = TypingContext::new(self.semiring);
        for id in self.ids() {
            ctx.push(Entry::Name(id));
        }
        // stored values may mention other references: type them to a fixpoint
        let checker = Checker::new(self.semiring);
        let mut pending: Vec<(RefName, String, &Resource)> = self
            .bindings
            .iter()
            .filter_map(|b| match b {
                Binding::Ref { name, id, .. } => self.resource(id).map(|res| (*name, id.clone(), res)),
                _ => None,
            })
            .collect();
        loop {
            let before = pending.len();
            pending.retain(|(r, id, res)| {
                let ty = match res {
                    Resource::Array(_) => Some(Type::Float),
                    Resource::Ref(v) => checker.infer(&mut ctx.clone(), v).ok().map(|(t, _, _)| t),
                };
                match ty {
                    Some(a) => {
                        ctx.push(Entry::RuntimeRef(*r, res.kind(), id.clone(), a));
                        false
                    }
                    None => true,
                }
            });
            if pending.is_empty() || pending.len() == before {
                break;
            }
        }
        for b in &self.bindings {
            if let Binding::Var { name, grade, ty: Some(a), .. } = b {
                ctx.push(Entry::Graded(name.clone(), a.clone(), Some(*grade)));
            }
        }
        ctx
    }

    /// Infers the type of a value against the current heap.
    pub fn type_of(&self, v: &Term) -> Option<Type> {
        let checker = Checker::new(self.semiring);
        checker.infer(&mut self.context(), v).ok().map(|(t, _, _)| t)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.bindings
                .iter()
                .map(|b| match b {
                    Binding::Var { name, grade, used, value, ty } => json!({
                        "sort": "var",
                        "name": name,
                        "grade": grade.to_string(),
                        "used": used.to_string(),
                        "value": print_term(value),
                        "type": ty.as_ref().map(print_type),
                    }),
                    Binding::Ref { name, perm, id } => json!({
                        "sort": "ref",
                        "name": name.to_string(),
                        "perm": perm.to_string(),
                        "id": id,
                    }),
                    Binding::Res { id, resource } => json!({
                        "sort": "res",
                        "id": id,
                        "kind": resource.kind().name(),
                        "resource": resource.to_string(),
                    }),
                })
                .collect(),
        )
    }
}

impl fmt::Display for Heap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .bindings
            .iter()
            .map(|b| match b {
                Binding::Var { name, grade, value, ty, .. } => match ty {
                    Some(a) => format!("{name} ->[{grade}] {} : {}", print_term(value), print_type(a)),
                    None => format!("{name} ->[{grade}] {}", print_term(value)),
                },
                Binding::Ref { name, perm, id } => format!("{name} ->{{{perm}}} {id}"),
                Binding::Res { id, resource } => format!("{id} -> {resource}"),
            })
            .collect();
        f.write_str(&parts.join(", "))
    }
}

/// `[H]_0`: every reference annotation set to zero.
pub fn heap_zero_perms(h: &Heap) -> Heap {
    let mut out = h.clone();
    for b in &mut out.bindings {
        if let Binding::Ref { perm, .. } = b {
            *perm = HeapPerm::zero();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr_heap() -> (Heap, RefName) {
        let mut h = Heap::new(Semiring::NatOrdered);
        let r = h.fresh_ref();
        h.push(Binding::Res { id: "id".into(), resource: Resource::Array(arr_write(&ArrTerm::init(), 0, 1.0)) });
        h.push(Binding::Ref { name: r, perm: HeapPerm::zero(), id: "id".into() });
        (h, r)
    }

    #[test]
    fn array_reads() {
        assert_eq!(arr_read(&ArrTerm::init(), 3), 0.0);
        assert_eq!(arr_read(&arr_write(&ArrTerm::init(), 0, 1.0), 0), 1.0);
        let twice = arr_write(&arr_write(&ArrTerm::init(), 0, 1.0), 0, 2.0);
        assert_eq!(arr_read(&twice, 0), 2.0);
        assert_eq!(twice.to_string(), "init[0]=2.0");
    }

    #[test]
    fn zeroing_permissions() {
        let (mut h, r) = arr_heap();
        h.set_perm(r, HeapPerm::one());
        let z = heap_zero_perms(&h);
        assert!(z.ref_binding(r).unwrap().0.is_zero());
        assert_eq!(z.resource("id"), h.resource("id"));
        assert!(heap_zero_perms(&Heap::new(Semiring::NatOrdered)).is_empty());
    }

    #[test]
    fn copy_is_independent() {
        let (mut h, r) = arr_heap();
        let (theta, ids) = h.copy(&[r].into(), &BTreeSet::new()).unwrap();
        let r2 = theta.apply(r);
        assert_ne!(r2, r);
        let (perm, id2) = h.ref_binding(r2).unwrap();
        assert_eq!(*perm, HeapPerm::one());
        assert_eq!(ids, vec![("id".to_string(), id2.to_string())]);
        let id2 = id2.to_string();
        if let Some(Resource::Array(a)) = h.resource_mut("id") {
            *a = arr_write(a, 0, 9.0);
        }
        match h.resource(&id2) {
            Some(Resource::Array(a)) => assert_eq!(arr_read(a, 0), 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn copy_follows_nested_references() {
        let (mut h, inner) = arr_heap();
        let outer = h.fresh_ref();
        h.push(Binding::Res { id: "o".into(), resource: Resource::Ref(Term::promote(Term::Ref(inner))) });
        h.push(Binding::Ref { name: outer, perm: HeapPerm::zero(), id: "o".into() });
        let (theta, ids) = h.copy(&[outer].into(), &BTreeSet::new()).unwrap();
        assert!(theta.get(inner).is_some() && theta.get(outer).is_some());
        assert_eq!(ids.len(), 2);
        let (_, res) = h.deref(theta.apply(outer)).unwrap();
        assert_eq!(res.refs(), [theta.apply(inner)].into());
    }

    #[test]
    fn copy_of_nothing() {
        let mut h = Heap::new(Semiring::NatOrdered);
        let (theta, ids) = h.copy(&BTreeSet::new(), &BTreeSet::new()).unwrap();
        assert!(theta.is_empty() && ids.is_empty() && h.is_empty());
    }

    #[test]
    fn lookups_consume_grade() {
        let s = Semiring::NatOrdered;
        let mut h = Heap::new(s);
        h.bind_var("y", s.nat(2), Term::Unit, Some(Type::Unit));
        h.lookup("y", &s.one()).unwrap();
        h.lookup("y", &s.one()).unwrap();
        assert_eq!(h.residual("y"), Some(s.zero()));
        assert!(matches!(h.lookup("y", &s.one()), Err(EvalError::GradeUnderflow { .. })));
    }
}
