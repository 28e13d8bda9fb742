use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ast::{RefName, ResKind, Type};
use crate::grade::{Grade, GradeError, Semiring};

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Linear(String, Type),
    /// A graded assumption `x : [A]_r`. `None` marks a grade that is being
    /// inferred from the body's usage.
    Graded(String, Type, Option<Grade>),
    Name(String),
    RuntimeRef(RefName, ResKind, String, Type),
}

/// Ordered typing context; later entries shadow earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct TypingContext {
    pub semiring: Semiring,
    entries: Vec<Entry>,
}

impl TypingContext {
    pub fn new(semiring: Semiring) -> TypingContext {
        TypingContext { semiring, entries: Vec::new() }
    }

    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    pub fn pop(&mut self) {
        self.entries.pop();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.entries.truncate(n);
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn lookup_var(&self, x: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| matches!(e, Entry::Linear(y, _) | Entry::Graded(y, _, _) if y == x))
    }

    pub fn lookup_ref(&self, r: RefName) -> Option<(ResKind, &str, &Type)> {
        self.entries.iter().rev().find_map(|e| match e {
            Entry::RuntimeRef(q, k, id, a) if *q == r => Some((*k, id.as_str(), a)),
            _ => None,
        })
    }

    pub fn has_name(&self, id: &str) -> bool {
        self.entries.iter().any(|e| match e {
            Entry::Name(n) => n == id,
            Entry::RuntimeRef(_, _, n, _) => n == id,
            _ => false,
        })
    }
}

/// How a single variable was used by a term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Use {
    Linear,
    Graded(Grade),
}

/// Synthesized usage of the free variables of a term.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Usage {
    vars: BTreeMap<String, Use>,
}

impl Usage {
    pub fn empty() -> Usage {
        Usage::default()
    }

    pub fn linear(x: impl Into<String>) -> Usage {
        Usage { vars: [(x.into(), Use::Linear)].into() }
    }

    pub fn graded(x: impl Into<String>, r: Grade) -> Usage {
        Usage { vars: [(x.into(), Use::Graded(r))].into() }
    }

    pub fn from_grades(grades: BTreeMap<String, Grade>) -> Usage {
        Usage { vars: grades.into_iter().map(|(x, g)| (x, Use::Graded(g))).collect() }
    }

    pub fn get(&self, x: &str) -> Option<&Use> {
        self.vars.get(x)
    }

    pub fn remove(&mut self, x: &str) -> Option<Use> {
        self.vars.remove(x)
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Use)> {
        self.vars.iter()
    }

    pub fn has_linear(&self) -> Option<&str> {
        self.vars.iter().find(|(_, u)| **u == Use::Linear).map(|(x, _)| x.as_str())
    }

    /// The usage of every variable as a grade, reading a linear use as `1`.
    pub fn as_grades(&self, semiring: Semiring) -> BTreeMap<String, Grade> {
        self.vars
            .iter()
            .map(|(x, u)| {
                let g = match u {
                    Use::Linear => semiring.one(),
                    Use::Graded(g) => *g,
                };
                (x.clone(), g)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UsageError {
    #[error("linear variable `{0}` is used more than once")]
    LinearReuse(String),
    #[error("linear variable `{0}` is used under a promotion")]
    LinearUnderPromotion(String),
    #[error("variable `{0}` is used both linearly and as a graded assumption")]
    MixedUse(String),
    #[error(transparent)]
    Grade(#[from] GradeError),
}

/// Context addition: graded usages add, linear uses must be disjoint.
pub fn ctx_add(g1: &Usage, g2: &Usage) -> Result<Usage, UsageError> {
    let mut out = g1.clone();
    for (x, u) in &g2.vars {
        let merged = match (out.vars.get(x), u) {
            (None, u) => u.clone(),
            (Some(Use::Linear), Use::Linear) => return Err(UsageError::LinearReuse(x.clone())),
            (Some(Use::Graded(a)), Use::Graded(b)) => Use::Graded(a.plus(b)?),
            _ => return Err(UsageError::MixedUse(x.clone())),
        };
        out.vars.insert(x.clone(), merged);
    }
    Ok(out)
}

/// Scalar multiplication `r · Γ`; undefined on linear assumptions.
pub fn ctx_scale(r: &Grade, g: &Usage) -> Result<Usage, UsageError> {
    let mut out = Usage::empty();
    for (x, u) in &g.vars {
        match u {
            Use::Linear => return Err(UsageError::LinearUnderPromotion(x.clone())),
            Use::Graded(s) => {
                out.vars.insert(x.clone(), Use::Graded(r.times(s)?));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TypeErrorKind {
    LinearReuse,
    LinearUnused,
    LinearUnderPromotion,
    GradeExceeded,
    InstanceMismatch,
    PromotionOfAllocator,
    PermissionNotWritable,
    StarNotDivisible,
    StarNotAddable,
    PermissionOverflow,
    IdEscapes,
    Mismatch,
    UnboundVariable,
    AnnotationRequired,
    NotAValue,
}

impl TypeErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            TypeErrorKind::LinearReuse => "LinearReuse",
            TypeErrorKind::LinearUnused => "LinearUnused",
            TypeErrorKind::LinearUnderPromotion => "LinearUnderPromotion",
            TypeErrorKind::GradeExceeded => "GradeExceeded",
            TypeErrorKind::InstanceMismatch => "InstanceMismatch",
            TypeErrorKind::PromotionOfAllocator => "PromotionOfAllocator",
            TypeErrorKind::PermissionNotWritable => "PermissionNotWritable",
            TypeErrorKind::StarNotDivisible => "StarNotDivisible",
            TypeErrorKind::StarNotAddable => "StarNotAddable",
            TypeErrorKind::PermissionOverflow => "PermissionOverflow",
            TypeErrorKind::IdEscapes => "IdEscapes",
            TypeErrorKind::Mismatch => "Mismatch",
            TypeErrorKind::UnboundVariable => "UnboundVariable",
            TypeErrorKind::AnnotationRequired => "AnnotationRequired",
            TypeErrorKind::NotAValue => "NotAValue",
        }
    }
}

impl fmt::Display for TypeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rejection, naming the typing rule whose premise failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("[{kind}] rule {rule}: {message}")]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub rule: &'static str,
    pub message: String,
    /// Definition the error was found in, with its source position.
    pub definition: Option<(String, usize, usize)>,
}

impl TypeError {
    pub fn new(kind: TypeErrorKind, rule: &'static str, message: impl Into<String>) -> TypeError {
        TypeError { kind, rule, message: message.into(), definition: None }
    }

    pub fn from_usage(rule: &'static str, e: UsageError) -> TypeError {
        let kind = match &e {
            UsageError::LinearReuse(_) | UsageError::MixedUse(_) => TypeErrorKind::LinearReuse,
            UsageError::LinearUnderPromotion(_) => TypeErrorKind::LinearUnderPromotion,
            UsageError::Grade(_) => TypeErrorKind::InstanceMismatch,
        };
        TypeError::new(kind, rule, e.to_string())
    }

    pub fn from_grade(rule: &'static str, e: GradeError) -> TypeError {
        TypeError::new(TypeErrorKind::InstanceMismatch, rule, e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addition_examples() {
        let s = Semiring::NatOrdered;
        let y1 = Usage::graded("y", s.one());
        assert_eq!(ctx_add(&y1, &y1).unwrap(), Usage::graded("y", s.nat(2)));
        let x = Usage::linear("x");
        assert_eq!(ctx_add(&x, &x), Err(UsageError::LinearReuse("x".into())));
        assert_eq!(ctx_add(&Usage::empty(), &x).unwrap(), x);
    }

    #[test]
    fn scaling_examples() {
        let s = Semiring::NatOrdered;
        let y1 = Usage::graded("y", s.one());
        assert_eq!(ctx_scale(&s.nat(2), &y1).unwrap(), Usage::graded("y", s.nat(2)));
        assert_eq!(ctx_scale(&s.nat(5), &Usage::empty()).unwrap(), Usage::empty());
        let err = ctx_scale(&s.nat(3), &Usage::linear("x")).unwrap_err();
        assert_eq!(err, UsageError::LinearUnderPromotion("x".into()));
    }

    #[test]
    fn mixing_instances_is_reported() {
        let a = Usage::graded("y", Semiring::NatOrdered.one());
        let b = Usage::graded("y", Semiring::Interval.one());
        assert!(matches!(ctx_add(&a, &b), Err(UsageError::Grade(_))));
    }
}
