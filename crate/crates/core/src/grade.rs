//! Grade algebra: the pluggable pre-ordered semirings that index the `[r]`
//! modality, and the exact-fraction permissions that index `&p`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// The semiring instances shipped with the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Semiring {
    /// Naturals with the discrete order: usage must be exact.
    NatDiscrete,
    /// Naturals with `<=`: grades are upper bounds on usage.
    #[default]
    NatOrdered,
    /// Intervals `lo..hi` of naturals ordered by inclusion.
    Interval,
}

impl Semiring {
    pub const ALL: [Semiring; 3] = [Semiring::NatDiscrete, Semiring::NatOrdered, Semiring::Interval];

    /// Parses the pragma / command-line spelling.
    pub fn from_name(name: &str) -> Option<Semiring> {
        match name {
            "nat" => Some(Semiring::NatDiscrete),
            "nat-leq" => Some(Semiring::NatOrdered),
            "interval" => Some(Semiring::Interval),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Semiring::NatDiscrete => "nat",
            Semiring::NatOrdered => "nat-leq",
            Semiring::Interval => "interval",
        }
    }

    pub fn zero(self) -> Grade {
        self.nat(0)
    }

    pub fn one(self) -> Grade {
        self.nat(1)
    }

    /// The grade denoted by a natural literal. Under intervals `n` means `n..n`.
    pub fn nat(self, n: u64) -> Grade {
        let value = match self {
            Semiring::Interval => GradeValue::Interval(n, n),
            _ => GradeValue::Nat(n),
        };
        Grade { semiring: self, value }
    }

    pub fn interval(self, lo: u64, hi: u64) -> Result<Grade, GradeError> {
        if self != Semiring::Interval {
            return Err(GradeError::NotAnInterval(self));
        }
        if lo > hi {
            return Err(GradeError::EmptyInterval { lo, hi });
        }
        Ok(Grade { semiring: self, value: GradeValue::Interval(lo, hi) })
    }
}

impl fmt::Display for Semiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradeValue {
    Nat(u64),
    Interval(u64, u64),
}

/// An element of one of the [`Semiring`] instances, tagged with its instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grade {
    semiring: Semiring,
    value: GradeValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GradeError {
    #[error("grade instance mismatch: {left} vs {right}")]
    InstanceMismatch { left: Semiring, right: Semiring },
    #[error("interval grades are not available in the {0} semiring")]
    NotAnInterval(Semiring),
    #[error("empty interval {lo}..{hi}")]
    EmptyInterval { lo: u64, hi: u64 },
}

impl Grade {
    pub fn semiring(&self) -> Semiring {
        self.semiring
    }

    pub fn value(&self) -> GradeValue {
        self.value
    }

    fn same_instance(&self, other: &Grade) -> Result<(), GradeError> {
        if self.semiring == other.semiring {
            Ok(())
        } else {
            Err(GradeError::InstanceMismatch { left: self.semiring, right: other.semiring })
        }
    }

    fn bounds(&self) -> (u64, u64) {
        match self.value {
            GradeValue::Nat(n) => (n, n),
            GradeValue::Interval(lo, hi) => (lo, hi),
        }
    }

    fn with_bounds(&self, lo: u64, hi: u64) -> Grade {
        let value = match self.value {
            GradeValue::Nat(_) => GradeValue::Nat(lo),
            GradeValue::Interval(..) => GradeValue::Interval(lo, hi),
        };
        Grade { semiring: self.semiring, value }
    }

    /// Semiring addition. Arithmetic saturates at `u64::MAX`.
    pub fn plus(&self, other: &Grade) -> Result<Grade, GradeError> {
        self.same_instance(other)?;
        let (a, b) = self.bounds();
        let (c, d) = other.bounds();
        Ok(self.with_bounds(a.saturating_add(c), b.saturating_add(d)))
    }

    /// Semiring multiplication (componentwise on intervals of naturals).
    pub fn times(&self, other: &Grade) -> Result<Grade, GradeError> {
        self.same_instance(other)?;
        let (a, b) = self.bounds();
        let (c, d) = other.bounds();
        Ok(self.with_bounds(a.saturating_mul(c), b.saturating_mul(d)))
    }

    /// The instance pre-order `self ⊑ other`.
    pub fn leq(&self, other: &Grade) -> Result<bool, GradeError> {
        self.same_instance(other)?;
        Ok(match (self.value, other.value) {
            (GradeValue::Nat(a), GradeValue::Nat(b)) => match self.semiring {
                Semiring::NatDiscrete => a == b,
                _ => a <= b,
            },
            (GradeValue::Interval(a, b), GradeValue::Interval(c, d)) => c <= a && b <= d,
            _ => unreachable!("grade payload does not match its instance"),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.bounds() == (0, 0)
    }

    /// The largest `r'` with `used + r' ⊑ self`, if any exists.
    ///
    /// This is the side condition `∃r'. s + r' ≡ r` of variable lookup and of
    /// heap compatibility.
    pub fn residual(&self, used: &Grade) -> Result<Option<Grade>, GradeError> {
        self.same_instance(used)?;
        let (r_lo, r_hi) = self.bounds();
        let (s_lo, s_hi) = used.bounds();
        if s_hi > r_hi {
            return Ok(None);
        }
        let hi = r_hi - s_hi;
        let rest = match self.value {
            GradeValue::Nat(_) => self.with_bounds(hi, hi),
            GradeValue::Interval(..) => {
                let lo = r_lo.saturating_sub(s_lo);
                if lo > hi {
                    return Ok(None);
                }
                self.with_bounds(lo, hi)
            }
        };
        Ok(used.plus(&rest)?.leq(self)?.then_some(rest))
    }

    /// The exact `r` with `r + 1 = self`, if there is one.
    pub fn predecessor(&self) -> Option<Grade> {
        let (lo, hi) = self.bounds();
        (lo >= 1).then(|| self.with_bounds(lo - 1, hi - 1))
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            GradeValue::Nat(n) => write!(f, "{n}"),
            GradeValue::Interval(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

/// A fraction `q` with `0 < q <= 1`, kept in lowest terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fraction(BigRational);

impl Fraction {
    pub fn new(q: BigRational) -> Result<Fraction, PermError> {
        if q.is_positive() && q <= BigRational::one() {
            Ok(Fraction(q))
        } else {
            Err(PermError::OutOfRange(q.to_string()))
        }
    }

    pub fn one() -> Fraction {
        Fraction(BigRational::one())
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }
}

/// Access level of the `&` modality: unique ownership or a fractional borrow.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Permission {
    Star,
    Frac(Fraction),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PermError {
    #[error("the unique permission * cannot be halved")]
    StarNotDivisible,
    #[error("the unique permission * cannot be added")]
    StarNotAddable,
    #[error("permission sum {0} exceeds 1")]
    PermissionOverflow(String),
    #[error("permission {0} is outside (0, 1]")]
    OutOfRange(String),
}

impl Permission {
    pub fn one() -> Permission {
        Permission::Frac(Fraction::one())
    }

    pub fn ratio(numer: i64, denom: i64) -> Result<Permission, PermError> {
        if denom == 0 {
            return Err(PermError::OutOfRange(format!("{numer}/{denom}")));
        }
        let q = BigRational::new(BigInt::from(numer), BigInt::from(denom));
        Fraction::new(q).map(Permission::Frac)
    }

    pub fn from_rational(q: BigRational) -> Result<Permission, PermError> {
        Fraction::new(q).map(Permission::Frac)
    }

    pub fn fraction(&self) -> Option<&BigRational> {
        match self {
            Permission::Star => None,
            Permission::Frac(f) => Some(f.value()),
        }
    }

    /// Halving, as used by `split`.
    pub fn half(&self) -> Result<Permission, PermError> {
        match self {
            Permission::Star => Err(PermError::StarNotDivisible),
            Permission::Frac(f) => {
                let half = f.value() / BigRational::from_integer(BigInt::from(2));
                Ok(Permission::Frac(Fraction(half)))
            }
        }
    }

    /// Exact addition, as used by `join`.
    pub fn plus(&self, other: &Permission) -> Result<Permission, PermError> {
        match (self, other) {
            (Permission::Frac(a), Permission::Frac(b)) => {
                let sum = a.value() + b.value();
                if sum > BigRational::one() {
                    Err(PermError::PermissionOverflow(sum.to_string()))
                } else {
                    Ok(Permission::Frac(Fraction(sum)))
                }
            }
            _ => Err(PermError::StarNotAddable),
        }
    }

    /// Writing is allowed for owners and mutable borrows only.
    pub fn is_writable(&self) -> bool {
        match self {
            Permission::Star => true,
            Permission::Frac(f) => f.value().is_one(),
        }
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Permission::Star => f.write_str("*"),
            Permission::Frac(q) => write!(f, "{}", q.value()),
        }
    }
}

/// Permission annotation on a heap reference: a rational in `[0, 1]`.
///
/// Unlike [`Permission`] this admits `0`, which marks references whose
/// ownership tracking was dropped by `share`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HeapPerm(BigRational);

impl HeapPerm {
    pub fn zero() -> HeapPerm {
        HeapPerm(BigRational::zero())
    }

    pub fn one() -> HeapPerm {
        HeapPerm(BigRational::one())
    }

    pub fn new(q: BigRational) -> Option<HeapPerm> {
        (!q.is_negative() && q <= BigRational::one()).then_some(HeapPerm(q))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn half(&self) -> HeapPerm {
        HeapPerm(&self.0 / BigRational::from_integer(BigInt::from(2)))
    }

    pub fn plus(&self, other: &HeapPerm) -> Option<HeapPerm> {
        HeapPerm::new(&self.0 + &other.0)
    }
}

impl From<&Permission> for HeapPerm {
    fn from(p: &Permission) -> HeapPerm {
        match p {
            Permission::Star => HeapPerm::one(),
            Permission::Frac(f) => HeapPerm(f.value().clone()),
        }
    }
}

impl fmt::Display for HeapPerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nat(n: u64) -> Grade {
        Semiring::NatOrdered.nat(n)
    }

    fn iv(lo: u64, hi: u64) -> Grade {
        Semiring::Interval.interval(lo, hi).unwrap()
    }

    // componentwise oracle over small intervals, written independently of `plus`/`times`
    fn interval_oracle(a: (u64, u64), b: (u64, u64), op: fn(u64, u64) -> u64) -> (u64, u64) {
        (op(a.0, b.0), op(a.1, b.1))
    }

    #[test]
    fn nat_addition() {
        assert_eq!(nat(1).plus(&nat(1)).unwrap(), nat(2));
        assert_eq!(nat(0).plus(&nat(5)).unwrap(), nat(5));
    }

    #[test]
    fn interval_arithmetic_matches_oracle() {
        let sum = interval_oracle((0, 1), (1, 2), |a, b| a + b);
        assert_eq!(sum, (1, 3));
        assert_eq!(iv(0, 1).plus(&iv(1, 2)).unwrap(), iv(sum.0, sum.1));
        let prod = interval_oracle((0, 1), (2, 2), |a, b| a * b);
        assert_eq!(prod, (0, 2));
        assert_eq!(iv(0, 1).times(&iv(2, 2)).unwrap(), iv(prod.0, prod.1));
    }

    #[test]
    fn nat_multiplication() {
        assert_eq!(nat(2).times(&nat(3)).unwrap(), nat(6));
        assert_eq!(nat(1).times(&nat(7)).unwrap(), nat(7));
    }

    #[test]
    fn orders() {
        let d = Semiring::NatDiscrete;
        assert!(d.nat(2).leq(&d.nat(2)).unwrap());
        assert!(!d.nat(2).leq(&d.nat(3)).unwrap());
        assert!(nat(1).leq(&nat(3)).unwrap());
        assert!(iv(1, 1).leq(&iv(0, 1)).unwrap());
        assert!(!iv(0, 1).leq(&iv(1, 1)).unwrap());
    }

    #[test]
    fn mixing_instances_is_an_error() {
        let err = nat(1).plus(&Semiring::NatDiscrete.nat(1)).unwrap_err();
        assert!(matches!(err, GradeError::InstanceMismatch { .. }));
        assert!(nat(1).leq(&iv(0, 1)).is_err());
        assert!(Semiring::NatOrdered.interval(0, 1).is_err());
        assert!(Semiring::Interval.interval(2, 1).is_err());
    }

    #[test]
    fn residuals() {
        let d = Semiring::NatDiscrete;
        assert_eq!(d.nat(7).residual(&d.nat(1)).unwrap(), Some(d.nat(6)));
        assert_eq!(d.nat(1).residual(&d.nat(3)).unwrap(), None);
        assert_eq!(iv(0, 1).residual(&iv(1, 1)).unwrap(), Some(iv(0, 0)));
        assert_eq!(iv(2, 2).residual(&iv(0, 1)).unwrap(), None);
    }

    #[test]
    fn predecessors() {
        let o = Semiring::NatOrdered;
        assert_eq!(o.nat(3).predecessor(), Some(o.nat(2)));
        assert_eq!(o.nat(0).predecessor(), None);
        assert_eq!(iv(1, 3).predecessor(), Some(iv(0, 2)));
        assert_eq!(iv(0, 3).predecessor(), None);
        for n in 0..5 {
            let g = o.nat(n);
            assert_eq!(g.plus(&o.one()).unwrap().predecessor(), Some(g));
        }
    }

    #[test]
    fn residual_existence_matches_enumeration() {
        // brute force: does any r' (small) satisfy s + r' ⊑ r?
        for semiring in Semiring::ALL {
            let elems: Vec<Grade> = match semiring {
                Semiring::Interval => (0..4).flat_map(|lo| (lo..4).map(move |hi| iv(lo, hi))).collect(),
                _ => (0..5).map(|n| semiring.nat(n)).collect(),
            };
            for r in &elems {
                for s in &elems {
                    let exists = elems.iter().any(|rp| s.plus(rp).unwrap().leq(r).unwrap());
                    let got = r.residual(s).unwrap();
                    assert_eq!(got.is_some(), exists, "{semiring}: r={r} s={s}");
                    if let Some(rp) = got {
                        assert!(s.plus(&rp).unwrap().leq(r).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn halving() {
        assert_eq!(Permission::one().half().unwrap(), Permission::ratio(1, 2).unwrap());
        assert_eq!(Permission::ratio(1, 2).unwrap().half().unwrap(), Permission::ratio(1, 4).unwrap());
        assert_eq!(Permission::Star.half(), Err(PermError::StarNotDivisible));
    }

    #[test]
    fn adding_permissions() {
        let half = Permission::ratio(1, 2).unwrap();
        let quarter = Permission::ratio(1, 4).unwrap();
        assert_eq!(half.plus(&half).unwrap(), Permission::one());
        assert_eq!(half.plus(&quarter).unwrap(), Permission::ratio(3, 4).unwrap());
        let three_quarters = Permission::ratio(3, 4).unwrap();
        assert!(matches!(three_quarters.plus(&half), Err(PermError::PermissionOverflow(_))));
        assert_eq!(Permission::Star.plus(&half), Err(PermError::StarNotAddable));
    }

    #[test]
    fn writability() {
        assert!(Permission::Star.is_writable());
        assert!(Permission::one().is_writable());
        assert!(!Permission::ratio(1, 2).unwrap().is_writable());
    }

    #[test]
    fn fractions_are_canonical_and_bounded() {
        let p = Permission::ratio(2, 4).unwrap();
        let q = p.fraction().unwrap();
        assert_eq!((q.numer().clone(), q.denom().clone()), (BigInt::from(1), BigInt::from(2)));
        assert!(Permission::ratio(0, 1).is_err());
        assert!(Permission::ratio(3, 2).is_err());
        assert!(Permission::ratio(-1, 2).is_err());
    }

    #[test]
    fn display() {
        assert_eq!(Permission::ratio(1, 2).unwrap().to_string(), "1/2");
        assert_eq!(Permission::Star.to_string(), "*");
        assert_eq!(iv(0, 1).to_string(), "0..1");
        assert_eq!(HeapPerm::zero().to_string(), "0");
    }
}
