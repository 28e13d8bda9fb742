use gradebor_core::ast::{PermExpr, Prim, Term, Type};
use gradebor_core::grade::{Permission, Semiring};
use gradebor_core::parser::{parse_program, parse_term, parse_type, print_program, print_term, print_type};
use proptest::prelude::*;

const VARS: [&str; 4] = ["x", "y", "f", "x'"];
const IDS: [&str; 3] = ["a", "b", "id"];

fn var() -> impl Strategy<Value = String> {
    prop::sample::select(VARS.to_vec()).prop_map(str::to_string)
}

fn id() -> impl Strategy<Value = String> {
    prop::sample::select(IDS.to_vec()).prop_map(str::to_string)
}

fn perm() -> impl Strategy<Value = PermExpr> {
    prop_oneof![
        Just(PermExpr::star()),
        (1i64..4, 0i64..3).prop_map(|(d, k)| PermExpr::Lit(Permission::ratio(1 + k.min(d - 1), d).unwrap())),
        Just(PermExpr::Var("p".into())),
    ]
}

fn ty(semiring: Semiring) -> impl Strategy<Value = Type> {
    let grade = move || {
        (0u64..4, 0u64..3).prop_map(move |(lo, w)| match semiring {
            Semiring::Interval => semiring.interval(lo, lo + w).unwrap(),
            _ => semiring.nat(lo),
        })
    };
    let leaf = prop_oneof![Just(Type::Unit), Just(Type::Nat), Just(Type::Float), id().prop_map(Type::array)];
    leaf.prop_recursive(4, 24, 2, move |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Type::fun(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Type::tensor(a, b)),
            (grade(), inner.clone()).prop_map(|(r, a)| Type::graded(r, a)),
            (perm(), inner.clone()).prop_map(|(p, a)| Type::Borrow(p, Box::new(a))),
            (id(), inner.clone()).prop_map(|(i, a)| Type::exists(i, a)),
            (id(), inner).prop_map(|(i, a)| Type::reference(i, a)),
        ]
    })
}

fn term() -> impl Strategy<Value = Term> {
    let s = Semiring::NatOrdered;
    let leaf = prop_oneof![
        var().prop_map(Term::Var),
        Just(Term::Unit),
        (0u64..100).prop_map(Term::Nat),
        (0u32..1000).prop_map(|n| Term::Float(f64::from(n) / 8.0)),
        prop::sample::select(Prim::ALL.to_vec()).prop_map(Term::Prim),
    ];
    leaf.prop_recursive(5, 48, 3, move |inner| {
        prop_oneof![
            (var(), prop::option::of(ty(s)), inner.clone()).prop_map(|(x, a, t)| Term::Abs(x, a, Box::new(t))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::app(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::pair(a, b)),
            (var(), var(), inner.clone(), inner.clone()).prop_map(|(x, y, a, b)| Term::let_pair(x, y, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::let_unit(a, b)),
            inner.clone().prop_map(Term::promote),
            (var(), prop::option::of(ty(s)), inner.clone(), inner.clone()).prop_map(|(x, a, t, u)| Term::let_box(x, a, t, u)),
            (id(), inner.clone()).prop_map(|(i, t)| Term::pack(i, t)),
            (id(), var(), inner.clone(), inner.clone()).prop_map(|(i, x, a, b)| Term::unpack(i, x, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::with_borrow(a, b)),
            inner.clone().prop_map(Term::split),
            inner.clone().prop_map(Term::join),
            inner.clone().prop_map(Term::push),
            inner.clone().prop_map(Term::pull),
            inner.clone().prop_map(Term::share),
            (var(), prop::collection::vec(id(), 0..3), inner.clone(), inner.clone()).prop_map(|(x, ids, a, b)| {
                Term::Clone { var: x, ids, payload: None, source: Box::new(a), body: Box::new(b) }
            }),
            (inner, ty(s)).prop_map(|(t, a)| Term::Ann(Box::new(t), a)),
        ]
    })
}

proptest! {
    #[test]
    fn terms_round_trip(t in term()) {
        let printed = print_term(&t);
        let back = parse_term(&printed, Semiring::NatOrdered);
        prop_assert!(back.is_ok(), "{printed}: {:?}", back);
        prop_assert_eq!(back.unwrap(), t);
    }

    #[test]
    fn interval_types_round_trip(a in ty(Semiring::Interval)) {
        let printed = print_type(&a);
        prop_assert_eq!(parse_type(&printed, Semiring::Interval).unwrap(), a);
    }

    #[test]
    fn nat_types_round_trip(a in ty(Semiring::NatDiscrete)) {
        let printed = print_type(&a);
        prop_assert_eq!(parse_type(&printed, Semiring::NatDiscrete).unwrap(), a);
    }

    #[test]
    fn parsed_terms_are_user_writable(t in term()) {
        let back = parse_term(&print_term(&t), Semiring::NatOrdered).unwrap();
        prop_assert!(back.is_user_writable());
    }
}

#[test]
fn programs_round_trip() {
    let src = "#semiring nat\n\
               type C = Ref r Float\n\
               observe : forall {p : Permission} . & p C -o & p C\n\
               observe x = x\n\
               main : Unit\n\
               main = let () = () in ()\n";
    let p = parse_program(src).unwrap();
    let again = parse_program(&print_program(&p)).unwrap();
    assert_eq!(again.semiring, p.semiring);
    let strip = |p: &gradebor_core::parser::SourceProgram| {
        p.defs.iter().map(|d| (d.name.clone(), d.scheme.clone(), d.body.clone())).collect::<Vec<_>>()
    };
    assert_eq!(strip(&again), strip(&p));
}
