use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::{RefName, Term, Type};
use crate::grade::{Fraction, Grade, HeapPerm, Permission, Semiring};
use crate::interpreter::{arr_write, ArrTerm, Binding, Heap, Machine, Mutation, Resource};
use crate::parser::{parse_term, SourceProgram};
use crate::typechecker::{check_program, Checker};

use super::{
    check_borrow_safety, check_equational, check_preservation, check_progress_trace, check_uniqueness, generate_program,
    violation, Coverage, Report,
};

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub seed: u64,
    pub cases: usize,
    pub fuel: usize,
    pub mutation: Mutation,
    /// Extra programs (the corpus) run alongside the generated ones.
    pub programs: Vec<(String, SourceProgram)>,
}

impl Default for SuiteOptions {
    fn default() -> SuiteOptions {
        SuiteOptions { seed: 0, cases: 100, fuel: 10_000, mutation: Mutation::default(), programs: Vec::new() }
    }
}

struct Reports {
    generator: Report,
    progress: Report,
    preservation: Report,
    borrow: Report,
    uniqueness: Report,
}

fn run_one(name: &str, program: &SourceProgram, opts: &SuiteOptions, r: &mut Reports) {
    let checked = match check_program(program) {
        Ok(c) => c,
        Err(errs) => {
            let msg = errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ");
            r.generator.record(Err(violation("generator", None, format!("{name} rejected: {msg}"))));
            return;
        }
    };
    r.generator.record(Ok(()));
    let Some((ty, main)) = checked.main else { return };
    let mut grades = vec![program.semiring.one()];
    if program.semiring != Semiring::Interval {
        grades.push(program.semiring.nat(2));
    }
    for s in grades {
        let mut m = Machine::new(program.semiring);
        m.mutation = opts.mutation;
        let trace = match m.eval(&main, &s, opts.fuel) {
            Ok(t) => t,
            Err((e, t)) => {
                r.progress.record(Err(violation("progress", Some(t.steps.len()), format!("{name} at grade {s}: {e}"))));
                r.borrow.record(check_borrow_safety(&t).map_err(|v| tag(v, name)));
                continue;
            }
        };
        r.progress.record(check_progress_trace(&trace, &s).map_err(|v| tag(v, name)));
        r.preservation.record(check_preservation(&trace, &ty, &s).map_err(|v| tag(v, name)));
        r.borrow.record(check_borrow_safety(&trace).map_err(|v| tag(v, name)));
        match check_uniqueness(&trace, &ty) {
            Ok(true) => r.uniqueness.record(Ok(())),
            Ok(false) => {}
            Err(v) => r.uniqueness.record(Err(tag(v, name))),
        }
    }
}

fn tag(mut v: super::Violation, name: &str) -> super::Violation {
    v.message = format!("{name}: {}", v.message);
    v
}

/// Generator-driven and corpus runs of the trace properties, the
/// equational laws and the algebra laws.
pub fn run_suites(opts: &SuiteOptions) -> (Vec<Report>, Coverage) {
    let mut r = Reports {
        generator: Report::new("generator"),
        progress: Report::new("progress"),
        preservation: Report::new("preservation"),
        borrow: Report::new("borrow-safety"),
        uniqueness: Report::new("uniqueness"),
    };
    let mut coverage = Coverage::default();
    let mut sizes = ChaCha8Rng::seed_from_u64(opts.seed);
    for i in 0..opts.cases {
        let size = sizes.gen_range(1..14);
        let g = generate_program(opts.seed.wrapping_add(i as u64), size);
        let name = format!("generated seed {}", g.seed);
        match &g.program {
            Ok(p) => {
                if let Some(d) = p.main() {
                    coverage.record(&d.body);
                }
                run_one(&name, p, opts, &mut r);
            }
            Err(e) => r.generator.record(Err(violation("generator", None, format!("{name} does not parse: {e}")))),
        }
    }
    for (name, p) in &opts.programs {
        run_one(name, p, opts, &mut r);
    }
    let mut reports = vec![r.generator, r.progress, r.preservation, r.borrow, r.uniqueness];
    reports.extend(equational_instances(opts.seed, opts.cases));
    reports.push(check_algebra(opts.seed, opts.cases.max(if opts.cases == 0 { 0 } else { 1000 })));
    (reports, coverage)
}

fn elaborate(heap: &Heap, src: &str) -> Result<Term, String> {
    let t = parse_term(src, heap.semiring).map_err(|e| e.to_string())?;
    let checker = Checker::new(heap.semiring);
    checker.infer(&mut heap.context(), &t).map(|(_, _, e)| e).map_err(|e| format!("{src}: {e}"))
}

/// A heap holding one array with random contents, referenced at `perms`.
fn seeded_heap(rng: &mut ChaCha8Rng, perms: &[HeapPerm]) -> (Heap, String, Vec<RefName>) {
    let mut h = Heap::new(Semiring::NatOrdered);
    let id = h.fresh_id(&Default::default());
    let mut arr = ArrTerm::init();
    for _ in 0..rng.gen_range(0..4) {
        arr = arr_write(&arr, rng.gen_range(0..4), f64::from(rng.gen_range(0..100)) / 4.0);
    }
    h.push(Binding::Res { id: id.clone(), resource: Resource::Array(arr) });
    let refs = perms
        .iter()
        .map(|p| {
            let r = h.fresh_ref();
            h.push(Binding::Ref { name: r, perm: p.clone(), id: id.clone() });
            r
        })
        .collect();
    (h, id, refs)
}

fn bind(h: &mut Heap, x: &str, p: Permission, r: RefName, id: &str) {
    let ty = Type::borrow(p.clone(), Type::array(id));
    h.bind_var(x, h.semiring.one(), Term::uniq(p, Term::Ref(r)), Some(ty));
}

fn law(report: &mut Report, heap: &Heap, lhs: &str, rhs: &str) {
    let result = match (elaborate(heap, lhs), elaborate(heap, rhs)) {
        (Ok(l), Ok(r)) => check_equational(&l, &r, heap, 1000),
        (Err(e), _) | (_, Err(e)) => Err(violation("equational", None, e)),
    };
    report.record(result);
}

/// The borrowing laws over `n` randomly filled arrays.
pub fn equational_instances(seed: u64, n: usize) -> Vec<Report> {
    let mut unit = Report::new("equational-unit");
    let mut assoc = Report::new("equational-assoc");
    let mut iso = Report::new("equational-split-join");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let float = |rng: &mut ChaCha8Rng| format!("{}.5", rng.gen_range(0..20));
    for _ in 0..n {
        let (mut h, id, refs) = seeded_heap(&mut rng, &[HeapPerm::one()]);
        bind(&mut h, "x", Permission::Star, refs[0], &id);
        law(&mut unit, &h, r"withBorrow (\b -> b) x", "x");

        let (k1, k2) = (rng.gen_range(0..4), rng.gen_range(0..4));
        let (f1, f2) = (float(&mut rng), float(&mut rng));
        let lhs = format!(
            "withBorrow (\\b -> (\\(c : & 1 (Array {id} Float)) -> writeArray c {k1} {f1}) ((\\(d : & 1 (Array {id} Float)) -> writeArray d {k2} {f2}) b)) x"
        );
        let rhs = format!("withBorrow (\\c -> writeArray c {k1} {f1}) (withBorrow (\\d -> writeArray d {k2} {f2}) x)");
        law(&mut assoc, &h, &lhs, &rhs);

        let (mut h, id, refs) = seeded_heap(&mut rng, &[HeapPerm::one()]);
        bind(&mut h, "b", Permission::one(), refs[0], &id);
        law(&mut iso, &h, "let (l, r) = split b in join (l, r)", "b");

        let half = HeapPerm::one().half();
        let (mut h, id, refs) = seeded_heap(&mut rng, &[half.clone(), half]);
        let p = Permission::Frac(Fraction::new(HeapPerm::one().half().value().clone()).expect("1/2"));
        bind(&mut h, "l", p.clone(), refs[0], &id);
        bind(&mut h, "r", p, refs[1], &id);
        law(&mut iso, &h, "split (join (l, r))", "(l, r)");
    }
    vec![unit, assoc, iso]
}

fn random_grade(rng: &mut ChaCha8Rng, s: Semiring) -> Grade {
    let lo = rng.gen_range(0..6);
    match s {
        Semiring::Interval => s.interval(lo, lo + rng.gen_range(0..4)).expect("lo <= hi"),
        _ => s.nat(lo),
    }
}

fn random_fraction(rng: &mut ChaCha8Rng) -> Permission {
    let d = rng.gen_range(1..64);
    Permission::ratio(rng.gen_range(1..=d), d).expect("in range")
}

/// Semiring axioms, monotonicity and exact halving over `n` random
/// triples per instance.
pub fn check_algebra(seed: u64, n: usize) -> Report {
    let mut report = Report::new("algebra");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa1);
    for s in Semiring::ALL {
        for _ in 0..n {
            let (a, b, c) = (random_grade(&mut rng, s), random_grade(&mut rng, s), random_grade(&mut rng, s));
            report.record(algebra_case(s, &a, &b, &c).map_err(|m| violation("algebra", None, format!("{s} {a} {b} {c}: {m}"))));
        }
    }
    for _ in 0..n {
        let f = random_fraction(&mut rng);
        let h = f.half().expect("fractions halve");
        let ok = h.plus(&h).as_ref() == Ok(&f);
        report.record(if ok { Ok(()) } else { Err(violation("algebra", None, format!("half of {f} does not add back"))) });
    }
    report
}

fn algebra_case(s: Semiring, a: &Grade, b: &Grade, c: &Grade) -> Result<(), String> {
    let e = |r: Result<Grade, crate::grade::GradeError>| r.map_err(|e| e.to_string());
    let le = |x: &Grade, y: &Grade| x.leq(y).map_err(|e| e.to_string());
    let checks = [
        ("plus assoc", e(e(a.plus(b))?.plus(c))? == e(a.plus(&e(b.plus(c))?))?),
        ("plus comm", e(a.plus(b))? == e(b.plus(a))?),
        ("plus unit", e(a.plus(&s.zero()))? == *a),
        ("times assoc", e(e(a.times(b))?.times(c))? == e(a.times(&e(b.times(c))?))?),
        ("times unit", e(a.times(&s.one()))? == *a && e(s.one().times(a))? == *a),
        ("annihilation", e(a.times(&s.zero()))? == s.zero() && e(s.zero().times(a))? == s.zero()),
        ("left distributivity", e(a.times(&e(b.plus(c))?))? == e(e(a.times(b))?.plus(&e(a.times(c))?))?),
        ("right distributivity", e(e(a.plus(b))?.times(c))? == e(e(a.times(c))?.plus(&e(b.times(c))?))?),
        ("reflexivity", le(a, a)?),
        ("transitivity", !(le(a, b)? && le(b, c)?) || le(a, c)?),
        ("plus monotone", !le(a, b)? || le(&e(a.plus(c))?, &e(b.plus(c))?)?),
        ("times monotone", !le(a, b)? || (le(&e(a.times(c))?, &e(b.times(c))?)? && le(&e(c.times(a))?, &e(c.times(b))?)?)),
    ];
    match checks.iter().find(|(_, ok)| !ok) {
        Some((name, _)) => Err(format!("{name} fails")),
        None => Ok(()),
    }
}
