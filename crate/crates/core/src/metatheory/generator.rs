use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::Term;
use crate::parser::{parse_program, SourceProgram};

/// A generated program and the statement kinds it was built from.
#[derive(Debug, Clone)]
pub struct Generated {
    pub seed: u64,
    pub source: String,
    pub program: Result<SourceProgram, String>,
    pub statements: Vec<&'static str>,
}

/// Term constructors a user can write, plus every primitive.
pub const TAGS: [&str; 30] = [
    "Var", "Abs", "App", "Pair", "LetPair", "Unit", "LetUnit", "Promote", "LetBox", "Pack", "Unpack", "WithBorrow",
    "Split", "Join", "Push", "Pull", "Share", "Clone", "Nat", "Float", "Prim", "Ann", "newArray", "readArray",
    "writeArray", "deleteArray", "newRef", "readRef", "swapRef", "deleteRef",
];

/// Histogram of constructors over generated programs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Coverage {
    pub counts: BTreeMap<&'static str, usize>,
}

impl Coverage {
    pub fn record(&mut self, t: &Term) {
        t.visit(&mut |n| {
            let tag = match n {
                Term::Var(_) => "Var",
                Term::Abs(..) => "Abs",
                Term::App(..) => "App",
                Term::Pair(..) => "Pair",
                Term::LetPair(..) => "LetPair",
                Term::Unit => "Unit",
                Term::LetUnit(..) => "LetUnit",
                Term::Promote(..) => "Promote",
                Term::LetBox(..) => "LetBox",
                Term::Pack(..) => "Pack",
                Term::Unpack(..) => "Unpack",
                Term::WithBorrow(..) => "WithBorrow",
                Term::Split(_) => "Split",
                Term::Join(_) => "Join",
                Term::Push(_) => "Push",
                Term::Pull(_) => "Pull",
                Term::Share(..) => "Share",
                Term::Clone { .. } => "Clone",
                Term::Nat(_) => "Nat",
                Term::Float(_) => "Float",
                Term::Ann(..) => "Ann",
                Term::Prim(p) => {
                    *self.counts.entry("Prim").or_default() += 1;
                    p.name()
                }
                Term::Uniq(..) | Term::Unborrow(_) | Term::Ref(_) => return,
            };
            *self.counts.entry(tag).or_default() += 1;
        });
    }

    pub fn missing(&self) -> Vec<&'static str> {
        TAGS.iter().copied().filter(|t| !self.counts.contains_key(t)).collect()
    }
}

#[derive(Clone)]
enum Kind {
    Array,
    /// A reference to a `Float` box with this many reads left.
    Ref(u64),
}

#[derive(Clone)]
struct Live {
    var: String,
    id: String,
    kind: Kind,
}

impl Live {
    fn ty(&self) -> String {
        match self.kind {
            Kind::Array => format!("* (Array {} Float)", self.id),
            Kind::Ref(g) => format!("* (Ref {} (Float [{g}]))", self.id),
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    next: usize,
    lines: Vec<String>,
    live: Vec<Live>,
    statements: Vec<&'static str>,
}

impl Gen {
    fn fresh(&mut self, base: &str) -> String {
        self.next += 1;
        format!("{base}{}", self.next)
    }

    fn float(&mut self) -> String {
        format!("{}.{}", self.rng.gen_range(0..10), self.rng.gen_range(0..10))
    }

    fn nat(&mut self) -> u64 {
        self.rng.gen_range(0..4)
    }

    fn emit(&mut self, tag: &'static str, line: String) {
        self.statements.push(tag);
        self.lines.push(line);
    }

    fn take(&mut self, pred: impl Fn(&Live) -> bool) -> Option<Live> {
        let idx: Vec<usize> = (0..self.live.len()).filter(|&i| pred(&self.live[i])).collect();
        let i = *idx.choose(&mut self.rng)?;
        Some(self.live.remove(i))
    }

    fn renamed(&mut self, r: &Live) -> Live {
        Live { var: self.fresh("a"), ..r.clone() }
    }

    fn statement(&mut self) {
        let choice = if self.live.is_empty() && self.rng.gen_bool(0.8) {
            self.rng.gen_range(0..3)
        } else {
            self.rng.gen_range(0..15)
        };
        let arrays = self.live.iter().filter(|l| matches!(l.kind, Kind::Array)).count();
        match choice {
            0 | 1 => {
                let (i, a, n) = (self.fresh("i"), self.fresh("a"), self.nat() + 1);
                self.emit("allocArray", format!("unpack <{i}, {a}> = newArray {n} in"));
                self.live.push(Live { var: a, id: i, kind: Kind::Array });
            }
            2 => {
                let (i, a, g, x) = (self.fresh("i"), self.fresh("a"), self.rng.gen_range(1..4), self.float());
                self.emit("allocRef", format!("unpack <{i}, {a}> = newRef ([{x}] : Float [{g}]) in"));
                self.live.push(Live { var: a, id: i, kind: Kind::Ref(g) });
            }
            _ if self.live.is_empty() => self.statement_pure(),
            3 => {
                let Some(r) = self.take(|l| matches!(l.kind, Kind::Array)) else { return self.statement_pure() };
                let (n, x, out) = (self.nat(), self.float(), self.renamed(&r));
                self.emit("write", format!("let {} = writeArray {} {n} {x} in", out.var, r.var));
                self.live.push(out);
            }
            4 => {
                let Some(r) = self.take(|l| matches!(l.kind, Kind::Array)) else { return self.statement_pure() };
                let (b, n, x, out) = (self.fresh("b"), self.nat(), self.float(), self.renamed(&r));
                self.emit(
                    "borrowWrite",
                    format!("let {} = withBorrow (\\{b} -> writeArray {b} {n} {x}) {} in", out.var, r.var),
                );
                self.live.push(out);
            }
            5 => {
                let Some(r) = self.take(|l| matches!(l.kind, Kind::Array)) else { return self.statement_pure() };
                let (b, l, rr, x, l2, n) = (self.fresh("b"), self.fresh("l"), self.fresh("r"), self.fresh("x"), self.fresh("l"), self.nat());
                let out = self.renamed(&r);
                self.emit(
                    "borrowSplitRead",
                    format!(
                        "let {} = withBorrow (\\{b} -> let ({l}, {rr}) = split {b} in let ({x}, {l2}) = readArray {l} {n} in join ({l2}, {rr})) {} in",
                        out.var, r.var
                    ),
                );
                self.live.push(out);
            }
            6 => {
                let Some(r) = self.take(|l| matches!(l.kind, Kind::Ref(g) if g >= 1)) else { return self.statement_pure() };
                let Kind::Ref(g) = r.kind else { unreachable!() };
                let x = self.fresh("x");
                let out = Live { kind: Kind::Ref(g - 1), ..self.renamed(&r) };
                self.emit("readRef", format!("let ({x}, {}) = readRef {} in", out.var, r.var));
                self.live.push(out);
            }
            7 => {
                let Some(r) = self.take(|l| matches!(l.kind, Kind::Ref(_))) else { return self.statement_pure() };
                let Kind::Ref(g) = r.kind else { unreachable!() };
                let (o, u, x) = (self.fresh("o"), self.fresh("u"), self.float());
                let out = self.renamed(&r);
                self.emit("swapRef", format!("let ({o}, {}) = swapRef {} ([{x}] : Float [{g}]) in let [{u}] = {o} in", out.var, r.var));
                self.live.push(out);
            }
            8 if self.live.len() >= 2 => {
                let a = self.take(|_| true).expect("two live");
                let b = self.take(|_| true).expect("two live");
                let p = self.fresh("p");
                let (a2, b2) = (self.renamed(&a), self.renamed(&b));
                self.emit("pushPull", format!("let {p} = pull ({}, {}) in let ({}, {}) = push {p} in", a.var, b.var, a2.var, b2.var));
                self.live.push(a2);
                self.live.push(b2);
            }
            9 if arrays > 0 => {
                let r = self.take(|l| matches!(l.kind, Kind::Array)).expect("an array");
                let (bx, d, j, k, c) = (self.fresh("s"), self.fresh("d"), self.fresh("j"), self.fresh("i"), self.fresh("a"));
                self.emit(
                    "shareClone",
                    format!(
                        "let {bx} : (Array {} Float) [1] = share {} in unpack <{k}, {c}> = (let *{d} = clone {bx} as <{j}> in {d}) in",
                        r.id, r.var
                    ),
                );
                self.live.push(Live { var: c, id: k, kind: Kind::Array });
            }
            10 => {
                let r = self.take(|_| true).expect("nonempty");
                let (z, out) = (self.fresh("z"), self.renamed(&r));
                self.emit("identity", format!("let {} = (\\({z} : {}) -> {z}) {} in", out.var, r.ty(), r.var));
                self.live.push(out);
            }
            11 => {
                let Some(r) = self.take(|l| matches!(l.kind, Kind::Array)) else { return self.statement_pure() };
                let (k, n, out) = (self.fresh("k"), self.nat(), self.renamed(&r));
                let (x, y) = (self.float(), self.float());
                self.emit(
                    "gradedIndex",
                    format!("let [{k}] = [{n}] in let {} = writeArray (writeArray {} {k} {x}) {k} {y} in", out.var, r.var),
                );
                self.live.push(out);
            }
            12 => {
                let r = self.take(|_| true).expect("nonempty");
                self.delete(&r);
            }
            13 if self.live.len() >= 2 => {
                let a = self.take(|_| true).expect("two live");
                let b = self.take(|_| true).expect("two live");
                let (a2, b2) = (self.renamed(&a), self.renamed(&b));
                self.emit("pairUp", format!("let ({}, {}) = ({}, {}) in", a2.var, b2.var, a.var, b.var));
                self.live.push(a2);
                self.live.push(b2);
            }
            _ => self.statement_pure(),
        }
    }

    fn statement_pure(&mut self) {
        if self.rng.gen_bool(0.5) {
            self.emit("unit", "let () = () in".into());
        } else {
            let (f, x) = (self.fresh("f"), self.fresh("x"));
            self.emit("lambda", format!("let () = (\\({f} : Unit -o Unit) -> {f} ()) (\\({x} : Unit) -> {x}) in"));
        }
    }

    fn delete(&mut self, r: &Live) {
        match r.kind {
            Kind::Array => self.emit("deleteArray", format!("let () = deleteArray {} in", r.var)),
            Kind::Ref(_) => {
                let u = self.fresh("u");
                self.emit("deleteRef", format!("let [{u}] = deleteRef {} in", r.var));
            }
        }
    }

    /// Keeps at most two resources for the result and deletes the rest.
    fn finish(&mut self) -> (String, String) {
        let keep = self.rng.gen_range(0..3).min(self.live.len());
        let mut kept = Vec::new();
        for _ in 0..keep {
            kept.push(self.take(|_| true).expect("kept"));
        }
        for r in std::mem::take(&mut self.live) {
            self.delete(&r);
        }
        let inner = |l: &Live| match l.kind {
            Kind::Array => format!("Array {} Float", l.id),
            Kind::Ref(g) => format!("Ref {} (Float [{g}])", l.id),
        };
        match kept.as_slice() {
            [] => ("Unit".into(), "()".into()),
            [a] => (format!("exists {} . * ({})", a.id, inner(a)), format!("pack <{}, {}>", a.id, a.var)),
            [a, b] => (
                format!("exists {} . exists {} . * ({} * {})", a.id, b.id, inner(a), inner(b)),
                format!("pack <{}, pack <{}, pull ({}, {})>>", a.id, b.id, a.var, b.var),
            ),
            _ => unreachable!(),
        }
    }
}

/// λ-calculus-only closed terms at a small type.
fn core_program(rng: &mut ChaCha8Rng) -> (String, String, Vec<&'static str>) {
    let k = rng.gen_range(0..10);
    match rng.gen_range(0..5) {
        0 => ("Unit".into(), "(\\(x : Unit) -> x) ()".into(), vec!["lambda"]),
        1 => ("Nat * Unit".into(), format!("(\\(x : Nat) -> (x, ())) {k}"), vec!["lambda", "pair"]),
        2 => ("Nat * Nat".into(), format!("let [n] = [{k}] in (n, n)"), vec!["box"]),
        3 => ("Unit * Nat".into(), format!("let (x, y) = ({k}, ()) in (y, x)"), vec!["letPair"]),
        _ => ("Unit".into(), "(\\(f : Unit -o Unit) -> f ()) (\\(y : Unit) -> y)".into(), vec!["lambda"]),
    }
}

/// A closed, well-typed-by-construction program whose `main` is built
/// from about `size` statements over unique resources. Sizes up to 3
/// give λ-calculus-only programs.
pub fn generate_program(seed: u64, size: usize) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ty, body, statements) = if size <= 3 {
        core_program(&mut rng)
    } else {
        let mut g = Gen { rng, next: 0, lines: Vec::new(), live: Vec::new(), statements: Vec::new() };
        for _ in 0..size {
            g.statement();
        }
        let (ty, result) = g.finish();
        let mut body = String::new();
        for l in &g.lines {
            body.push_str("  ");
            body.push_str(l);
            body.push('\n');
        }
        body.push_str("  ");
        body.push_str(&result);
        (ty, format!("\n{body}"), g.statements)
    };
    let source = format!("#semiring nat-leq\nmain : {ty}\nmain = {body}\n");
    let program = parse_program(&source).map_err(|e| e.to_string());
    Generated { seed, source, program, statements }
}
