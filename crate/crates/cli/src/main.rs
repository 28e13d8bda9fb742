use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gradebor_core::grade::Semiring;
use gradebor_core::interpreter::{EvalError, Machine, Mutation, Trace};
use gradebor_core::metatheory::{
    check_borrow_safety, check_preservation, check_progress_trace, check_uniqueness, run_suites, SuiteOptions,
};
use gradebor_core::parser::{parse_program, parse_program_as, print_scheme, print_term, print_type, SourceProgram};
use gradebor_core::typechecker::{check_program, CheckedProgram, TypeError, TypeErrorKind};

const OK: u8 = 0;
const TYPE_ERROR: u8 = 1;
const IO_ERROR: u8 = 2;
const FUEL: u8 = 3;
const VIOLATION: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "gradebor", version, about = "Check, run and test programs of the graded borrowing calculus")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Step budget for evaluation.
    #[arg(long, global = true, env = "GRADEBOR_FUEL", default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    fuel: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Overrides the `#semiring` pragma of every input.
    #[arg(long, global = true, value_parser = parse_semiring)]
    semiring: Option<Semiring>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Typecheck files and print each definition's type.
    Check { files: Vec<PathBuf> },
    /// Evaluate `main` at grade 1.
    Run { file: PathBuf },
    /// Evaluate `main`, printing every step as JSON and checking each one.
    Trace { file: PathBuf },
    /// Run the property suites on generated programs (and any given files).
    Props {
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Run against a deliberately faulty interpreter.
        #[arg(long, value_enum, default_value_t = MutationFlag::None)]
        mutation: MutationFlag,
    },
    /// Compare files (or directories of `.grb` files) with their
    /// `.expected` verdicts, and run the accepted ones under the checkers.
    Corpus { paths: Vec<PathBuf> },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MutationFlag {
    None,
    /// `split` hands the whole permission to both new references.
    NoSplitHalving,
}

fn parse_semiring(s: &str) -> Result<Semiring, String> {
    Semiring::from_name(s).ok_or_else(|| format!("unknown semiring `{s}` (expected nat, nat-leq or interval)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fuel = usize::try_from(cli.fuel).unwrap_or(usize::MAX);
    let code = match &cli.command {
        Command::Check { files } => cmd_check(&cli, files),
        Command::Run { file } => cmd_run(&cli, file, fuel),
        Command::Trace { file } => cmd_trace(&cli, file, fuel),
        Command::Props { files, seed, cases, mutation } => cmd_props(&cli, files, *seed, *cases, *mutation, fuel),
        Command::Corpus { paths } => cmd_corpus(&cli, paths, fuel),
    };
    ExitCode::from(code)
}

enum Loaded {
    Io(String),
    Syntax(String),
    Type(Vec<TypeError>),
    Checked(SourceProgram, CheckedProgram),
}

fn load(cli: &Cli, path: &Path) -> Loaded {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return Loaded::Io(format!("{}: {e}", path.display())),
    };
    let parsed = match cli.semiring {
        Some(s) => parse_program_as(&text, s),
        None => parse_program(&text),
    };
    let program = match parsed {
        Ok(p) => p,
        Err(e) => return Loaded::Syntax(format!("{}:{}:{}: {}", path.display(), e.line, e.col, e.message)),
    };
    match check_program(&program) {
        Ok(c) => Loaded::Checked(program, c),
        Err(errs) => Loaded::Type(errs),
    }
}

/// A plain-language gloss for the borrowing errors.
fn hint(kind: TypeErrorKind) -> Option<&'static str> {
    match kind {
        TypeErrorKind::LinearReuse => Some("a linear value was used after being moved"),
        TypeErrorKind::PermissionNotWritable => {
            Some("writing needs the whole permission; two mutable borrows of one value cannot coexist")
        }
        TypeErrorKind::PermissionOverflow => {
            Some("the borrows together exceed the whole permission; a mutable borrow cannot coexist with another borrow")
        }
        TypeErrorKind::PromotionOfAllocator => Some("an allocation cannot be promoted; move it under a lambda"),
        TypeErrorKind::StarNotDivisible => Some("a unique value must be borrowed before it can be split"),
        _ => None,
    }
}

fn error_json(path: &Path, e: &TypeError) -> Value {
    let (def, line, col) = match &e.definition {
        Some((d, l, c)) => (Some(d.clone()), Some(*l), Some(*c)),
        None => (None, None, None),
    };
    json!({
        "file": path.display().to_string(),
        "definition": def,
        "line": line,
        "col": col,
        "kind": e.kind.name(),
        "rule": e.rule,
        "message": e.message,
        "hint": hint(e.kind),
    })
}

fn error_text(path: &Path, e: &TypeError) -> String {
    let at = match &e.definition {
        Some((d, l, c)) => format!("{}:{l}:{c}: in `{d}`: ", path.display()),
        None => format!("{}: ", path.display()),
    };
    match hint(e.kind) {
        Some(h) => format!("{at}{e}\n  note: {h}"),
        None => format!("{at}{e}"),
    }
}

fn cmd_check(cli: &Cli, files: &[PathBuf]) -> u8 {
    let mut code = OK;
    let mut out = Vec::new();
    for path in files {
        match load(cli, path) {
            Loaded::Io(m) => {
                eprintln!("error: {m}");
                out.push(json!({ "file": path.display().to_string(), "io_error": m }));
                code = IO_ERROR;
            }
            Loaded::Syntax(m) => {
                eprintln!("syntax error: {m}");
                out.push(json!({ "file": path.display().to_string(), "syntax_error": m }));
                code = code.max(TYPE_ERROR);
            }
            Loaded::Type(errs) => {
                for e in &errs {
                    eprintln!("{}", error_text(path, e));
                }
                let errors: Vec<Value> = errs.iter().map(|e| error_json(path, e)).collect();
                out.push(json!({ "file": path.display().to_string(), "accepted": false, "errors": errors }));
                code = code.max(TYPE_ERROR);
            }
            Loaded::Checked(_, c) => {
                if cli.format == Format::Text {
                    println!("{}: ok ({})", path.display(), c.semiring);
                    for (name, s) in &c.defs {
                        println!("  {name} : {}", print_scheme(s));
                    }
                }
                let defs: Vec<Value> =
                    c.defs.iter().map(|(n, s)| json!({ "name": n, "type": print_scheme(s) })).collect();
                out.push(json!({ "file": path.display().to_string(), "accepted": true, "definitions": defs }));
            }
        }
    }
    if cli.format == Format::Json {
        println!("{}", Value::Array(out));
    }
    code
}

/// Loads a file for `run`/`trace`, reporting failures; `Err` holds the exit code.
fn load_main(cli: &Cli, path: &Path) -> Result<(CheckedProgram, gradebor_core::ast::Type, gradebor_core::ast::Term), u8> {
    match load(cli, path) {
        Loaded::Io(m) => {
            eprintln!("error: {m}");
            Err(IO_ERROR)
        }
        Loaded::Syntax(m) => {
            eprintln!("syntax error: {m}");
            Err(TYPE_ERROR)
        }
        Loaded::Type(errs) => {
            for e in &errs {
                eprintln!("{}", error_text(path, e));
            }
            Err(TYPE_ERROR)
        }
        Loaded::Checked(_, c) => match c.main.clone() {
            Some((ty, main)) => Ok((c, ty, main)),
            None => {
                eprintln!("{}: no `main` definition", path.display());
                Err(TYPE_ERROR)
            }
        },
    }
}

fn eval_failure(e: &EvalError) -> u8 {
    match e {
        EvalError::FuelExhausted(_) => FUEL,
        _ => VIOLATION,
    }
}

fn cmd_run(cli: &Cli, path: &Path, fuel: usize) -> u8 {
    let (c, ty, main) = match load_main(cli, path) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let mut m = Machine::new(c.semiring);
    match m.eval(&main, &c.semiring.one(), fuel) {
        Ok(trace) => {
            let last = trace.last();
            match cli.format {
                Format::Text => {
                    println!("{} : {}", print_term(&last.term), print_type(&ty));
                    println!("steps: {}", trace.steps.len());
                    println!("heap: {{{}}}", last.heap);
                }
                Format::Json => println!(
                    "{}",
                    json!({
                        "value": print_term(&last.term),
                        "type": print_type(&ty),
                        "steps": trace.steps.len(),
                        "heap": last.heap.to_json(),
                    })
                ),
            }
            OK
        }
        Err((e, trace)) => {
            eprintln!("{}: {e} (after {} steps)", path.display(), trace.steps.len());
            eval_failure(&e)
        }
    }
}

fn cmd_trace(cli: &Cli, path: &Path, fuel: usize) -> u8 {
    let (c, ty, main) = match load_main(cli, path) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let s = c.semiring.one();
    let mut m = Machine::new(c.semiring);
    let (trace, failure) = match m.eval(&main, &s, fuel) {
        Ok(t) => (t, None),
        Err((e, t)) => (t, Some(e)),
    };
    for line in trace.json_lines() {
        println!("{line}");
    }
    if let Some(e) = failure {
        eprintln!("{}: {e}", path.display());
        return eval_failure(&e);
    }
    let checks = [check_preservation(&trace, &ty, &s), check_borrow_safety(&trace)];
    let mut code = OK;
    for v in checks.into_iter().filter_map(Result::err) {
        eprintln!("{}: {v}", path.display());
        code = VIOLATION;
    }
    code
}

fn cmd_props(cli: &Cli, files: &[PathBuf], seed: u64, cases: usize, mutation: MutationFlag, fuel: usize) -> u8 {
    let mut programs = Vec::new();
    for path in files {
        match load(cli, path) {
            Loaded::Io(m) => {
                eprintln!("error: {m}");
                return IO_ERROR;
            }
            Loaded::Syntax(m) => {
                eprintln!("syntax error: {m}");
                return TYPE_ERROR;
            }
            Loaded::Type(_) => {} // rejected programs have no runs to check
            Loaded::Checked(p, _) => {
                programs.push((path.display().to_string(), p));
            }
        }
    }
    let opts = SuiteOptions {
        seed,
        cases,
        fuel,
        mutation: Mutation { no_split_halving: mutation == MutationFlag::NoSplitHalving },
        programs,
    };
    let (reports, coverage) = run_suites(&opts);
    let passed = reports.iter().all(|r| r.passed());
    let summary = json!({
        "seed": seed,
        "cases": cases,
        "mutation": format!("{mutation:?}"),
        "passed": passed,
        "suites": reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
        "coverage": coverage.counts,
        "uncovered": coverage.missing(),
    });
    match cli.format {
        Format::Json => println!("{summary}"),
        Format::Text => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("json values serialize"));
        }
    }
    if passed {
        OK
    } else {
        VIOLATION
    }
}

#[derive(Debug, PartialEq, Eq)]
enum Verdict {
    Accept,
    Reject(String),
}

fn read_verdict(path: &Path) -> Result<Verdict, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut words = text.split_whitespace();
    match (words.next(), words.next()) {
        (Some("accept"), None) => Ok(Verdict::Accept),
        (Some("reject"), Some(kind)) => Ok(Verdict::Reject(kind.to_string())),
        _ => Err(format!("{}: expected `accept` or `reject <Kind>`", path.display())),
    }
}

fn corpus_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, String> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = fs::read_dir(p).map_err(|e| format!("{}: {e}", p.display()))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "grb"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

/// Runs an accepted program's `main` under every checker.
fn audit_run(c: &CheckedProgram, fuel: usize) -> Result<Option<usize>, String> {
    let Some((ty, main)) = &c.main else { return Ok(None) };
    let s = c.semiring.one();
    let trace: Trace = Machine::new(c.semiring).eval(main, &s, fuel).map_err(|(e, _)| e.to_string())?;
    check_progress_trace(&trace, &s).map_err(|v| v.to_string())?;
    check_preservation(&trace, ty, &s).map_err(|v| v.to_string())?;
    check_borrow_safety(&trace).map_err(|v| v.to_string())?;
    check_uniqueness(&trace, ty).map_err(|v| v.to_string())?;
    Ok(Some(trace.steps.len()))
}

fn cmd_corpus(cli: &Cli, paths: &[PathBuf], fuel: usize) -> u8 {
    let default = [PathBuf::from("corpus")];
    let files = match corpus_files(if paths.is_empty() { &default } else { paths }) {
        Ok(f) => f,
        Err(m) => {
            eprintln!("error: {m}");
            return IO_ERROR;
        }
    };
    let mut code = OK;
    let mut rows = Vec::new();
    for path in &files {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let expected = match read_verdict(&path.with_extension("expected")) {
            Ok(v) => v,
            Err(m) => {
                eprintln!("error: {m}");
                code = IO_ERROR;
                continue;
            }
        };
        let (actual, run) = match load(cli, path) {
            Loaded::Io(m) => {
                eprintln!("error: {m}");
                code = IO_ERROR;
                continue;
            }
            Loaded::Syntax(m) => (Verdict::Reject("SyntaxError".into()), Err(m)),
            Loaded::Type(errs) => (Verdict::Reject(errs[0].kind.name().to_string()), Ok(None)),
            Loaded::Checked(_, c) => (Verdict::Accept, audit_run(&c, fuel)),
        };
        let matched = actual == expected;
        if !matched {
            code = code.max(TYPE_ERROR);
        }
        if let Err(m) = &run {
            code = code.max(VIOLATION);
            eprintln!("{}: {m}", path.display());
        }
        let show = |v: &Verdict| match v {
            Verdict::Accept => "accept".to_string(),
            Verdict::Reject(k) => format!("reject {k}"),
        };
        if cli.format == Format::Text {
            let mark = if matched && run.is_ok() { "ok  " } else { "FAIL" };
            let steps = match &run {
                Ok(Some(n)) => format!(", ran {n} steps"),
                _ => String::new(),
            };
            println!("{mark} {name}: expected {}, got {}{steps}", show(&expected), show(&actual));
        }
        rows.push(json!({
            "name": name,
            "expected": show(&expected),
            "actual": show(&actual),
            "matched": matched,
            "steps": run.as_ref().ok().copied().flatten(),
            "violation": run.err(),
        }));
    }
    if cli.format == Format::Json {
        println!("{}", Value::Array(rows));
    }
    code
}
