use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn gradebor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradebor"))
        .args(args)
        .current_dir(root())
        .env_remove("GRADEBOR_FUEL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_lines(o: &Output) -> Vec<Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).expect("one JSON object per line")).collect()
}

fn scratch(src: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".grb").tempfile().expect("temp file");
    std::io::Write::write_all(&mut f, src.as_bytes()).expect("write");
    f
}

#[test]
fn check_accepts_persimmon() {
    let o = gradebor(&["check", "corpus/persimmon.grb"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("persimmon : forall"));
}

#[test]
fn check_rejects_viridian_with_a_diagnostic() {
    let o = gradebor(&["check", "corpus/viridian.grb"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("PermissionNotWritable"), "{err}");
    assert!(err.contains("two mutable borrows"), "{err}");
}

#[test]
fn check_json_names_the_rule() {
    let o = gradebor(&["check", "--format", "json", "corpus/scarlet.grb"]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["accepted"], false);
    assert_eq!(v[0]["errors"][0]["kind"], "LinearReuse");
    assert_eq!(v[0]["errors"][0]["definition"], "scarlet");
}

#[test]
fn missing_file_is_an_io_error() {
    assert_eq!(gradebor(&["check", "corpus/no-such-file.grb"]).status.code(), Some(2));
    assert_eq!(gradebor(&["run", "corpus/no-such-file.grb"]).status.code(), Some(2));
}

#[test]
fn run_amethyst_gives_a_unique_value() {
    let o = gradebor(&["run", "corpus/amethyst.grb"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = stdout(&o).lines().next().unwrap_or_default().to_string();
    assert!(first.starts_with("pack <"), "{first}");
    assert!(first.contains(": exists r . exists g . exists b . * ("), "{first}");
}

#[test]
fn run_trivial_main() {
    let f = scratch("main : Unit\nmain = ()\n");
    let o = gradebor(&["run", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("() : Unit"));
}

#[test]
fn tiny_fuel_exhausts() {
    let o = gradebor(&["run", "--fuel", "1", "corpus/example_s3.grb"]);
    assert_eq!(o.status.code(), Some(3));
    let o = Command::new(env!("CARGO_BIN_EXE_gradebor"))
        .args(["run", "corpus/example_s3.grb"])
        .current_dir(root())
        .env("GRADEBOR_FUEL", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(gradebor(&["run", "--fuel", "0", "corpus/example_s3.grb"]).status.code(), Some(2));
}

#[test]
fn run_json_output() {
    let o = gradebor(&["run", "--format", "json", "corpus/indigo.grb"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    // alter overwrote the first component only
    assert_eq!(v["value"], "(7.5, (36.0, 209.0))");
    assert_eq!(v["type"], "Float * Float * Float");
}

#[test]
fn trace_of_persimmon_splits_in_halves() {
    let o = gradebor(&["trace", "corpus/persimmon.grb"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines = json_lines(&o);
    let split = lines
        .iter()
        .find(|l| l["rule"].as_str().is_some_and(|r| r.ends_with("splitPair") || r.ends_with("splitRef")))
        .expect("a split step");
    let halves = split["heap"].as_array().unwrap().iter().filter(|b| b["sort"] == "ref" && b["perm"] == "1/2").count();
    assert_eq!(halves, 6, "three components, each split in two");
    assert_eq!(lines.last().unwrap()["final"], true);
}

#[test]
fn trace_of_worked_example_shows_the_rules_in_order() {
    let o = gradebor(&["trace", "corpus/example_s3.grb"]);
    assert_eq!(o.status.code(), Some(0));
    let rules: Vec<String> =
        json_lines(&o).iter().filter_map(|l| l["rule"].as_str().map(str::to_string)).collect();
    let at = rules.iter().position(|r| r == "appL/congPairR/var").expect("first labelled step");
    assert_eq!(rules[at + 1], "beta");
    assert_eq!(rules[at + 2], "congPairL/var");
}

#[test]
fn trace_of_a_value_is_a_single_record() {
    let f = scratch("main : Nat\nmain = 3\n");
    let o = gradebor(&["trace", f.path().to_str().unwrap()]);
    let lines = json_lines(&o);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["final"], true);
    assert_eq!(lines[0]["value"], "3");
}

#[test]
fn props_pass_and_are_reproducible() {
    let args = ["props", "--seed", "42", "--cases", "40", "--format", "json", "corpus/persimmon.grb"];
    let a = gradebor(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    let v: Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(stdout(&a), stdout(&gradebor(&args)));
}

#[test]
fn props_with_no_cases_pass_vacuously() {
    let o = gradebor(&["props", "--cases", "0", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn props_catch_the_split_mutation() {
    let o = gradebor(&["props", "--seed", "7", "--cases", "60", "--mutation", "no-split-halving", "--format", "json"]);
    assert_eq!(o.status.code(), Some(4));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let borrow = v["suites"].as_array().unwrap().iter().find(|s| s["property"] == "borrow-safety").unwrap();
    assert!(!borrow["failures"].as_array().unwrap().is_empty());
}

#[test]
fn corpus_verdicts_match() {
    let o = gradebor(&["corpus"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("ok ")).count(), 11);
}

#[test]
fn corpus_reports_a_wrong_verdict() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.grb"), "f : Nat -o Nat\nf x = x\n").unwrap();
    std::fs::write(dir.path().join("p.expected"), "reject LinearReuse\n").unwrap();
    let o = gradebor(&["corpus", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL p"));
}

#[test]
fn semiring_flag_overrides_the_pragma() {
    // y is demanded exactly twice, so the discrete instance also accepts
    assert_eq!(gradebor(&["check", "--semiring", "nat", "corpus/example_s3.grb"]).status.code(), Some(0));
    let f = scratch("#semiring nat-leq\nf : Unit [3] -o Unit\nf b = let [y] = b in y\n");
    let path = f.path().to_str().unwrap();
    assert_eq!(gradebor(&["check", path]).status.code(), Some(0));
    assert_eq!(gradebor(&["check", "--semiring", "nat", path]).status.code(), Some(1));
    assert_ne!(gradebor(&["check", "--semiring", "bogus", path]).status.code(), Some(0));
}
