use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hilbert-ctl"))
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn report(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn lq_solve_scalar() {
    let o = run(&[
        "lq-solve",
        "--system",
        &data("scalar_system.json"),
        "--cost",
        &data("scalar_cost.json"),
        "--x0",
        &data("scalar_x0.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&o);
    assert_eq!(r["well_posed"], true);
    assert!(r["optimal_value"].as_f64().unwrap() > 1.0);
}

#[test]
fn hinf_norm_of_shift_model() {
    let o = run(&["hinf-norm", "--system", &data("ex3_system.json"), "--tol-gamma", "1e-8"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let norm = report(&o)["norm"].as_f64().unwrap();
    assert!((norm - 3.0 * 5f64.sqrt() / 4.0).abs() < 1e-6, "{norm}");
}

#[test]
fn brl_check_reports_both_verdicts_with_success() {
    for (gamma, feasible) in [("1.7", true), ("1.6", false)] {
        let o = run(&["brl-check", "--system", &data("ex3_system.json"), "--gamma", gamma]);
        assert_eq!(code(&o), 0);
        assert_eq!(report(&o)["feasible"], feasible);
    }
}

#[test]
fn hinf_design_exit_codes() {
    let sys = data("ex4_system.json");
    let ok = run(&["hinf-design", "--system", &sys, "--gamma", "3"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(report(&ok)["closed_loop_feasible"], true);
    let bad = run(&["hinf-design", "--system", &sys, "--gamma", "0.1"]);
    assert_eq!(code(&bad), 3);
}

#[test]
fn nash_solve_example_values() {
    let o = run(&[
        "nash-solve",
        "--system",
        &data("ex4_system.json"),
        "--x0",
        &data("ex4_x0.json"),
        "--gamma",
        "2",
        "--rho",
        "0",
        "--seed",
        "7",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&o);
    assert!((r["j2"].as_f64().unwrap() - 2.74).abs() < 1e-3, "{}", r["j2"]);
    assert!(r["nash_check"]["worst_margin2"].as_f64().unwrap() >= -1e-8);
}

#[test]
fn parse_and_assumption_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{\"type\": \"controlled\"}").unwrap();
    assert_eq!(code(&run(&["hinf-norm", "--system", junk.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["hinf-norm", "--system", "/nonexistent.json"])), 2);
    // A controlled system passed where a disturbed one is expected.
    assert_eq!(code(&run(&["hinf-norm", "--system", &data("scalar_system.json")])), 2);
    assert_eq!(code(&run(&["example", "ex9"])), 2);
}

#[test]
fn resolution_limit_exits_4() {
    assert_eq!(code(&run(&["example", "ex3", "--dim", "4"])), 4);
}

#[test]
fn example_ex2_writes_three_temperature_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["example", "ex2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csvs: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    assert_eq!(csvs.len(), 3, "{csvs:?}");
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["example", "ex4", "--dim", "16", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(
            std::fs::read(a.path().join(&n)).unwrap(),
            std::fs::read(b.path().join(&n)).unwrap(),
            "{n:?} differs"
        );
    }
}

#[test]
fn simulate_is_seed_deterministic() {
    let args = [
        "simulate",
        "--system",
        &data("scalar_system.json"),
        "--cost",
        &data("scalar_cost.json"),
        "--x0",
        &data("scalar_x0.json"),
        "--seed",
        "11",
        "--replications",
        "200",
    ];
    let first = run(&args);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, run(&args).stdout);
    let r = report(&first);
    let exact = r["exact_expectation"].as_f64().unwrap();
    let opt = r["optimal_value"].as_f64().unwrap();
    assert!((exact - opt).abs() < 1e-9 * opt.abs().max(1.0));
}
