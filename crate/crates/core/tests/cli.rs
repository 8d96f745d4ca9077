use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coalition_radio::game::StructureReport;
use coalition_radio::scenario::ScenarioFile;

fn coalradio(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coalradio"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const BRAESS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/braess.toml");

#[test]
fn gen_writes_a_readable_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = coalradio(
        &[
            "gen", "--pu", "2", "--su", "3", "--seed", "5", "--out", "s.toml",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("2 primary, 3 secondary users; 17 links"));
    let file = ScenarioFile::read(dir.path().join("s.toml")).unwrap();
    let text = fs::read_to_string(dir.path().join("s.toml")).unwrap();
    assert_eq!(file.to_toml_string().unwrap(), text);
}

#[test]
fn single_iteration_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = coalradio(
        &["run", "--pu", "1", "--su", "2", "--iters", "1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert!(trace.starts_with("iteration,mover,temperature,action,welfare,best_welfare\n1,"));
    let report = StructureReport::read(dir.path().join("structure.json")).unwrap();
    assert_eq!(report.assignment.len(), 2);
}

#[test]
fn run_reports_the_oracle_gap() {
    let dir = tempfile::tempdir().unwrap();
    let o = coalradio(
        &[
            "run",
            "--pu",
            "2",
            "--su",
            "3",
            "--seed",
            "1",
            "--iters",
            "300",
            "--oracle",
            "--out-summary",
            "s.json",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("brute-force optimum"));
    assert!(out.contains("gap"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 1);
    assert!(
        summary["oracle_welfare"].as_f64().unwrap()
            >= summary["runs"][0]["best_welfare"].as_f64().unwrap() - 1e-12
    );
}

#[test]
fn oracle_over_budget_is_skipped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let o = coalradio(
        &[
            "run",
            "--pu",
            "2",
            "--su",
            "3",
            "--iters",
            "5",
            "--oracle",
            "--max-structures",
            "10",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(!stdout(&o).contains("brute-force optimum"));
}

#[test]
fn multiple_seeds_write_separate_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = coalradio(
        &[
            "run", "--pu", "1", "--su", "3", "--iters", "20", "--seeds", "3", "--seed", "4",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    for seed in 4..7 {
        assert!(dir.path().join(format!("trace.seed{seed}.csv")).exists());
        assert!(dir
            .path()
            .join(format!("structure.seed{seed}.json"))
            .exists());
    }
    assert!(stdout(&o).contains("mean best welfare"));
}

#[test]
fn scenario_and_generation_flags_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let o = coalradio(&["run", "--scenario", BRAESS, "--pu", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        coalradio(&["run", "--iters", "0"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        coalradio(&["run", "--schedule", "fixed", "--temp", "0"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        coalradio(
            &["order", "--scenario", BRAESS, "--members", "s7"],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        coalradio(&["frobnicate"], dir.path()).status.code(),
        Some(1)
    );
    fs::write(dir.path().join("bad.toml"), "num_pu = 1\n").unwrap();
    assert_eq!(
        coalradio(&["brute", "--scenario", "bad.toml"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn io_and_budget_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        coalradio(&["brute", "--scenario", "missing.toml"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        coalradio(
            &["brute", "--scenario", BRAESS, "--max-structures", "3"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn order_prints_the_braess_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let o = coalradio(
        &[
            "order",
            "--scenario",
            BRAESS,
            "--members",
            "0,1,2",
            "--oracle",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("order: B -> s0 -> s1 -> s2 -> p0"));
    assert!(out.contains("rate R = 1.818181818182"));
    assert!(out.contains("heuristic/oracle ratio: 0.909090909091"));

    let o = coalradio(
        &["order", "--scenario", BRAESS, "--members", "s1,s2"],
        dir.path(),
    );
    assert!(stdout(&o).contains("order: B -> s2 -> s1 -> p0"));
}

#[test]
fn brute_writes_the_optimal_structure() {
    let dir = tempfile::tempdir().unwrap();
    let o = coalradio(
        &[
            "brute",
            "--scenario",
            BRAESS,
            "--out-structure",
            "best.json",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let report = StructureReport::read(dir.path().join("best.json")).unwrap();
    let printed: f64 = stdout(&o)
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("optimal welfare "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((report.welfare - printed).abs() < 1e-9);
}
