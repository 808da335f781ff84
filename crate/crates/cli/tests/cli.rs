use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/example")
}

fn gridplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridplan")).args(args).env_remove("RUST_LOG").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A copy of the example bundle that tests may edit.
fn bundle_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(example()).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), dir.path().join(e.file_name())).unwrap();
    }
    dir
}

fn objective(results: &Path) -> f64 {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(results).unwrap()).unwrap();
    v["objective"].as_f64().unwrap()
}

#[test]
fn validate_example() {
    let o = gridplan(&["validate", path(&example())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("3 prosumers"));
}

#[test]
fn solve_example_writes_payload() {
    let out = tempfile::tempdir().unwrap();
    let o = gridplan(&["solve", path(&example()), "--out", path(out.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.json", "trades.csv", "flows.csv", "dispatch.csv", "settlement.csv", "meta.json"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    assert!(!out.path().join("convergence.csv").exists());
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = gridplan(&["solve", path(&example()), "--market", "pool", "--out", path(a.path())]);
    let ob = gridplan(&["solve", path(&example()), "--market", "pool", "--out", path(b.path())]);
    assert_eq!(oa.stdout, ob.stdout);
    for f in ["results.json", "trades.csv", "flows.csv", "dispatch.csv", "settlement.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn mixed_without_phi_warns() {
    let dir = bundle_copy();
    fs::remove_file(dir.path().join("phi.csv")).unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = gridplan(&["solve", path(dir.path()), "--market", "mixed", "--out", path(out.path())]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("phi = 1"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_respects_phi_extremes() {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    // phi = 1: mixed is the peer-to-peer design
    let dir = bundle_copy();
    fs::remove_file(dir.path().join("phi.csv")).unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = gridplan(&["compare", path(dir.path()), "--markets", "p2p,mixed", "--out", path(out.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let p2p = objective(&out.path().join("p2p/results.json"));
    let mixed = objective(&out.path().join("mixed/results.json"));
    assert!(rel(mixed, p2p) <= 1e-5, "{mixed} vs {p2p}");
    let table = fs::read_to_string(out.path().join("comparison.csv")).unwrap();
    assert!(table.starts_with("agent,p2p,mixed\n"));
    assert!(table.lines().any(|l| l.starts_with("tso,")));

    // phi = 0: mixed is the pool design
    fs::write(dir.path().join("phi.csv"), "prosumer,phi\np0,0\np1,0\np2,0\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = gridplan(&["compare", path(dir.path()), "--markets", "pool,mixed", "--out", path(out.path())]);
    assert_eq!(code(&o), 0);
    let pool = objective(&out.path().join("pool/results.json"));
    let mixed = objective(&out.path().join("mixed/results.json"));
    assert!(rel(mixed, pool) <= 1e-5, "{mixed} vs {pool}");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&gridplan(&[])), 1);
    assert_eq!(code(&gridplan(&["solve", path(&example())])), 1);
    assert_eq!(code(&gridplan(&["solve", path(&example()), "--market", "auction", "--out", "x"])), 1);
    assert_eq!(code(&gridplan(&["--help"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(code(&gridplan(&["validate", path(&out.path().join("nowhere"))])), 2);
    let dir = bundle_copy();
    fs::remove_file(dir.path().join("demand.csv")).unwrap();
    let o = gridplan(&["validate", path(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("demand.csv"));
}

#[test]
fn infeasible_bundle_exits_3() {
    let dir = bundle_copy();
    // nothing can produce at step 0
    let text = fs::read_to_string(dir.path().join("availability.csv")).unwrap();
    let mut out = String::new();
    for (k, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if k > 0 && cells[2] == "0" {
            out.push_str(&format!("{},{},0,0\n", cells[0], cells[1]));
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    fs::write(dir.path().join("availability.csv"), out).unwrap();
    let text = fs::read_to_string(dir.path().join("technologies.csv")).unwrap();
    // and storage cannot help either
    let text: String = text.lines().filter(|l| !l.contains("storage,")).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("technologies.csv"), text).unwrap();
    let existing = fs::read_to_string(dir.path().join("existing.csv")).unwrap();
    let existing: String = existing.lines().filter(|l| !l.starts_with("battery")).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("existing.csv"), existing).unwrap();
    let avail = fs::read_to_string(dir.path().join("availability.csv")).unwrap();
    let avail: String = avail.lines().filter(|l| !l.starts_with("battery")).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("availability.csv"), avail).unwrap();

    let out = tempfile::tempdir().unwrap();
    let o = gridplan(&["solve", path(dir.path()), "--out", path(out.path())]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn admm_iteration_limit_exits_4_and_trace_reads_run() {
    let out = tempfile::tempdir().unwrap();
    let o = gridplan(&["solve", path(&example()), "--method", "admm", "--max-iter", "5", "--out", path(out.path())]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);

    let o = gridplan(&["trace", path(out.path())]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("iterations 5"));

    let central = tempfile::tempdir().unwrap();
    gridplan(&["solve", path(&example()), "--out", path(central.path())]);
    assert_eq!(code(&gridplan(&["trace", path(central.path())])), 2);
}

#[test]
fn admm_solve_matches_central() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = gridplan(&["solve", path(&example()), "--market", "pool", "--method", "admm", "--out", path(a.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    gridplan(&["solve", path(&example()), "--market", "pool", "--out", path(b.path())]);
    let (x, y) = (objective(&a.path().join("results.json")), objective(&b.path().join("results.json")));
    assert!((x - y).abs() <= 1e-3 * y.abs(), "{x} vs {y}");
}
