use std::path::Path;
use std::process::{Command, Output};

use boltzmann::orbits::{estimate_beta_bar, find_periodic_orbit, BetaBarOptions, OrbitOptions};
use boltzmann::{energy, Params, State, SymbolWord};
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boltzmann")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,y,vx,vy,theta_lifted,arc_index"));
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn simulate_five_loops() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["simulate", "--h", "1", "--l", "1", "--beta", "0.3", "--word", "1", "--bounces", "5", "-o", "t.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&d.path().join("t.csv"));
    let arcs: Vec<i64> = r.iter().map(|v| v[6] as i64).collect();
    assert_eq!(arcs.first(), Some(&0));
    assert_eq!(arcs.last(), Some(&4));
    let p = Params::new(1.0, 1.0, 0.3).unwrap();
    for v in &r {
        let e = energy(&State::from_xy(v[1], v[2], v[3], v[4]), &p).unwrap();
        assert!((e - 1.0).abs() < 1e-9);
    }
    assert!(r.windows(2).all(|w| w[1][0] >= w[0][0]));
    // every arc starts and ends on the wall
    for k in 0..5 {
        let arc: Vec<&Vec<f64>> = r.iter().filter(|v| v[6] as usize == k).collect();
        assert!((arc[0][2] + 1.0).abs() < 1e-9 && (arc[arc.len() - 1][2] + 1.0).abs() < 1e-9);
    }
}

#[test]
fn simulate_edge_cases() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["simulate", "--bounces", "0", "-o", "zero.csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(d.path().join("zero.csv")).unwrap(), "t,x,y,vx,vy,theta_lifted,arc_index\n");
    // radial launch into the centre
    let o = run(d.path(), &["simulate", "--x", "0", "--angle", "1.5707963267948966", "-o", "c.csv"]);
    assert_eq!(code(&o), 2);
    assert!(rows(&d.path().join("c.csv")).is_empty());
    assert!(String::from_utf8_lossy(&o.stdout).contains("stopped after 0"));
    // one loop, then the particle escapes: the first arc stays in the file
    let o = run(d.path(), &["simulate", "--beta", "0.3", "--x", "0.5", "--angle", "1.5707963267948966", "-o", "e.csv"]);
    assert_eq!(code(&o), 2);
    let r = rows(&d.path().join("e.csv"));
    assert!(!r.is_empty() && r.iter().all(|v| v[6] == 0.0));
    let o = run(d.path(), &["simulate", "--angle", "4"]);
    assert_eq!(code(&o), 64);
}

#[test]
fn word_commands() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["word", "--word", "1", "--out-dir", "one"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let j = json(&d.path().join("one/orbit.json"));
    assert_eq!(j["schema_version"], 1);
    assert_eq!(j["windings"], serde_json::json!([1]));
    assert_eq!(j["semiconjugacy"]["Ok"]["agree"], true);
    assert_eq!(rows(&d.path().join("one/trajectory.csv")).last().unwrap()[6], 2.0);

    let o = run(d.path(), &["word", "--word", "1,-2", "--out-dir", "two"]);
    assert_eq!(code(&o), 0);
    let j = json(&d.path().join("two/orbit.json"));
    assert_eq!(j["windings"], serde_json::json!([1, -2]));
    assert_eq!(j["word"], serde_json::json!([1, -2]));
    for key in ["bounce_x", "residuals", "flight_times"] {
        assert_eq!(j[key].as_array().unwrap().len(), 2);
    }
    assert!(j["residuals"].as_array().unwrap().iter().all(|r| r.as_f64().unwrap().abs() <= 1e-6));
    assert!(j["W"].as_f64().unwrap() > 0.0);

    assert_eq!(code(&run(d.path(), &["word", "--word", "0"])), 64);
    assert_eq!(code(&run(d.path(), &["periodic", "--word", "1,0"])), 64);
    assert_eq!(code(&run(d.path(), &["word"])), 64);
}

#[test]
fn solver_failure_writes_diagnostics() {
    // beta above the threshold at this energy: the orbit does not certify
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["periodic", "--h", "0.5", "--beta", "0.3", "--word", "1", "--out-dir", "f"]);
    assert_eq!(code(&o), 3);
    let j = json(&d.path().join("f/diagnostics.json"));
    assert_eq!(j["command"], "periodic");
    assert!(j["error"].as_str().unwrap().contains("solver failure"));
}

#[test]
fn outputs_are_deterministic() {
    let d = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert_eq!(code(&run(d.path(), &["periodic", "--word", "1,2", "--out-dir", out])), 0);
    }
    for f in ["orbit.json", "trajectory.csv"] {
        let a = std::fs::read(d.path().join("a").join(f)).unwrap();
        let b = std::fs::read(d.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn config_file_and_flag_override() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), "[params]\nh = 2.0\nbeta = 0.02\n\n[orbit]\nword = \"-1\"\n").unwrap();
    assert_eq!(code(&run(d.path(), &["--config", "c.toml", "periodic", "--out-dir", "a"])), 0);
    let j = json(&d.path().join("a/orbit.json"));
    assert_eq!((j["params"]["h"].as_f64(), j["params"]["beta"].as_f64()), (Some(2.0), Some(0.02)));
    assert_eq!(j["windings"], serde_json::json!([-1]));
    assert_eq!(code(&run(d.path(), &["--config", "c.toml", "periodic", "--h", "1", "--word", "2", "--out-dir", "b"])), 0);
    let j = json(&d.path().join("b/orbit.json"));
    assert_eq!((j["params"]["h"].as_f64(), j["params"]["beta"].as_f64()), (Some(1.0), Some(0.02)));
    assert_eq!(j["windings"], serde_json::json!([2]));

    std::fs::write(d.path().join("bad.toml"), "[params]\nalpha = 1.0\n").unwrap();
    assert_eq!(code(&run(d.path(), &["--config", "bad.toml", "check"])), 64);
    assert_eq!(code(&run(d.path(), &["--config", "missing.toml", "check"])), 1);
}

#[test]
fn io_failures_exit_one() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("file"), "").unwrap();
    assert_eq!(code(&run(d.path(), &["simulate", "-o", "file/t.csv"])), 1);
    assert_eq!(code(&run(d.path(), &["sweep", "-o", "file/s.jsonl"])), 1);
}

#[test]
fn usage_and_help() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["--help"])), 0);
    assert_eq!(code(&run(d.path(), &["frobnicate"])), 64);
    assert_eq!(code(&run(d.path(), &["simulate", "--bounces", "many"])), 64);
    assert_eq!(code(&run(d.path(), &["simulate", "--beta", "-1"])), 64);
    assert_eq!(code(&run(d.path(), &["check", "--suite", "nope"])), 64);
}

#[test]
fn check_suites_pass() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["check"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{out}");
    assert_eq!(out.lines().filter(|l| l.contains(": PASS")).count(), 6);
}

#[test]
fn arc_and_beta_bar() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["arc", "--x0=-1", "--x1", "0.5", "--k=-2", "--out-dir", "a"])), 0);
    let j = json(&d.path().join("a/arc.json"));
    assert_eq!(j["winding"], -2);
    let (m, l) = (j["maupertuis"].as_f64().unwrap(), j["jacobi_length"].as_f64().unwrap());
    assert!((l * l - 2.0 * m).abs() <= 1e-8 * 2.0 * m);
    assert!(j["ode_residual"].as_f64().unwrap() <= 1e-5);
    assert_eq!(code(&run(d.path(), &["arc", "--k", "0"])), 64);

    let o = run(d.path(), &["beta-bar", "--h", "1", "--l", "1"]);
    assert_eq!(code(&o), 0);
    let j: Value = serde_json::from_slice(&o.stdout).unwrap();
    let direct = estimate_beta_bar(&Params::new(1.0, 1.0, 0.0).unwrap(), &BetaBarOptions::default()).unwrap();
    assert_eq!(j["beta_bar"].as_f64(), Some(direct.beta_bar));
}

const GRID: [&str; 10] = ["sweep", "--h", "0.5,1", "--l", "1", "--beta", "0.01,0.05", "--word-length", "1", "--threads"];

fn records(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn sweep_single_cell_matches_the_api() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["sweep", "--h", "1", "--l", "1", "--beta", "0.01", "--word-length", "2", "--symbols", "1,-1", "-o", "s.jsonl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = records(&d.path().join("s.jsonl"));
    assert_eq!(r.len(), 1);
    let p = Params::new(1.0, 1.0, 0.01).unwrap();
    let b = estimate_beta_bar(&p, &BetaBarOptions::default()).unwrap();
    assert_eq!(r[0]["beta_bar"].as_f64(), Some(b.beta_bar));
    let opts = OrbitOptions::default();
    let mut worst = 0.0f64;
    for w in [vec![-1i64], vec![1], vec![-1, -1], vec![-1, 1], vec![1, -1], vec![1, 1]] {
        let o = find_periodic_orbit(&SymbolWord::periodic(w).unwrap(), &p, &opts).unwrap();
        worst = worst.max(o.max_residual());
    }
    assert_eq!(r[0]["max_reflection_residual"].as_f64(), Some(worst));
    let counts: Vec<(u64, u64)> = r[0]["word_counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["attempted"].as_u64().unwrap(), c["realized"].as_u64().unwrap()))
        .collect();
    assert_eq!(counts, vec![(2, 2), (4, 4)]);
}

#[test]
fn sweep_resumes_to_the_same_dataset() {
    let d = tempfile::tempdir().unwrap();
    let full = [&GRID[..], &["4", "-o", "full.jsonl"]].concat();
    assert_eq!(code(&run(d.path(), &full)), 0);
    let expected = std::fs::read(d.path().join("full.jsonl")).unwrap();

    let part = [&GRID[..], &["2", "-o", "part.jsonl", "--max-cells", "1"]].concat();
    let o = run(d.path(), &part);
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 computed, 3 remaining"));
    // a crash while writing the second record
    let path = d.path().join("part.jsonl");
    let mut torn = std::fs::read(&path).unwrap();
    torn.extend_from_slice(b"{\"schema_version\":1,\"cell\":1,");
    std::fs::write(&path, torn).unwrap();
    let rest = [&GRID[..], &["3", "-o", "part.jsonl"]].concat();
    let o = run(d.path(), &rest);
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 already done, 3 computed"));
    assert_eq!(std::fs::read(&path).unwrap(), expected);
    // a finished run is left alone
    let o = run(d.path(), &rest);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 computed"));
    assert_eq!(std::fs::read(&path).unwrap(), expected);
    assert_eq!(std::fs::read_to_string(d.path().join("part.jsonl.index")).unwrap(), "0\n1\n2\n3\n");

    let r = records(&path);
    assert_eq!(r.iter().map(|c| c["cell"].as_u64().unwrap()).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    for c in &r {
        let (h, l) = (c["h"].as_f64().unwrap(), c["l"].as_f64().unwrap());
        assert!(c["beta_bar"].as_f64().unwrap() <= l * l * h);
    }
    // a different grid cannot reuse the file
    assert_eq!(code(&run(d.path(), &["sweep", "--h", "2", "-o", "part.jsonl"])), 64);
}
