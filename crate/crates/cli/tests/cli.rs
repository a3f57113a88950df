use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netguard_core::consensus::{AttackKind, ConsensusMatrix};
use netguard_core::fdi::{friend, max_controlled_invariant};
use netguard_core::fixtures;
use netguard_core::numerics::{selection, Tolerance, Vector};
use netguard_core::sysan::UnidentifiabilityWitness;
use serde_json::{json, Value};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn netguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netguard")).args(args).env_remove("NETGUARD_TOL").output().unwrap()
}

fn run_to(cmd: &str, scenario: &Path, out: &Path) -> Output {
    netguard(&[cmd, "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn trace_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_exit_codes() {
    let ok = netguard(&["validate", "--matrix", scenario("eight_node_normalized.txt").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("valid consensus matrix"));
    for bad in ["eight_node.txt", "identity3.txt", "bad_row_sums.txt"] {
        let o = netguard(&["validate", "--matrix", scenario(bad).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
        assert!(stdout(&o).contains("invalid consensus matrix"), "{bad}");
    }
    let rows = netguard(&["validate", "--matrix", scenario("bad_row_sums.txt").to_str().unwrap()]);
    assert!(stdout(&rows).contains("row 2"));
}

#[test]
fn identify_writes_verdict_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_to("identify", &scenario("identify_3_7.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v = read_json(&dir.path().join("verdict.json"));
    assert_eq!(v["identified"], json!([3, 7]));
    assert_eq!(v["status"], json!("identified"));
    assert_eq!(v["seed"], json!(7));
    // 35 banks of k + 1 = 3 candidates, 30 rows each.
    let rows = trace_rows(&dir.path().join("trace.csv"));
    assert_eq!(rows.len(), 35 * 30);
    assert_eq!(rows.iter().filter(|r| &r[1] == "3-4-7").count(), 30);
}

#[test]
fn identify_is_deterministic_per_seed() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let path = scenario("identify_3_7.json");
    let p = path.to_str().unwrap();
    for (dir, seed) in [(&a, "11"), (&b, "11"), (&c, "12")] {
        netguard(&["identify", "--scenario", p, "--out", dir.path().to_str().unwrap(), "--seed", seed]);
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "verdict.json"), read(&b, "verdict.json"));
    assert_eq!(read(&a, "trace.csv"), read(&b, "trace.csv"));
    assert_ne!(read(&a, "trace.csv"), read(&c, "trace.csv"));
}

#[test]
fn clean_network_identifies_nobody() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_to("identify", &scenario("identify_clean.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&dir.path().join("verdict.json"))["identified"], json!([]));
}

fn write_scenario(dir: &Path, body: Value) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

#[test]
fn short_horizon_is_pending() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = read_json(&scenario("identify_3_7.json"));
    body["horizon"] = json!(3);
    body["matrix"] = json!({ "file": scenario("eight_node.txt") });
    let path = write_scenario(dir.path(), body);
    let o = run_to("identify", &path, dir.path());
    assert_eq!(o.status.code(), Some(5));
    assert_eq!(read_json(&dir.path().join("verdict.json"))["status"], json!("pending"));
}

#[test]
fn witness_attack_is_ambiguous() {
    let c = ConsensusMatrix::validate(fixtures::eight_node()).unwrap();
    let tol = Tolerance::default();
    let kbar = [1, 3, 5, 7];
    let b = selection(8, &kbar);
    let v = max_controlled_invariant(c.a(), &b, &c.output_matrix(0), tol);
    let f = friend(c.a(), &b, &v, tol).unwrap();
    let mut difference = Vector::zeros(8);
    difference[2] = 1.0;
    difference[6] = 1.0;
    let w = UnidentifiabilityWitness { k1: vec![1, 3], k2: vec![5, 7], v_star: v, difference: difference.clone(), friend: f };
    let (m1, _) = w.attacks(c.a(), 40);
    let attacks: Vec<Value> = m1
        .iter()
        .map(|m| match &m.kind {
            AttackKind::Sequence { values } => json!({ "agent": m.agent + 1, "kind": "sequence", "values": values }),
            other => panic!("unexpected attack {other:?}"),
        })
        .collect();
    let x0: Vec<f64> = (0..8).map(|i| 0.5 - 0.1 * i as f64 + difference[i]).collect();
    let rows: Vec<Vec<f64>> = c.a().row_iter().map(|r| r.iter().copied().collect()).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        json!({
            "schema_version": 1, "mode": "identify", "matrix": { "rows": rows }, "attacks": attacks,
            "observer": 1, "k": 2, "horizon": 40, "initial_state": x0, "seed": 3
        }),
    );
    let o = run_to("identify", &path, dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    let v = read_json(&dir.path().join("verdict.json"));
    assert_eq!(v["status"], json!("ambiguous"));
    assert_eq!(v["candidates"], json!([[2, 4], [6, 8]]));
}

#[test]
fn local_identification_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_to("local-identify", &scenario("local_eps001.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v = read_json(&dir.path().join("verdict.json"));
    assert_eq!(v["identified"], json!([2]));
    // Two generators over a horizon of 10.
    assert_eq!(trace_rows(&dir.path().join("trace.csv")).len(), 20);

    let dir = tempfile::tempdir().unwrap();
    let o = run_to("local-identify", &scenario("local_eps003.json"), dir.path());
    assert_eq!(o.status.code(), Some(4));
    let v = read_json(&dir.path().join("verdict.json"));
    assert_eq!(v["status"], json!("calibration_failure"));
    let crossing = v["crossing_epsilon"].as_f64().unwrap();
    assert!((crossing - 0.01605).abs() < 1e-3, "{crossing}");

    let dir = tempfile::tempdir().unwrap();
    let o = run_to("local-identify", &scenario("local_synthesized.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&dir.path().join("verdict.json"))["identified"], json!([2]));
}

#[test]
fn simulate_and_detect_traces() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_to("simulate", &scenario("simulate_3_7.json"), dir.path()).status.code(), Some(0));
    let rows = trace_rows(&dir.path().join("trace.csv"));
    assert_eq!(rows.len(), 40);
    let header = csv::Reader::from_path(dir.path().join("trace.csv")).unwrap().headers().unwrap().clone();
    assert_eq!(&header[0], "t");
    assert_eq!(&header[1], "x_1");
    assert!(header.iter().any(|h| h == "u_3") && header.iter().any(|h| h == "u_7"));

    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_to("detect", &scenario("detect_3_7.json"), dir.path()).status.code(), Some(0));
    assert_eq!(trace_rows(&dir.path().join("trace.csv")).len(), 100);
    assert_eq!(read_json(&dir.path().join("verdict.json"))["status"], json!("alarm"));
}

#[test]
fn analyze_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_to("analyze", &scenario("analyze_eight_node.json"), dir.path()).status.code(), Some(0));
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["connectivity"], json!(3));
    assert_eq!(r["max_faulty"], json!(2));
    assert_eq!(r["max_malicious"], json!(1));

    let dir = tempfile::tempdir().unwrap();
    run_to("analyze", &scenario("analyze_ring.json"), dir.path());
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!((r["max_faulty"].clone(), r["max_malicious"].clone()), (json!(0), json!(0)));

    let dir = tempfile::tempdir().unwrap();
    run_to("analyze", &scenario("analyze_zeros.json"), dir.path());
    let r = read_json(&dir.path().join("report.json"));
    let mut zeros: Vec<f64> = r["pairs"][0]["zeros"].as_array().unwrap().iter().map(|z| z["re"].as_f64().unwrap()).collect();
    zeros.sort_by(f64::total_cmp);
    assert_eq!(zeros.len(), 3);
    for (z, want) in zeros.iter().zip([-2.0, -2.0, 0.0]) {
        assert!((z - want).abs() < 1e-6, "{zeros:?}");
    }

    let dir = tempfile::tempdir().unwrap();
    run_to("analyze", &scenario("analyze_circle.json"), dir.path());
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["pairs"][0]["left_invertible"], json!(false));
    assert_eq!(r["pairs"][0]["zeros"], Value::Null);
}

#[test]
fn mode_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_to("detect", &scenario("identify_3_7.json"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("identify"));
}

#[test]
fn missing_scenario_is_an_error() {
    let o = netguard(&["identify", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(1));
}
