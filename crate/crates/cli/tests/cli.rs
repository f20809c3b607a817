use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sensorsel"))
}

fn scenario(dir: &Path, plant: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"{{
            "schema_version": 1,
            "plant": {plant},
            "seed_sensors": [1, 2],
            "select": 2,
            "metric": {{"kind": "trace", "horizon": "finite", "steps": 4}},
            "history": 3,
            "excitation": {{"seed": 5, "horizon": 400}}{extra}
        }}"#
    );
    let path = dir.join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path
}

const GENERATED: &str = r#"{"generator": "random-stable", "n": 4, "m": 1, "p": 5, "seed": 3}"#;

fn run(args: &[&str], sc: &Path, out: &Path) -> Output {
    bin().args(args).arg("--scenario").arg(sc).arg("--out-dir").arg(out).output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), GENERATED, "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&run(&["generate"], &sc, &a));
    ok(&run(&["generate"], &sc, &b));
    let pa = std::fs::read(a.join("plant.json")).unwrap();
    assert_eq!(pa, std::fs::read(b.join("plant.json")).unwrap());
    let v: Value = serde_json::from_slice(&pa).unwrap();
    assert_eq!(v["C"].as_array().unwrap().len(), 5);
}

#[test]
fn select_end_to_end_matches_oracle() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), GENERATED, "");
    let out = tmp.path().join("out");
    ok(&run(&["select", "--oracle"], &sc, &out));
    let res = json(&out.join("result.json"));
    assert_eq!(res["chosen"].as_array().unwrap().len(), 2);
    assert_eq!(res["per_step"].as_array().unwrap().len(), 4);
    assert!(out.join("timing.json").exists());

    let mut errs = csv::Reader::from_path(out.join("errors.csv")).unwrap();
    let mut rows = 0;
    for rec in errs.records() {
        let rec = rec.unwrap();
        let rel: f64 = rec[5].parse().unwrap();
        assert!(rel < 1e-8, "{rec:?}");
        rows += 1;
    }
    assert_eq!(rows, 5 * 4);

    let scores = std::fs::read_to_string(out.join("scores.csv")).unwrap();
    assert!(scores.starts_with("sensor,score,rank,chosen"));
    assert_eq!(scores.lines().count(), 6);

    ok(&run(&["oracle", "--brute-force"], &sc, &out));
    let orc = json(&out.join("oracle.json"));
    assert_eq!(orc["brute_force"]["chosen"], res["chosen"]);
}

#[test]
fn result_is_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), GENERATED, "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&run(&["--threads", "1", "select"], &sc, &a));
    ok(&run(&["--threads", "3", "select"], &sc, &b));
    for f in ["result.json", "scores.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_writes_every_horizon() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), GENERATED, "");
    let out = tmp.path().join("out");
    ok(&run(&["sweep", "--max-steps", "8", "--oracle"], &sc, &out));
    let mut rd = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    assert_eq!(rd.headers().unwrap().len(), 7);
    let recs: Vec<_> = rd.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), 5 * 8);
    for sensor in 1..=5 {
        let steps: Vec<usize> = recs.iter().filter(|r| r[0] == *sensor.to_string()).map(|r| r[1].parse().unwrap()).collect();
        assert_eq!(steps, (1..=8).collect::<Vec<_>>());
    }
}

#[test]
fn recorded_trajectory_gives_the_same_choice() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), GENERATED, "");
    let (live, rec) = (tmp.path().join("live"), tmp.path().join("rec"));
    ok(&run(&["select"], &sc, &live));
    ok(&run(&["collect"], &sc, &rec));
    let traj = rec.join("trajectory.csv");
    ok(&run(&["select", "--trajectory", traj.to_str().unwrap()], &sc, &rec));
    assert_eq!(json(&live.join("result.json"))["chosen"], json(&rec.join("result.json"))["chosen"]);
}

#[test]
fn eval_sensor_count_mismatch_exits_4() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), GENERATED, "");
    let out = tmp.path().join("out");
    ok(&run(&["collect"], &sc, &out));
    let traj = out.join("trajectory.csv");
    let o = run(&["select", "--trajectory", traj.to_str().unwrap(), "--eval-sensors", "1,2"], &sc, &out);
    assert_eq!(o.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_plant_file_exits_2() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), r#"{"file": "nope.json"}"#, "");
    let o = run(&["select"], &sc, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn unknown_scenario_field_exits_2() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), GENERATED, r#", "bogus": 1"#);
    let o = run(&["generate"], &sc, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_flags_a_dead_sensor() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario(tmp.path(), GENERATED, "");
    ok(&run(&["generate"], &sc, tmp.path()));
    let plant = tmp.path().join("plant.json");
    let mut v = json(&plant);
    for x in v["C"][4].as_array_mut().unwrap() {
        *x = Value::from(0.0);
    }
    std::fs::write(&plant, v.to_string()).unwrap();
    let sc = scenario(tmp.path(), r#"{"file": "plant.json"}"#, "");
    let out = tmp.path().join("out");

    ok(&run(&["verify", "--sensors", "5", "--rel-threshold", "1e-9", "--oracle"], &sc, &out));
    let verdict = json(&out.join("verdict.json"));
    assert_eq!(verdict["verdict"]["status"], "verified-unobservable");
    assert_eq!(verdict["oracle_observable"], false);
    assert_eq!(verdict["threshold"]["kind"], "relative");
    assert_eq!(verdict["threshold"]["value"], 1e-9);

    ok(&run(&["verify", "--sensors", "3,4"], &sc, &out));
    let verdict = json(&out.join("verdict.json"));
    assert_eq!(verdict["verdict"]["status"], "verified-observable");
    assert_eq!(verdict["threshold"]["kind"], "default");
}
