//! End-to-end runs of the `frametop` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use frametop::homotopy;
use frametop::io::{self, LoopSamples};
use frametop::polytope::uniform_d;
use serde_json::Value;
use tempfile::TempDir;

fn frametop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frametop"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("FRAMETOP_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn construct_writes_a_member_of_the_frame_space() {
    let dir = TempDir::new().unwrap();
    let summary = stdout_json(&frametop(dir.path(), &["construct", "--d", "0.5,0.5,0.5,0.5", "--k", "2"]));
    assert_eq!(summary["passed"], true);
    let report = io::read_json(dir.path().join("frame.json")).unwrap();
    let keys: Vec<&String> = report.as_object().unwrap().keys().collect();
    assert_eq!(keys[0], "provenance");
    assert_eq!(report["provenance"]["tool"], "frametop");
    let frame = io::load_frame(dir.path().join("frame.json")).unwrap();
    let d = uniform_d(4, 2).unwrap();
    assert!(frametop::schur_horn::verify_membership(&frame, &d, 1e-9).unwrap().passed);
}

#[test]
fn construct_on_a_vertex_uses_the_first_two_coordinates() {
    let dir = TempDir::new().unwrap();
    stdout_json(&frametop(dir.path(), &["construct", "--d", "1,1,0,0", "--k", "2"]));
    let frame = io::load_frame(dir.path().join("frame.json")).unwrap();
    let m = frame.matrix();
    for r in 0..2 {
        for c in 2..4 {
            assert!(m[(r, c)].norm() <= 1e-12);
        }
    }
}

#[test]
fn construct_outside_the_polytope_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = frametop(dir.path(), &["construct", "--d", "0.7,0.7,0.7", "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "NotInPolytope");
    assert!(!dir.path().join("frame.json").exists());
}

#[test]
fn check_reports_the_subset_sum() {
    let dir = TempDir::new().unwrap();
    let v = stdout_json(&frametop(dir.path(), &["check", "--d", "0.4,0.4,0.4,0.4,0.4"]));
    assert_eq!(v["satisfies_hypothesis"], true);
    assert!((v["min_subset_sum"].as_f64().unwrap() - 1.2).abs() <= 1e-12);

    let v = stdout_json(&frametop(dir.path(), &["check", "--d", "1,1,0,0"]));
    assert_eq!(v["satisfies_hypothesis"], false);
    assert_eq!(v["min_subset_sum"].as_f64().unwrap(), 0.0);

    let third = 1.0 / 3.0;
    let arg = format!("[{third},{third},{third},1]");
    let v = stdout_json(&frametop(dir.path(), &["check", "--d", &arg]));
    assert_eq!(v["satisfies_hypothesis"], false);
    assert!((v["min_subset_sum"].as_f64().unwrap() - 2.0 / 3.0).abs() <= 1e-12);

    let v = stdout_json(&frametop(dir.path(), &["check", "--d", "0.7,0.7,0.7", "--k", "2"]));
    assert_eq!(v["in_polytope"], false);
    assert_eq!(v["provenance"]["config"]["command"], "check");
}

#[test]
fn strata_csv_has_the_codim_one_row() {
    let dir = TempDir::new().unwrap();
    let v = stdout_json(&frametop(dir.path(), &["strata", "--d", "1,1,0,0", "--k", "2"]));
    assert_eq!(v["min_positive_codim"], 1);
    let text = fs::read_to_string(dir.path().join("strata.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# provenance: "));
    let body = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["blocks", "capacities", "alphas", "a_vector", "codim_complex", "energy_level"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert!(rows
        .iter()
        .any(|r| &r[4] == "1" && &r[1] == "1;1" && &r[3] == "-0.5 -0.5 0.5 0.5" && &r[5] == "1.0"));
}

#[test]
fn strata_respects_max_n() {
    let dir = TempDir::new().unwrap();
    let out = frametop(dir.path(), &["strata", "--d", "0.5,0.5,0.5,0.5", "--max-n", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "TooLarge");
}

#[test]
fn retract_from_a_constructed_frame_and_from_random_starts() {
    let dir = TempDir::new().unwrap();
    stdout_json(&frametop(dir.path(), &["construct", "--d", "0.4,0.4,0.4,0.4,0.4"]));
    let frame = dir.path().join("frame.json");
    let v = stdout_json(&frametop(
        dir.path(),
        &["retract", "--frame", frame.to_str().unwrap(), "--d", "0.4,0.4,0.4,0.4,0.4"],
    ));
    assert_eq!(v["outcome"]["kind"], "Converged");
    assert_eq!(v["iterations"], 0);

    let v = stdout_json(&frametop(dir.path(), &["retract", "--random", "--d", "0.4,0.4,0.4,0.4,0.4"]));
    assert_eq!(v["outcome"]["kind"], "Converged");
    assert_eq!(v["monotone"], true);
    let trace = fs::read_to_string(dir.path().join("retract_trace.csv")).unwrap();
    assert_eq!(trace.lines().nth(1), Some("iter,f,gradnorm,step"));
    assert_eq!(trace.lines().count(), v["iterations"].as_u64().unwrap() as usize + 3);
    let projection = io::load_projection(dir.path().join("retract.json")).unwrap();
    let mu = frametop::flow::moment_map(&projection).unwrap();
    assert!(mu.iter().all(|x| (x - 0.4).abs() <= 1e-6));
}

#[test]
fn retract_needs_exactly_one_start() {
    let dir = TempDir::new().unwrap();
    let out = frametop(dir.path(), &["retract", "--d", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupted_frame_file_exits_2_with_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("frame.json");
    fs::write(&bad, "{\"rows\": 2, \"cols\":").unwrap();
    let out = frametop(dir.path(), &["retract", "--frame", bad.to_str().unwrap(), "--d", "0.5,0.5,0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "Parse");
    assert!(err["message"].as_str().unwrap().contains("line"));

    fs::write(&bad, r#"{"rows": 1, "cols": 2, "re": [[1, 1]], "im": [[0, 0]]}"#).unwrap();
    let out = frametop(dir.path(), &["retract", "--frame", bad.to_str().unwrap(), "--d", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "FrameInvariantViolated");
}

#[test]
fn connect_two_constructed_frames() {
    let dir = TempDir::new().unwrap();
    let d = "0.5,0.5,0.5,0.5";
    for (seed, name) in [("1", "a.json"), ("2", "b.json")] {
        stdout_json(&frametop(dir.path(), &["construct", "--d", d, "--seed", seed, "--out", name]));
    }
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let v = stdout_json(&frametop(
        dir.path(),
        &["connect", "--f0", a.to_str().unwrap(), "--f1", b.to_str().unwrap(), "--d", d, "--samples", "16"],
    ));
    assert_eq!(v["success"], true);
    let report = io::read_json(dir.path().join("connect.json")).unwrap();
    let path = report["path"].as_array().unwrap();
    assert_eq!(io::frame_from_json(&path[0]).unwrap(), io::load_frame(&a).unwrap());
    assert_eq!(io::frame_from_json(path.last().unwrap()).unwrap(), io::load_frame(&b).unwrap());
}

#[test]
fn contract_a_random_loop() {
    let dir = TempDir::new().unwrap();
    let v = stdout_json(&frametop(
        dir.path(),
        &["contract-loop", "--random", "--d", "0.5,0.5,0.5,0.5", "--samples", "16", "--grid", "16"],
    ));
    assert_eq!(v["success"], true);
    let csv = fs::read_to_string(dir.path().join("contract.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 17 * 17);
}

#[test]
fn contract_the_circle_generator_fails_without_error() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("loop.json");
    let d = uniform_d(2, 1).unwrap();
    io::write_json(&file, &io::loop_to_json(Some(&d), &LoopSamples::Frames(homotopy::cp1_loop(1, 32)))).unwrap();
    let out = frametop(dir.path(), &["contract-loop", "--loop", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "NotClosed");
    let v = stdout_json(&frametop(dir.path(), &["contract-loop", "--loop", file.to_str().unwrap(), "--close"]));
    assert_eq!(v["success"], false);
}

#[test]
fn winding_of_example_loops() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("loop.json");
    for w in [0, 1, 2] {
        let samples = LoopSamples::Frames(homotopy::cp1_loop(w, 64));
        io::write_json(&file, &io::loop_to_json(None, &samples)).unwrap();
        let v = stdout_json(&frametop(dir.path(), &["winding", "--loop", file.to_str().unwrap(), "--mode", "cp1"]));
        assert_eq!(v["winding"], serde_json::json!([w]));
    }
    let samples = LoopSamples::Projections(homotopy::torus_loop(1, 1, 64));
    io::write_json(&file, &io::loop_to_json(None, &samples)).unwrap();
    let v = stdout_json(&frametop(dir.path(), &["winding", "--loop", file.to_str().unwrap(), "--mode", "torus"]));
    assert_eq!(v["winding"], serde_json::json!([1, 1]));
    let csv = fs::read_to_string(dir.path().join("winding.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("index,phase_2,phase_3"));

    let out = frametop(dir.path(), &["winding", "--loop", file.to_str().unwrap(), "--mode", "cp1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "DimensionMismatch");
}

#[test]
fn undersampled_loops_are_rejected() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("loop.json");
    io::write_json(&file, &io::loop_to_json(None, &LoopSamples::Frames(homotopy::cp1_loop(1, 2)))).unwrap();
    let out = frametop(dir.path(), &["winding", "--loop", file.to_str().unwrap(), "--mode", "cp1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "UndersampledLoop");
}

#[test]
fn acceptance_subset() {
    let dir = TempDir::new().unwrap();
    let out = frametop(dir.path(), &["acceptance", "--only", "strata-neg", "--only", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("criterion")).count(), 2);
    let table = fs::read_to_string(dir.path().join("acceptance.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);

    let out = frametop(dir.path(), &["acceptance", "--only", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let runs: Vec<TempDir> = (0..2).map(|_| TempDir::new().unwrap()).collect();
    for dir in &runs {
        let p = dir.path();
        stdout_json(&frametop(p, &["construct", "--d", "0.3,0.5,0.6,0.6", "--seed", "7"]));
        stdout_json(&frametop(p, &["strata", "--d", "0.3,0.5,0.6,0.6", "--seed", "7"]));
        stdout_json(&frametop(p, &["retract", "--random", "--d", "0.3,0.5,0.6,0.6", "--seed", "7"]));
        stdout_json(&frametop(
            p,
            &["contract-loop", "--random", "--d", "0.5,0.5,0.5,0.5", "--samples", "8", "--grid", "8", "--jobs", "2"],
        ));
    }
    for file in ["frame.json", "strata.csv", "retract.json", "retract_trace.csv", "contract.json", "contract.csv"] {
        let a = fs::read(runs[0].path().join(file)).unwrap();
        let b = fs::read(runs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_frametop"))
        .args(["check", "--d", "0.5,0.5"])
        .env("FRAMETOP_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(stdout_json(&out)["provenance"]["seed"], 99);
    let v = stdout_json(&frametop(dir.path(), &["check", "--d", "0.5,0.5", "--seed", "5"]));
    assert_eq!(v["provenance"]["seed"], 5);
}
