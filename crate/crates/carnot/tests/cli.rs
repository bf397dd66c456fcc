use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn carnot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carnot"))
        .args(args)
        .output()
        .expect("the carnot binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

#[test]
fn group_check_on_a_builtin() {
    let v = json_stdout(&carnot(&["group-check", "--group", "heisenberg1"]));
    assert_eq!(v["command"], "group-check");
    assert_eq!(v["result"]["passed"], true);
    assert_eq!(v["result"]["homogeneous_dimension"], 4);
    assert_eq!(v["group"]["hash"].as_str().unwrap().len(), 64);
}

#[test]
fn group_file_is_accepted_and_bad_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("h.json");
    fs::write(
        &good,
        r#"{"name": "h", "layers": [2, 1], "brackets": [{"i": 1, "j": 2, "k": 3, "c": 1.0}]}"#,
    )
    .unwrap();
    let v = json_stdout(&carnot(&["group-check", "--group", good.to_str().unwrap()]));
    assert_eq!(v["result"]["passed"], true);

    // [e1, e2] = e2 breaks the grading.
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"name": "x", "layers": [2, 1], "brackets": [{"i": 1, "j": 2, "k": 2, "c": 1.0}]}"#,
    )
    .unwrap();
    assert!(!carnot(&["group-check", "--group", bad.to_str().unwrap()])
        .status
        .success());
}

#[test]
fn distances() {
    let v = json_stdout(&carnot(&[
        "dist", "--from", "0,0,0", "--to", "1,0,0", "--method", "cc",
    ]));
    let upper = v["result"]["upper"].as_f64().unwrap();
    assert!((upper - 1.0).abs() < 1e-3, "{upper}");
    let v = json_stdout(&carnot(&["dist", "--from", "0,0,0", "--to", "0,0,1"]));
    assert!(v["result"]["upper"].as_f64().unwrap() > 0.0);
}

#[test]
fn dim_on_a_csv_sample_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    // Uniform points of the unit square; a regular grid would tie the
    // greedy cover.
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut csv = String::from("# x,y\n");
    for _ in 0..20_000 {
        let (x, y) = (next(), next());
        csv.push_str(&format!("{x},{y}\n"));
    }
    let set = dir.path().join("square.csv");
    fs::write(&set, csv).unwrap();
    let out = dir.path().join("dim.json");
    let status = carnot(&[
        "dim",
        "--group",
        "abelian2",
        "--set",
        set.to_str().unwrap(),
        "--deltas",
        "0.25,0.18,0.13,0.09,0.065",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let d = v["result"]["dimension"].as_f64().unwrap();
    assert!((d - 2.0).abs() < 0.25, "{d}");
    let table = fs::read_to_string(dir.path().join("dim.ladder.csv")).unwrap();
    assert!(table.starts_with("delta,count,window_count,used\n"));
}

#[test]
fn pansu_of_the_automorphism() {
    let v = json_stdout(&carnot(&[
        "pansu",
        "--map",
        "automorphism",
        "--point",
        "0.2,0.1,-0.3",
    ]));
    let m = &v["result"]["matrix"];
    assert!((m[0][0].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((m[2][2].as_f64().unwrap() - 6.0).abs() < 1e-6);
    assert_eq!(v["result"]["differentiable"], true);
}

#[test]
fn levelset_characteristic_points() {
    let v = json_stdout(&carnot(&[
        "levelset",
        "--field",
        "quasi_sphere",
        "--report",
        "characteristic",
    ]));
    assert_eq!(v["result"]["body"]["count"], 2);
}

#[test]
fn reports_are_reproducible_and_timing_is_opt_in() {
    let a = carnot(&[
        "--seed",
        "3",
        "jacobian",
        "--map",
        "dilation(2)",
        "--point",
        "0,0,0",
        "--mc-samples",
        "2000",
    ]);
    let b = carnot(&[
        "--seed",
        "3",
        "jacobian",
        "--map",
        "dilation(2)",
        "--point",
        "0,0,0",
        "--mc-samples",
        "2000",
    ]);
    assert_eq!(a.stdout, b.stdout);
    assert!(json_stdout(&a).get("wall_time_s").is_none());
    let t = json_stdout(&carnot(&["--timing", "group-check"]));
    assert!(t["wall_time_s"].as_f64().is_some());
}

#[test]
fn invalid_input_exits_nonzero_with_a_diagnostic() {
    for args in [
        &["dist", "--from", "0,0", "--to", "1,0,0"][..],
        &["group-check", "--group", "no_such_group"],
        &["pansu", "--map", "spin", "--point", "0,0,0"],
        &["dim", "--set", "/nonexistent.csv"],
        &["levelset", "--field", "a", "--report", "gradient"],
        &["suite", "--only", "x"],
        &["frobnicate"],
    ] {
        let out = carnot(args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} printed no diagnostic");
    }
}

#[test]
fn suite_quick_summary_lists_every_criterion() {
    let out = carnot(&["suite", "--quick", "--only", "1,2"]);
    let v = json_stdout(&out);
    assert_eq!(v["result"]["total"], 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("criterion  1 PASS"));
}
