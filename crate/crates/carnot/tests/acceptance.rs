//! The full acceptance battery at production sizes, one line per criterion.
//!
//! Criterion 9 checks the kernel formula exactly as stated, which disagrees
//! with the kernel computed from the gradient; it is expected to fail while
//! the corrected formula (with `c/4` in place of `c`) passes.

use std::path::Path;
use std::process::{Command, ExitCode};

use carnot::suite::{all_ids, run_suite, CriterionResult, SuiteConfig};

const KNOWN_FAILURES: &[u32] = &[9];

fn binary_suite(out: &Path, threads: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_carnot"))
        .args(["suite", "--quick", "--only", "1,2,5,10", "--out"])
        .arg(out)
        .env("CARNOT_THREADS", threads)
        .stderr(std::process::Stdio::null())
        .status()
        .expect("the carnot binary runs");
    assert!(status.success(), "suite --quick exited with {status}");
    std::fs::read(out).expect("report written")
}

fn criterion_9_is_the_formula_only(r: &CriterionResult) -> bool {
    let d = &r.details;
    !r.pass
        && d["corrected_pass"] == true
        && d["kernel_at_x"]["pass"] == true
        && d["literal_max_sin"].as_f64().is_some_and(|s| s > 1e-3)
}

fn main() -> ExitCode {
    let cfg = SuiteConfig {
        seed: 0,
        quick: false,
    };
    let results = run_suite(&cfg, &all_ids());
    let mut ok = true;
    for r in &results {
        println!("{}", r.line());
        if let Some(e) = &r.error {
            println!("    error: {e}");
        }
        let expected = if KNOWN_FAILURES.contains(&r.id) {
            criterion_9_is_the_formula_only(r)
        } else {
            r.pass
        };
        if !expected {
            println!("    unexpected outcome for criterion {}", r.id);
            ok = false;
        }
    }

    let dir = tempfile::tempdir().expect("temporary directory");
    let a = binary_suite(&dir.path().join("one.json"), "1");
    let b = binary_suite(&dir.path().join("two.json"), "2");
    let same = a == b;
    println!(
        "criterion 15 {} determinism (binary): suite --quick on 1 and 2 threads, reports byte-identical: {same}",
        if same { "PASS" } else { "FAIL" }
    );
    ok &= same;

    let passed = results.iter().filter(|r| r.pass).count() + same as usize;
    println!(
        "acceptance: {passed}/{} checks passed; known failures: {KNOWN_FAILURES:?}",
        results.len() + 1
    );
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
