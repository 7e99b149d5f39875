//! End-to-end tests of the `exrec` binary: every pipeline runs through
//! real files in a temporary directory and is checked against the signal
//! it started from.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn exrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exrec"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawning exrec")
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = exrec(dir, args);
    assert!(
        out.status.success(),
        "exrec {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Parses `row_index,value` (dense) or `index,value` (sparse) CSV into a
/// sparse map, dropping zeros.
fn read_csv_map(path: &Path) -> BTreeMap<usize, f64> {
    let text = std::fs::read_to_string(path).expect("reading csv");
    parse_csv_map(&text)
}

fn parse_csv_map(text: &str) -> BTreeMap<usize, f64> {
    let mut map = BTreeMap::new();
    for line in text.lines().skip(1) {
        let (i, v) = line.split_once(',').expect("two csv fields");
        let v: f64 = v.parse().expect("numeric value");
        if v != 0.0 {
            map.insert(i.parse().expect("numeric index"), v);
        }
    }
    map
}

fn assert_close(got: &BTreeMap<usize, f64>, want: &BTreeMap<usize, f64>, tol: f64) {
    assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>(), "supports differ");
    for (i, v) in want {
        assert!((got[i] - v).abs() <= tol, "entry {i}: got {} want {v}", got[i]);
    }
}

#[test]
fn lp_pipeline_recovers_the_signal() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    // Half-rate matrix with sparsity well inside the recovery region, so
    // the ℓ1 minimizer is the planted signal and the check is exact.
    run_ok(
        dir,
        &["gen", "expander", "--n", "200", "--m", "100", "--d", "8", "--seed", "70", "--out",
          "phi.json"],
    );
    run_ok(
        dir,
        &["gen", "signal", "--n", "200", "--k", "10", "--ensemble", "pm1", "--seed", "3", "--out",
          "x.csv"],
    );
    run_ok(dir, &["sketch", "--matrix", "phi.json", "--signal", "x.csv", "--out", "y.csv"]);
    run_ok(
        dir,
        &["decode", "lp", "--matrix", "phi.json", "--sketch", "y.csv", "--out", "sol.csv",
          "--diagnostics", "diag.json"],
    );

    assert_close(&read_csv_map(&dir.join("sol.csv")), &read_csv_map(&dir.join("x.csv")), 1e-6);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("diag.json")).unwrap()).unwrap();
    assert_eq!(diag["status"], "Optimal");
    assert_eq!(diag["decoder"], "lp");
    assert!(diag["residual_inf"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn lp_solution_csv_goes_to_stdout_without_out_flag() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    run_ok(
        dir,
        &["gen", "expander", "--n", "200", "--m", "100", "--d", "8", "--seed", "70", "--out",
          "phi.json"],
    );
    run_ok(
        dir,
        &["gen", "signal", "--n", "200", "--k", "10", "--ensemble", "01", "--seed", "5", "--out",
          "x.csv"],
    );
    run_ok(dir, &["sketch", "--matrix", "phi.json", "--signal", "x.csv", "--out", "y.csv"]);
    let out = run_ok(dir, &["decode", "lp", "--matrix", "phi.json", "--sketch", "y.csv"]);

    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("index,value\n"), "stdout: {stdout}");
    assert_close(&parse_csv_map(&stdout), &read_csv_map(&dir.join("x.csv")), 1e-6);
    // Diagnostics go to stderr, leaving stdout machine-parsable.
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("\"status\""), "stderr: {stderr}");
}

#[test]
fn sublinear_pipeline_recovers_the_signal() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    run_ok(
        dir,
        &["gen", "expander", "--n", "64", "--m", "64", "--d", "4", "--seed", "5", "--out",
          "psi.json"],
    );
    run_ok(
        dir,
        &["gen", "signal", "--n", "64", "--k", "2", "--ensemble", "pm1", "--seed", "9", "--out",
          "x.csv"],
    );
    run_ok(
        dir,
        &["sketch", "--matrix", "psi.json", "--bit-tests", "--signal", "x.csv", "--out", "y.csv"],
    );
    run_ok(
        dir,
        &["decode", "sublinear", "--matrix", "psi.json", "--sketch", "y.csv", "--k", "2",
          "--out", "sol.csv", "--diagnostics", "diag.json"],
    );

    assert_close(&read_csv_map(&dir.join("sol.csv")), &read_csv_map(&dir.join("x.csv")), 1e-9);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("diag.json")).unwrap()).unwrap();
    assert_eq!(diag["success"], true);
}

#[test]
fn sublinear_decode_rejects_a_plain_sketch() {
    // Without --bit-tests the sketch has only the expander rows, so the
    // decoder must refuse it (dimension mismatch) rather than misread it.
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    run_ok(
        dir,
        &["gen", "expander", "--n", "64", "--m", "64", "--d", "4", "--seed", "5", "--out",
          "psi.json"],
    );
    run_ok(
        dir,
        &["gen", "signal", "--n", "64", "--k", "2", "--ensemble", "pm1", "--seed", "9", "--out",
          "x.csv"],
    );
    run_ok(dir, &["sketch", "--matrix", "psi.json", "--signal", "x.csv", "--out", "y.csv"]);
    let out = exrec(dir, &["decode", "sublinear", "--matrix", "psi.json", "--sketch", "y.csv",
                           "--k", "2"]);
    assert!(!out.status.success());
}

#[test]
fn hhs_pipeline_recovers_the_signal() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = run_ok(
        dir,
        &["gen", "hhs", "--n", "64", "--k", "2", "--seed", "11", "--row-budget", "60000",
          "--out-dir", "meas"],
    );
    let manifest = String::from_utf8(out.stdout).unwrap().trim().to_string();
    assert!(dir.join(&manifest).is_file(), "manifest {manifest} missing");

    run_ok(
        dir,
        &["gen", "signal", "--n", "64", "--k", "2", "--ensemble", "pm1", "--seed", "9", "--out",
          "x.csv"],
    );
    run_ok(dir, &["sketch", "--measurement", &manifest, "--signal", "x.csv", "--out", "v.csv"]);
    run_ok(
        dir,
        &["decode", "hhs", "--measurement", &manifest, "--sketch", "v.csv", "--k", "2",
          "--range", "8", "--out", "sol.csv", "--diagnostics", "diag.json"],
    );

    assert_close(&read_csv_map(&dir.join("sol.csv")), &read_csv_map(&dir.join("x.csv")), 1e-9);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("diag.json")).unwrap()).unwrap();
    assert_eq!(diag["spikes"], 2);
    assert!(diag["residual_linf"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn verify_reports_are_valid_json() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    run_ok(
        dir,
        &["gen", "expander", "--n", "24", "--m", "16", "--d", "4", "--seed", "7", "--out",
          "phi.json"],
    );

    let out = run_ok(dir, &["verify", "rip-p", "--matrix", "phi.json", "--k", "2", "--trials",
                            "100", "--seed", "0"]);
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("rip-p stdout is JSON");
    assert_eq!(report["name"], "rip_p");
    assert_eq!(report["violations"], 0);
    assert_eq!(report["instances"], 100);
    assert!(report["worst_margin"].as_f64().unwrap() <= 0.0);

    let out = run_ok(dir, &["verify", "expansion", "--matrix", "phi.json", "--k", "2"]);
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("expansion stdout is JSON");
    assert_eq!(report["exhaustive"], true);
    let eps = report["epsilon_hat"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&eps), "epsilon_hat = {eps}");

    run_ok(
        dir,
        &["gen", "signal", "--n", "24", "--k", "3", "--ensemble", "pm1", "--seed", "1", "--out",
          "x.csv"],
    );
    let out = run_ok(dir, &["verify", "collision", "--matrix", "phi.json", "--signal", "x.csv"]);
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("collision stdout is JSON");
    let total =
        report["collision_mass"].as_f64().unwrap() + report["first_hit_mass"].as_f64().unwrap();
    assert!((total - 4.0 * 3.0).abs() <= 1e-12, "mass split {total} != d * l1");

    let out = run_ok(dir, &["verify", "rip2-demo", "--n", "64", "--k", "16", "--seed", "0"]);
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("rip2-demo stdout is JSON");
    assert_eq!(report["violations"], 0);
}

#[test]
fn phase_transition_writes_resumes_and_renders() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"n": 16, "d": 4, "grid": [2, 2], "trials_per_cell": 3, "seed": 1}"#,
    )
    .unwrap();

    let first = run_ok(dir, &["phase-transition", "--config", "cfg.json", "--out", "res.csv",
                              "--heatmap", "map.svg"]);
    let csv = std::fs::read_to_string(dir.join("res.csv")).unwrap();
    assert!(csv.starts_with("delta,rho,m,k,ensemble,decoder,trials,successes,success_rate\n"));
    assert_eq!(csv.lines().count(), 1 + 4, "header plus one row per cell");
    let svg = std::fs::read_to_string(dir.join("map.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.matches("<rect").count() >= 4);
    let heat = String::from_utf8(first.stdout).unwrap();
    assert!(heat.contains("delta -> 1.0"), "ascii heatmap missing: {heat}");

    // A rerun resumes: all cells are present, so the file is unchanged.
    run_ok(dir, &["phase-transition", "--config", "cfg.json", "--out", "res.csv"]);
    assert_eq!(std::fs::read_to_string(dir.join("res.csv")).unwrap(), csv);

    // Truncating to the header plus one row recomputes only the rest,
    // reproducing the identical file.
    let two_lines: Vec<&str> = csv.lines().take(2).collect();
    std::fs::write(dir.join("res.csv"), two_lines.join("\n") + "\n").unwrap();
    run_ok(dir, &["phase-transition", "--config", "cfg.json", "--out", "res.csv"]);
    assert_eq!(std::fs::read_to_string(dir.join("res.csv")).unwrap(), csv);

    // Without --out the CSV goes to stdout.
    let out = run_ok(dir, &["phase-transition", "--config", "cfg.json"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.trim_end().lines().count(), 1 + 4);
    for (a, b) in stdout.lines().zip(csv.lines()) {
        assert_eq!(a, b, "stdout and file CSV disagree");
    }

    // Overlay polyline lands in the SVG.
    std::fs::write(dir.join("curve.csv"), "0.1,0.2\n0.9,0.8\n").unwrap();
    run_ok(dir, &["phase-transition", "--config", "cfg.json", "--out", "res.csv", "--heatmap",
                  "map2.svg", "--overlay", "curve.csv"]);
    let svg2 = std::fs::read_to_string(dir.join("map2.svg")).unwrap();
    assert!(svg2.contains("<polyline"), "overlay polyline missing");
}

#[test]
fn generation_is_deterministic_across_runs() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    for name in ["a.json", "b.json"] {
        run_ok(
            dir,
            &["gen", "expander", "--n", "32", "--m", "20", "--d", "4", "--seed", "42", "--out",
              name],
        );
    }
    assert_eq!(
        std::fs::read(dir.join("a.json")).unwrap(),
        std::fs::read(dir.join("b.json")).unwrap(),
        "same seed must give byte-identical matrix files"
    );
}

#[test]
fn bad_invocations_fail_with_nonzero_exit() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    run_ok(
        dir,
        &["gen", "expander", "--n", "24", "--m", "16", "--d", "4", "--seed", "7", "--out",
          "phi.json"],
    );
    run_ok(
        dir,
        &["gen", "signal", "--n", "24", "--k", "2", "--ensemble", "pm1", "--seed", "3", "--out",
          "x.csv"],
    );

    // --overlay without --heatmap.
    std::fs::write(dir.join("cfg.json"), r#"{"grid": [1, 1]}"#).unwrap();
    std::fs::write(dir.join("curve.csv"), "0.5,0.5\n").unwrap();
    let out = exrec(dir, &["phase-transition", "--config", "cfg.json", "--overlay", "curve.csv"]);
    assert!(!out.status.success());

    // sketch needs exactly one source.
    let out = exrec(dir, &["sketch", "--signal", "x.csv", "--out", "y.csv"]);
    assert!(!out.status.success());
    let out = exrec(dir, &["sketch", "--matrix", "phi.json", "--measurement", "m.json",
                           "--signal", "x.csv", "--out", "y.csv"]);
    assert!(!out.status.success());

    // Unknown ensemble name.
    let out = exrec(dir, &["gen", "signal", "--n", "8", "--k", "1", "--ensemble", "gauss",
                           "--seed", "0", "--out", "z.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ensemble"));

    // Sketch from a mismatched matrix (wrong length).
    run_ok(
        dir,
        &["gen", "expander", "--n", "10", "--m", "8", "--d", "3", "--seed", "0", "--out",
          "small.json"],
    );
    let out = exrec(dir, &["sketch", "--matrix", "small.json", "--signal", "x.csv", "--out",
                           "y.csv"]);
    assert!(!out.status.success());
}
