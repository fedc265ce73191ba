//! End-to-end tests of the `maple` binary: exit codes, file outputs,
//! determinism, and flag/config precedence.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use maple::matcore::io as matio;
use maple::rng::StreamRng;
use maple::synth::metrics;

fn maple_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maple"))
}

fn run(args: &[&str]) -> Output {
    maple_cmd().args(args).output().expect("failed to launch the maple binary")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

/// Parsed rows of a summary.csv: (solver, seed, metric, success).
fn read_summary(dir: &Path) -> Vec<(String, u64, f64, bool)> {
    let text = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("solver,seed,final_metric,seconds,success"),
        "unexpected summary header"
    );
    lines
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 5, "malformed summary row: {line}");
            (
                cells[0].to_string(),
                cells[1].parse().unwrap(),
                cells[2].parse().unwrap(),
                cells[4] == "1",
            )
        })
        .collect()
}

const SMALL_NLARM: &str = "p = 32\nr_star = 2\nr = 2\nmax_iters = 120\nseeds = 1,2\nsolver = maple,svp\n";

#[test]
fn nlarm_runs_both_solvers_and_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "nlarm.cfg", SMALL_NLARM);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let output = run(&[
            "nlarm",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--deterministic-timing",
        ]);
        assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    }

    let rows = read_summary(&out_a);
    assert_eq!(rows.len(), 4, "expected 2 solvers × 2 seeds");
    for (solver, seed, metric, success) in &rows {
        assert!(success, "{solver} seed {seed} did not reach the success threshold");
        assert!(*metric < 1e-3);
    }

    let mut names: Vec<String> = fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.contains(&"summary.csv".to_string()));
    assert!(names.contains(&"stats.csv".to_string()));
    assert!(names.contains(&"metadata.json".to_string()));
    assert!(names.contains(&"trace_maple_seed1.csv".to_string()));
    assert!(names.contains(&"trace_svp_seed2.csv".to_string()));
    for name in &names {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical deterministic runs");
    }
}

#[test]
fn seed_and_solver_flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "nlarm.cfg", SMALL_NLARM);
    let out = tmp.path().join("out");
    let output = run(&[
        "nlarm",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "2",
        "--solver",
        "maple",
    ]);
    assert_eq!(output.status.code(), Some(0));
    let rows = read_summary(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].0, "maple");
    assert_eq!(rows[0].1, 2);
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "bad.cfg", "p = 32\nbogus_knob = 7\n");
    let output = run(&["nlarm", "--config", &cfg]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("bogus_knob"), "stderr should name the bad key: {stderr}");
}

#[test]
fn malformed_config_line_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "bad.cfg", "this line has no equals sign\n");
    let output = run(&["pme", "--config", &cfg]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("key=value"), "stderr: {stderr}");
}

#[test]
fn matrix_recover_without_input_exits_2() {
    let output = run(&["matrix-recover"]);
    assert_eq!(output.status.code(), Some(2));

    let output = run(&["matrix-recover", "--input", "/definitely/not/here.csv"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn matrix_recover_round_trips_a_low_rank_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    // An exactly rank-30 64×64 matrix with entries of order one.
    let mut rng = StreamRng::new(41);
    let input = rng.gaussian_matrix(64, 30).mul(&rng.gaussian_matrix(30, 64)).scale(1.0 / 64.0);
    let input_path = tmp.path().join("input.csv");
    matio::write_csv(&input_path, &input).unwrap();

    let cfg = write_cfg(
        tmp.path(),
        "mr.cfg",
        &format!("input = {}\nn = 4096\nmax_iters = 150\n", input_path.display()),
    );
    let out = tmp.path().join("out");
    let output = run(&["matrix-recover", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let rows = read_summary(&out);
    assert_eq!(rows.len(), 1);
    assert!(rows[0].3, "recovery did not reach the success threshold");

    let recovered = matio::read_csv(&out.join("recovered_maple_seed1.csv")).unwrap();
    let rel = metrics(&recovered, &input).rel_error;
    assert!(rel <= 1e-3, "recovered matrix off by {rel:.3e} relative");
}

#[test]
fn lemma_check_passes_and_writes_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "lemma.cfg", "trials = 25\np = 48\n");
    let out = tmp.path().join("out");
    let output = run(&["lemma-check", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0));

    let ratios = fs::read_to_string(out.join("ratios.csv")).unwrap();
    assert_eq!(ratios.lines().count(), 26, "header plus one row per trial");
    let meta = fs::read_to_string(out.join("metadata.json")).unwrap();
    assert!(meta.contains("\"violations\": 0"), "metadata: {meta}");
}

#[test]
fn lemma_check_minimal_rank_inflation_edge() {
    // r = r*+1 gives the largest finite bound; the check must still pass.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "lemma.cfg", "trials = 15\np = 48\nr = 5\n");
    let out = tmp.path().join("out");
    let output = run(&["lemma-check", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

/// An instance conditioned badly enough that the factored baseline's shared
/// step size diverges (the projected solvers are fine with it).
const HOSTILE_NLARM: &str =
    "p = 32\nr_star = 2\nr = 2\nn = 320\nkappa = 512\nmax_iters = 100\nseeds = 1\n";

#[test]
fn solver_abort_is_recorded_and_the_run_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "hostile.cfg", HOSTILE_NLARM);
    let out = tmp.path().join("out");
    let output = run(&[
        "nlarm",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--solver",
        "maple,fgd",
    ]);
    assert_eq!(output.status.code(), Some(0), "one solver succeeded, so the run is usable");

    let rows = read_summary(&out);
    assert_eq!(rows.len(), 2);
    let maple_row = rows.iter().find(|r| r.0 == "maple").unwrap();
    assert!(maple_row.3, "projected solver should succeed on this instance");
    let fgd_row = rows.iter().find(|r| r.0 == "fgd").unwrap();
    assert!(fgd_row.2.is_nan(), "aborted run should report a NaN metric");
    assert!(!fgd_row.3);
}

#[test]
fn all_runs_aborting_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "hostile.cfg", HOSTILE_NLARM);
    let out = tmp.path().join("out");
    let output = run(&[
        "nlarm",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--solver",
        "fgd",
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn pme_and_lpca_produce_the_standard_file_set() {
    let tmp = tempfile::tempdir().unwrap();
    let pme_cfg = write_cfg(
        tmp.path(),
        "pme.cfg",
        "p = 24\nr_star = 2\nr = 2\nn = 4000\nmax_iters = 25\nseeds = 3\n",
    );
    let pme_out = tmp.path().join("pme");
    let output = run(&["pme", "--config", &pme_cfg, "--out", pme_out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    for name in ["summary.csv", "stats.csv", "metadata.json", "trace_maple_seed3.csv"] {
        assert!(pme_out.join(name).exists(), "pme output missing {name}");
    }

    let lpca_cfg = write_cfg(tmp.path(), "lpca.cfg", "p = 40\nmax_iters = 30\nseeds = 1\n");
    let lpca_out = tmp.path().join("lpca");
    let output = run(&["lpca", "--config", &lpca_cfg, "--out", lpca_out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let rows = read_summary(&lpca_out);
    assert_eq!(rows.len(), 1);
    assert!(rows[0].2.is_finite(), "logistic loss should be finite");
}
