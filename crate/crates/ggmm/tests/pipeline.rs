//! Black-box tests of the installed binary: file round-trips, determinism
//! across processes, error reporting, and exit codes.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ggmm::io::{read_dataset_csv, read_json, write_json, FitFile, MetricsFile, TruthFile};
use ggmm::simulate::sample_mixture;

fn ggmm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggmm"))
        .current_dir(dir)
        .args(args)
        .env_remove("GGMM_SEED")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_shapes_determinism_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--p", "5", "--n", "40", "--seed", "9"];
    assert_ok(&ggmm(dir.path(), &args));

    let data = read_dataset_csv(&dir.path().join("data.csv")).unwrap();
    assert_eq!((data.n(), data.p()), (40, 5));
    let truth: TruthFile = read_json(&dir.path().join("truth.json")).unwrap();
    assert_eq!(truth.schema_version, 1);
    assert_eq!(truth.seed, 9);
    assert_eq!(truth.labels.len(), 40);
    let params = truth.params().unwrap();
    assert_eq!((params.k(), params.p()), (2, 5));

    // the CSV round-trips the exact doubles the library sampler produces
    let reference = common::chain_mixture(5, &[1, 2]);
    let (expect, expect_truth) = sample_mixture(&reference, 40, 9).unwrap();
    assert_eq!(data, expect);
    assert_eq!(truth.labels, expect_truth.labels);
    for k in 0..2 {
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(
                    params.thetas[k].get(i, j),
                    reference.thetas[k].get(i, j)
                );
            }
        }
    }

    // rerun with the same seed: byte-identical artifacts
    let rerun = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(rerun.path(), &args));
    for name in ["data.csv", "truth.json"] {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(rerun.path().join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn simulate_header_is_optional_and_detected() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(
        dir.path(),
        &["simulate", "--p", "3", "--n", "10", "--seed", "2", "--header"],
    ));
    let text = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert!(text.starts_with("x1,x2,x3\n"), "{text}");
    let with_header = read_dataset_csv(&dir.path().join("data.csv")).unwrap();

    let plain = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(
        plain.path(),
        &["simulate", "--p", "3", "--n", "10", "--seed", "2"],
    ));
    let without = read_dataset_csv(&plain.path().join("data.csv")).unwrap();
    assert_eq!(with_header, without);
}

#[test]
fn fit_writes_complete_artifact_and_dot_graphs() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(
        dir.path(),
        &["simulate", "--p", "4", "--n", "150", "--seed", "3"],
    ));
    assert_ok(&ggmm(
        dir.path(),
        &[
            "fit", "--data", "data.csv", "--k", "2", "--grid", "3", "--restarts", "3",
            "--seed", "11", "--center", "false", "--dot-dir", "graphs",
        ],
    ));

    let fit: FitFile = read_json(&dir.path().join("fit.json")).unwrap();
    assert_eq!(fit.schema_version, 1);
    assert_eq!((fit.n, fit.p, fit.k), (150, 4, 2));
    assert_eq!(fit.seed, 11);
    assert_eq!(fit.grid.len(), 3);
    assert_eq!(fit.ebic.len(), 3);
    assert!(fit.grid.contains(&fit.chosen_lambda));
    assert!(fit.elapsed_seconds > 0.0);
    assert!((fit.pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(fit.pi.windows(2).all(|w| w[0] >= w[1]), "{:?}", fit.pi);

    // trace never decreases and the estimate parses back as a valid mixture
    assert!(fit
        .loglik_trace
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-6));
    let params = fit.params().unwrap();

    // stored edge lists agree with the stored matrices
    for (k, theta) in params.thetas.iter().enumerate() {
        let expect: Vec<(usize, usize)> =
            ggmm::evalmetrics::edge_set(theta, 1e-6).into_iter().collect();
        assert_eq!(fit.edges[k], expect, "component {k}");
    }

    for k in 1..=2 {
        let dot = fs::read_to_string(dir.path().join(format!("graphs/cluster_{k}.dot"))).unwrap();
        assert!(dot.starts_with(&format!("graph cluster_{k} {{")), "{dot}");
        assert!(dot.contains("v1;"));
    }
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(
        dir.path(),
        &["simulate", "--p", "4", "--n", "30", "--seed", "8"],
    ));
    let truth: TruthFile = read_json(&dir.path().join("truth.json")).unwrap();

    // craft a fit artifact holding exactly the true parameters
    let params = truth.params().unwrap();
    let fit = FitFile {
        schema_version: 1,
        seed: 0,
        n: 30,
        p: 4,
        k: 2,
        lambda_scheme: ggmm::modelsel::PenaltyScheme::NLogP,
        chosen_lambda: 1.0,
        grid: vec![1.0],
        ebic: vec![Some(0.0)],
        pi: params.pi.clone(),
        thetas: truth.thetas.clone(),
        edges: params
            .thetas
            .iter()
            .map(|t| ggmm::evalmetrics::edge_set(t, 1e-6).into_iter().collect())
            .collect(),
        loglik_trace: vec![0.0],
        converged: true,
        iterations: 0,
        restart_index: 0,
        elapsed_seconds: 0.0,
    };
    write_json(&dir.path().join("fit.json"), &fit).unwrap();

    assert_ok(&ggmm(
        dir.path(),
        &["eval", "--fit", "fit.json", "--truth", "truth.json"],
    ));
    let metrics: MetricsFile = read_json(&dir.path().join("metrics.json")).unwrap();
    assert_eq!(metrics.schema_version, 1);
    assert_eq!(metrics.report.pi_ad, 0.0);
    assert_eq!(metrics.report.alignment, vec![0, 1]);
    for cluster in &metrics.report.per_cluster {
        assert_eq!(cluster.f1, 1.0);
        assert_eq!(cluster.frobenius, 0.0);
        assert_eq!(cluster.confusion.fp, 0);
        assert_eq!(cluster.confusion.false_neg, 0);
    }
}

#[test]
fn eval_reports_both_dims_on_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(
        dir.path(),
        &["simulate", "--p", "3", "--n", "30", "--seed", "4"],
    ));
    // truth at p=4 under a different name
    assert_ok(&ggmm(
        dir.path(),
        &[
            "simulate", "--p", "4", "--n", "30", "--seed", "4", "--data-out", "d4.csv",
            "--truth-out", "t4.json",
        ],
    ));
    assert_ok(&ggmm(
        dir.path(),
        &[
            "fit", "--data", "data.csv", "--k", "2", "--grid", "2", "--restarts", "3",
            "--seed", "1", "--center", "false",
        ],
    ));
    let out = ggmm(
        dir.path(),
        &["eval", "--fit", "fit.json", "--truth", "t4.json"],
    );
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains('3') && err.contains('4'), "stderr: {err}");
}

#[test]
fn missing_input_file_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ggmm(dir.path(), &["fit", "--data", "nope.csv"]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope.csv"), "stderr: {}", stderr(&out));
}

#[test]
fn malformed_csv_reports_row_number() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "1.0,2.0\n2.0,1.0\n3.0,what\n").unwrap();
    let out = ggmm(dir.path(), &["fit", "--data", "bad.csv"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("row 3"), "stderr: {}", stderr(&out));
}

#[test]
fn seed_env_fallback_and_flag_precedence() {
    let by_flag = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(
        by_flag.path(),
        &["simulate", "--p", "3", "--n", "12", "--seed", "42"],
    ));

    let by_env = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ggmm"))
        .current_dir(by_env.path())
        .args(["simulate", "--p", "3", "--n", "12"])
        .env("GGMM_SEED", "42")
        .output()
        .unwrap();
    assert_ok(&out);
    assert_eq!(
        fs::read(by_flag.path().join("data.csv")).unwrap(),
        fs::read(by_env.path().join("data.csv")).unwrap()
    );

    // an explicit flag wins over the environment
    let mixed = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ggmm"))
        .current_dir(mixed.path())
        .args(["simulate", "--p", "3", "--n", "12", "--seed", "42"])
        .env("GGMM_SEED", "999")
        .output()
        .unwrap();
    assert_ok(&out);
    assert_eq!(
        fs::read(by_flag.path().join("data.csv")).unwrap(),
        fs::read(mixed.path().join("data.csv")).unwrap()
    );

    // unparseable environment seed is a config error
    let bad = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ggmm"))
        .current_dir(bad.path())
        .args(["simulate", "--p", "3", "--n", "12"])
        .env("GGMM_SEED", "not-a-number")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("GGMM_SEED"), "stderr: {}", stderr(&out));
}

#[test]
fn replicate_writes_cells_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(
        dir.path(),
        &[
            "replicate", "--reps", "2", "--ns", "200,400", "--p", "8", "--grid", "2",
            "--restarts", "3", "--jobs", "2", "--seed", "1", "--out-dir", "sweep",
        ],
    ));

    let csv = fs::read_to_string(dir.path().join("sweep/summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    // header + 2 schemes x 2 sample sizes x 2 clusters
    assert_eq!(lines.len(), 9, "{csv}");
    assert!(lines[0].starts_with("scheme,n,cluster,reps,mean_ad"));

    let cells: Vec<_> = fs::read_dir(dir.path().join("sweep/cells")).unwrap().collect();
    assert_eq!(cells.len(), 8);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["schema_version"], 1);
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r["reps"] == 2));
}

#[test]
fn fit_results_are_deterministic_up_to_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(
        dir.path(),
        &["simulate", "--p", "4", "--n", "100", "--seed", "6"],
    ));
    let fit_args = [
        "fit", "--data", "data.csv", "--k", "2", "--grid", "2", "--restarts", "3",
        "--seed", "13", "--center", "false",
    ];
    assert_ok(&ggmm(dir.path(), &fit_args));
    let first: FitFile = read_json(&dir.path().join("fit.json")).unwrap();
    assert_ok(&ggmm(dir.path(), &fit_args));
    let mut second: FitFile = read_json(&dir.path().join("fit.json")).unwrap();
    second.elapsed_seconds = first.elapsed_seconds;
    assert_eq!(
        serde_json::to_string(&first).unwrap(),
        serde_json::to_string(&second).unwrap()
    );
}

#[test]
fn non_convergence_is_a_flag_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&ggmm(
        dir.path(),
        &["simulate", "--p", "4", "--n", "100", "--seed", "6"],
    ));
    assert_ok(&ggmm(
        dir.path(),
        &[
            "fit", "--data", "data.csv", "--k", "2", "--grid", "2", "--restarts", "2",
            "--max-iters", "1", "--seed", "13", "--center", "false",
        ],
    ));
    let fit: FitFile = read_json(&dir.path().join("fit.json")).unwrap();
    assert!(!fit.converged);
    assert_eq!(fit.iterations, 1);
}

#[test]
fn usage_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    // missing required --data
    assert_eq!(ggmm(dir.path(), &["fit"]).status.code(), Some(2));
    // unknown subcommand
    assert_eq!(ggmm(dir.path(), &["frobnicate"]).status.code(), Some(2));
}
