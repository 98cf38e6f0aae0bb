//! Command-line surface: simulate data, fit a mixture with penalty
//! selection, evaluate recovery against a truth file, and run the
//! sample-size sweep driver that produces a summary table.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmetrics::{recovery_report, AdMode, RecoveryReport, EDGE_TOL};
use crate::io::{
    self, atomic_write, dot_graph, read_dataset_csv, read_json, write_dataset_csv, write_json,
    FitFile, MetricsFile, TruthFile, SCHEMA_VERSION,
};
use crate::mixture::{EmControl, InitPolicy, MixtureParams};
use crate::modelsel::{select, PenaltyConfig, PenaltyScheme, SelectionReport};
use crate::seedmix::stream_seed;
use crate::simulate::{chain_precision, sample_mixture};
use crate::symlin::SymMatrix;

#[derive(Debug, Parser)]
#[command(name = "ggmm", version, about = "Sparse Gaussian graphical mixture models")]
pub struct Cli {
    /// Master seed; falls back to the GGMM_SEED environment variable, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw observations from a zero-mean Gaussian mixture with banded
    /// precision matrices.
    Simulate(SimulateArgs),
    /// Estimate a sparse mixture from a data CSV, selecting the penalty by
    /// EBIC over a grid.
    Fit(FitArgs),
    /// Score a fit against a truth file.
    Eval(EvalArgs),
    /// Sweep sample sizes with repeated seeded runs and summarize recovery.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Nlogp,
    Logp,
}

impl From<SchemeArg> for PenaltyScheme {
    fn from(v: SchemeArg) -> Self {
        match v {
            SchemeArg::Nlogp => PenaltyScheme::NLogP,
            SchemeArg::Logp => PenaltyScheme::LogP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Kmeans,
}

impl From<InitArg> for InitPolicy {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::Random => InitPolicy::RandomResponsibilities,
            InitArg::Kmeans => InitPolicy::KMeans,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdArg {
    Max,
    Mean,
}

impl From<AdArg> for AdMode {
    fn from(v: AdArg) -> Self {
        match v {
            AdArg::Max => AdMode::Max,
            AdArg::Mean => AdMode::Mean,
        }
    }
}

fn scheme_slug(s: PenaltyScheme) -> &'static str {
    match s {
        PenaltyScheme::NLogP => "nlogp",
        PenaltyScheme::LogP => "logp",
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of variables.
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    /// Number of observations.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Colon-separated component structures, e.g. chain1:chain2 for
    /// first- and second-neighbor bands.
    #[arg(long, default_value = "chain1:chain2")]
    pub scheme: String,
    /// Comma-separated mixing proportions; a single value v with two
    /// components means (v, 1 - v).
    #[arg(long, default_value = "0.5")]
    pub pi: String,
    /// Diagonal value of every banded precision.
    #[arg(long, default_value_t = 1.0)]
    pub diag: f64,
    /// Band value of every banded precision.
    #[arg(long, default_value_t = -0.4, allow_hyphen_values = true)]
    pub offdiag: f64,
    /// Output data CSV.
    #[arg(long, default_value = "data.csv")]
    pub data_out: PathBuf,
    /// Output truth JSON.
    #[arg(long, default_value = "truth.json")]
    pub truth_out: PathBuf,
    /// Write a header line x1..xp in the CSV.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input data CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of mixture components.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Penalty scale: nlogp grows with sqrt(n ln p), logp with sqrt(ln p).
    #[arg(long, value_enum, default_value_t = SchemeArg::Nlogp)]
    pub lambda_scheme: SchemeArg,
    /// Number of penalty grid points.
    #[arg(long, default_value_t = 10)]
    pub grid: usize,
    /// Lower grid bound as a multiple of the scheme base.
    #[arg(long, default_value_t = 0.1)]
    pub c1: f64,
    /// Upper grid bound as a multiple of the scheme base.
    #[arg(long, default_value_t = 0.25)]
    pub c2: f64,
    /// EBIC sparsity weight.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Relative log-likelihood change declaring convergence.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    /// Subtract column means before fitting (pass `--center false` for
    /// already-centered data).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub center: bool,
    /// Output fit JSON.
    #[arg(long, default_value = "fit.json")]
    pub out: PathBuf,
    /// If set, write one DOT graph per component into this directory.
    #[arg(long)]
    pub dot_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Fit JSON produced by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Truth JSON produced by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Output metrics JSON.
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
    /// Aggregate proportion error by max or mean over components.
    #[arg(long, value_enum, default_value_t = AdArg::Max)]
    pub ad_mode: AdArg,
    /// Absolute threshold for counting a precision entry as an edge.
    #[arg(long, default_value_t = EDGE_TOL)]
    pub edge_tol: f64,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// Penalty scheme to sweep; omit to run both.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Repetitions per (scheme, n) cell.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Comma-separated sample sizes.
    #[arg(long, default_value = "100,300,800,2000,5000")]
    pub ns: String,
    /// Number of variables.
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    /// Colon-separated component structures (their count fixes K).
    #[arg(long, default_value = "chain1:chain2")]
    pub components: String,
    /// Comma-separated mixing proportions (same shorthand as simulate).
    #[arg(long, default_value = "0.5")]
    pub pi: String,
    #[arg(long, default_value_t = 1.0)]
    pub diag: f64,
    #[arg(long, default_value_t = -0.4, allow_hyphen_values = true)]
    pub offdiag: f64,
    #[arg(long, default_value_t = 10)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.1)]
    pub c1: f64,
    #[arg(long, default_value_t = 0.25)]
    pub c2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    #[arg(long, value_enum, default_value_t = AdArg::Max)]
    pub ad_mode: AdArg,
    /// Maximum concurrently running cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory: per-cell JSONs under cells/ plus summary.csv and
    /// summary.json.
    #[arg(long, default_value = "replicate")]
    pub out_dir: PathBuf,
}

/// Parses `chain1:chain2`-style structure lists into precision matrices.
fn parse_structures(text: &str, p: usize, diag: f64, offdiag: f64) -> Result<Vec<SymMatrix>> {
    let mut thetas = Vec::new();
    for part in text.split(':') {
        let offset: usize = part
            .strip_prefix("chain")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown component structure {part:?}; expected chain<offset>"
                ))
            })?;
        thetas.push(chain_precision(p, offset, diag, offdiag)?);
    }
    Ok(thetas)
}

/// Parses comma-separated proportions; a single value v expands to (v, 1-v)
/// when k = 2. Positivity and the sum are validated downstream.
fn parse_pi(text: &str, k: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidConfig(format!("bad proportion list {text:?}: {e}")))?;
    match (values.len(), k) {
        (len, k) if len == k => Ok(values),
        (1, 2) => Ok(vec![values[0], 1.0 - values[0]]),
        (len, k) => Err(Error::InvalidConfig(format!(
            "got {len} proportions for {k} components"
        ))),
    }
}

fn parse_ns(text: &str) -> Result<Vec<usize>> {
    let ns: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidConfig(format!("bad sample size list {text:?}: {e}")))?;
    if ns.is_empty() || ns.iter().any(|&n| n < 2) {
        return Err(Error::InvalidConfig(format!(
            "sample sizes must all be at least 2, got {text:?}"
        )));
    }
    Ok(ns)
}

fn mixture_from_flags(
    structures: &str,
    pi: &str,
    p: usize,
    diag: f64,
    offdiag: f64,
) -> Result<MixtureParams> {
    let thetas = parse_structures(structures, p, diag, offdiag)?;
    let pi = parse_pi(pi, thetas.len())?;
    MixtureParams::new(pi, thetas)
}

pub fn cmd_simulate(args: &SimulateArgs, seed: u64) -> Result<()> {
    let params = mixture_from_flags(&args.scheme, &args.pi, args.p, args.diag, args.offdiag)?;
    let (data, truth) = sample_mixture(&params, args.n, seed)?;
    write_dataset_csv(&args.data_out, &data, args.header)?;
    write_json(&args.truth_out, &TruthFile::from_truth(&truth))?;
    println!(
        "simulate: {} x {} observations from {} components -> {} / {}",
        data.n(),
        data.p(),
        params.k(),
        args.data_out.display(),
        args.truth_out.display()
    );
    Ok(())
}

fn fit_file_from_selection(
    sel: &SelectionReport,
    scheme: PenaltyScheme,
    n: usize,
    seed: u64,
    elapsed_seconds: f64,
) -> FitFile {
    let fit = &sel.chosen_fit;
    let edges = fit
        .params
        .thetas
        .iter()
        .map(|theta| {
            crate::evalmetrics::edge_set(theta, EDGE_TOL)
                .into_iter()
                .collect()
        })
        .collect();
    FitFile {
        schema_version: SCHEMA_VERSION,
        seed,
        n,
        p: fit.params.p(),
        k: fit.params.k(),
        lambda_scheme: scheme,
        chosen_lambda: sel.chosen_lambda,
        grid: sel.grid.clone(),
        ebic: sel.ebic_values.clone(),
        pi: fit.params.pi.clone(),
        thetas: fit.params.thetas.iter().map(io::matrix_to_rows).collect(),
        edges,
        loglik_trace: fit.loglik_trace.clone(),
        converged: fit.converged,
        iterations: fit.iterations,
        restart_index: fit.restart_index,
        elapsed_seconds,
    }
}

fn write_dot_dir(dir: &Path, params: &MixtureParams, tol: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (k, theta) in params.thetas.iter().enumerate() {
        let name = format!("cluster_{}", k + 1);
        atomic_write(&dir.join(format!("{name}.dot")), &dot_graph(theta, tol, &name))?;
    }
    Ok(())
}

pub fn cmd_fit(args: &FitArgs, seed: u64) -> Result<()> {
    let start = Instant::now();
    let mut data = read_dataset_csv(&args.data)?;
    if args.center {
        data.center_columns();
    }
    let cfg = PenaltyConfig {
        scheme: args.lambda_scheme.into(),
        c1: args.c1,
        c2: args.c2,
        grid_size: args.grid,
        gamma_ebic: args.gamma,
    };
    let ctrl = EmControl {
        tol: args.tol,
        max_iters: args.max_iters,
        restarts: args.restarts,
        seed,
        ..Default::default()
    };
    let sel = select(&data, args.k, &cfg, &ctrl, args.init.into())?;
    let file = fit_file_from_selection(
        &sel,
        cfg.scheme,
        data.n(),
        seed,
        start.elapsed().as_secs_f64(),
    );
    write_json(&args.out, &file)?;
    if let Some(dir) = &args.dot_dir {
        write_dot_dir(dir, &sel.chosen_fit.params, EDGE_TOL)?;
    }
    println!(
        "fit: k={} lambda={:.6} converged={} iterations={} -> {}",
        args.k,
        sel.chosen_lambda,
        sel.chosen_fit.converged,
        sel.chosen_fit.iterations,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let fit: FitFile = read_json(&args.fit)?;
    let truth: TruthFile = read_json(&args.truth)?;
    let est = fit.params()?;
    let true_params = truth.params()?;
    let report = recovery_report(&est, &true_params, args.edge_tol, args.ad_mode.into())?;
    write_json(
        &args.out,
        &MetricsFile {
            schema_version: SCHEMA_VERSION,
            report: report.clone(),
        },
    )?;
    println!(
        "eval: pi_ad={:.6} mean_f1={:.6} -> {}",
        report.pi_ad,
        report.per_cluster.iter().map(|c| c.f1).sum::<f64>() / report.per_cluster.len() as f64,
        args.out.display()
    );
    Ok(())
}

struct CellSpec {
    scheme: PenaltyScheme,
    n: usize,
    rep: usize,
    data_seed: u64,
    fit_seed: u64,
}

/// One completed sweep cell, persisted as soon as the cell finishes.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellFile {
    schema_version: u32,
    scheme: PenaltyScheme,
    n: usize,
    rep: usize,
    data_seed: u64,
    fit_seed: u64,
    chosen_lambda: f64,
    converged: bool,
    metrics: RecoveryReport,
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRow {
    scheme: PenaltyScheme,
    n: usize,
    /// 1-based component index after alignment to the truth.
    cluster: usize,
    reps: usize,
    mean_ad: f64,
    mean_frobenius: f64,
    mean_f1: f64,
    mean_tp: f64,
    mean_fp: f64,
    mean_precision: f64,
    mean_recall: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SummaryFile {
    schema_version: u32,
    seed: u64,
    rows: Vec<SummaryRow>,
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "scheme,n,cluster,reps,mean_ad,mean_frobenius,mean_f1,mean_tp,mean_fp,mean_precision,mean_recall\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            scheme_slug(r.scheme),
            r.n,
            r.cluster,
            r.reps,
            io::format_f64(r.mean_ad),
            io::format_f64(r.mean_frobenius),
            io::format_f64(r.mean_f1),
            io::format_f64(r.mean_tp),
            io::format_f64(r.mean_fp),
            io::format_f64(r.mean_precision),
            io::format_f64(r.mean_recall),
        ));
    }
    out
}

fn run_cell(
    spec: &CellSpec,
    truth: &MixtureParams,
    args: &ReplicateArgs,
    cells_dir: &Path,
) -> Result<CellFile> {
    let (data, _) = sample_mixture(truth, spec.n, spec.data_seed)?;
    let cfg = PenaltyConfig {
        scheme: spec.scheme,
        c1: args.c1,
        c2: args.c2,
        grid_size: args.grid,
        gamma_ebic: args.gamma,
    };
    let ctrl = EmControl {
        tol: args.tol,
        max_iters: args.max_iters,
        restarts: args.restarts,
        seed: spec.fit_seed,
        ..Default::default()
    };
    let sel = select(&data, truth.k(), &cfg, &ctrl, args.init.into())?;
    let metrics = recovery_report(&sel.chosen_fit.params, truth, EDGE_TOL, args.ad_mode.into())?;
    let cell = CellFile {
        schema_version: SCHEMA_VERSION,
        scheme: spec.scheme,
        n: spec.n,
        rep: spec.rep,
        data_seed: spec.data_seed,
        fit_seed: spec.fit_seed,
        chosen_lambda: sel.chosen_lambda,
        converged: sel.chosen_fit.converged,
        metrics,
    };
    let name = format!("{}_n{}_rep{}.json", scheme_slug(spec.scheme), spec.n, spec.rep);
    write_json(&cells_dir.join(name), &cell)?;
    Ok(cell)
}

pub fn cmd_replicate(args: &ReplicateArgs, seed: u64) -> Result<()> {
    if args.reps == 0 {
        return Err(Error::InvalidConfig("reps must be positive".into()));
    }
    if args.jobs == 0 {
        return Err(Error::InvalidConfig("jobs must be positive".into()));
    }
    let ns = parse_ns(&args.ns)?;
    let truth = mixture_from_flags(&args.components, &args.pi, args.p, args.diag, args.offdiag)?;
    let schemes: Vec<PenaltyScheme> = match args.scheme {
        Some(s) => vec![s.into()],
        None => vec![PenaltyScheme::NLogP, PenaltyScheme::LogP],
    };
    let cells_dir = args.out_dir.join("cells");
    fs::create_dir_all(&cells_dir)?;

    // Data and fit streams depend only on (n, rep) so both penalty schemes
    // see identical datasets and restart seeds.
    let mut specs = Vec::new();
    for &scheme in &schemes {
        for (n_idx, &n) in ns.iter().enumerate() {
            for rep in 0..args.reps {
                let tag = (n_idx * args.reps + rep) as u64;
                specs.push(CellSpec {
                    scheme,
                    n,
                    rep,
                    data_seed: stream_seed(seed, 2 * tag),
                    fit_seed: stream_seed(seed, 2 * tag + 1),
                });
            }
        }
    }

    let outcomes: Vec<Result<CellFile>> = if args.jobs == 1 {
        specs
            .iter()
            .map(|s| run_cell(s, &truth, args, &cells_dir))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        pool.install(|| {
            specs
                .par_iter()
                .map(|s| run_cell(s, &truth, args, &cells_dir))
                .collect()
        })
    };

    let mut cells = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        cells.push(outcome?);
    }

    let k = truth.k();
    let mut rows = Vec::new();
    for &scheme in &schemes {
        for &n in &ns {
            let group: Vec<&CellFile> = cells
                .iter()
                .filter(|c| c.scheme == scheme && c.n == n)
                .collect();
            let reps = group.len();
            for cluster in 0..k {
                let mean = |f: &dyn Fn(&CellFile) -> f64| {
                    group.iter().map(|c| f(c)).sum::<f64>() / reps as f64
                };
                rows.push(SummaryRow {
                    scheme,
                    n,
                    cluster: cluster + 1,
                    reps,
                    mean_ad: mean(&|c| c.metrics.pi_ad),
                    mean_frobenius: mean(&|c| c.metrics.per_cluster[cluster].frobenius),
                    mean_f1: mean(&|c| c.metrics.per_cluster[cluster].f1),
                    mean_tp: mean(&|c| c.metrics.per_cluster[cluster].confusion.tp as f64),
                    mean_fp: mean(&|c| c.metrics.per_cluster[cluster].confusion.fp as f64),
                    mean_precision: mean(&|c| c.metrics.per_cluster[cluster].precision),
                    mean_recall: mean(&|c| c.metrics.per_cluster[cluster].recall),
                });
            }
        }
    }

    atomic_write(&args.out_dir.join("summary.csv"), &summary_csv(&rows))?;
    write_json(
        &args.out_dir.join("summary.json"),
        &SummaryFile {
            schema_version: SCHEMA_VERSION,
            seed,
            rows,
        },
    )?;
    println!(
        "replicate: {} cells ({} schemes x {} sample sizes x {} reps) -> {}",
        cells.len(),
        schemes.len(),
        ns.len(),
        args.reps,
        args.out_dir.display()
    );
    Ok(())
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("GGMM_SEED") {
        Ok(text) => text.trim().parse().map_err(|_| {
            Error::InvalidConfig(format!("GGMM_SEED must be an unsigned integer, got {text:?}"))
        }),
        Err(_) => Ok(0),
    }
}

/// Parses argv and dispatches; the binary maps Err to a nonzero exit.
pub fn run() -> Result<()> {
    let cli = Cli::parse();
    let seed = resolve_seed(cli.seed)?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args, seed),
        Command::Fit(args) => cmd_fit(&args, seed),
        Command::Eval(args) => cmd_eval(&args),
        Command::Replicate(args) => cmd_replicate(&args, seed),
    }
}
