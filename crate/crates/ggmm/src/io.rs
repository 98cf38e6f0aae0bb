//! On-disk formats: numeric CSV for datasets, versioned JSON for truth, fit,
//! and metrics artifacts, DOT graphs for visualization handoff. All writes go
//! through a temp-file-and-rename so readers never observe partial files.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmetrics::{edge_set, RecoveryReport};
use crate::mixture::{Dataset, MixtureParams};
use crate::modelsel::PenaltyScheme;
use crate::simulate::SimTruth;
use crate::symlin::SymMatrix;

/// Version stamp on every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits; parses back to the identical f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Prefixes an I/O error with the path it concerns.
fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .map_err(|e| with_path(path, e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| with_path(path, e))?;
    tmp.persist(path).map_err(|e| with_path(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

/// Dataset CSV: one observation per line, comma-separated, full-precision
/// scientific notation; optional single header line x1..xp.
pub fn write_dataset_csv(path: &Path, data: &Dataset, header: bool) -> Result<()> {
    let mut out = String::new();
    if header {
        let names: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for i in 0..data.n() {
        let cells: Vec<String> = data.row(i).iter().map(|&v| format_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    atomic_write(path, &out)
}

/// Parses a dataset CSV, auto-detecting one optional header line. Parse
/// failures report the 1-based line number.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|cell| cell.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(e) => {
                // a non-numeric first line is a header; anywhere else it is an error
                if idx == 0 && rows.is_empty() {
                    continue;
                }
                return Err(Error::Parse {
                    row: idx + 1,
                    msg: e.to_string(),
                });
            }
        }
    }
    Dataset::from_rows(&rows)
}

pub fn matrix_to_rows(m: &SymMatrix) -> Vec<Vec<f64>> {
    (0..m.dim()).map(|i| m.row(i).to_vec()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<SymMatrix> {
    SymMatrix::from_rows(rows)
}

/// Ground-truth artifact written next to simulated data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub schema_version: u32,
    pub seed: u64,
    pub pi: Vec<f64>,
    pub thetas: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
}

impl TruthFile {
    pub fn from_truth(truth: &SimTruth) -> Self {
        TruthFile {
            schema_version: SCHEMA_VERSION,
            seed: truth.seed,
            pi: truth.params.pi.clone(),
            thetas: truth.params.thetas.iter().map(matrix_to_rows).collect(),
            labels: truth.labels.clone(),
        }
    }

    pub fn params(&self) -> Result<MixtureParams> {
        let thetas = self
            .thetas
            .iter()
            .map(|rows| matrix_from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        MixtureParams::new(self.pi.clone(), thetas)
    }
}

/// Fit artifact: the selected penalty, the whole grid with its scores, and
/// the winning mixture estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    pub schema_version: u32,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub lambda_scheme: PenaltyScheme,
    pub chosen_lambda: f64,
    pub grid: Vec<f64>,
    /// EBIC per grid point; null marks a failed fit.
    pub ebic: Vec<Option<f64>>,
    pub pi: Vec<f64>,
    pub thetas: Vec<Vec<Vec<f64>>>,
    /// Recovered edges per component, 0-based (i, j) with i < j.
    pub edges: Vec<Vec<(usize, usize)>>,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub restart_index: usize,
    pub elapsed_seconds: f64,
}

impl FitFile {
    pub fn params(&self) -> Result<MixtureParams> {
        let thetas = self
            .thetas
            .iter()
            .map(|rows| matrix_from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        MixtureParams::new(self.pi.clone(), thetas)
    }
}

/// Metrics artifact produced by evaluating a fit against a truth file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: RecoveryReport,
}

/// Undirected DOT graph of a precision matrix's support; nodes are v1..vp.
pub fn dot_graph(theta: &SymMatrix, tol: f64, name: &str) -> String {
    let mut out = format!("graph {name} {{\n");
    for i in 1..=theta.dim() {
        out.push_str(&format!("  v{i};\n"));
    }
    for (i, j) in edge_set(theta, tol) {
        out.push_str(&format!("  v{} -- v{};\n", i + 1, j + 1));
    }
    out.push_str("}\n");
    out
}
