//! L1-penalized covariance selection: maximize
//! `ln|Theta| - tr(S Theta) - lambda * ||Theta||_1` over positive-definite
//! precision matrices, with the penalty applied to every entry of `Theta`,
//! diagonal included.
//!
//! The solver is block coordinate descent over columns of the working
//! covariance W, each column update solving a lasso subproblem by coordinate
//! descent. W starts at `S + lambda I` and its diagonal never moves, which is
//! exactly the stationarity condition `W_ii = S_ii + lambda` implied by the
//! diagonal penalty.

use crate::error::{Error, Result};
use crate::symlin::{self, SymMatrix, PD_PIVOT_TOL};

/// Tuning knobs for [`glasso_fit`].
#[derive(Debug, Clone)]
pub struct GlassoConfig {
    /// Effective penalty applied to all entries of the precision matrix.
    pub lambda: f64,
    /// Outer sweep budget over all columns.
    pub max_sweeps: usize,
    /// Outer convergence: average absolute change of W entries per sweep,
    /// relative to the mean absolute off-diagonal of S.
    pub conv_tol: f64,
    /// Inner lasso convergence: largest absolute coefficient change per pass.
    pub inner_tol: f64,
}

impl GlassoConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        GlassoConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.conv_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_sweeps < 1 {
            return Err(Error::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for GlassoConfig {
    fn default() -> Self {
        GlassoConfig {
            lambda: 0.0,
            max_sweeps: 200,
            conv_tol: 1e-6,
            inner_tol: 1e-9,
        }
    }
}

/// Converged (or best-effort) output of [`glasso_fit`].
#[derive(Debug, Clone)]
pub struct GlassoSolution {
    /// Precision estimate.
    pub theta: SymMatrix,
    /// Working covariance W; inverts `theta` to within solver tolerance.
    pub sigma: SymMatrix,
    /// Outer sweeps consumed.
    pub iterations: usize,
    /// Largest stationarity violation over all entries (see [`kkt_violation`]).
    pub max_kkt_violation: f64,
    /// Penalized objective at `theta`, recomputed from scratch.
    pub objective: f64,
}

/// sign(x) * max(|x| - t, 0); exact zeros inside the dead zone.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Penalized log-likelihood objective `ln|theta| - tr(s theta) - lambda ||theta||_1`,
/// the L1 sum running over all entries including the diagonal.
pub fn objective(theta: &SymMatrix, s: &SymMatrix, lambda: f64) -> Result<f64> {
    Ok(symlin::log_det(theta)? - s.trace_product(theta) - lambda * theta.l1_norm())
}

/// Stationarity violation of a candidate solution, measured on the working
/// covariance: for nonzero entries `|sigma_ij - s_ij - lambda sign(theta_ij)|`,
/// for zero off-diagonals the excess of `|sigma_ij - s_ij|` over `lambda`.
pub fn kkt_violation(theta: &SymMatrix, sigma: &SymMatrix, s: &SymMatrix, lambda: f64) -> f64 {
    let p = theta.dim();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..=i {
            let diff = sigma.get(i, j) - s.get(i, j);
            let t = theta.get(i, j);
            let v = if t != 0.0 {
                (diff - lambda * t.signum()).abs()
            } else {
                (diff.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Solves the penalized covariance-selection problem for one empirical
/// second-moment matrix `s`.
///
/// Returns [`Error::NotConverged`] carrying the best-effort solution when the
/// sweep budget runs out, and [`Error::InvalidInput`] for NaN entries or a
/// negative diagonal.
pub fn glasso_fit(s: &SymMatrix, cfg: &GlassoConfig) -> Result<GlassoSolution> {
    cfg.validate()?;
    if s.has_nan() {
        return Err(Error::InvalidInput("NaN in input matrix".into()));
    }
    let p = s.dim();
    for i in 0..p {
        if s.get(i, i) < 0.0 {
            return Err(Error::InvalidInput(format!(
                "negative diagonal entry at ({i},{i})"
            )));
        }
    }
    let lambda = cfg.lambda;

    // The unpenalized MLE only exists for nonsingular s; refuse the
    // pseudo-inverse route and hand back empty diagnostics.
    if lambda == 0.0 && symlin::cholesky(s).is_err() {
        return Err(Error::NotConverged(Box::new(GlassoSolution {
            theta: SymMatrix::identity(p),
            sigma: s.clone(),
            iterations: 0,
            max_kkt_violation: f64::INFINITY,
            objective: f64::NEG_INFINITY,
        })));
    }

    let mut w = s.clone();
    for i in 0..p {
        w.set(i, i, s.get(i, i) + lambda);
    }
    // beta[j * p + m] is the lasso coefficient of variable m in column j's
    // subproblem; the diagonal slots are unused.
    let mut beta = vec![0.0f64; p * p];

    let scale = s.mean_abs_offdiag();
    let thr = if scale > 0.0 { cfg.conv_tol * scale } else { cfg.conv_tol };

    let mut converged = false;
    let mut sweeps_used = 0;
    for sweep in 1..=cfg.max_sweeps {
        sweeps_used = sweep;
        let mut total_change = 0.0;
        for j in 0..p {
            lasso_column(s, &w, &mut beta[j * p..(j + 1) * p], j, lambda, cfg.inner_tol);
            // w12 = W11 * beta, written back symmetrically
            for m in 0..p {
                if m == j {
                    continue;
                }
                let mut v = 0.0;
                let row = w.row(m);
                for k in 0..p {
                    if k != j {
                        v += row[k] * beta[j * p + k];
                    }
                }
                total_change += (w.get(m, j) - v).abs();
                w.set(m, j, v);
            }
        }
        let denom = (p * p.saturating_sub(1)).max(1) as f64;
        if total_change / denom < thr {
            converged = true;
            break;
        }
    }

    let theta = recover_precision(&w, &beta, p)?;
    let max_kkt = kkt_violation(&theta, &w, s, lambda);
    let obj = objective(&theta, s, lambda).unwrap_or(f64::NEG_INFINITY);
    let solution = GlassoSolution {
        theta,
        sigma: w,
        iterations: sweeps_used,
        max_kkt_violation: max_kkt,
        objective: obj,
    };
    if converged && solution.objective.is_finite() {
        Ok(solution)
    } else {
        Err(Error::NotConverged(Box::new(solution)))
    }
}

/// Coordinate descent on the column-j lasso
/// `min_beta 1/2 beta' W11 beta - beta' s12 + lambda ||beta||_1`.
fn lasso_column(
    s: &SymMatrix,
    w: &SymMatrix,
    beta: &mut [f64],
    j: usize,
    lambda: f64,
    inner_tol: f64,
) {
    let p = s.dim();
    // cap guards against cycling on pathological inputs
    for _pass in 0..10_000 {
        let mut max_delta = 0.0f64;
        for m in 0..p {
            if m == j {
                continue;
            }
            let row = w.row(m);
            let mut dot = 0.0;
            for k in 0..p {
                if k != j {
                    dot += row[k] * beta[k];
                }
            }
            let wmm = row[m];
            let residual = s.get(m, j) - (dot - wmm * beta[m]);
            let updated = soft_threshold(residual, lambda) / wmm;
            max_delta = max_delta.max((updated - beta[m]).abs());
            beta[m] = updated;
        }
        if max_delta <= inner_tol {
            break;
        }
    }
}

/// Builds Theta from the converged W and per-column lasso coefficients.
/// Columns j and m each produce an estimate of entry (m, j); agreement in sign
/// means the entries are averaged, disagreement (a boundary case) snaps to 0.
fn recover_precision(w: &SymMatrix, beta: &[f64], p: usize) -> Result<SymMatrix> {
    let mut raw = vec![0.0f64; p * p];
    for j in 0..p {
        let mut dot = 0.0;
        for m in 0..p {
            if m != j {
                dot += w.get(m, j) * beta[j * p + m];
            }
        }
        let denom = w.get(j, j) - dot;
        if denom <= PD_PIVOT_TOL {
            return Err(Error::NotPositiveDefinite);
        }
        let tjj = 1.0 / denom;
        raw[j * p + j] = tjj;
        for m in 0..p {
            if m != j {
                raw[j * p + m] = -beta[j * p + m] * tjj;
            }
        }
    }
    let mut theta = SymMatrix::zeros(p);
    for j in 0..p {
        theta.set(j, j, raw[j * p + j]);
        for m in 0..j {
            let a = raw[j * p + m];
            let b = raw[m * p + j];
            let v = if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
                0.0
            } else {
                0.5 * (a + b)
            };
            theta.set(j, m, v);
        }
    }
    Ok(theta)
}
