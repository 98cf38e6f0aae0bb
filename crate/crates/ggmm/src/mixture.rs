//! Penalized EM for zero-mean Gaussian mixtures that differ in their
//! precision matrices.
//!
//! The E-step computes posterior component responsibilities in the log domain.
//! The M-step updates mixing proportions in closed form and refits each
//! component's precision by penalized covariance selection on the
//! responsibility-weighted second-moment matrix, with effective penalty
//! `2 lambda_n / mass_k` so the total penalty on the mixture objective stays
//! `lambda_n` per component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::glasso::{self, GlassoConfig, GlassoSolution};
use crate::seedmix::stream_seed;
use crate::symlin::{self, SymMatrix};

#[inline]
fn ln_2pi() -> f64 {
    (2.0 * std::f64::consts::PI).ln()
}

/// Minimum total responsibility mass a component may hold; below this the
/// restart is abandoned as collapsed. The effective glasso penalty scales with
/// the reciprocal of the mass, so near-zero masses are numerically hopeless.
pub fn collapse_floor(n: usize) -> f64 {
    (1e-3 * n as f64).max(1.0)
}

/// Observation matrix, n rows of p variables, dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        let p = rows[0].len();
        let mut values = Vec::with_capacity(n * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    left: row.len(),
                    right: p,
                });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "non-finite value {v} in observation {i}"
                    )));
                }
                values.push(v);
            }
        }
        if p == 0 {
            return Err(Error::InvalidInput("observations have zero length".into()));
        }
        Ok(Dataset { n, p, values })
    }

    pub fn from_flat(values: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if values.len() != n * p {
            return Err(Error::DimensionMismatch {
                left: values.len(),
                right: n * p,
            });
        }
        if n < 2 || p == 0 {
            return Err(Error::InvalidInput(format!("invalid shape {n}x{p}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in data".into()));
        }
        Ok(Dataset { n, p, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    /// Subtracts each column's mean in place and returns the means.
    pub fn center_columns(&mut self) -> Vec<f64> {
        let mut means = vec![0.0; self.p];
        for i in 0..self.n {
            for (j, m) in means.iter_mut().enumerate() {
                *m += self.values[i * self.p + j];
            }
        }
        for m in &mut means {
            *m /= self.n as f64;
        }
        for i in 0..self.n {
            for (j, m) in means.iter().enumerate() {
                self.values[i * self.p + j] -= m;
            }
        }
        means
    }

    /// Plain second-moment matrix (1/n) sum y y'.
    pub fn second_moment(&self) -> SymMatrix {
        let mut s = SymMatrix::zeros(self.p);
        for i in 0..self.n {
            let y = self.row(i);
            for a in 0..self.p {
                for b in 0..=a {
                    s.set(a, b, s.get(a, b) + y[a] * y[b]);
                }
            }
        }
        for a in 0..self.p {
            for b in 0..=a {
                s.set(a, b, s.get(a, b) / self.n as f64);
            }
        }
        s
    }
}

/// Posterior component memberships, n rows by k components, rows on the
/// probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    omega: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty responsibilities".into()));
        }
        let k = rows[0].len();
        let mut omega = Vec::with_capacity(n * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    left: row.len(),
                    right: k,
                });
            }
            let mut sum = 0.0;
            for &v in row {
                if !(v >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "negative responsibility in row {i}"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
            omega.extend_from_slice(row);
        }
        Ok(Responsibilities { n, k, omega })
    }

    fn from_flat(omega: Vec<f64>, n: usize, k: usize) -> Self {
        debug_assert_eq!(omega.len(), n * k);
        Responsibilities { n, k, omega }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, comp: usize) -> f64 {
        self.omega[i * self.k + comp]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.omega[i * self.k..(i + 1) * self.k]
    }

    /// Total mass per component.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for i in 0..self.n {
            for (comp, s) in sums.iter_mut().enumerate() {
                *s += self.omega[i * self.k + comp];
            }
        }
        sums
    }

    /// Reorders components so that new column j is old column perm[j].
    fn permute_columns(&mut self, perm: &[usize]) {
        debug_assert_eq!(perm.len(), self.k);
        let mut out = vec![0.0; self.omega.len()];
        for i in 0..self.n {
            for (j, &src) in perm.iter().enumerate() {
                out[i * self.k + j] = self.omega[i * self.k + src];
            }
        }
        self.omega = out;
    }
}

/// Mixture parameters: mixing proportions and one precision matrix per
/// component. Component means are identically zero by model assumption.
#[derive(Debug, Clone)]
pub struct MixtureParams {
    pub pi: Vec<f64>,
    pub thetas: Vec<SymMatrix>,
}

impl MixtureParams {
    /// Validates proportions (positive, summing to 1) and positive
    /// definiteness of every precision matrix; proportions are renormalized
    /// exactly onto the simplex.
    pub fn new(pi: Vec<f64>, thetas: Vec<SymMatrix>) -> Result<Self> {
        if pi.is_empty() || pi.len() != thetas.len() {
            return Err(Error::DimensionMismatch {
                left: pi.len(),
                right: thetas.len(),
            });
        }
        let sum: f64 = pi.iter().sum();
        if pi.iter().any(|&v| !(v > 0.0)) || (sum - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "mixing proportions must be positive and sum to 1, got {pi:?}"
            )));
        }
        let p = thetas[0].dim();
        for theta in &thetas {
            if theta.dim() != p {
                return Err(Error::DimensionMismatch {
                    left: theta.dim(),
                    right: p,
                });
            }
            symlin::cholesky(theta)?;
        }
        let pi = pi.iter().map(|v| v / sum).collect();
        Ok(MixtureParams { pi, thetas })
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn p(&self) -> usize {
        self.thetas[0].dim()
    }

    /// Sorts components by descending proportion (ties keep original order)
    /// and returns the permutation: new slot j held old index perm[j].
    pub fn sort_by_descending_pi(&mut self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.k()).collect();
        perm.sort_by(|&a, &b| self.pi[b].partial_cmp(&self.pi[a]).unwrap().then(a.cmp(&b)));
        self.pi = perm.iter().map(|&i| self.pi[i]).collect();
        self.thetas = perm.iter().map(|&i| self.thetas[i].clone()).collect();
        perm
    }

    fn total_l1(&self) -> f64 {
        self.thetas.iter().map(|t| t.l1_norm()).sum()
    }
}

/// Initialization policy for each EM restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitPolicy {
    /// Each row's responsibilities drawn from a symmetric Dirichlet(5),
    /// followed by an immediate M-step.
    #[default]
    RandomResponsibilities,
    /// Hard k-means assignments on raw observations, softened to 0.9 for the
    /// assigned component and 0.1 spread over the rest.
    KMeans,
}

/// Convergence and restart control for [`em_fit`].
#[derive(Debug, Clone)]
pub struct EmControl {
    /// Relative penalized log-likelihood change declaring convergence.
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Per-component solver settings; the `lambda` field is overwritten with
    /// the effective penalty each M-step.
    pub glasso: GlassoConfig,
}

impl Default for EmControl {
    fn default() -> Self {
        EmControl {
            tol: 1e-6,
            max_iters: 500,
            restarts: 5,
            seed: 0,
            glasso: GlassoConfig::default(),
        }
    }
}

impl EmControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iters < 1 || self.restarts < 1 {
            return Err(Error::InvalidConfig(
                "max_iters and restarts must be at least 1".into(),
            ));
        }
        self.glasso.validate()
    }
}

/// Outcome of one [`em_fit`] call: winning restart's parameters, final
/// responsibilities, and the penalized log-likelihood trace.
#[derive(Debug, Clone)]
pub struct EmReport {
    pub params: MixtureParams,
    pub responsibilities: Responsibilities,
    pub loglik_trace: Vec<f64>,
    /// Completed E+M update cycles (the initial M-step not counted).
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
}

impl EmReport {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace never empty")
    }
}

/// Log density of one observation under a zero-mean Gaussian with precision
/// `theta`: -(p/2) ln(2 pi) + (1/2) ln|theta| - (1/2) y' theta y.
pub fn log_component_density(y: &[f64], theta: &SymMatrix) -> Result<f64> {
    if y.len() != theta.dim() {
        return Err(Error::DimensionMismatch {
            left: y.len(),
            right: theta.dim(),
        });
    }
    let ld = symlin::log_det(theta)?;
    let p = y.len() as f64;
    Ok(-0.5 * p * ln_2pi() + 0.5 * ld - 0.5 * theta.quadratic_form(y))
}

/// E-step plus the observed (unpenalized) log-likelihood it implies; the two
/// share all the per-row work.
fn e_step_with_loglik(data: &Dataset, params: &MixtureParams) -> Result<(Responsibilities, f64)> {
    if params.p() != data.p() {
        return Err(Error::DimensionMismatch {
            left: params.p(),
            right: data.p(),
        });
    }
    let k = params.k();
    let mut log_dets = Vec::with_capacity(k);
    for theta in &params.thetas {
        log_dets.push(symlin::log_det(theta)?);
    }
    let const_term = -0.5 * data.p() as f64 * ln_2pi();
    let ln_pi: Vec<f64> = params.pi.iter().map(|v| v.ln()).collect();

    let mut omega = vec![0.0; data.n() * k];
    let mut loglik = 0.0;
    let mut mass = vec![0.0; k];
    for i in 0..data.n() {
        let y = data.row(i);
        for (comp, m) in mass.iter_mut().enumerate() {
            *m = ln_pi[comp] + const_term + 0.5 * log_dets[comp]
                - 0.5 * params.thetas[comp].quadratic_form(y);
        }
        let top = mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::DegenerateResponsibility { row: i });
        }
        let mut sum = 0.0;
        for (comp, m) in mass.iter().enumerate() {
            let w = (m - top).exp();
            omega[i * k + comp] = w;
            sum += w;
        }
        for w in &mut omega[i * k..(i + 1) * k] {
            *w /= sum;
        }
        loglik += top + sum.ln();
    }
    Ok((Responsibilities::from_flat(omega, data.n(), k), loglik))
}

/// Posterior responsibilities of every observation under `params`.
pub fn e_step(data: &Dataset, params: &MixtureParams) -> Result<Responsibilities> {
    e_step_with_loglik(data, params).map(|(resp, _)| resp)
}

/// Closed-form mixing-proportion update: component mass over n.
pub fn m_step_pi(resp: &Responsibilities) -> Result<Vec<f64>> {
    let sums = resp.column_sums();
    let floor = collapse_floor(resp.n());
    for (comp, &mass) in sums.iter().enumerate() {
        if mass < floor {
            return Err(Error::ClusterCollapse {
                cluster: comp,
                mass,
                floor,
            });
        }
    }
    Ok(sums.iter().map(|s| s / resp.n() as f64).collect())
}

/// Responsibility-weighted second-moment matrix of component `comp`:
/// sum_i omega_ik y_i y_i' / mass_k. No mean subtraction; means are zero by
/// model assumption.
pub fn weighted_covariance(data: &Dataset, resp: &Responsibilities, comp: usize) -> Result<SymMatrix> {
    if resp.n() != data.n() {
        return Err(Error::DimensionMismatch {
            left: resp.n(),
            right: data.n(),
        });
    }
    if comp >= resp.k() {
        return Err(Error::InvalidInput(format!(
            "component {comp} out of range for k={}",
            resp.k()
        )));
    }
    let mass: f64 = (0..data.n()).map(|i| resp.get(i, comp)).sum();
    let floor = collapse_floor(data.n());
    if mass < floor {
        return Err(Error::ClusterCollapse {
            cluster: comp,
            mass,
            floor,
        });
    }
    let p = data.p();
    let mut s = SymMatrix::zeros(p);
    for i in 0..data.n() {
        let w = resp.get(i, comp);
        if w == 0.0 {
            continue;
        }
        let y = data.row(i);
        for a in 0..p {
            let wya = w * y[a];
            for b in 0..=a {
                s.set(a, b, s.get(a, b) + wya * y[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..=a {
            s.set(a, b, s.get(a, b) / mass);
        }
    }
    Ok(s)
}

/// Per-component precision update: penalized covariance selection on the
/// weighted second moment with effective penalty 2 lambda_n / mass.
pub fn m_step_theta(
    s_tilde: &SymMatrix,
    mass: f64,
    lambda_n: f64,
    cfg: &GlassoConfig,
) -> Result<GlassoSolution> {
    if !(mass > 0.0) {
        return Err(Error::InvalidInput(format!(
            "component mass must be positive, got {mass}"
        )));
    }
    if !(lambda_n >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "lambda_n must be nonnegative, got {lambda_n}"
        )));
    }
    let mut cfg = cfg.clone();
    cfg.lambda = 2.0 * lambda_n / mass;
    glasso::glasso_fit(s_tilde, &cfg)
}

/// Observed mixture log-likelihood minus `lambda_n` times the summed
/// elementwise L1 norms of the precisions (diagonals included).
pub fn penalized_loglik(data: &Dataset, params: &MixtureParams, lambda_n: f64) -> Result<f64> {
    let (_, loglik) = e_step_with_loglik(data, params)?;
    Ok(loglik - lambda_n * params.total_l1())
}

/// One full M-step from given responsibilities. A precision solver that runs
/// out of sweeps still yields its best iterate; EM convergence is judged on
/// the likelihood trace, not on inner-solver flags.
fn m_step(
    data: &Dataset,
    resp: &Responsibilities,
    lambda_n: f64,
    gcfg: &GlassoConfig,
) -> Result<MixtureParams> {
    let pi = m_step_pi(resp)?;
    let masses = resp.column_sums();
    let mut thetas = Vec::with_capacity(resp.k());
    for comp in 0..resp.k() {
        let s_tilde = weighted_covariance(data, resp, comp)?;
        let theta = match m_step_theta(&s_tilde, masses[comp], lambda_n, gcfg) {
            Ok(sol) => sol.theta,
            Err(Error::NotConverged(sol)) => sol.theta,
            Err(e) => return Err(e),
        };
        thetas.push(theta);
    }
    MixtureParams::new(pi, thetas)
}

fn dirichlet_responsibilities(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Responsibilities {
    if k == 1 {
        return Responsibilities::from_flat(vec![1.0; n], n, 1);
    }
    let gamma = Gamma::new(5.0, 1.0).expect("valid shape");
    let mut omega = vec![0.0; n * k];
    for i in 0..n {
        let mut sum = 0.0;
        for comp in 0..k {
            let g: f64 = gamma.sample(rng);
            omega[i * k + comp] = g;
            sum += g;
        }
        for w in &mut omega[i * k..(i + 1) * k] {
            *w /= sum;
        }
    }
    Responsibilities::from_flat(omega, n, k)
}

fn kmeans_responsibilities(data: &Dataset, k: usize, rng: &mut ChaCha8Rng) -> Responsibilities {
    let n = data.n();
    if k == 1 {
        return Responsibilities::from_flat(vec![1.0; n], n, 1);
    }
    let p = data.p();
    let picks = rand::seq::index::sample(rng, n, k.min(n));
    let mut centers: Vec<Vec<f64>> = picks.iter().map(|i| data.row(i).to_vec()).collect();
    let mut assign = vec![0usize; n];
    for _round in 0..20 {
        let mut changed = false;
        for i in 0..n {
            let y = data.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d: f64 = y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; p]; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for j in 0..p {
                sums[assign[i]][j] += data.row(i)[j];
            }
        }
        let mut far = 0usize;
        let mut far_d = -1.0f64;
        for i in 0..n {
            let d: f64 = data
                .row(i)
                .iter()
                .zip(&centers[assign[i]])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d > far_d {
                far_d = d;
                far = i;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster on the row farthest from its center
                centers[c] = data.row(far).to_vec();
            } else {
                centers[c] = sums[c].iter().map(|v| v / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let spread = 0.1 / (k - 1) as f64;
    let mut omega = vec![spread; n * k];
    for i in 0..n {
        omega[i * k + assign[i]] = 0.9;
    }
    Responsibilities::from_flat(omega, n, k)
}

fn run_restart(
    data: &Dataset,
    k: usize,
    lambda_n: f64,
    init: InitPolicy,
    ctrl: &EmControl,
    seed: u64,
    restart_index: usize,
) -> Result<EmReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resp0 = match init {
        InitPolicy::RandomResponsibilities => dirichlet_responsibilities(data.n(), k, &mut rng),
        InitPolicy::KMeans => kmeans_responsibilities(data, k, &mut rng),
    };
    let mut params = m_step(data, &resp0, lambda_n, &ctrl.glasso)?;
    let mut trace = Vec::new();
    let mut resp = resp0;
    let mut converged = false;
    let mut m_steps = 0usize;
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..ctrl.max_iters {
        let (next_resp, loglik) = e_step_with_loglik(data, &params)?;
        resp = next_resp;
        let pll = loglik - lambda_n * params.total_l1();
        trace.push(pll);
        if trace.len() > 1 && (pll - prev).abs() / (1.0 + pll.abs()) < ctrl.tol {
            converged = true;
            break;
        }
        prev = pll;
        params = m_step(data, &resp, lambda_n, &ctrl.glasso)?;
        m_steps += 1;
    }
    if !converged {
        // align responsibilities and trace with the last M-step's parameters
        let (next_resp, loglik) = e_step_with_loglik(data, &params)?;
        resp = next_resp;
        trace.push(loglik - lambda_n * params.total_l1());
    }
    let perm = params.sort_by_descending_pi();
    resp.permute_columns(&perm);
    Ok(EmReport {
        params,
        responsibilities: resp,
        loglik_trace: trace,
        iterations: m_steps,
        converged,
        restart_index,
    })
}

/// Fits a k-component mixture by penalized EM with seeded restarts; the
/// restart with the best final penalized log-likelihood wins (ties keep the
/// earliest). Components in the report are sorted by descending proportion.
///
/// Fails only if every restart fails, with the last restart's error.
pub fn em_fit(
    data: &Dataset,
    k: usize,
    lambda_n: f64,
    init: InitPolicy,
    ctrl: &EmControl,
) -> Result<EmReport> {
    ctrl.validate()?;
    if k < 1 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if !(lambda_n >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "lambda_n must be nonnegative, got {lambda_n}"
        )));
    }
    let mut best: Option<EmReport> = None;
    let mut last_err = None;
    for r in 0..ctrl.restarts {
        let seed = stream_seed(ctrl.seed, r as u64);
        match run_restart(data, k, lambda_n, init, ctrl, seed, r) {
            Ok(report) => {
                let better = match &best {
                    Some(b) => report.final_loglik() > b.final_loglik(),
                    None => true,
                };
                if better {
                    best = Some(report);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("restarts >= 1"))
}
