//! Shared helpers for integration tests: an independent slow-but-sure solver
//! for the penalized covariance-selection objective, an independent
//! stationarity checker, and seeded problem generators.

// every test target compiles its own copy, so not all helpers are used in all
#![allow(dead_code)]

use ggmm::mixture::MixtureParams;
use ggmm::simulate::chain_precision;
use ggmm::symlin::{self, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// ln|theta| - tr(s theta), the smooth part of the objective.
pub fn smooth_part(theta: &SymMatrix, s: &SymMatrix) -> Option<f64> {
    let factor = symlin::cholesky(theta).ok()?;
    Some(factor.log_det() - s.trace_product(theta))
}

/// Proximal gradient ascent on ln|theta| - tr(s theta) - lambda ||theta||_1
/// with backtracking line search, run to a relative objective change below
/// `rel_tol`. Slow and simple on purpose: it shares no code with the
/// production solver, so agreement between the two is meaningful.
pub fn prox_grad_oracle(s: &SymMatrix, lambda: f64, rel_tol: f64) -> (SymMatrix, f64) {
    let p = s.dim();
    let mut theta = SymMatrix::zeros(p);
    for i in 0..p {
        theta.set(i, i, 1.0 / (s.get(i, i) + lambda));
    }
    let mut smooth = smooth_part(&theta, s).expect("feasible start");
    let mut obj = smooth - lambda * theta.l1_norm();
    let mut step = 1.0;

    for _ in 0..500_000 {
        let sigma = symlin::inverse(&theta).expect("iterate stays PD");
        // gradient of the smooth part is sigma - s
        let mut cand = SymMatrix::zeros(p);
        let mut accepted = None;
        for _ in 0..200 {
            for i in 0..p {
                for j in 0..=i {
                    let g = sigma.get(i, j) - s.get(i, j);
                    cand.set(i, j, soft(theta.get(i, j) + step * g, step * lambda));
                }
            }
            let Some(cand_smooth) = smooth_part(&cand, s) else {
                step *= 0.5;
                continue;
            };
            // standard sufficient-increase test against the quadratic model
            let mut linear = 0.0;
            let mut sqdist = 0.0;
            for i in 0..p {
                for j in 0..p {
                    let d = cand.get(i, j) - theta.get(i, j);
                    linear += (sigma.get(i, j) - s.get(i, j)) * d;
                    sqdist += d * d;
                }
            }
            if cand_smooth >= smooth + linear - sqdist / (2.0 * step) {
                accepted = Some(cand_smooth);
                break;
            }
            step *= 0.5;
        }
        let cand_smooth = accepted.expect("oracle line search stalled");
        let new_obj = cand_smooth - lambda * cand.l1_norm();
        let done = (new_obj - obj).abs() <= rel_tol * (1.0 + obj.abs());
        theta = cand;
        smooth = cand_smooth;
        obj = new_obj;
        if done {
            return (theta, obj);
        }
        step = (step * 2.0).min(1.0);
    }
    panic!("oracle did not converge");
}

/// Independent stationarity check: recomputes sigma as the exact inverse of
/// the returned theta and measures the worst violation of the subgradient
/// conditions (nonzero entries must sit on the sign face, zero entries inside
/// the lambda tube).
pub fn independent_kkt_violation(theta: &SymMatrix, s: &SymMatrix, lambda: f64) -> f64 {
    let sigma = symlin::inverse(theta).expect("solution is PD");
    let p = s.dim();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let r = sigma.get(i, j) - s.get(i, j);
            let t = theta.get(i, j);
            let v = if t != 0.0 {
                (r - lambda * t.signum()).abs()
            } else {
                (r.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Seeded PD matrix shaped like a sample second moment: a p x 2p Gaussian
/// factor product plus a small ridge.
pub fn random_pd_second_moment(p: usize, seed: u64) -> SymMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 2 * p;
    let a: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut s = SymMatrix::zeros(p);
    for i in 0..p {
        for j in 0..=i {
            let dot: f64 = (0..m).map(|c| a[i][c] * a[j][c]).sum();
            s.set(i, j, dot / m as f64 + if i == j { 0.05 } else { 0.0 });
        }
    }
    s
}

/// Uniform mixture of banded precisions with the standard diag 1 / band -0.4
/// layout; one component per offset.
pub fn chain_mixture(p: usize, offsets: &[usize]) -> MixtureParams {
    let k = offsets.len();
    let thetas = offsets
        .iter()
        .map(|&off| chain_precision(p, off, 1.0, -0.4).unwrap())
        .collect();
    MixtureParams::new(vec![1.0 / k as f64; k], thetas).unwrap()
}
