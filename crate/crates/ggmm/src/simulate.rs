//! Data generation from zero-mean Gaussian mixtures with known precision
//! structure, including the banded chain precisions used by the replication
//! study.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mixture::{Dataset, MixtureParams};
use crate::symlin::{self, SymMatrix};

/// Ground truth behind a simulated dataset.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub params: MixtureParams,
    /// True component index of every generated row.
    pub labels: Vec<usize>,
    pub seed: u64,
}

/// Banded precision: `diag` on the diagonal, `offdiag` exactly where
/// |i - j| = offset. An offset at or beyond p leaves the band empty. The
/// result is verified positive definite.
pub fn chain_precision(p: usize, offset: usize, diag: f64, offdiag: f64) -> Result<SymMatrix> {
    if p < 1 {
        return Err(Error::InvalidInput("p must be at least 1".into()));
    }
    if offset < 1 {
        return Err(Error::InvalidInput(format!(
            "band offset must be at least 1, got {offset}"
        )));
    }
    let mut m = SymMatrix::zeros(p);
    for i in 0..p {
        m.set(i, i, diag);
        if i + offset < p {
            m.set(i, i + offset, offdiag);
        }
    }
    symlin::cholesky(&m)?;
    Ok(m)
}

/// Draws n observations with covariance theta^-1 by solving L' y = z for
/// standard-normal z, where L L' = theta. Advances `rng` deterministically.
pub fn sample_component(
    theta: &SymMatrix,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let factor = symlin::cholesky(theta)?;
    let p = theta.dim();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        rows.push(factor.solve_upper(&z));
    }
    Ok(rows)
}

/// Samples a full mixture: each row's component is drawn from the mixing
/// proportions, then the observation from that component. One sequential
/// stream seeded by `seed` makes the output bit-reproducible.
pub fn sample_mixture(params: &MixtureParams, n: usize, seed: u64) -> Result<(Dataset, SimTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<_> = params
        .thetas
        .iter()
        .map(symlin::cholesky)
        .collect::<Result<_>>()?;
    let p = params.p();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let mut label = params.k() - 1;
        let mut acc = 0.0;
        for (k, &pi) in params.pi.iter().enumerate() {
            acc += pi;
            if u < acc {
                label = k;
                break;
            }
        }
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        rows.push(factors[label].solve_upper(&z));
        labels.push(label);
    }
    let data = Dataset::from_rows(&rows)?;
    Ok((
        data,
        SimTruth {
            params: params.clone(),
            labels,
            seed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn chain_matrices_match_hand_layout() {
        let first = chain_precision(3, 1, 1.0, -0.4).unwrap();
        let expect1 = [[1.0, -0.4, 0.0], [-0.4, 1.0, -0.4], [0.0, -0.4, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(first.get(i, j), expect1[i][j]);
            }
        }
        let second = chain_precision(3, 2, 1.0, -0.4).unwrap();
        let expect2 = [[1.0, 0.0, -0.4], [0.0, 1.0, 0.0], [-0.4, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(second.get(i, j), expect2[i][j]);
            }
        }
    }

    #[test]
    fn chain_with_empty_band_is_diagonal() {
        let m = chain_precision(1, 1, 1.0, -0.4).unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn chain_rejects_zero_offset_and_indefinite_bands() {
        assert!(matches!(
            chain_precision(3, 0, 1.0, -0.4),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            chain_precision(3, 1, 1.0, -0.8),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn chain_banding_is_structural() {
        for offset in [1usize, 2] {
            let p = 8;
            let m = chain_precision(p, offset, 1.0, -0.4).unwrap();
            for i in 0..p {
                for j in 0..p {
                    let expect = if i == j {
                        1.0
                    } else if i.abs_diff(j) == offset {
                        -0.4
                    } else {
                        0.0
                    };
                    assert_eq!(m.get(i, j), expect, "entry ({i},{j}) offset {offset}");
                }
            }
        }
    }

    #[test]
    fn chain_bands_stay_positive_definite_up_to_p_100() {
        for p in [2usize, 5, 10, 25, 50, 100] {
            for offset in [1usize, 2] {
                assert!(chain_precision(p, offset, 1.0, -0.4).is_ok(), "p={p}");
            }
        }
    }

    #[test]
    fn identity_component_has_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(112);
        let n = 10_000;
        let rows = sample_component(&SymMatrix::identity(3), n, &mut rng).unwrap();
        let data = Dataset::from_rows(&rows).unwrap();
        let s = data.second_moment();
        let tol = 3.0 / (n as f64).sqrt();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_close(s.get(i, j), expect, tol);
            }
        }
    }

    #[test]
    fn univariate_precision_four_gives_variance_quarter() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows = sample_component(&SymMatrix::from_diagonal(&[4.0]), 10_000, &mut rng).unwrap();
        let var: f64 = rows.iter().map(|r| r[0] * r[0]).sum::<f64>() / rows.len() as f64;
        assert_close(var, 0.25, 0.02);
    }

    #[test]
    fn sample_precision_recovers_chain_band() {
        let theta = chain_precision(5, 1, 1.0, -0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows = sample_component(&theta, 100_000, &mut rng).unwrap();
        let s = Dataset::from_rows(&rows).unwrap().second_moment();
        let est = symlin::inverse(&s).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_close(est.get(i, j), theta.get(i, j), 0.05);
            }
        }
    }

    #[test]
    fn degenerate_single_component_mixture() {
        let params = MixtureParams::new(vec![1.0], vec![SymMatrix::identity(2)]).unwrap();
        let (_, truth) = sample_mixture(&params, 50, 3).unwrap();
        assert!(truth.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn balanced_mixture_labels_concentrate() {
        let params = MixtureParams::new(
            vec![0.5, 0.5],
            vec![SymMatrix::identity(2), SymMatrix::from_diagonal(&[4.0, 4.0])],
        )
        .unwrap();
        let (data, truth) = sample_mixture(&params, 10_000, 11).unwrap();
        assert_eq!(data.n(), 10_000);
        assert_eq!(truth.labels.len(), 10_000);
        let zeros = truth.labels.iter().filter(|&&l| l == 0).count();
        assert_close(zeros as f64 / 10_000.0, 0.5, 0.02);
        assert!(truth.labels.iter().all(|&l| l < 2));
    }

    #[test]
    fn identical_seeds_give_identical_draws() {
        let params = MixtureParams::new(
            vec![0.3, 0.7],
            vec![
                chain_precision(4, 1, 1.0, -0.4).unwrap(),
                chain_precision(4, 2, 1.0, -0.4).unwrap(),
            ],
        )
        .unwrap();
        let (d1, t1) = sample_mixture(&params, 200, 77).unwrap();
        let (d2, t2) = sample_mixture(&params, 200, 77).unwrap();
        assert_eq!(t1.labels, t2.labels);
        for i in 0..200 {
            assert_eq!(d1.row(i), d2.row(i));
        }
        let (d3, _) = sample_mixture(&params, 200, 78).unwrap();
        assert!((0..200).any(|i| d1.row(i) != d3.row(i)));
    }
}

