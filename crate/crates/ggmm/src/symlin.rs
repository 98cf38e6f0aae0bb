//! Dense symmetric matrices with Cholesky factorization, log-determinant,
//! inverse and positive-definiteness checks.
//!
//! Everything here targets the small dimensions (p up to a few dozen) used
//! elsewhere in the crate, so storage is a plain dense buffer with mirrored
//! writes and the factorizations are unblocked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Cholesky pivot below this floor is treated as a failure of positive
/// definiteness rather than roundoff.
pub const PD_PIVOT_TOL: f64 = 1e-12;

/// Dense symmetric matrix. Symmetry holds exactly by construction: all writes
/// go through [`SymMatrix::set`], which mirrors the entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Zero matrix of dimension `dim` (`dim >= 1`).
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Diagonal matrix from the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds from full row-major rows, verifying squareness and exact symmetry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != rows[j][i] {
                    return Err(Error::InvalidInput(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.set(i, j, rows[i][j]);
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets the (i, j) and (j, i) entries.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    /// Row `i` as a contiguous slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Sum of absolute values over all entries (diagonal included).
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Largest absolute off-diagonal entry; 0 for 1x1 matrices.
    pub fn max_abs_offdiag(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.dim {
            for j in 0..i {
                m = m.max(self.get(i, j).abs());
            }
        }
        m
    }

    /// Mean absolute off-diagonal entry; 0 for 1x1 matrices.
    pub fn mean_abs_offdiag(&self) -> f64 {
        if self.dim < 2 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..i {
                s += self.get(i, j).abs();
            }
        }
        s / ((self.dim * (self.dim - 1) / 2) as f64)
    }

    /// tr(self * other).
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Quadratic form y' * self * y.
    pub fn quadratic_form(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim);
        let mut total = 0.0;
        for i in 0..self.dim {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += row[j] * y[j];
            }
            total += y[i] * acc;
        }
        total
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

/// Lower-triangular Cholesky factor L with L * L' equal to the factored matrix.
#[derive(Debug, Clone)]
pub struct LowerTriangularFactor {
    dim: usize,
    data: Vec<f64>, // row-major, entries above the diagonal are zero
}

impl LowerTriangularFactor {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// ln|A| = 2 * sum ln(L_ii) for the factored matrix A.
    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).ln()).sum::<f64>() * 2.0
    }

    /// Solves L x = b (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.get(i, j) * x[j];
            }
            x[i] = s / self.get(i, i);
        }
        x
    }

    /// Solves L' x = b (back substitution).
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.get(j, i) * x[j];
            }
            x[i] = s / self.get(i, i);
        }
        x
    }

    /// Solves (L L') x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Reconstructs L * L' (testing aid).
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.dim;
        let mut a = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += self.get(i, k) * self.get(j, k);
                }
                a.set(i, j, s);
            }
        }
        a
    }
}

/// Cholesky factorization A = L L'. Fails with [`Error::NotPositiveDefinite`]
/// when a pivot drops below [`PD_PIVOT_TOL`].
pub fn cholesky(a: &SymMatrix) -> Result<LowerTriangularFactor> {
    let n = a.dim();
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let mut pivot = a.get(j, j);
        for k in 0..j {
            pivot -= l[j * n + k] * l[j * n + k];
        }
        if !(pivot >= PD_PIVOT_TOL) {
            // catches NaN as well
            return Err(Error::NotPositiveDefinite);
        }
        let ljj = pivot.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(LowerTriangularFactor { dim: n, data: l })
}

/// ln|a| via the Cholesky factor.
pub fn log_det(a: &SymMatrix) -> Result<f64> {
    Ok(cholesky(a)?.log_det())
}

/// Inverse of a positive-definite matrix, computed column-by-column from the
/// Cholesky factor.
pub fn inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let n = a.dim();
    let factor = cholesky(a)?;
    let mut inv = SymMatrix::zeros(n);
    let mut e = vec![0.0f64; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = factor.solve(&e);
        e[j] = 0.0;
        for i in j..n {
            inv.set(i, j, col[i]);
        }
    }
    Ok(inv)
}

/// True when `a` admits a Cholesky factorization.
pub fn is_positive_definite(a: &SymMatrix) -> bool {
    cholesky(a).is_ok()
}
