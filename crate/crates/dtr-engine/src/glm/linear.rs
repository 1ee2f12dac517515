//! Least squares with column pivoting.
//!
//! Outcome-model fitting happens thousands of times across a threshold grid
//! with the *same* design matrix and changing responses, so the QR
//! factorization is computed once ([`LstsqCache`]) and re-used for every
//! solve. Rank-deficient designs are handled by dropping the pivoted-out
//! columns (their coefficients are reported as exact zeros).

use nalgebra::{DMatrix, DVector};

use crate::error::{EngineError, Result};

/// A fitted linear model.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub rank: usize,
    /// Original column indices that were dropped as (numerically) collinear.
    pub dropped: Vec<usize>,
}

/// Cached column-pivoted QR factorization of a design matrix.
pub struct LstsqCache {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    /// `perm[k]` is the original column index sitting at pivoted position `k`.
    perm: Vec<usize>,
    rank: usize,
    p: usize,
}

impl LstsqCache {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n == 0 || p == 0 {
            return Err(EngineError::Fit("empty design".into()));
        }
        if n < p {
            return Err(EngineError::Fit(format!(
                "design has more columns ({p}) than rows ({n})"
            )));
        }
        let qr = x.clone().col_piv_qr();

        // Recover the column permutation by pushing an index vector through
        // the same row permutation nalgebra applies when solving.
        let mut idx = DVector::from_fn(p, |i, _| i as f64);
        qr.p().permute_rows(&mut idx);
        let perm: Vec<usize> = idx.iter().map(|&v| v as usize).collect();

        let q = qr.q();
        let r = qr.r();
        let r00 = r[(0, 0)].abs();
        let tol = r00 * 1e-12;
        let mut rank = 0;
        for k in 0..p.min(r.nrows()) {
            if r[(k, k)].abs() > tol && r[(k, k)].abs() > f64::MIN_POSITIVE {
                rank += 1;
            } else {
                break;
            }
        }
        if rank == 0 {
            return Err(EngineError::Fit("design matrix is numerically zero".into()));
        }
        Ok(LstsqCache { q, r, perm, rank, p })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Solve the least-squares problem for a new response vector.
    pub fn solve(&self, y: &[f64]) -> Result<LinearFit> {
        if y.len() != self.q.nrows() {
            return Err(EngineError::Fit(format!(
                "response has {} values for a design with {} rows",
                y.len(),
                self.q.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::Fit("response contains non-finite values".into()));
        }
        let yv = DVector::from_column_slice(y);
        let c = self.q.transpose() * yv;

        // Back-substitute on the leading rank x rank block of R.
        let r = self.rank;
        let mut z = vec![0.0; self.p];
        for k in (0..r).rev() {
            let mut acc = c[k];
            for j in (k + 1)..r {
                acc -= self.r[(k, j)] * z[j];
            }
            z[k] = acc / self.r[(k, k)];
        }

        // Undo the column pivoting; pivoted-out columns keep coefficient 0.
        let mut coef = vec![0.0; self.p];
        for (pos, &orig) in self.perm.iter().enumerate() {
            coef[orig] = z[pos];
        }
        let dropped = self.perm[r..].to_vec();
        Ok(LinearFit { coef, rank: r, dropped })
    }
}

/// One-shot least squares.
pub fn lstsq(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearFit> {
    LstsqCache::new(x)?.solve(y)
}

/// Predictions `X beta` for a fit.
pub fn predict(x: &DMatrix<f64>, fit: &LinearFit) -> Vec<f64> {
    let beta = DVector::from_column_slice(&fit.coef);
    (x * beta).iter().copied().collect()
}
