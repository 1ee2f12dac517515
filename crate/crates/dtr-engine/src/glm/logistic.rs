//! Logistic regression by iteratively reweighted least squares.
//!
//! The solver enforces monotone deviance via step halving, detects complete
//! separation (perfect classification or a one-class response), and falls
//! back to a small ridge penalty in that case so downstream propensity
//! predictions stay finite and flagged rather than aborting a whole study.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{EngineError, Result};

/// Numerically stable inverse logit.
pub fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Convergence tolerance on both the coefficient step and the deviance
    /// change.
    pub tol: f64,
    /// Ridge penalty applied when separation is detected.
    pub ridge: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions { max_iter: 100, tol: 1e-8, ridge: 1e-6 }
    }
}

/// A fitted logistic model with its convergence diagnostics.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// The response was perfectly separable (or single-class); coefficients
    /// come from the ridge-stabilized refit.
    pub separation: bool,
    /// A ridge penalty participated in the final coefficients.
    pub ridged: bool,
}

impl LogisticFit {
    /// Fitted probabilities `expit(X beta)` for an arbitrary design.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let beta = DVector::from_column_slice(&self.coef);
        (x * beta).iter().map(|&eta| expit(eta)).collect()
    }
}

fn deviance(eta: &DVector<f64>, y: &[f64]) -> f64 {
    let mut dev = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let mu = expit(eta[i]).clamp(1e-12, 1.0 - 1e-12);
        dev -= 2.0 * (yi * mu.ln() + (1.0 - yi) * (1.0 - mu).ln());
    }
    dev
}

/// One penalized IRLS pass; `ridge = 0` is the plain maximum-likelihood fit.
fn irls(
    x: &DMatrix<f64>,
    y: &[f64],
    opts: &IrlsOptions,
    ridge: f64,
) -> Result<(DVector<f64>, bool, usize, f64)> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut beta = DVector::zeros(p);
    let mut eta = DVector::zeros(n);
    let mut dev = deviance(&eta, y) + ridge * beta.norm_squared();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        // Weighted normal equations: (X'WX + ridge I) beta_new = X'W z,
        // with z the working response eta + (y - mu)/w.
        let mut xtwx: DMatrix<f64> = DMatrix::zeros(p, p);
        let mut xtwz: DVector<f64> = DVector::zeros(p);
        for i in 0..n {
            let mu = expit(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-10);
            let z = eta[i] + (y[i] - mu) / w;
            for a in 0..p {
                let xa = x[(i, a)];
                xtwz[a] += w * xa * z;
                for b in a..p {
                    xtwx[(a, b)] += w * xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            xtwx[(a, a)] += ridge;
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let proposal = match Cholesky::new(xtwx.clone()) {
            Some(ch) => ch.solve(&xtwz),
            None => {
                // Rank-deficient working design: stabilize with a small
                // jitter rather than failing the whole fit.
                let mut jittered = xtwx;
                let bump = 1e-10 * (1.0 + jittered.trace().abs());
                for a in 0..p {
                    jittered[(a, a)] += bump;
                }
                Cholesky::new(jittered)
                    .ok_or_else(|| EngineError::Fit("singular working design".into()))?
                    .solve(&xtwz)
            }
        };

        // Step-halve from the current point towards the proposal until the
        // penalized deviance stops increasing.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &beta * (1.0 - step) + &proposal * step;
            let cand_eta = x * &candidate;
            let cand_dev = deviance(&cand_eta, y) + ridge * candidate.norm_squared();
            if cand_dev <= dev + 1e-12 {
                let delta = (&candidate - &beta).amax();
                let dev_drop = dev - cand_dev;
                beta = candidate;
                eta = cand_eta;
                dev = cand_dev;
                accepted = true;
                if delta < opts.tol * (1.0 + beta.amax())
                    || dev_drop < opts.tol * (1.0 + dev.abs())
                {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            // No improving step exists (a stationary point) also counts as
            // converged for our purposes.
            converged = converged || !accepted;
            break;
        }
    }
    Ok((beta, converged, iterations, dev))
}

/// Whether the fitted probabilities classify the response perfectly at a
/// 1e-6 margin — the practical signature of complete separation.
fn perfectly_separated(eta: &DVector<f64>, y: &[f64]) -> bool {
    y.iter().enumerate().all(|(i, &yi)| {
        let mu = expit(eta[i]);
        if yi > 0.5 {
            mu > 1.0 - 1e-6
        } else {
            mu < 1e-6
        }
    })
}

/// Fit `P(y = 1 | x)` by maximum likelihood. `y` must be 0/1 valued.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], opts: &IrlsOptions) -> Result<LogisticFit> {
    if x.nrows() != y.len() {
        return Err(EngineError::Fit(format!(
            "design has {} rows for {} responses",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(EngineError::Fit("empty design".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(EngineError::Fit("logistic response must be 0/1".into()));
    }

    let one_class = y.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 1.0);
    if !one_class {
        let (beta, converged, iterations, dev) = irls(x, y, opts, 0.0)?;
        let eta = x * &beta;
        if !perfectly_separated(&eta, y) {
            return Ok(LogisticFit {
                coef: beta.iter().copied().collect(),
                converged,
                iterations,
                deviance: dev,
                separation: false,
                ridged: false,
            });
        }
    }

    // Separated (or single-class) response: refit with a small ridge so the
    // optimum is finite, and flag the result.
    let (beta, converged, iterations, dev) = irls(x, y, opts, opts.ridge)?;
    Ok(LogisticFit {
        coef: beta.iter().copied().collect(),
        converged,
        iterations,
        deviance: dev,
        separation: true,
        ridged: true,
    })
}
