//! Photon-number reconstruction by truncated-SVD least squares.
//!
//! The estimator `ϱ̂ = W⁺ p̂` is linear in the measured frequencies, so the
//! multinomial covariance of `p̂` propagates exactly to `ϱ̂`. No positivity
//! constraint is imposed; [`ReconstructionResult::clipped`] gives a
//! presentation copy with negatives removed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::response::ResponseMatrix;
use crate::simulator::CountHistogram;

/// Relative singular-value cutoff used when none is given.
pub const DEFAULT_SV_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    /// Signed estimate of `ϱ(n)`, `n = 0..=n_max`.
    pub rho_hat: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_max: usize,
    pub sv_threshold: f64,
    /// `‖W ϱ̂ − p̂‖₂`
    pub residual_norm: f64,
    pub numerical_rank: usize,
    pub rank_deficient: bool,
    /// Number of trials behind `p̂` (`None` for exact probabilities).
    pub trials: Option<u64>,
    pub sum: f64,
    pub sum_std_error: f64,
}

impl ReconstructionResult {
    /// Estimate with negative entries set to zero and renormalised.
    pub fn clipped(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rho_hat.iter().map(|x| x.max(0.0)).collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            v.iter_mut().for_each(|x| *x /= total);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `σ_max / σ_min` over the retained values.
    pub condition_number: f64,
    pub numerical_rank: usize,
    pub invertible: bool,
    pub sv_threshold: f64,
}

/// Truncated pseudo-inverse of a response matrix.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pinv: DMatrix<f64>,
    singular_values: Vec<f64>,
    rank: usize,
}

impl PseudoInverse {
    /// `W⁺` with singular values below `threshold · σ_max` discarded.
    pub fn new(w: &ResponseMatrix, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        let m = to_matrix(w);
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => {
                return Err(Error::Numerical(
                    "SVD did not produce singular vectors".into(),
                ))
            }
        };
        let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        let cutoff = threshold * sv.first().copied().unwrap_or(0.0);
        let rank = sv.iter().take_while(|&&s| s > cutoff && s > 0.0).count();
        let mut pinv = DMatrix::zeros(w.cols(), w.rows());
        for (i, s) in sv.iter().take(rank).enumerate() {
            let vi = v_t.row(i).transpose();
            let ui = u.column(i);
            pinv += (vi * ui.transpose()) / *s;
        }
        Ok(Self {
            pinv,
            singular_values: sv,
            rank,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return invalid(format!("sv_threshold must lie in (0, 1), got {threshold}"));
    }
    Ok(())
}

fn to_matrix(w: &ResponseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(w.rows(), w.cols(), |k, n| w.get(k, n))
}

/// Covariance of `W⁺ p̂` for multinomial frequencies `p̂` from `trials` draws.
fn propagated_covariance(pinv: &DMatrix<f64>, freqs: &[f64], trials: f64) -> DMatrix<f64> {
    let p = DVector::from_column_slice(freqs);
    // W⁺ diag(p) W⁺ᵀ − (W⁺p)(W⁺p)ᵀ
    let scaled = DMatrix::from_fn(pinv.nrows(), pinv.ncols(), |i, j| pinv[(i, j)] * freqs[j]);
    let mean = pinv * &p;
    (scaled * pinv.transpose() - &mean * mean.transpose()) / trials
}

fn diag_sqrt(cov: &DMatrix<f64>) -> Vec<f64> {
    (0..cov.nrows())
        .map(|i| cov[(i, i)].max(0.0).sqrt())
        .collect()
}

/// Standard errors of `W⁺ p̂` from the multinomial covariance of the
/// histogram frequencies.
pub fn estimate_errors(pinv: &PseudoInverse, hist: &CountHistogram) -> Result<Vec<f64>> {
    if hist.trials < 2 {
        return invalid("error estimation needs at least 2 trials");
    }
    if hist.tallies.len() != pinv.pinv.ncols() {
        return invalid(format!(
            "histogram has {} bins, pseudo-inverse expects {}",
            hist.tallies.len(),
            pinv.pinv.ncols()
        ));
    }
    let cov = propagated_covariance(&pinv.pinv, &hist.frequencies(), hist.trials as f64);
    Ok(diag_sqrt(&cov))
}

/// Reconstruct `ϱ̂` from a measured histogram.
///
/// A rank-deficient system is flagged on the result, not rejected.
pub fn reconstruct_svd(
    w: &ResponseMatrix,
    hist: &CountHistogram,
    sv_threshold: f64,
) -> Result<ReconstructionResult> {
    if hist.tallies.len() != w.rows() {
        return invalid(format!(
            "histogram covers k = 0..={} but the response matrix k = 0..={}",
            hist.max_count(),
            w.max_count()
        ));
    }
    if hist.trials < 2 {
        return invalid("reconstruction needs at least 2 trials");
    }
    reconstruct_probabilities(w, &hist.frequencies(), Some(hist.trials), sv_threshold)
}

/// Reconstruct from count probabilities. With `trials = None` the input is
/// treated as exact and all errors are zero.
pub fn reconstruct_probabilities(
    w: &ResponseMatrix,
    probs: &[f64],
    trials: Option<u64>,
    sv_threshold: f64,
) -> Result<ReconstructionResult> {
    if probs.len() != w.rows() {
        return invalid(format!(
            "{} count probabilities for a response matrix with {} rows",
            probs.len(),
            w.rows()
        ));
    }
    let pi = PseudoInverse::new(w, sv_threshold)?;
    let p = DVector::from_column_slice(probs);
    let rho = pi.matrix() * &p;
    let residual_norm = (to_matrix(w) * &rho - &p).norm();

    let cols = w.cols();
    let (std_errors, sum_std_error) = match trials {
        Some(t) if t >= 1 => {
            let cov = propagated_covariance(pi.matrix(), probs, t as f64);
            (diag_sqrt(&cov), cov.sum().max(0.0).sqrt())
        }
        _ => (vec![0.0; cols], 0.0),
    };
    Ok(ReconstructionResult {
        sum: rho.sum(),
        rho_hat: rho.iter().copied().collect(),
        std_errors,
        n_max: w.n_max(),
        sv_threshold,
        residual_norm,
        numerical_rank: pi.rank(),
        rank_deficient: pi.rank() < cols,
        trials,
        sum_std_error,
    })
}

/// Singular values and rank of `W`; the matrix is invertible on its column
/// space when the numerical rank equals `n_max + 1`.
pub fn condition_diagnostics(w: &ResponseMatrix, sv_threshold: f64) -> Result<ConditioningReport> {
    check_threshold(sv_threshold)?;
    let singular_values: Vec<f64> = to_matrix(w).singular_values().iter().copied().collect();
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let cutoff = sv_threshold * sigma_max;
    let retained: Vec<f64> = singular_values
        .iter()
        .copied()
        .filter(|&s| s > cutoff && s > 0.0)
        .collect();
    let numerical_rank = retained.len();
    let condition_number = match retained.last() {
        Some(&min) => sigma_max / min,
        None => f64::INFINITY,
    };
    Ok(ConditioningReport {
        singular_values,
        condition_number,
        numerical_rank,
        invertible: numerical_rank == w.cols(),
        sv_threshold,
    })
}
