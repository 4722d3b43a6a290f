//! Single-shot inference quality.
//!
//! The confidence `C_k = w(k|k) ϱ(k) / Σ_n w(k|n) ϱ(n)` is the posterior
//! probability that a `k`-click event came from the `k`-photon component of
//! the prior. [`optimize_coupling`] scans it over the coupler fraction.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::response::{response_matrix, DetectorParams, PhotonNumberDistribution, ResponseMatrix};

const PLATEAU_TOL: f64 = 1e-12;
const GOLDEN_ITERS: usize = 60;

/// Posterior probability that `k` clicks came from exactly `k` photons.
pub fn confidence(w: &ResponseMatrix, prior: &PhotonNumberDistribution, k: usize) -> Result<f64> {
    if k > w.max_count() {
        return invalid(format!("k = {k} exceeds the {} roundtrips", w.max_count()));
    }
    if k > prior.n_max() || k > w.n_max() {
        return invalid(format!(
            "k = {k} lies beyond the photon-number truncation (prior {}, response {})",
            prior.n_max(),
            w.n_max()
        ));
    }
    if prior.n_max() > w.n_max() {
        return invalid("prior truncation exceeds response truncation");
    }
    let rho = prior.probs();
    let denom: f64 = w.row(k).iter().zip(rho).map(|(wk, r)| wk * r).sum();
    if denom <= 0.0 {
        return Err(Error::UndefinedEvent(format!(
            "a {k}-click event has zero probability under this prior"
        )));
    }
    Ok((w.get(k, k) * rho[k] / denom).clamp(0.0, 1.0))
}

/// How the roundtrip transmission responds when the coupler is retuned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossPolicy {
    /// Excess loss `1 − t_r − t_c` stays fixed; `t_r` absorbs changes in `t_c`.
    FixedExcessLoss(f64),
    /// `t_r` stays fixed and `t_c` ranges up to `1 − t_r`.
    FixedTransmission(f64),
}

impl LossPolicy {
    fn max_coupling(&self) -> Result<f64> {
        let max = match *self {
            LossPolicy::FixedExcessLoss(loss) if (0.0..1.0).contains(&loss) => 1.0 - loss,
            LossPolicy::FixedTransmission(t_r) if (0.0..1.0).contains(&t_r) => 1.0 - t_r,
            other => return invalid(format!("infeasible loss policy {other:?}")),
        };
        Ok(max)
    }

    fn transmission(&self, t_c: f64) -> f64 {
        match *self {
            LossPolicy::FixedExcessLoss(loss) => (1.0 - loss - t_c).max(0.0),
            LossPolicy::FixedTransmission(t_r) => t_r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingOptimum {
    pub t_c: f64,
    pub confidence: f64,
    /// Sampled `(t_c, C_k)` pairs; undefined points are left out.
    pub curve: Vec<(f64, f64)>,
    /// The best value is shared by more than one grid point.
    pub plateau: bool,
}

fn confidence_at(
    base: &DetectorParams,
    policy: LossPolicy,
    prior: &PhotonNumberDistribution,
    k: usize,
    t_c: f64,
) -> Result<f64> {
    let params = base.with_coupling(t_c, policy.transmission(t_c))?;
    let w = response_matrix(&params, prior.n_max())?;
    confidence(&w, prior, k)
}

/// Maximise `C_k` over the coupler fraction.
///
/// `t_c` is scanned on `grid` evenly spaced points in `(0, t_c_max]`; the
/// best bracket is then refined by golden-section search. `base.t_c` and
/// `base.t_r` are ignored, the policy fixes them. Ties go to the lowest `t_c`.
pub fn optimize_coupling(
    base: &DetectorParams,
    prior: &PhotonNumberDistribution,
    k: usize,
    policy: LossPolicy,
    grid: usize,
) -> Result<CouplingOptimum> {
    if grid < 2 {
        return invalid("coupling grid needs at least 2 points");
    }
    let t_max = policy.max_coupling()?;
    let step = t_max / grid as f64;
    let points: Vec<f64> = (1..=grid).map(|j| step * j as f64).collect();

    let mut samples: Vec<(usize, f64, f64)> = Vec::with_capacity(grid);
    for (j, &t) in points.iter().enumerate() {
        match confidence_at(base, policy, prior, k, t) {
            Ok(c) => samples.push((j, t, c)),
            Err(Error::UndefinedEvent(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let Some(&(best_j, best_t, best_c)) =
        samples
            .iter()
            .fold(None, |best: Option<&(usize, f64, f64)>, s| match best {
                Some(b) if b.2 >= s.2 => Some(b),
                _ => Some(s),
            })
    else {
        return Err(Error::UndefinedEvent(format!(
            "confidence of {k} clicks is undefined at every coupling"
        )));
    };
    let curve: Vec<(f64, f64)> = samples.iter().map(|&(_, t, c)| (t, c)).collect();
    let plateau = samples
        .iter()
        .filter(|s| (s.2 - best_c).abs() <= PLATEAU_TOL)
        .count()
        > 1;
    if plateau {
        return Ok(CouplingOptimum {
            t_c: best_t,
            confidence: best_c,
            curve,
            plateau,
        });
    }

    let lo = if best_j == 0 { 0.0 } else { points[best_j - 1] };
    let hi = points.get(best_j + 1).copied().unwrap_or(t_max);
    let eval = |t: f64| confidence_at(base, policy, prior, k, t).unwrap_or(f64::NEG_INFINITY);
    let (t_ref, c_ref) = golden_section_max(eval, lo.max(step * 1e-6), hi);
    let (t_c, confidence) = if c_ref > best_c {
        (t_ref, c_ref)
    } else {
        (best_t, best_c)
    };
    Ok(CouplingOptimum {
        t_c,
        confidence,
        curve,
        plateau,
    })
}

fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
