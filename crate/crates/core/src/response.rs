//! Detector response: per-roundtrip click probabilities, exact count
//! statistics for coherent input, the Poisson limit and the conditional
//! response matrix `w(k|n)`.
//!
//! A pulse of mean intensity `I` (photons, measured after injection into the
//! loop) loses a fraction `1 - t_r` per roundtrip. In roundtrip `i` the
//! coupler sends `t_c · t_r^(i-1) · I` to the photodiode, which clicks at
//! most once per window. For coherent light the windows are independent, so
//! the count distribution is a Poisson-binomial over `L` Bernoulli trials.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::series::BivariateSeries;

/// Tolerance on probability sums of value types built from user data.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Roundoff allowance on series-derived response entries before clamping.
pub const RESPONSE_ROUNDOFF: f64 = 1e-9;

const PARAM_SLACK: f64 = 1e-12;

/// One loop-detector configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Power transmission of one roundtrip, all losses included.
    pub t_r: f64,
    /// Fraction of the circulating intensity extracted to the photodiode.
    pub t_c: f64,
    /// Photodiode quantum efficiency.
    pub eta: f64,
    /// Dark-count probability per roundtrip window.
    pub p_d: f64,
    /// Number of loop circulations.
    pub roundtrips: usize,
}

impl DetectorParams {
    pub fn new(t_r: f64, t_c: f64, eta: f64, p_d: f64, roundtrips: usize) -> Result<Self> {
        let p = Self {
            t_r,
            t_c,
            eta,
            p_d,
            roundtrips,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_r", self.t_r),
            ("t_c", self.t_c),
            ("eta", self.eta),
            ("p_d", self.p_d),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.roundtrips == 0 {
            return invalid("roundtrips must be at least 1");
        }
        if self.t_r + self.t_c > 1.0 + PARAM_SLACK {
            return invalid(format!(
                "t_r + t_c must not exceed 1 (excess loss is negative): {} + {}",
                self.t_r, self.t_c
            ));
        }
        Ok(())
    }

    /// Same detector with a different coupler setting.
    pub fn with_coupling(&self, t_c: f64, t_r: f64) -> Result<Self> {
        Self::new(t_r, t_c, self.eta, self.p_d, self.roundtrips)
    }

    /// Excess loss per roundtrip, `1 - t_r - t_c`.
    pub fn excess_loss(&self) -> f64 {
        (1.0 - self.t_r - self.t_c).max(0.0)
    }

    /// Per-photon detection probability in roundtrip `i` (1-based).
    pub(crate) fn detection_rate(&self, i: usize) -> f64 {
        self.eta * self.t_c * self.t_r.powi(i as i32 - 1)
    }

    /// Per-photon detection probabilities for roundtrips `1..=L`.
    pub fn detection_rates(&self) -> Vec<f64> {
        (1..=self.roundtrips)
            .map(|i| self.detection_rate(i))
            .collect()
    }
}

fn check_intensity(intensity: f64) -> Result<()> {
    if !(intensity >= 0.0 && intensity.is_finite()) {
        return invalid(format!(
            "intensity must be finite and >= 0, got {intensity}"
        ));
    }
    Ok(())
}

/// Count probabilities `p(k)`, `k = 0..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    probs: Vec<f64>,
}

impl CountDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_probabilities(&probs, "count distribution")?;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_count(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Evaluate `Σ z^k p(k)`.
    pub fn generating_function(&self, z: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, p| acc * z + p)
    }

    /// Total variation distance; shorter vectors are padded with zeros.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        let get = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        0.5 * (0..len)
            .map(|k| (get(&self.probs, k) - get(&other.probs, k)).abs())
            .sum::<f64>()
    }
}

fn validate_probabilities(probs: &[f64], what: &str) -> Result<()> {
    if probs.is_empty() {
        return invalid(format!("{what} is empty"));
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return invalid(format!("{what}: entry {i} = {p} is not a probability"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return invalid(format!("{what} sums to {total}, not 1"));
    }
    Ok(())
}

/// Photon-number distribution `ϱ(n)`, `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberDistribution {
    rho: Vec<f64>,
}

impl PhotonNumberDistribution {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        validate_probabilities(&rho, "photon-number distribution")?;
        Ok(Self { rho })
    }

    /// Fock state `|n⟩` truncated at `n_max`.
    pub fn fock(n: usize, n_max: usize) -> Result<Self> {
        if n > n_max {
            return invalid(format!("Fock state {n} exceeds truncation {n_max}"));
        }
        let mut rho = vec![0.0; n_max + 1];
        rho[n] = 1.0;
        Ok(Self { rho })
    }

    /// Poisson distribution with the given mean, truncated at `n_max` and
    /// renormalised. Check [`poisson_tail_mass`] to see what was dropped.
    pub fn poisson(mean: f64, n_max: usize) -> Result<Self> {
        let mut rho = poisson_pmf(mean, n_max)?;
        let total: f64 = rho.iter().sum();
        rho.iter_mut().for_each(|p| *p /= total);
        Ok(Self { rho })
    }

    pub fn probs(&self) -> &[f64] {
        &self.rho
    }

    pub fn n_max(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.rho.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

/// Poisson probabilities `e^{-μ} μ^n / n!` for `n = 0..=n_max`, not renormalised.
pub fn poisson_pmf(mean: f64, n_max: usize) -> Result<Vec<f64>> {
    check_intensity(mean)?;
    if mean == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        return Ok(v);
    }
    let ln_mean = mean.ln();
    let mut ln_fact = 0.0;
    Ok((0..=n_max)
        .map(|n| {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            (n as f64 * ln_mean - mean - ln_fact).exp()
        })
        .collect())
}

/// Probability mass of a Poisson(`mean`) variable above `n_max`.
pub fn poisson_tail_mass(mean: f64, n_max: usize) -> Result<f64> {
    let pmf = poisson_pmf(mean, n_max)?;
    let mut term = pmf[n_max];
    if term == 0.0 {
        return Ok((1.0 - pmf.iter().sum::<f64>()).max(0.0));
    }
    // sum the tail directly; 1 - head cancels badly when the tail is tiny
    let mut tail = 0.0;
    let mut n = n_max;
    loop {
        n += 1;
        term *= mean / n as f64;
        tail += term;
        if term == 0.0 || (n as f64 > mean && term <= tail * 1e-17) {
            return Ok(tail);
        }
    }
}

/// Probability of a click in roundtrip `i` (1-based) for coherent input of
/// mean intensity `intensity`, dark counts included.
pub fn click_probability(params: &DetectorParams, i: usize, intensity: f64) -> Result<f64> {
    params.validate()?;
    check_intensity(intensity)?;
    if i == 0 || i > params.roundtrips {
        return invalid(format!(
            "roundtrip index {i} outside 1..={}",
            params.roundtrips
        ));
    }
    Ok(click_prob_unchecked(params, i, intensity))
}

fn click_prob_unchecked(params: &DetectorParams, i: usize, intensity: f64) -> f64 {
    // 1 - (1 - p_d) e^{-x} written to keep precision for small x
    let x = params.detection_rate(i) * intensity;
    -(-x).exp_m1() * (1.0 - params.p_d) + params.p_d
}

/// Probability generating function of the click count for coherent input.
pub fn generating_function(params: &DetectorParams, intensity: f64, z: f64) -> Result<f64> {
    params.validate()?;
    check_intensity(intensity)?;
    if !z.is_finite() {
        return invalid(format!("z must be finite, got {z}"));
    }
    Ok((1..=params.roundtrips)
        .map(|i| {
            let no_click = (1.0 - params.p_d) * (-params.detection_rate(i) * intensity).exp();
            z + (1.0 - z) * no_click
        })
        .product())
}

/// Exact count distribution for coherent input, by sequential convolution of
/// the per-roundtrip Bernoulli factors.
pub fn count_distribution_coherent(
    params: &DetectorParams,
    intensity: f64,
) -> Result<CountDistribution> {
    params.validate()?;
    check_intensity(intensity)?;
    let l = params.roundtrips;
    let mut probs = vec![0.0; l + 1];
    probs[0] = 1.0;
    for i in 1..=l {
        let p = click_prob_unchecked(params, i, intensity);
        let q = 1.0 - p;
        for k in (1..=i).rev() {
            probs[k] = probs[k] * q + probs[k - 1] * p;
        }
        probs[0] *= q;
    }
    Ok(CountDistribution { probs })
}

/// Count distribution for a discrete mixture of coherent intensities given
/// as `(weight, intensity)` pairs.
pub fn count_distribution_mixture(
    params: &DetectorParams,
    mixture: &[(f64, f64)],
) -> Result<CountDistribution> {
    params.validate()?;
    if mixture.is_empty() {
        return invalid("mixture has no components");
    }
    if let Some(&(w, _)) = mixture.iter().find(|(w, _)| !(*w >= 0.0 && w.is_finite())) {
        return invalid(format!("mixture weight {w} is negative or not finite"));
    }
    let total: f64 = mixture.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return invalid(format!("mixture weights sum to {total}, not 1"));
    }
    let mut probs = vec![0.0; params.roundtrips + 1];
    for &(w, intensity) in mixture {
        let comp = count_distribution_coherent(params, intensity)?;
        for (acc, p) in probs.iter_mut().zip(comp.probs) {
            *acc += w * p;
        }
    }
    Ok(CountDistribution { probs })
}

/// Effective efficiency `η t_c / (1 - t_r)` of the loop as a whole.
pub fn effective_efficiency(params: &DetectorParams) -> Result<f64> {
    params.validate()?;
    if params.t_r >= 1.0 {
        return invalid("t_r = 1: a lossless loop has no finite effective efficiency");
    }
    Ok(params.eta * params.t_c / (1.0 - params.t_r))
}

/// Poisson limit of the count statistics. Returns the mean count
/// `η_eff I + L p_d` and the Poisson distribution truncated at `L` and
/// renormalised.
pub fn poisson_approximation(
    params: &DetectorParams,
    intensity: f64,
) -> Result<(f64, CountDistribution)> {
    let eff = effective_efficiency(params)?;
    check_intensity(intensity)?;
    let lambda = eff * intensity + params.roundtrips as f64 * params.p_d;
    let mut probs = poisson_pmf(lambda, params.roundtrips)?;
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok((lambda, CountDistribution { probs }))
}

/// Conditional click-count probabilities `w(k|n)`.
///
/// Stored row-major: rows are click counts `k = 0..=L`, columns photon
/// numbers `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    params: DetectorParams,
    n_max: usize,
    w: Vec<f64>,
}

impl ResponseMatrix {
    /// Build from explicit rows `w[k][n]`, e.g. for synthetic detectors.
    /// Needs `L + 1` rows of `n_max + 1` entries in `[0, 1]`.
    pub fn from_rows(params: DetectorParams, rows: &[Vec<f64>]) -> Result<Self> {
        params.validate()?;
        if rows.len() != params.roundtrips + 1 {
            return invalid(format!(
                "response matrix needs {} rows, got {}",
                params.roundtrips + 1,
                rows.len()
            ));
        }
        let width = rows[0].len();
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return invalid("response matrix rows are empty or ragged");
        }
        let w: Vec<f64> = rows.iter().flatten().copied().collect();
        if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("response matrix entries must lie in [0, 1]");
        }
        Ok(Self {
            params,
            n_max: width - 1,
            w,
        })
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn max_count(&self) -> usize {
        self.params.roundtrips
    }

    pub fn rows(&self) -> usize {
        self.params.roundtrips + 1
    }

    pub fn cols(&self) -> usize {
        self.n_max + 1
    }

    /// `w(k|n)`; panics outside the matrix.
    pub fn get(&self, k: usize, n: usize) -> f64 {
        assert!(
            k < self.rows() && n < self.cols(),
            "w({k}|{n}) out of range"
        );
        self.w[k * self.cols() + n]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.w[k * self.cols()..(k + 1) * self.cols()]
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        (0..self.rows()).map(|k| self.get(k, n)).collect()
    }

    /// Largest `|Σ_k w(k|n) - 1|` over columns.
    pub fn max_column_defect(&self) -> f64 {
        (0..self.cols())
            .map(|n| (self.column(n).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn from_raw_checked(params: DetectorParams, n_max: usize, mut w: Vec<f64>) -> Result<Self> {
        let cols = n_max + 1;
        if let Some(pos) = w
            .iter()
            .position(|v| !(-RESPONSE_ROUNDOFF..=1.0 + RESPONSE_ROUNDOFF).contains(v))
        {
            return Err(Error::Numerical(format!(
                "w({}|{}) = {} exceeds series roundoff",
                pos / cols,
                pos % cols,
                w[pos]
            )));
        }
        let m = Self {
            params,
            n_max,
            w: w.clone(),
        };
        let defect = m.max_column_defect();
        if defect > RESPONSE_ROUNDOFF {
            return Err(Error::Numerical(format!(
                "response column normalisation off by {defect:e}"
            )));
        }
        w.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self { params, n_max, w })
    }
}

/// Response matrix from the double power series of `e^I · p̃_I(z)`:
/// `w(k|n) = n! · [z^k I^n]`.
pub fn response_matrix(params: &DetectorParams, n_max: usize) -> Result<ResponseMatrix> {
    params.validate()?;
    let k_max = params.roundtrips;
    let z = BivariateSeries::monomial(1.0, 1, 0, k_max, n_max)?;
    let mut acc = BivariateSeries::exp_intensity(1.0, k_max, n_max)?;
    for i in 1..=params.roundtrips {
        // z + (1 - z)(1 - p_d) e^{-a_i I}
        let no_click = BivariateSeries::exp_intensity(-params.detection_rate(i), k_max, n_max)?
            .scale(1.0 - params.p_d);
        let factor = z.add(&no_click)?.add(&z.mul(&no_click)?.scale(-1.0))?;
        acc = acc.mul(&factor)?;
    }
    let cols = n_max + 1;
    let mut w = vec![0.0; (k_max + 1) * cols];
    for k in 0..=k_max {
        let mut fact = 1.0;
        for (n, &c) in acc.row(k).iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            w[k * cols + n] = c * fact;
        }
    }
    ResponseMatrix::from_raw_checked(*params, n_max, w)
}

/// Response matrix by enumerating the fate of every photon.
///
/// Each of `n` photons is detected in roundtrip `i` with probability
/// `η t_c t_r^(i-1)` or never detected; every window also fires a dark count
/// with probability `p_d`. Cost grows as `(L+1)^n · 2^L`, so keep `L` and
/// `n_max` at about 6 or below.
pub fn response_matrix_bruteforce(params: &DetectorParams, n_max: usize) -> Result<ResponseMatrix> {
    params.validate()?;
    let l = params.roundtrips;
    if l > 16 {
        return invalid("brute-force enumeration limited to 16 roundtrips");
    }
    let rates = params.detection_rates();
    let never = 1.0 - rates.iter().sum::<f64>();
    // fate f in 0..l is "detected in roundtrip f+1", fate l is "never"
    let fate_prob = |f: usize| if f < l { rates[f] } else { never };

    // distribution of dark-count window sets
    let dark: Vec<(u32, f64)> = (0u32..1 << l)
        .map(|mask| {
            let on = mask.count_ones() as i32;
            let p = params.p_d.powi(on) * (1.0 - params.p_d).powi(l as i32 - on);
            (mask, p)
        })
        .collect();

    let cols = n_max + 1;
    let mut w = vec![0.0; (l + 1) * cols];
    let mut fates = Vec::with_capacity(n_max);
    for n in 0..=n_max {
        fates.clear();
        fates.resize(n, 0usize);
        loop {
            let mut prob = 1.0;
            let mut hit = 0u32;
            for &f in &fates {
                prob *= fate_prob(f);
                if f < l {
                    hit |= 1 << f;
                }
            }
            for &(mask, pd) in &dark {
                let clicks = (hit | mask).count_ones() as usize;
                w[clicks * cols + n] += prob * pd;
            }
            // odometer over (l+1)^n fate assignments
            let mut pos = 0;
            while pos < n {
                fates[pos] += 1;
                if fates[pos] <= l {
                    break;
                }
                fates[pos] = 0;
                pos += 1;
            }
            if pos == n {
                break;
            }
        }
    }
    ResponseMatrix::from_raw_checked(*params, n_max, w)
}

/// Count distribution `p(k) = Σ_n w(k|n) ϱ(n)`.
pub fn forward_counts(
    w: &ResponseMatrix,
    rho: &PhotonNumberDistribution,
) -> Result<CountDistribution> {
    if rho.n_max() > w.n_max() {
        return invalid(format!(
            "distribution truncation {} exceeds response truncation {}",
            rho.n_max(),
            w.n_max()
        ));
    }
    let probs = (0..w.rows())
        .map(|k| {
            w.row(k)
                .iter()
                .zip(rho.probs())
                .map(|(wk, r)| wk * r)
                .sum::<f64>()
                .clamp(0.0, 1.0)
        })
        .collect();
    Ok(CountDistribution { probs })
}
