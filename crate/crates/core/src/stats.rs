//! Chi-square checks for simulated histograms.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// Minimum expected count for a bin to stand on its own.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn p_value(statistic: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| crate::Error::Numerical(e.to_string()))?;
    Ok(dist.sf(statistic))
}

/// Bins as `(observed, expected)` pairs. Bins with expected count below
/// [`MIN_EXPECTED`] are pooled; a pooled bin that is still too small is
/// folded into the last regular bin.
fn pool(pairs: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut kept = Vec::new();
    let mut rest = (0.0, 0.0);
    for (o, e) in pairs {
        if e >= MIN_EXPECTED {
            kept.push((o, e));
        } else {
            rest.0 += o;
            rest.1 += e;
        }
    }
    if rest.1 >= MIN_EXPECTED || kept.is_empty() {
        kept.push(rest);
    } else if let Some(last) = kept.last_mut() {
        last.0 += rest.0;
        last.1 += rest.1;
    }
    kept.retain(|&(_, e)| e > 0.0);
    kept
}

/// Pearson goodness of fit of `observed` tallies against probabilities.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected_probs.len() {
        return invalid("observed and expected lengths differ");
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return invalid("no observations");
    }
    let n = total as f64;
    let bins = pool(
        observed
            .iter()
            .zip(expected_probs)
            .map(|(&o, &p)| (o as f64, p * n)),
    );
    let statistic = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1);
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: p_value(statistic, dof)?,
    })
}

/// Two-sample chi-square test that both tallies come from one distribution.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<ChiSquareTest> {
    if a.len() != b.len() {
        return invalid("histograms have different lengths");
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return invalid("empty histogram");
    }
    // pool on the smaller expected count of the two samples
    let mut kept: Vec<(f64, f64)> = Vec::new();
    let mut rest = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        let pooled = (x + y) / (na + nb);
        if pooled * na.min(nb) >= MIN_EXPECTED {
            kept.push((x, y));
        } else {
            rest.0 += x;
            rest.1 += y;
        }
    }
    if (rest.0 + rest.1) / (na + nb) * na.min(nb) >= MIN_EXPECTED || kept.is_empty() {
        kept.push(rest);
    } else if let Some(last) = kept.last_mut() {
        last.0 += rest.0;
        last.1 += rest.1;
    }
    kept.retain(|&(x, y)| x + y > 0.0);
    let statistic = kept
        .iter()
        .map(|&(x, y)| {
            let pooled = (x + y) / (na + nb);
            let (ea, eb) = (pooled * na, pooled * nb);
            (x - ea).powi(2) / ea + (y - eb).powi(2) / eb
        })
        .sum();
    let dof = kept.len().saturating_sub(1);
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: p_value(statistic, dof)?,
    })
}
