//! Dense truncated power series in two variables.
//!
//! A [`BivariateSeries`] holds the coefficients `c[k][n]` of
//! `Σ c[k][n] z^k I^n` for `k ≤ k_max`, `n ≤ n_max`. Every operation keeps
//! the degree bounds fixed and drops whatever falls outside them.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BivariateSeries {
    k_max: usize,
    n_max: usize,
    // row-major, row k holds n = 0..=n_max
    coeffs: Vec<f64>,
}

impl BivariateSeries {
    pub fn zeros(k_max: usize, n_max: usize) -> Self {
        Self {
            k_max,
            n_max,
            coeffs: vec![0.0; (k_max + 1) * (n_max + 1)],
        }
    }

    /// Constant series `value`.
    pub fn constant(value: f64, k_max: usize, n_max: usize) -> Result<Self> {
        Self::monomial(value, 0, 0, k_max, n_max)
    }

    /// Single term `coeff · z^k I^n`. Terms beyond the bounds are rejected
    /// rather than silently truncated.
    pub fn monomial(coeff: f64, k: usize, n: usize, k_max: usize, n_max: usize) -> Result<Self> {
        if !coeff.is_finite() {
            return invalid(format!("series coefficient must be finite, got {coeff}"));
        }
        if k > k_max || n > n_max {
            return invalid(format!(
                "monomial z^{k} I^{n} outside bounds ({k_max}, {n_max})"
            ));
        }
        let mut s = Self::zeros(k_max, n_max);
        s.coeffs[k * (n_max + 1) + n] = coeff;
        Ok(s)
    }

    /// Taylor series of `exp(a·I)`: `c[0][n] = aⁿ/n!`, nothing in `z`.
    pub fn exp_intensity(a: f64, k_max: usize, n_max: usize) -> Result<Self> {
        if !a.is_finite() {
            return invalid(format!("exponent rate must be finite, got {a}"));
        }
        let mut s = Self::zeros(k_max, n_max);
        let mut term = 1.0;
        for n in 0..=n_max {
            if n > 0 {
                term *= a / n as f64;
            }
            s.coeffs[n] = term;
        }
        Ok(s)
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Coefficient of `z^k I^n`.
    pub fn coefficient(&self, k: usize, n: usize) -> Result<f64> {
        if k > self.k_max || n > self.n_max {
            return invalid(format!(
                "coefficient ({k}, {n}) outside bounds ({}, {})",
                self.k_max, self.n_max
            ));
        }
        Ok(self.at(k, n))
    }

    #[inline]
    fn at(&self, k: usize, n: usize) -> f64 {
        self.coeffs[k * (self.n_max + 1) + n]
    }

    /// Row `k` of the coefficient array (all powers of `I` at `z^k`).
    pub fn row(&self, k: usize) -> &[f64] {
        let w = self.n_max + 1;
        &self.coeffs[k * w..(k + 1) * w]
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.k_max != other.k_max || self.n_max != other.n_max {
            return invalid(format!(
                "series shape mismatch: ({}, {}) vs ({}, {})",
                self.k_max, self.n_max, other.k_max, other.n_max
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self { coeffs, ..*self })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            ..*self
        }
    }

    /// Truncated Cauchy product.
    ///
    /// Rows that are identically zero in either operand are skipped, which
    /// makes multiplying by a factor linear in `z` cost `O(k_max · n_max²)`.
    /// Each output cell is accumulated in a fixed index order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let (k_max, n_max) = (self.k_max, self.n_max);
        let mut out = Self::zeros(k_max, n_max);
        let rows_a = self.nonzero_rows();
        let rows_b = other.nonzero_rows();
        for &ka in &rows_a {
            let ra = self.row(ka);
            for &kb in &rows_b {
                let k = ka + kb;
                if k > k_max {
                    break;
                }
                let rb = other.row(kb);
                let w = n_max + 1;
                let dst = &mut out.coeffs[k * w..(k + 1) * w];
                for (na, &ca) in ra.iter().enumerate() {
                    if ca == 0.0 {
                        continue;
                    }
                    for (d, &cb) in dst[na..].iter_mut().zip(rb) {
                        *d += ca * cb;
                    }
                }
            }
        }
        Ok(out)
    }

    fn nonzero_rows(&self) -> Vec<usize> {
        (0..=self.k_max)
            .filter(|&k| self.row(k).iter().any(|&c| c != 0.0))
            .collect()
    }

    /// Largest absolute coefficient difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl std::ops::Index<(usize, usize)> for BivariateSeries {
    type Output = f64;

    fn index(&self, (k, n): (usize, usize)) -> &f64 {
        assert!(
            k <= self.k_max && n <= self.n_max,
            "series index out of range"
        );
        &self.coeffs[k * (self.n_max + 1) + n]
    }
}
