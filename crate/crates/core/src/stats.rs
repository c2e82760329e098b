//! Empirical CDFs and the two-sample Kolmogorov-Smirnov test.

use crate::error::{Error, Result};

/// Smallest per-side sample count accepted by [`ks_two_sample_test`].
pub const KS_MIN_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    /// Sup-distance between the two empirical CDFs.
    pub statistic: f64,
    /// `sqrt(n m / (n + m)) * statistic`.
    pub scaled: f64,
    pub critical: f64,
    /// True when the samples are judged to come from the same distribution.
    pub accepted: bool,
}

/// Right-continuous empirical CDF, `F(x) = #{samples <= x} / n`.
pub fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&s| s <= x) as f64 / sorted.len() as f64
}

fn sorted_copy(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("NaN sample"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample KS statistic, scanning every jump point of the merged sample.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoObservations);
    }
    let a = sorted_copy(a)?;
    let b = sorted_copy(b)?;
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut sup = 0.0_f64;
    while i < n || j < m {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    Ok(sup)
}

/// Asymptotic critical value `sqrt(-ln(eta / 2) / 2)`.
pub fn ks_critical(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid(format!(
            "significance level {eta} outside (0, 1)"
        )));
    }
    Ok((-(eta / 2.0).ln() / 2.0).sqrt())
}

pub fn ks_two_sample_test(a: &[f64], b: &[f64], eta: f64) -> Result<KsResult> {
    let short = a.len().min(b.len());
    if short < KS_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: short,
            need: KS_MIN_SAMPLES,
        });
    }
    let critical = ks_critical(eta)?;
    let statistic = ks_statistic(a, b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let scaled = (n * m / (n + m)).sqrt() * statistic;
    Ok(KsResult {
        statistic,
        scaled,
        critical,
        accepted: scaled <= critical,
    })
}
