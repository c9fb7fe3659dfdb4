use serde::Serialize;

use crate::error::{Error, Result};

/// Band multiplier for the 95% white-noise confidence interval.
pub const BAND_Z: f64 = 1.96;
/// Largest fraction of lags allowed outside the band for a featureless series.
pub const OUTLIER_THRESHOLD: f64 = 0.07;

/// Biased, mean-removed sample autocorrelation for lags `0..=max_lag`.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= 4 * max_lag || n < 2 {
        return Err(Error::SeriesTooShort {
            needed: 4 * max_lag + 1,
            got: n,
        });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    if !(c0 / n as f64 > 1e-20 * (1.0 + mean * mean)) {
        return Err(Error::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|h| d.iter().zip(&d[h..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// Partial autocorrelations at lags `1..=r.len()−1` from an autocorrelation
/// sequence (`r[0] = 1`) by the Durbin–Levinson recursion.
pub fn pacf_from_acf(r: &[f64]) -> Result<Vec<f64>> {
    let max_lag = r.len().saturating_sub(1);
    let mut phi = vec![0.0; max_lag + 1];
    let mut prev = vec![0.0; max_lag + 1];
    let mut v = r[0];
    let mut out = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        let num = r[k] - (1..k).map(|j| prev[j] * r[k - j]).sum::<f64>();
        let a = num / v;
        phi[k] = a;
        for j in 1..k {
            phi[j] = prev[j] - a * prev[k - j];
        }
        v *= 1.0 - a * a;
        if !(v > 0.0) || !a.is_finite() {
            return Err(Error::DegenerateSeries(k));
        }
        out.push(a);
        prev[..=k].copy_from_slice(&phi[..=k]);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacfReport {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    /// Half-width of the ±1.96/√L band.
    pub band: f64,
    pub sample_len: usize,
    pub outlier_fraction: f64,
}

impl PacfReport {
    pub fn outliers(&self) -> Vec<usize> {
        self.lags
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.abs() > self.band)
            .map(|(l, _)| *l)
            .collect()
    }

    pub fn passes(&self) -> bool {
        self.outlier_fraction <= OUTLIER_THRESHOLD
    }
}

pub fn pacf(x: &[f64], max_lag: usize) -> Result<PacfReport> {
    let r = acf(x, max_lag)?;
    let values = pacf_from_acf(&r)?;
    let band = BAND_Z / (x.len() as f64).sqrt();
    let outside = values.iter().filter(|v| v.abs() > band).count();
    Ok(PacfReport {
        lags: (1..=max_lag).collect(),
        outlier_fraction: if max_lag == 0 {
            0.0
        } else {
            outside as f64 / max_lag as f64
        },
        values,
        band,
        sample_len: x.len(),
    })
}

/// Fraction of lags `1..=max_lag` whose sample ACF leaves the band.
pub fn acf_outlier_fraction(r: &[f64], sample_len: usize) -> f64 {
    let band = BAND_Z / (sample_len as f64).sqrt();
    let lags = &r[1..];
    lags.iter().filter(|v| v.abs() > band).count() as f64 / lags.len().max(1) as f64
}
