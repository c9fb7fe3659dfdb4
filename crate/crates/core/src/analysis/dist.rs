use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Standardized sample moments `m1..=m_up_to`.
///
/// `m1` is the mean in units of the standard deviation; higher orders are
/// central moments divided by σ^k, so `m2 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub mean: f64,
    pub variance: f64,
    pub moments: Vec<f64>,
}

impl MomentReport {
    /// Moment of order `k` (1-based).
    pub fn m(&self, k: usize) -> f64 {
        self.moments[k - 1]
    }
}

/// Moments of the standard normal distribution, for comparison.
pub fn gaussian_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        (1..k).step_by(2).map(|v| v as f64).product()
    }
}

pub fn moments(x: &[f64], up_to: usize) -> Result<MomentReport> {
    if x.is_empty() {
        return Err(Error::EmptyInput("moment sample"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let mut central = vec![0.0; up_to.max(2) + 1];
    for &v in x {
        let d = v - mean;
        let mut p = d;
        for c in central.iter_mut().skip(1) {
            *c += p;
            p *= d;
        }
    }
    central.iter_mut().for_each(|c| *c /= n);
    let variance = central[2];
    if !(variance > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let sd = variance.sqrt();
    let moments = (1..=up_to)
        .map(|k| if k == 1 { mean / sd } else { central[k] / sd.powi(k as i32) })
        .collect();
    Ok(MomentReport {
        mean,
        variance,
        moments,
    })
}

/// Scales to zero mean and unit variance.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    let r = moments(x, 2)?;
    let sd = r.variance.sqrt();
    Ok(x.iter().map(|v| (v - r.mean) / sd).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    /// Bin edges, `bins + 1` values.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Empirical density per bin.
    pub density: Vec<f64>,
    /// N(0,1) density at bin centres.
    pub normal_density: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianityReport {
    pub n: usize,
    pub ks_statistic: f64,
    /// 1% critical value of the one-sample KS test, 1.63/√n.
    pub ks_critical: f64,
    pub histogram: Histogram,
}

impl GaussianityReport {
    pub fn passes(&self) -> bool {
        self.ks_statistic < self.ks_critical
    }
}

pub const HISTOGRAM_BINS: usize = 64;
pub const HISTOGRAM_RANGE: f64 = 4.0;

/// One-sample Kolmogorov–Smirnov statistic against N(0,1).
pub fn ks_statistic(x: &[f64]) -> f64 {
    let normal = Normal::standard();
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal.cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS test and a 64-bin histogram over [−4, 4] of an already standardized sample.
pub fn gaussianity(x: &[f64]) -> Result<GaussianityReport> {
    if x.is_empty() {
        return Err(Error::EmptyInput("gaussianity sample"));
    }
    let n = x.len();
    let width = 2.0 * HISTOGRAM_RANGE / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS)
        .map(|i| -HISTOGRAM_RANGE + i as f64 * width)
        .collect();
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for &v in x {
        let b = ((v + HISTOGRAM_RANGE) / width).floor();
        if b >= 0.0 && (b as usize) < HISTOGRAM_BINS {
            counts[b as usize] += 1;
        }
    }
    let density = counts.iter().map(|&c| c as f64 / (n as f64 * width)).collect();
    let normal = Normal::standard();
    let normal_density = edges.windows(2).map(|w| normal.pdf(0.5 * (w[0] + w[1]))).collect();
    Ok(GaussianityReport {
        n,
        ks_statistic: ks_statistic(x),
        ks_critical: 1.63 / (n as f64).sqrt(),
        histogram: Histogram {
            edges,
            counts,
            density,
            normal_density,
        },
    })
}

/// Consecutive non-overlapping chip pairs `(s_0, s_1), (s_2, s_3), …`; a
/// trailing odd chip is dropped.
pub fn constellation_pairs(chips: &[f64]) -> Vec<(f64, f64)> {
    chips.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

/// Sample correlation coefficient between the two coordinates of the pairs.
pub fn pair_correlation(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}
