use std::io::Write;

use serde::Serialize;

use super::corr::{acf, pacf, PacfReport, OUTLIER_THRESHOLD};
use super::dist::{constellation_pairs, gaussianity, moments, pair_correlation, GaussianityReport, MomentReport};
use crate::channel::{shaped_flatness, RrcSpec};
use crate::error::Result;

/// Pass bands for the featurelessness battery.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureThresholds {
    pub max_lag: usize,
    /// ACF, PACF and KS run on at most this many leading samples; moments
    /// use the whole stream. Higher moments need far longer samples than
    /// the correlation tests, whose bands shrink as 1/√L.
    pub correlation_window: usize,
    pub m1_abs: f64,
    pub m3_abs: f64,
    pub m4: (f64, f64),
    pub m5_abs: f64,
    pub m6: (f64, f64),
    pub m7_abs: f64,
    pub pacf_outliers: f64,
    pub pair_rho_abs: f64,
    pub flatness_min: f64,
}

impl Default for FeatureThresholds {
    fn default() -> Self {
        Self {
            max_lag: 100,
            correlation_window: 200_000,
            m1_abs: 0.02,
            m3_abs: 0.05,
            m4: (2.8, 3.2),
            m5_abs: 0.3,
            m6: (13.5, 16.5),
            m7_abs: 0.3,
            pacf_outliers: OUTLIER_THRESHOLD,
            pair_rho_abs: 0.01,
            flatness_min: 0.9,
        }
    }
}

/// One row of the JSON summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub band: (f64, f64),
    pub pass: bool,
}

impl Check {
    fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            band: (lo, hi),
            pass: value >= lo && value <= hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureReport {
    pub sample_len: usize,
    pub acf: Vec<f64>,
    pub pacf: PacfReport,
    pub moments: MomentReport,
    pub gaussianity: GaussianityReport,
    pub spectral_flatness: Option<f64>,
    pub pair_correlation: f64,
    pub checks: Vec<Check>,
}

impl FeatureReport {
    pub fn passes(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.checks).expect("checks serialize")
    }

    pub fn write_correlation_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lag,acf,pacf,band")?;
        for (i, a) in self.acf.iter().enumerate() {
            let p = if i == 0 { 1.0 } else { self.pacf.values[i - 1] };
            writeln!(w, "{i},{a:.8},{p:.8},{:.8}", self.pacf.band)?;
        }
        Ok(())
    }

    pub fn write_moments_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "order,value,gaussian")?;
        for (k, m) in self.moments.moments.iter().enumerate() {
            writeln!(w, "{},{m:.6},{}", k + 1, super::dist::gaussian_moment(k + 1))?;
        }
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let h = &self.gaussianity.histogram;
        writeln!(w, "bin_lo,bin_hi,count,density,normal_density")?;
        for i in 0..h.counts.len() {
            writeln!(
                w,
                "{:.4},{:.4},{},{:.6},{:.6}",
                h.edges[i],
                h.edges[i + 1],
                h.counts[i],
                h.density[i],
                h.normal_density[i]
            )?;
        }
        Ok(())
    }
}

/// Runs the whole battery on a chip stream. `rrc` enables the spectral
/// flatness check.
pub fn analyze(chips: &[f64], thresholds: &FeatureThresholds, rrc: Option<&RrcSpec>) -> Result<FeatureReport> {
    let t = thresholds;
    let head = &chips[..chips.len().min(t.correlation_window.max(1))];
    let acf = acf(head, t.max_lag)?;
    let pacf = pacf(head, t.max_lag)?;
    let moments = moments(chips, 7)?;
    let sd = moments.variance.sqrt();
    let standardized: Vec<f64> = head.iter().map(|v| (v - moments.mean) / sd).collect();
    let gaussianity = gaussianity(&standardized)?;
    let rho = pair_correlation(&constellation_pairs(chips));
    let spectral_flatness = rrc.map(|spec| shaped_flatness(chips, spec)).transpose()?;

    let mut checks = vec![
        Check::within("m1", moments.m(1), -t.m1_abs, t.m1_abs),
        Check::within("m3", moments.m(3), -t.m3_abs, t.m3_abs),
        Check::within("m4", moments.m(4), t.m4.0, t.m4.1),
        Check::within("m5", moments.m(5), -t.m5_abs, t.m5_abs),
        Check::within("m6", moments.m(6), t.m6.0, t.m6.1),
        Check::within("m7", moments.m(7), -t.m7_abs, t.m7_abs),
        Check::within("pacf_outlier_fraction", pacf.outlier_fraction, 0.0, t.pacf_outliers),
        Check {
            name: "ks_statistic".into(),
            value: gaussianity.ks_statistic,
            band: (0.0, gaussianity.ks_critical),
            pass: gaussianity.passes(),
        },
        Check::within("pair_correlation", rho, -t.pair_rho_abs, t.pair_rho_abs),
    ];
    if let Some(f) = spectral_flatness {
        checks.push(Check::within("spectral_flatness", f, t.flatness_min, 1.0));
    }
    Ok(FeatureReport {
        sample_len: chips.len(),
        acf,
        pacf,
        moments,
        gaussianity,
        spectral_flatness,
        pair_correlation: rho,
        checks,
    })
}
