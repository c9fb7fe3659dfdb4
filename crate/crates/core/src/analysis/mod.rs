//! Featurelessness tests: correlation structure, higher-order moments,
//! distribution fit and constellation views of a chip stream.

mod corr;
mod dist;
mod report;

pub use corr::{acf, acf_outlier_fraction, pacf, pacf_from_acf, PacfReport, BAND_Z, OUTLIER_THRESHOLD};
pub use dist::{
    constellation_pairs, gaussian_moment, gaussianity, ks_statistic, moments, pair_correlation,
    standardize, GaussianityReport, Histogram, MomentReport, HISTOGRAM_BINS, HISTOGRAM_RANGE,
};
pub use report::{analyze, Check, FeatureReport, FeatureThresholds};
