//! Real-valued AWGN channel, SNR bookkeeping, and the RRC/Welch chain used
//! to inspect the transmitted spectrum.
//!
//! SNR here is the per-chip Ec/N0. Chips have unit average energy and the
//! noise added to each real chip has variance N0/2, so a BPSK chip stream
//! at Eb/N0 = x dB has bit error rate Q(√(2·10^(x/10))).

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Per-chip SNR from Eb/N0 for `spreading` chips per channel-input bit and
/// code rate `rate`.
pub fn snr_from_ebn0(ebn0_db: f64, spreading: f64, rate: f64) -> f64 {
    ebn0_db - 10.0 * spreading.log10() - 10.0 * (1.0 / rate).log10()
}

pub fn ebn0_from_snr(snr_db: f64, spreading: f64, rate: f64) -> f64 {
    snr_db + 10.0 * spreading.log10() + 10.0 * (1.0 / rate).log10()
}

/// Noise variance per real chip (N0/2) at a per-chip SNR, for unit-energy chips.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        0.5 * 10f64.powf(-snr_db / 10.0)
    }
}

/// Inverse of [`noise_variance`].
pub fn snr_from_noise_variance(sigma2: f64) -> f64 {
    -10.0 * (2.0 * sigma2).log10()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SnrMode {
    PerChipDb(f64),
    EbN0Db(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelSpec {
    /// Chips per network-input (coded) bit.
    pub spreading: f64,
    /// Code rate in (0, 1].
    pub rate: f64,
    pub mode: SnrMode,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn new(spreading: f64, rate: f64, mode: SnrMode, seed: u64) -> Result<Self> {
        if !(spreading >= 1.0) {
            return Err(Error::Config(format!("spreading factor {spreading} < 1")));
        }
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::Config(format!("code rate {rate} not in (0, 1]")));
        }
        Ok(Self {
            spreading,
            rate,
            mode,
            seed,
        })
    }

    pub fn per_chip_snr_db(&self) -> f64 {
        match self.mode {
            SnrMode::PerChipDb(s) => s,
            SnrMode::EbN0Db(e) => snr_from_ebn0(e, self.spreading, self.rate),
        }
    }

    pub fn ebn0_db(&self) -> f64 {
        match self.mode {
            SnrMode::PerChipDb(s) => ebn0_from_snr(s, self.spreading, self.rate),
            SnrMode::EbN0Db(e) => e,
        }
    }

    pub fn sigma2(&self) -> f64 {
        noise_variance(self.per_chip_snr_db())
    }
}

pub fn add_noise_in_place<R: Rng + ?Sized>(chips: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for c in chips {
        let n: f64 = StandardNormal.sample(rng);
        *c += sigma * n;
    }
}

/// Adds seeded white Gaussian noise. The input must have unit average
/// power within 5%.
pub fn awgn(chips: &[f64], spec: &ChannelSpec) -> Result<Vec<f64>> {
    if chips.is_empty() {
        return Err(Error::EmptyInput("chip stream"));
    }
    let power = chips.iter().map(|c| c * c).sum::<f64>() / chips.len() as f64;
    if (power - 1.0).abs() > 0.05 {
        return Err(Error::PowerAssertion(power));
    }
    let mut out = chips.to_vec();
    let mut rng = rng_from(spec.seed, &[0xa3]);
    add_noise_in_place(&mut out, spec.sigma2().sqrt(), &mut rng);
    Ok(out)
}

/// Minimum chips accepted by [`estimate_noise_variance`].
pub const MIN_NOISE_ESTIMATE_CHIPS: usize = 10_000;

/// Moment estimate of the noise variance: received power minus the known
/// signal power, clamped at 1e−9.
pub fn estimate_noise_variance(received: &[f64], reference_power: f64) -> Result<f64> {
    if received.len() < MIN_NOISE_ESTIMATE_CHIPS {
        return Err(Error::TooFewChips {
            needed: MIN_NOISE_ESTIMATE_CHIPS,
            got: received.len(),
        });
    }
    let p = received.iter().map(|c| c * c).sum::<f64>() / received.len() as f64;
    Ok((p - reference_power).max(1e-9))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RrcSpec {
    pub rolloff: f64,
    /// Filter span in chips.
    pub span: usize,
    pub samples_per_chip: usize,
}

impl Default for RrcSpec {
    fn default() -> Self {
        Self {
            rolloff: 0.25,
            span: 10,
            samples_per_chip: 4,
        }
    }
}

/// Unit-energy root-raised-cosine taps, `span·sps + 1` long.
pub fn rrc_taps(spec: &RrcSpec) -> Result<Vec<f64>> {
    if spec.span < 4 {
        return Err(Error::SpanTooShort(spec.span));
    }
    if !(spec.rolloff > 0.0 && spec.rolloff <= 1.0) || spec.samples_per_chip < 2 {
        return Err(Error::Config(format!("invalid RRC spec {spec:?}")));
    }
    let beta = spec.rolloff;
    let sps = spec.samples_per_chip as f64;
    let half = (spec.span * spec.samples_per_chip / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| {
            let t = i as f64 / sps;
            if i == 0 {
                1.0 - beta + 4.0 * beta / PI
            } else if ((4.0 * beta * t).abs() - 1.0).abs() < 1e-12 {
                beta / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * beta)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * beta)).cos())
            } else {
                ((PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos())
                    / (PI * t * (1.0 - (4.0 * beta * t).powi(2)))
            }
        })
        .collect();
    let energy: f64 = taps.iter().map(|v| v * v).sum();
    let scale = 1.0 / energy.sqrt();
    taps.iter_mut().for_each(|v| *v *= scale);
    Ok(taps)
}

/// Upsamples by the samples-per-chip factor and filters with the RRC taps.
pub fn rrc_shape(chips: &[f64], spec: &RrcSpec) -> Result<Vec<f64>> {
    let taps = rrc_taps(spec)?;
    let sps = spec.samples_per_chip;
    let mut out = vec![0.0; chips.len() * sps + taps.len() - 1];
    for (i, &c) in chips.iter().enumerate() {
        let base = i * sps;
        for (o, t) in out[base..base + taps.len()].iter_mut().zip(&taps) {
            *o += c * t;
        }
    }
    Ok(out)
}

/// One-sided power spectral density; frequencies in cycles per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

pub const WELCH_SEGMENT: usize = 4096;

/// Welch estimate: Hann window, 50% overlap, fixed segment length.
pub fn welch_psd(signal: &[f64], segment: usize) -> Result<Psd> {
    if segment < 8 || signal.len() < segment {
        return Err(Error::SeriesTooShort {
            needed: segment,
            got: signal.len(),
        });
    }
    let window: Vec<f64> = (0..segment)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / segment as f64).cos())
        .collect();
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(segment);
    let bins = segment / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); segment];
    let hop = segment / 2;
    let mut count = 0usize;
    let mut start = 0;
    while start + segment <= signal.len() {
        for ((b, &x), &w) in buf.iter_mut().zip(&signal[start..start + segment]).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    let norm = 1.0 / (count as f64 * wpow);
    let power = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let one_sided = if i == 0 || i == bins - 1 { 1.0 } else { 2.0 };
            a * norm * one_sided
        })
        .collect();
    let freqs = (0..bins).map(|i| i as f64 / segment as f64).collect();
    Ok(Psd { freqs, power })
}

impl Psd {
    /// Geometric over arithmetic mean of the PSD for `f ≤ fraction·band_edge`.
    pub fn flatness(&self, band_edge: f64, fraction: f64) -> f64 {
        let limit = band_edge * fraction;
        let vals: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f <= limit)
            .map(|(_, p)| *p)
            .collect();
        spectral_flatness(&vals)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frequency,power_db")?;
        for (f, p) in self.freqs.iter().zip(&self.power) {
            writeln!(w, "{f:.8},{:.6}", 10.0 * p.max(1e-300).log10())?;
        }
        Ok(())
    }
}

pub fn spectral_flatness(power: &[f64]) -> f64 {
    if power.is_empty() {
        return 0.0;
    }
    let n = power.len() as f64;
    let am = power.iter().sum::<f64>() / n;
    if am <= 0.0 {
        return 0.0;
    }
    let gm = (power.iter().map(|p| p.max(1e-300).ln()).sum::<f64>() / n).exp();
    gm / am
}

/// In-band flatness of an RRC-shaped chip stream over the central 80% of
/// the chip band.
pub fn shaped_flatness(chips: &[f64], spec: &RrcSpec) -> Result<f64> {
    let wave = rrc_shape(chips, spec)?;
    let psd = welch_psd(&wave, WELCH_SEGMENT)?;
    Ok(psd.flatness(0.5 / spec.samples_per_chip as f64, 0.8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ebn0_snr_reference_points() {
        assert!((snr_from_ebn0(6.0, 64.0, 1.0) - (-12.0618)).abs() < 1e-3);
        assert!((snr_from_ebn0(4.0, 64.0, 0.5) - (-17.0721)).abs() < 1e-3);
        assert_eq!(snr_from_ebn0(3.3, 1.0, 1.0), 3.3);
        for &(e, n, r) in &[(6.0, 64.0, 1.0), (-3.0, 32.0, 0.5), (10.0, 7.0, 11.0 / 32.0)] {
            let back = ebn0_from_snr(snr_from_ebn0(e, n, r), n, r);
            assert!((back - e).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_snr_is_identity() {
        let chips = vec![1.0, -1.0, 1.0, 1.0];
        let spec = ChannelSpec::new(1.0, 1.0, SnrMode::PerChipDb(f64::INFINITY), 3).unwrap();
        assert_eq!(awgn(&chips, &spec).unwrap(), chips);
    }

    #[test]
    fn noise_variance_and_reproducibility() {
        let chips = vec![1.0; 1_000_000];
        let spec = ChannelSpec::new(1.0, 1.0, SnrMode::PerChipDb(-3.0103), 5).unwrap();
        let a = awgn(&chips, &spec).unwrap();
        let var = a.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / a.len() as f64;
        assert!((var - 1.0).abs() < 0.005, "{var}");
        assert_eq!(a, awgn(&chips, &spec).unwrap());
        assert!(awgn(&[2.0; 10], &spec).is_err());
    }

    #[test]
    fn noise_is_white() {
        let chips = vec![1.0; 200_000];
        let spec = ChannelSpec::new(1.0, 1.0, SnrMode::PerChipDb(0.0), 8).unwrap();
        let n: Vec<f64> = awgn(&chips, &spec).unwrap().iter().map(|v| v - 1.0).collect();
        let var = n.iter().map(|v| v * v).sum::<f64>();
        let bound = 3.0 / (n.len() as f64).sqrt();
        for lag in 1..=20 {
            let c: f64 = n.iter().zip(&n[lag..]).map(|(a, b)| a * b).sum::<f64>() / var;
            assert!(c.abs() < bound, "lag {lag}: {c}");
        }
    }

    #[test]
    fn noise_variance_estimation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut noiseless = vec![1.0; 20_000];
        assert!(estimate_noise_variance(&noiseless, 1.0).unwrap() <= 1e-9);
        assert!(estimate_noise_variance(&noiseless[..100], 1.0).is_err());

        // σ² = 4 corresponds to Ec/N0 = 1/8.
        let snr = snr_from_noise_variance(4.0);
        assert!((noise_variance(snr) - 4.0).abs() < 1e-12);
        let mut x: Vec<f64> = (0..100_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        add_noise_in_place(&mut x, 2.0, &mut rng);
        let est = estimate_noise_variance(&x, 1.0).unwrap();
        assert!((est - 4.0).abs() < 0.08, "{est}");

        let mut last = 0.0;
        for &s in &[0.1, 0.5, 1.0, 2.0, 4.0] {
            let mut y = vec![1.0; 50_000];
            add_noise_in_place(&mut y, s, &mut rng);
            let e = estimate_noise_variance(&y, 1.0).unwrap();
            assert!(e > last);
            last = e;
        }
        noiseless.clear();
    }

    #[test]
    fn rrc_taps_properties() {
        let spec = RrcSpec::default();
        let taps = rrc_taps(&spec).unwrap();
        assert_eq!(taps.len(), spec.span * spec.samples_per_chip + 1);
        let energy: f64 = taps.iter().map(|v| v * v).sum();
        assert!((energy - 1.0).abs() < 1e-9);
        for i in 0..taps.len() {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-12);
        }
        // β = 0.25, sps = 4 hits the t = ±1/(4β) singular point.
        let odd = RrcSpec {
            rolloff: 0.25,
            span: 8,
            samples_per_chip: 4,
        };
        assert!(rrc_taps(&odd).unwrap().iter().all(|v| v.is_finite()));
        assert!(matches!(
            rrc_taps(&RrcSpec { span: 3, ..spec }),
            Err(Error::SpanTooShort(3))
        ));
    }

    #[test]
    fn impulse_returns_taps() {
        let spec = RrcSpec::default();
        let taps = rrc_taps(&spec).unwrap();
        let out = rrc_shape(&[1.0], &spec).unwrap();
        assert_eq!(&out[..taps.len()], taps.as_slice());
    }

    #[test]
    fn shaped_white_noise_is_flat_and_band_limited() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chips: Vec<f64> = (0..65_536).map(|_| StandardNormal.sample(&mut rng)).collect();
        let spec = RrcSpec::default();
        assert!(shaped_flatness(&chips, &spec).unwrap() >= 0.9);

        let wave = rrc_shape(&chips, &spec).unwrap();
        let psd = welch_psd(&wave, WELCH_SEGMENT).unwrap();
        let edge = (1.0 + spec.rolloff) * 0.5 / spec.samples_per_chip as f64;
        let total: f64 = psd.power.iter().sum();
        let outside: f64 = psd
            .freqs
            .iter()
            .zip(&psd.power)
            .filter(|(f, _)| **f > edge * 1.05)
            .map(|(_, p)| p)
            .sum();
        assert!(outside / total < 1e-3, "{}", outside / total);
    }

    #[test]
    fn flatness_of_constant_spectrum() {
        assert!((spectral_flatness(&[2.0; 10]) - 1.0).abs() < 1e-12);
        assert!(spectral_flatness(&[1.0, 100.0]) < 0.2);
    }
}
