use ndarray::{Array2, ArrayView2};

use super::arch::{random_bits, ArchSpec};
use super::encode_batch;
use crate::channel::{add_noise_in_place, ChannelSpec};
use crate::error::{Error, Result};
use crate::nn::{mean_var, ArchKind, NetworkModel};
use crate::rng::rng_from;

/// Gaussian model of the direct network's output pre-activations:
/// `z | bit ~ N(±mu, sigma2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LlrCalibration {
    pub mu: f64,
    pub sigma2: f64,
    pub snr_db_at_calibration: f64,
    /// Channel noise variance the statistics were measured at.
    pub noise_variance: f64,
    /// Increase of `sigma2` per unit of channel noise variance, from the
    /// receiver weights (the receiver is linear up to the ESS).
    pub noise_gain: f64,
}

impl LlrCalibration {
    /// LLR as log P(bit = 0)/P(bit = 1), so negative values favour a one.
    pub fn llr(&self, z: f64) -> f64 {
        -2.0 * self.mu * z / self.sigma2
    }

    pub fn llrs(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let s = -2.0 * self.mu / self.sigma2;
        z.mapv(|v| s * v)
    }

    /// Re-targets the calibration to another channel noise variance, such
    /// as one estimated from the received chips.
    pub fn at_noise_variance(&self, noise_variance: f64) -> Self {
        let sigma2 = self.sigma2 + (noise_variance - self.noise_variance) * self.noise_gain;
        Self {
            sigma2: sigma2.max(1e-12),
            noise_variance,
            snr_db_at_calibration: crate::channel::snr_from_noise_variance(noise_variance),
            ..*self
        }
    }
}

/// Measures `mu` and `sigma2` from `sample_blocks` random blocks sent
/// through the channel at its SNR.
pub fn calibrate_llr(
    model: &NetworkModel,
    channel: &ChannelSpec,
    sample_blocks: usize,
) -> Result<LlrCalibration> {
    let arch = ArchSpec::of_model(model)?;
    if arch.kind != ArchKind::Direct {
        return Err(Error::CalibrationFailed("LLR calibration needs a direct model".into()));
    }
    if sample_blocks == 0 {
        return Err(Error::EmptyInput("calibration blocks"));
    }
    let mut rng = rng_from(channel.seed, &[0x11c]);
    let bits = random_bits(&mut rng, sample_blocks, arch.k);
    let mut chips = encode_batch(model, bits.view())?;
    let sigma2_ch = channel.sigma2();
    add_noise_in_place(
        chips.as_slice_mut().expect("standard layout"),
        sigma2_ch.sqrt(),
        &mut rng,
    );
    let z = model.logits_batch(chips.view());
    let (mu, sigma2) = mean_var(
        z.iter()
            .zip(bits.iter())
            .map(|(&v, &b)| if b == 1 { v } else { -v }),
    );
    if !(sigma2 > 0.0) {
        return Err(Error::CalibrationFailed(format!("variance estimate {sigma2}")));
    }
    if !(mu > 0.0) {
        return Err(Error::CalibrationFailed(format!("mean output {mu} is not positive")));
    }
    let g2 = model.norm_gain * model.norm_gain;
    let noise_gain = model.receiver_row_energy().mean().expect("outputs") / g2;
    Ok(LlrCalibration {
        mu,
        sigma2,
        snr_db_at_calibration: channel.per_chip_snr_db(),
        noise_variance: sigma2_ch,
        noise_gain,
    })
}
