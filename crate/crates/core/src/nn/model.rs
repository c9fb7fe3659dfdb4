use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::{softmax_in_place, Activation};
use super::loss::LossKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArch(format!(
                "layer dimensions must be positive, got {input_dim}x{output_dim}"
            )));
        }
        Ok(Self {
            input_dim,
            output_dim,
            activation,
        })
    }
}

/// Which input mapping the network expects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    /// 2^k inputs, one element +1 and the rest −1.
    OneHot,
    /// k inputs, bits mapped 0 → −1 and 1 → +1.
    Direct,
    /// Any other topology (tests, experiments).
    Generic,
}

impl ArchKind {
    pub fn id(self) -> u8 {
        match self {
            ArchKind::OneHot => 0,
            ArchKind::Direct => 1,
            ArchKind::Generic => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(ArchKind::OneHot),
            1 => Some(ArchKind::Direct),
            2 => Some(ArchKind::Generic),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub arch: ArchKind,
    pub loss: LossKind,
    /// `None` means trained noise-free.
    pub trained_snr_db: Option<f64>,
    pub seed: u64,
    pub epochs: usize,
}

/// Single-hidden-layer spreading network.
///
/// The hidden layer output, after the affine chip normalization, is what
/// goes on the air. The receiver half undoes the normalization before
/// applying the output layer, so the normalization never changes the
/// noise-free input/output map.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub hidden: LayerSpec,
    pub output: LayerSpec,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub norm_gain: f64,
    pub norm_offset: f64,
    pub meta: TrainingMeta,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub z_hidden: Vec<f64>,
    pub chips: Vec<f64>,
    pub z_out: Vec<f64>,
    pub m_hat: Vec<f64>,
}

impl NetworkModel {
    pub fn zeros(hidden: LayerSpec, output: LayerSpec, meta: TrainingMeta) -> Result<Self> {
        if hidden.output_dim != output.input_dim {
            return Err(Error::InvalidArch(format!(
                "hidden width {} does not feed output layer input {}",
                hidden.output_dim, output.input_dim
            )));
        }
        if hidden.activation == Activation::Softmax {
            return Err(Error::InvalidArch(
                "softmax is only permitted on the output layer".into(),
            ));
        }
        Ok(Self {
            hidden,
            output,
            w1: Array2::zeros((hidden.output_dim, hidden.input_dim)),
            b1: Array1::zeros(hidden.output_dim),
            w2: Array2::zeros((output.output_dim, output.input_dim)),
            b2: Array1::zeros(output.output_dim),
            norm_gain: 1.0,
            norm_offset: 0.0,
            meta,
        })
    }

    /// Weights and biases drawn uniformly from [−1, 1].
    pub fn uniform<R: Rng + ?Sized>(
        hidden: LayerSpec,
        output: LayerSpec,
        meta: TrainingMeta,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = Self::zeros(hidden, output, meta)?;
        let params: Vec<f64> = (0..model.param_count())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        model.set_params(&params)?;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.output_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim
    }

    pub fn param_count(&self) -> usize {
        let (i, h, o) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        i * h + h * o + h + o
    }

    /// Parameters flattened as W1 (row-major), b1, W2 (row-major), b2.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for dst in [
            self.w1.as_slice_mut(),
            self.b1.as_slice_mut(),
            self.w2.as_slice_mut(),
            self.b2.as_slice_mut(),
        ] {
            let dst = dst.expect("standard layout");
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.norm_gain.is_finite()
            && self.norm_offset.is_finite()
            && [&self.w1, &self.w2].iter().all(|w| w.iter().all(|v| v.is_finite()))
            && [&self.b1, &self.b2].iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_len(&self, what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected != got {
            return Err(Error::DimensionMismatch {
                what,
                expected,
                got,
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_len("network input", self.input_dim(), input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous");
        let z_hidden = self.hidden_pre_batch(x);
        let mut h = z_hidden.clone();
        self.apply_hidden(&mut h);
        let chips = h.mapv(|v| self.norm_gain * (v - self.norm_offset));
        let (z_out, m_hat) = self.receive_batch(chips.view());
        Ok(ForwardTrace {
            z_hidden: z_hidden.into_raw_vec_and_offset().0,
            chips: chips.into_raw_vec_and_offset().0,
            z_out: z_out.into_raw_vec_and_offset().0,
            m_hat: m_hat.into_raw_vec_and_offset().0,
        })
    }

    /// W1·x + b1 for each row of `x`.
    pub fn hidden_pre_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.w1.t());
        z += &self.b1;
        z
    }

    pub(crate) fn apply_hidden(&self, z: &mut Array2<f64>) {
        match self.hidden.activation {
            Activation::Linear => {}
            act => z
                .rows_mut()
                .into_iter()
                .for_each(|mut r| act.apply_in_place(r.as_slice_mut().expect("row"))),
        }
    }

    /// Un-normalized hidden activations for a batch of inputs.
    pub fn hidden_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = self.hidden_pre_batch(x);
        self.apply_hidden(&mut h);
        h
    }

    /// Normalized channel chips for a batch of inputs (one frame per row).
    pub fn transmit_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = self.hidden_batch(x);
        let (g, off) = (self.norm_gain, self.norm_offset);
        h.mapv_inplace(|v| g * (v - off));
        h
    }

    /// Output pre-activations for received chip frames (one per row).
    pub fn logits_batch(&self, chips: ArrayView2<f64>) -> Array2<f64> {
        // W2·(r/g + off) + b2 = (W2·r)/g + (off·W2·1 + b2)
        let mut z = chips.dot(&self.w2.t());
        let inv_g = 1.0 / self.norm_gain;
        let bias = &self.b2 + &(self.w2.sum_axis(Axis(1)) * self.norm_offset);
        z.mapv_inplace(|v| v * inv_g);
        z += &bias;
        z
    }

    pub fn apply_output(&self, z: &mut Array2<f64>) {
        let act = self.output.activation;
        for mut row in z.rows_mut() {
            let r = row.as_slice_mut().expect("row");
            match act {
                Activation::Softmax => softmax_in_place(r),
                other => other.apply_in_place(r),
            }
        }
    }

    /// Receiver half: (output pre-activations, network outputs).
    pub fn receive_batch(&self, chips: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let z = self.logits_batch(chips);
        let mut m = z.clone();
        self.apply_output(&mut m);
        (z, m)
    }

    /// Folds the per-unit mean of the hidden activations over `inputs` into
    /// the biases so each chip position has zero mean, then sets the
    /// normalization gain for unit chip power. For a linear hidden layer the
    /// noise-free input/output map is unchanged.
    pub fn center_and_normalize(&mut self, inputs: ArrayView2<f64>) {
        let h = self.hidden_batch(inputs);
        if self.hidden.activation == Activation::Linear {
            let mean = h.mean_axis(Axis(0)).expect("non-empty corpus");
            self.b1 -= &mean;
            self.b2 += &self.w2.dot(&mean);
            let centered = &h - &mean;
            self.set_normalization_from(centered.view());
        } else {
            self.set_normalization_from(h.view());
        }
    }

    /// Sets (gain, offset) so the given hidden activations map to zero-mean,
    /// unit-power chips.
    pub fn set_normalization_from(&mut self, h: ArrayView2<f64>) {
        let (mean, var) = mean_var(h.iter().copied());
        self.norm_offset = mean;
        self.norm_gain = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    }

    /// Reorders hidden units; the input/output map is unchanged, only the
    /// order in which chips are transmitted.
    pub fn permute_hidden(&mut self, order: &[usize]) -> Result<()> {
        self.check_len("hidden permutation", self.hidden_dim(), order.len())?;
        let mut seen = vec![false; order.len()];
        for &o in order {
            if o >= order.len() || std::mem::replace(&mut seen[o], true) {
                return Err(Error::Config("hidden permutation is not a bijection".into()));
            }
        }
        let w1 = self.w1.select(Axis(0), order);
        let b1 = self.b1.select(Axis(0), order);
        let w2 = self.w2.select(Axis(1), order);
        self.w1 = w1;
        self.b1 = b1;
        self.w2 = w2.as_standard_layout().to_owned();
        Ok(())
    }

    /// Squared Euclidean norms of the W2 rows, used by LLR calibration.
    pub fn receiver_row_energy(&self) -> Array1<f64> {
        self.w2.map_axis(Axis(1), |r| r.dot(&r))
    }

    pub fn w1_row(&self, i: usize) -> Vec<f64> {
        self.w1.slice(s![i, ..]).to_vec()
    }
}

pub(crate) fn mean_var(values: impl Iterator<Item = f64>) -> (f64, f64) {
    // Welford accumulation keeps the variance accurate for large offsets.
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        n += 1.0;
        let d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
    }
    if n == 0.0 {
        (0.0, 0.0)
    } else {
        (mean, m2 / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn meta() -> TrainingMeta {
        TrainingMeta {
            arch: ArchKind::Generic,
            loss: LossKind::CrossEntropy,
            trained_snr_db: None,
            seed: 0,
            epochs: 0,
        }
    }

    #[test]
    fn zero_network_gives_uniform_softmax() {
        let hidden = LayerSpec::new(5, 7, Activation::Linear).unwrap();
        let out = LayerSpec::new(7, 4, Activation::Softmax).unwrap();
        let model = NetworkModel::zeros(hidden, out, meta()).unwrap();
        let t = model.forward(&[0.3, -1.0, 2.0, 4.0, 0.0]).unwrap();
        assert!(t.m_hat.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn scalar_linear_network() {
        let hidden = LayerSpec::new(1, 1, Activation::Linear).unwrap();
        let out = LayerSpec::new(1, 1, Activation::Linear).unwrap();
        let mut model = NetworkModel::zeros(hidden, out, meta()).unwrap();
        model.w1[[0, 0]] = 2.0;
        let t = model.forward(&[3.0]).unwrap();
        assert_eq!(t.chips, vec![6.0]);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let hidden = LayerSpec::new(3, 2, Activation::Linear).unwrap();
        let out = LayerSpec::new(2, 3, Activation::Softmax).unwrap();
        let model = NetworkModel::zeros(hidden, out, meta()).unwrap();
        assert!(matches!(
            model.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn softmax_hidden_layer_rejected() {
        let hidden = LayerSpec::new(3, 2, Activation::Softmax).unwrap();
        let out = LayerSpec::new(2, 3, Activation::Linear).unwrap();
        assert!(NetworkModel::zeros(hidden, out, meta()).is_err());
        assert!(LayerSpec::new(0, 2, Activation::Linear).is_err());
    }

    #[test]
    fn parameter_counts_of_reference_topologies() {
        let a = NetworkModel::zeros(
            LayerSpec::new(256, 256, Activation::Linear).unwrap(),
            LayerSpec::new(256, 256, Activation::Softmax).unwrap(),
            meta(),
        )
        .unwrap();
        assert_eq!(a.param_count(), 131_584);
        let b = NetworkModel::zeros(
            LayerSpec::new(32, 2048, Activation::Linear).unwrap(),
            LayerSpec::new(2048, 32, Activation::EllSig).unwrap(),
            meta(),
        )
        .unwrap();
        assert_eq!(b.param_count(), 133_152);
    }

    #[test]
    fn params_roundtrip_and_normalization_invariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let hidden = LayerSpec::new(4, 8, Activation::Linear).unwrap();
        let out = LayerSpec::new(8, 4, Activation::Softmax).unwrap();
        let mut model = NetworkModel::uniform(hidden, out, meta(), &mut rng).unwrap();
        let p = model.params();
        let mut other = model.clone();
        other.set_params(&p).unwrap();
        assert_eq!(other, model);

        let x = [1.0, -1.0, -1.0, 1.0];
        let before = model.forward(&x).unwrap();
        model.norm_gain = 3.5;
        model.norm_offset = -0.7;
        let after = model.forward(&x).unwrap();
        for (a, b) in before.m_hat.iter().zip(&after.m_hat) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn centering_and_permutation_preserve_the_map() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let hidden = LayerSpec::new(4, 8, Activation::Linear).unwrap();
        let out = LayerSpec::new(8, 4, Activation::EllSig).unwrap();
        let mut model = NetworkModel::uniform(hidden, out, meta(), &mut rng).unwrap();
        let inputs = Array2::from_shape_fn((16, 4), |(i, j)| if (i >> j) & 1 == 1 { 1.0 } else { -1.0 });
        let chips = model.transmit_batch(inputs.view());
        let (z0, _) = model.receive_batch(chips.view());

        model.center_and_normalize(inputs.view());
        let chips = model.transmit_batch(inputs.view());
        let (mean, var) = mean_var(chips.iter().copied());
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        for col in chips.columns() {
            assert!(col.mean().unwrap().abs() < 1e-12);
        }
        let (z1, _) = model.receive_batch(chips.view());
        assert!((&z0 - &z1).iter().all(|d| d.abs() < 1e-10));

        model.permute_hidden(&[7, 6, 5, 4, 3, 2, 1, 0]).unwrap();
        let chips2 = model.transmit_batch(inputs.view());
        assert_eq!(chips2[[3, 0]], chips[[3, 7]]);
        let (z2, _) = model.receive_batch(chips2.view());
        assert!((&z0 - &z2).iter().all(|d| d.abs() < 1e-10));
        assert!(model.permute_hidden(&[0, 0, 1, 2, 3, 4, 5, 6]).is_err());
    }
}
