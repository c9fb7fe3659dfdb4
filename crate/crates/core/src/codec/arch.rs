use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, ArchKind, LayerSpec, LossKind, NetworkModel, TrainingMeta};
use crate::rng::rng_from;

/// Largest block size supported by the one-hot architecture.
pub const MAX_ONE_HOT_K: usize = 10;

/// Shape of a spreading network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchSpec {
    pub kind: ArchKind,
    /// Message bits per block.
    pub k: usize,
    /// Channel chips per block.
    pub hidden_dim: usize,
}

impl ArchSpec {
    pub fn one_hot(k: usize, hidden_dim: usize) -> Result<Self> {
        Self {
            kind: ArchKind::OneHot,
            k,
            hidden_dim,
        }
        .validated()
    }

    pub fn direct(k: usize, hidden_dim: usize) -> Result<Self> {
        Self {
            kind: ArchKind::Direct,
            k,
            hidden_dim,
        }
        .validated()
    }

    /// k = 8, 256 chips (N = 32), softmax output.
    pub fn reference_one_hot() -> Self {
        Self::one_hot(8, 256).expect("valid")
    }

    /// k = 32, 2048 chips (N = 64), ESS output.
    pub fn reference_direct() -> Self {
        Self::direct(32, 2048).expect("valid")
    }

    pub fn validated(self) -> Result<Self> {
        if self.k == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidArch("k and hidden width must be positive".into()));
        }
        if !self.hidden_dim.is_multiple_of(self.k) {
            return Err(Error::InvalidArch(format!(
                "hidden width {} is not divisible by k = {}",
                self.hidden_dim, self.k
            )));
        }
        match self.kind {
            ArchKind::OneHot if self.k > MAX_ONE_HOT_K => Err(Error::InvalidArch(format!(
                "one-hot networks support k <= {MAX_ONE_HOT_K}, got {}",
                self.k
            ))),
            ArchKind::Generic => Err(Error::InvalidArch(
                "generic topologies have no spreading architecture".into(),
            )),
            _ => Ok(self),
        }
    }

    /// Chips per message bit.
    pub fn spreading_factor(&self) -> usize {
        self.hidden_dim / self.k
    }

    pub fn input_dim(&self) -> usize {
        match self.kind {
            ArchKind::OneHot => 1 << self.k,
            _ => self.k,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.input_dim()
    }

    pub fn loss(&self) -> LossKind {
        match self.kind {
            ArchKind::OneHot => LossKind::CrossEntropy,
            _ => LossKind::Mae,
        }
    }

    pub fn output_activation(&self) -> Activation {
        match self.kind {
            ArchKind::OneHot => Activation::Softmax,
            _ => Activation::EllSig,
        }
    }

    /// Recovers the architecture of a model built by [`build`].
    pub fn of_model(model: &NetworkModel) -> Result<Self> {
        let kind = model.meta.arch;
        let k = match kind {
            ArchKind::OneHot => model.input_dim().trailing_zeros() as usize,
            _ => model.input_dim(),
        };
        let arch = Self {
            kind,
            k,
            hidden_dim: model.hidden_dim(),
        }
        .validated()?;
        if arch.input_dim() != model.input_dim() || arch.output_dim() != model.output_dim() {
            return Err(Error::InvalidArch(format!(
                "model dims {}x{}x{} do not match a {:?} network",
                model.input_dim(),
                model.hidden_dim(),
                model.output_dim(),
                kind
            )));
        }
        Ok(arch)
    }
}

/// Untrained network: linear hidden layer, weights uniform on [−1, 1].
pub fn build(arch: ArchSpec, seed: u64) -> Result<NetworkModel> {
    let arch = arch.validated()?;
    let hidden = LayerSpec::new(arch.input_dim(), arch.hidden_dim, Activation::Linear)?;
    let output = LayerSpec::new(arch.hidden_dim, arch.output_dim(), arch.output_activation())?;
    let meta = TrainingMeta {
        arch: arch.kind,
        loss: arch.loss(),
        trained_snr_db: None,
        seed,
        epochs: 0,
    };
    let mut rng = rng_from(seed, &[0x1417]);
    NetworkModel::uniform(hidden, output, meta, &mut rng)
}

/// Integer index of a bit block, first bit most significant.
pub fn block_index(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)
}

pub fn index_bits(index: usize, k: usize) -> Vec<u8> {
    (0..k).rev().map(|i| ((index >> i) & 1) as u8).collect()
}

/// Network input for one block.
pub fn input_vector(arch: &ArchSpec, bits: &[u8]) -> Result<Vec<f64>> {
    if bits.len() != arch.k {
        return Err(Error::DimensionMismatch {
            what: "bit block",
            expected: arch.k,
            got: bits.len(),
        });
    }
    Ok(match arch.kind {
        ArchKind::OneHot => {
            let mut v = vec![-1.0; arch.input_dim()];
            v[block_index(bits)] = 1.0;
            v
        }
        _ => bits.iter().map(|&b| if b & 1 == 1 { 1.0 } else { -1.0 }).collect(),
    })
}

/// Network inputs for a batch of blocks (one block of k bits per row).
pub fn input_matrix(arch: &ArchSpec, bits: ArrayView2<u8>) -> Result<Array2<f64>> {
    if bits.ncols() != arch.k {
        return Err(Error::DimensionMismatch {
            what: "bit block",
            expected: arch.k,
            got: bits.ncols(),
        });
    }
    Ok(match arch.kind {
        ArchKind::OneHot => {
            let mut x = Array2::from_elem((bits.nrows(), arch.input_dim()), -1.0);
            for (mut row, b) in x.rows_mut().into_iter().zip(bits.rows()) {
                let idx = b.iter().fold(0usize, |acc, &v| (acc << 1) | (v & 1) as usize);
                row[idx] = 1.0;
            }
            x
        }
        _ => bits.mapv(|b| if b & 1 == 1 { 1.0 } else { -1.0 }),
    })
}

/// One-hot inputs for a batch of message indices.
pub fn one_hot_inputs(indices: &[usize], dim: usize) -> Array2<f64> {
    let mut x = Array2::from_elem((indices.len(), dim), -1.0);
    for (mut row, &i) in x.rows_mut().into_iter().zip(indices) {
        row[i] = 1.0;
    }
    x
}

/// Training targets matching the output layer of each architecture.
pub fn target_matrix(arch: &ArchSpec, inputs: ArrayView2<f64>) -> Array2<f64> {
    match arch.kind {
        // Probability targets: 1 at the hot index, 0 elsewhere.
        ArchKind::OneHot => inputs.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        _ => inputs.to_owned(),
    }
}

pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, blocks: usize, k: usize) -> Array2<u8> {
    Array2::from_shape_simple_fn((blocks, k), || rng.random_range(0..2u8))
}

/// Every k-bit block in index order.
pub fn exhaustive_bits(k: usize) -> Array2<u8> {
    let n = 1usize << k;
    let mut out = Array2::zeros((n, k));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = ((i >> (k - 1 - j)) & 1) as u8;
        }
    }
    out
}
