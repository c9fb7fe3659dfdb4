//! The two spreading architectures: building, training, block encode and
//! decode, LLR calibration and the model file format.

mod arch;
mod io;
mod llr;
mod order;
mod train;

pub use arch::{
    block_index, build, exhaustive_bits, index_bits, input_matrix, input_vector, one_hot_inputs,
    random_bits, target_matrix, ArchSpec, MAX_ONE_HOT_K,
};
pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use llr::{calibrate_llr, LlrCalibration};
pub use order::{decorrelate_chip_order, structural_acf, OrderReport};
pub use train::{train, training_corpus, Batch, TrainConfig, TrainReport};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{ArchKind, NetworkModel};

/// One block of channel chips.
#[derive(Clone, Debug, PartialEq)]
pub struct ChipFrame {
    pub chips: Vec<f64>,
    pub block_index: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decoded {
    OneHot { index: usize, posterior: Vec<f64> },
    Direct { bits: Vec<u8>, soft: Vec<f64> },
}

impl Decoded {
    /// Decoded message bits, first bit most significant for one-hot indices.
    pub fn bits(&self, k: usize) -> Vec<u8> {
        match self {
            Decoded::OneHot { index, .. } => index_bits(*index, k),
            Decoded::Direct { bits, .. } => bits.clone(),
        }
    }
}

pub fn encode_block(model: &NetworkModel, bits: &[u8], block_index: u64) -> Result<ChipFrame> {
    let arch = ArchSpec::of_model(model)?;
    let x = input_vector(&arch, bits)?;
    let x = ArrayView2::from_shape((1, x.len()), &x).expect("contiguous");
    let chips = model.transmit_batch(x).into_raw_vec_and_offset().0;
    Ok(ChipFrame { chips, block_index })
}

/// Chips for a batch of blocks, one block of k bits per row.
pub fn encode_batch(model: &NetworkModel, bits: ArrayView2<u8>) -> Result<Array2<f64>> {
    let arch = ArchSpec::of_model(model)?;
    let x = input_matrix(&arch, bits)?;
    Ok(model.transmit_batch(x.view()))
}

pub fn decode_block(model: &NetworkModel, received: &[f64]) -> Result<Decoded> {
    if received.len() != model.hidden_dim() {
        return Err(Error::DimensionMismatch {
            what: "chip frame",
            expected: model.hidden_dim(),
            got: received.len(),
        });
    }
    let r = ArrayView2::from_shape((1, received.len()), received).expect("contiguous");
    let (_, m) = model.receive_batch(r);
    let out = m.row(0).to_vec();
    Ok(match model.meta.arch {
        ArchKind::OneHot => Decoded::OneHot {
            index: argmax(&out),
            posterior: out,
        },
        _ => Decoded::Direct {
            bits: out.iter().map(|&v| (v > 0.0) as u8).collect(),
            soft: out,
        },
    })
}

/// Hard decisions for a batch of received frames. One-hot models yield
/// their index bits (MSB first), direct models their sign decisions.
pub fn decode_batch(model: &NetworkModel, received: ArrayView2<f64>) -> Result<Array2<u8>> {
    if received.ncols() != model.hidden_dim() {
        return Err(Error::DimensionMismatch {
            what: "chip frame",
            expected: model.hidden_dim(),
            got: received.ncols(),
        });
    }
    let arch = ArchSpec::of_model(model)?;
    // Both decisions depend only on the pre-activations.
    let z = model.logits_batch(received);
    Ok(match arch.kind {
        ArchKind::OneHot => {
            let mut out = Array2::zeros((z.nrows(), arch.k));
            for (mut o, row) in out.rows_mut().into_iter().zip(z.rows()) {
                let idx = argmax(row.as_slice().expect("row"));
                for (j, v) in o.iter_mut().enumerate() {
                    *v = ((idx >> (arch.k - 1 - j)) & 1) as u8;
                }
            }
            out
        }
        _ => z.mapv(|v| (v > 0.0) as u8),
    })
}

/// Noise-free chip stream of `blocks` uniformly random blocks, in
/// transmission order.
pub fn sample_chips(model: &NetworkModel, blocks: usize, seed: u64) -> Result<Vec<f64>> {
    let arch = ArchSpec::of_model(model)?;
    let mut rng = crate::rng::rng_from(seed, &[0xc41]);
    let bits = random_bits(&mut rng, blocks, arch.k);
    Ok(encode_batch(model, bits.view())?.into_raw_vec_and_offset().0)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
