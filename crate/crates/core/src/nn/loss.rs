use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Clipping constant of the cross-entropy loss: the 64-bit machine epsilon.
pub const CE_EPSILON: f64 = f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    Mae,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cross-entropy" | "crossentropy" | "ce" => Ok(LossKind::CrossEntropy),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::UnknownLoss(other.to_string())),
        }
    }
}

impl LossKind {
    pub fn eval(self, m_hat: &[f64], m: &[f64]) -> f64 {
        match self {
            LossKind::CrossEntropy => cross_entropy_loss(m_hat, m),
            LossKind::Mae => mae_loss(m_hat, m),
        }
    }

    /// Writes dL/dm̂ for one sample into `out`, scaled by `scale`.
    pub fn output_gradient(self, m_hat: &[f64], m: &[f64], scale: f64, out: &mut [f64]) {
        let k = m.len() as f64;
        match self {
            LossKind::CrossEntropy => {
                for ((o, &mh), &t) in out.iter_mut().zip(m_hat).zip(m) {
                    let p = t.clamp(0.0, 1.0);
                    // The clipped branches are constant in m̂.
                    *o = if mh > CE_EPSILON && mh < 1.0 - CE_EPSILON {
                        -scale * p / (mh * k)
                    } else {
                        0.0
                    };
                }
            }
            LossKind::Mae => {
                for ((o, &mh), &t) in out.iter_mut().zip(m_hat).zip(m) {
                    let d = mh - t;
                    *o = if d > 0.0 {
                        scale / k
                    } else if d < 0.0 {
                        -scale / k
                    } else {
                        0.0
                    };
                }
            }
        }
    }
}

/// Clipped cross-entropy averaged over the output vector.
pub fn cross_entropy_loss(m_hat: &[f64], m: &[f64]) -> f64 {
    debug_assert_eq!(m_hat.len(), m.len());
    let sum: f64 = m_hat
        .iter()
        .zip(m)
        .map(|(&mh, &t)| {
            let p_hat = mh.clamp(CE_EPSILON, 1.0 - CE_EPSILON);
            let p = t.clamp(0.0, 1.0);
            if p == 0.0 {
                0.0
            } else {
                -p * p_hat.ln()
            }
        })
        .sum();
    sum / m.len() as f64
}

/// Cross-entropy of `softmax(z)` against `m`, evaluated from the logits.
///
/// Equals [`cross_entropy_loss`] of the softmax output whenever every
/// probability lies inside the clipping interval. Unlike the clipped form
/// it keeps a useful gradient when the softmax saturates on the wrong
/// class, which is the usual state of a freshly initialized network.
pub fn softmax_cross_entropy(z: &[f64], m: &[f64]) -> f64 {
    debug_assert_eq!(z.len(), m.len());
    let top = super::activation::argmax_first(z);
    let max = z[top];
    // ln Σ e^(z−max) = ln(1 + rest), kept accurate when the loss is tiny.
    let rest: f64 = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, v)| (v - max).exp())
        .sum();
    let log_norm = rest.ln_1p();
    let sum: f64 = z
        .iter()
        .zip(m)
        .map(|(&zv, &t)| {
            let p = t.clamp(0.0, 1.0);
            if p == 0.0 {
                0.0
            } else {
                p * ((max - zv) + log_norm)
            }
        })
        .sum();
    sum / m.len() as f64
}

/// Mean absolute error over the output vector.
pub fn mae_loss(m_hat: &[f64], m: &[f64]) -> f64 {
    debug_assert_eq!(m_hat.len(), m.len());
    let sum: f64 = m_hat.iter().zip(m).map(|(a, b)| (b - a).abs()).sum();
    sum / m.len() as f64
}
