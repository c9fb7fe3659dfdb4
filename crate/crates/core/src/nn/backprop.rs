//! Analytic gradients.
//!
//! All gradients are flattened in the canonical parameter order
//! (W1 row-major, b1, W2 row-major, b2).

use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::activation::{ess_derivative, Activation};
use super::loss::{softmax_cross_entropy, LossKind};
use super::model::{mean_var, NetworkModel};
use crate::error::{Error, Result};

/// Gradient of the per-sample loss.
///
/// When `channel_noise` is given it is added to the normalized chips before
/// the receiver half, exactly as the channel does.
pub fn backprop(
    model: &NetworkModel,
    input: &[f64],
    target: &[f64],
    loss: LossKind,
    channel_noise: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if target.len() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            what: "target",
            expected: model.output_dim(),
            got: target.len(),
        });
    }
    if let Some(n) = channel_noise {
        if n.len() != model.hidden_dim() {
            return Err(Error::DimensionMismatch {
                what: "channel noise",
                expected: model.hidden_dim(),
                got: n.len(),
            });
        }
    }
    if input.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "network input",
            expected: model.input_dim(),
            got: input.len(),
        });
    }
    let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous");
    let t = ArrayView2::from_shape((1, target.len()), target).expect("contiguous");
    let noise = channel_noise.map(|n| {
        Array2::from_shape_vec((1, n.len()), n.iter().map(|v| v / model.norm_gain).collect())
            .expect("contiguous")
    });
    let (_, grad) = batch_loss_grad(model, x, t, loss, noise.as_ref().map(|n| n.view()), None);
    Ok(grad)
}

/// A fixed training corpus: one sample per row.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    /// Chip-domain noise (already scaled to the training SNR), or `None`
    /// for noise-free training.
    pub noise: Option<Array2<f64>>,
}

/// Mean loss over the corpus.
///
/// With noise present, the chip normalization is recomputed from the
/// corpus so the transmitter cannot gain SNR by scaling its weights; the
/// returned gradient includes the dependence through the normalization.
pub fn corpus_loss(model: &NetworkModel, corpus: &Corpus, loss: LossKind) -> f64 {
    let h = model.hidden_batch(corpus.inputs.view());
    let rx = receiver_input(&h, corpus.noise.as_ref().map(|n| n.view()));
    let mut z = rx.dot(&model.w2.t());
    z += &model.b2;
    if uses_logit_ce(model, loss) {
        return mean_logit_ce(z.view(), corpus.targets.view());
    }
    let mut m = z;
    model.apply_output(&mut m);
    mean_row_loss(m.view(), corpus.targets.view(), loss)
}

/// Softmax outputs trained with cross-entropy take the logit form of the
/// loss and its exact gradient `(m̂·Σp − p)/K`.
fn uses_logit_ce(model: &NetworkModel, loss: LossKind) -> bool {
    loss == LossKind::CrossEntropy && model.output.activation == Activation::Softmax
}

fn mean_logit_ce(z: ArrayView2<f64>, t: ArrayView2<f64>) -> f64 {
    let total: f64 = z
        .rows()
        .into_iter()
        .zip(t.rows())
        .map(|(zr, tr)| softmax_cross_entropy(zr.as_slice().expect("row"), tr.as_slice().expect("row")))
        .sum();
    total / z.nrows() as f64
}

pub fn corpus_loss_grad(model: &NetworkModel, corpus: &Corpus, loss: LossKind) -> (f64, Vec<f64>) {
    let noise = corpus.noise.as_ref().map(|n| n.view());
    batch_loss_grad(
        model,
        corpus.inputs.view(),
        corpus.targets.view(),
        loss,
        None,
        noise,
    )
}

fn mean_row_loss(m: ArrayView2<f64>, t: ArrayView2<f64>, loss: LossKind) -> f64 {
    let total: f64 = m
        .rows()
        .into_iter()
        .zip(t.rows())
        .map(|(mr, tr)| loss.eval(mr.as_slice().expect("row"), tr.as_slice().expect("row")))
        .sum();
    total / m.nrows() as f64
}

/// Receiver input `h + n/g` with `g` estimated from `h` itself.
fn receiver_input(h: &Array2<f64>, noise: Option<ArrayView2<f64>>) -> Array2<f64> {
    match noise {
        None => h.clone(),
        Some(n) => {
            let (_, p) = mean_var(h.iter().copied());
            let inv_g = p.sqrt();
            let mut rx = h.clone();
            Zip::from(&mut rx).and(&n).for_each(|r, &nv| *r += nv * inv_g);
            rx
        }
    }
}

/// Shared batch loss/gradient.
///
/// `fixed_noise` is receiver-domain noise (already divided by the model's
/// fixed gain). `normalized_noise` is chip-domain noise whose scaling
/// follows the batch power estimate.
fn batch_loss_grad(
    model: &NetworkModel,
    x: ArrayView2<f64>,
    t: ArrayView2<f64>,
    loss: LossKind,
    fixed_noise: Option<ArrayView2<f64>>,
    normalized_noise: Option<ArrayView2<f64>>,
) -> (f64, Vec<f64>) {
    let batch = x.nrows();
    let zh = model.hidden_pre_batch(x);
    let mut h = zh.clone();
    model.apply_hidden(&mut h);

    let (mu, power) = if normalized_noise.is_some() {
        mean_var(h.iter().copied())
    } else {
        (0.0, 1.0)
    };
    let mut rx = h.clone();
    if let Some(n) = fixed_noise {
        rx += &n;
    }
    if let Some(n) = normalized_noise {
        let inv_g = power.sqrt();
        Zip::from(&mut rx).and(&n).for_each(|r, &nv| *r += nv * inv_g);
    }

    let mut z = rx.dot(&model.w2.t());
    z += &model.b2;
    let mut m = z.clone();
    model.apply_output(&mut m);
    let logit_ce = uses_logit_ce(model, loss);
    let value = if logit_ce {
        mean_logit_ce(z.view(), t)
    } else {
        mean_row_loss(m.view(), t, loss)
    };

    // dL/dz_out
    let scale = 1.0 / batch as f64;
    let mut delta = Array2::<f64>::zeros(z.raw_dim());
    let mut g = vec![0.0; model.output_dim()];
    for ((mut d, mr), (tr, zr)) in delta
        .rows_mut()
        .into_iter()
        .zip(m.rows())
        .zip(t.rows().into_iter().zip(z.rows()))
    {
        let mr = mr.as_slice().expect("row");
        let d = d.as_slice_mut().expect("row");
        if logit_ce {
            let tr = tr.as_slice().expect("row");
            let mass: f64 = tr.iter().map(|p| p.clamp(0.0, 1.0)).sum();
            let c = scale / tr.len() as f64;
            for ((dv, mv), tv) in d.iter_mut().zip(mr).zip(tr) {
                *dv = c * (mv * mass - tv.clamp(0.0, 1.0));
            }
            // For a one-hot target, m̂_t − 1 loses every digit once the
            // prediction is confident; use −Σ_{j≠t} m̂_j instead.
            if mass == 1.0 {
                if let Some(t) = tr.iter().position(|&v| v == 1.0) {
                    let others: f64 = mr.iter().enumerate().filter(|&(j, _)| j != t).map(|(_, v)| v).sum();
                    d[t] = -c * others;
                }
            }
            continue;
        }
        loss.output_gradient(mr, tr.as_slice().expect("row"), scale, &mut g);
        match model.output.activation {
            Activation::Linear => d.copy_from_slice(&g),
            Activation::EllSig => {
                for ((dv, gv), zv) in d.iter_mut().zip(&g).zip(zr.iter()) {
                    *dv = gv * ess_derivative(*zv);
                }
            }
            Activation::Softmax => {
                let dot: f64 = g.iter().zip(mr).map(|(a, b)| a * b).sum();
                for ((dv, gv), mv) in d.iter_mut().zip(&g).zip(mr) {
                    *dv = mv * (gv - dot);
                }
            }
        }
    }

    let gw2 = delta.t().dot(&rx);
    let gb2 = delta.sum_axis(Axis(0));
    let mut dh = delta.dot(&model.w2);

    if let Some(n) = normalized_noise {
        // rx = h + n·sqrt(P); P = mean((h − μ)²)
        let sqrt_p = power.sqrt();
        let dl_dsqrtp: f64 = Zip::from(&dh).and(&n).fold(0.0, |acc, &d, &nv| acc + d * nv);
        let count = h.len() as f64;
        let coef = dl_dsqrtp * 0.5 / sqrt_p * 2.0 / count;
        Zip::from(&mut dh)
            .and(&h)
            .for_each(|d, &hv| *d += coef * (hv - mu));
    }

    match model.hidden.activation {
        Activation::Linear => {}
        Activation::EllSig => Zip::from(&mut dh)
            .and(&zh)
            .for_each(|d, &zv| *d *= ess_derivative(zv)),
        Activation::Softmax => unreachable!("rejected at construction"),
    }

    let gw1 = dh.t().dot(&x);
    let gb1 = dh.sum_axis(Axis(0));

    let mut grad = Vec::with_capacity(model.param_count());
    grad.extend(gw1.iter());
    grad.extend(gb1.iter());
    grad.extend(gw2.iter());
    grad.extend(gb2.iter());
    (value, grad)
}
