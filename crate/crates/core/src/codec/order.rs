//! Transmit chip ordering.
//!
//! With a linear hidden layer and i.i.d. ±1 inputs, the covariance of chips
//! `j` and `j'` of a block is `w_j·w_j'` (rows of W1), so the expected lag-h
//! autocorrelation of the chip stream is fixed by the weights alone:
//!
//! ```text
//! ρ(h) = Σ_{j < n−h} w_j·w_{j+h} / Σ_j ‖w_j‖²
//! ```
//!
//! For a trained network this bias is of the same order as the PACF
//! confidence band at a few hundred thousand samples. Reordering hidden
//! units leaves the input/output map untouched, so the order is chosen by
//! local search to drive `ρ(1..max_lag)` towards zero.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, NetworkModel};
use crate::rng::rng_from;

/// Expected autocorrelation of the chip stream at lags `1..=max_lag` for
/// uniformly random input blocks. Linear hidden layers only.
pub fn structural_acf(model: &NetworkModel, max_lag: usize) -> Result<Vec<f64>> {
    check_linear(model)?;
    let gram = model.w1.dot(&model.w1.t());
    let order: Vec<usize> = (0..model.hidden_dim()).collect();
    Ok(lag_sums(&gram, &order, max_lag)
        .iter()
        .map(|a| a / gram.diag().sum())
        .collect())
}

fn check_linear(model: &NetworkModel) -> Result<()> {
    if model.hidden.activation != Activation::Linear {
        return Err(Error::Config("chip ordering needs a linear hidden layer".into()));
    }
    Ok(())
}

fn lag_sums(gram: &Array2<f64>, order: &[usize], max_lag: usize) -> Vec<f64> {
    let n = order.len();
    (1..=max_lag)
        .map(|h| (0..n.saturating_sub(h)).map(|j| gram[[order[j], order[j + h]]]).sum())
        .collect()
}

/// Contribution to every lag sum of the pairs that touch position `p` or `q`.
fn touching(gram: &Array2<f64>, order: &[usize], p: usize, q: usize, out: &mut [f64]) {
    let n = order.len();
    for (hi, o) in out.iter_mut().enumerate() {
        let h = hi + 1;
        let mut s = 0.0;
        for &a in &[p, q] {
            if a >= h {
                s += gram[[order[a - h], order[a]]];
            }
            if a + h < n {
                s += gram[[order[a], order[a + h]]];
            }
        }
        // The pair (p, q) itself is counted from both ends.
        if q.abs_diff(p) == h {
            s -= gram[[order[p.min(q)], order[p.max(q)]]];
        }
        *o = s;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderReport {
    /// Largest |ρ(h)| over `1..=max_lag` before and after.
    pub max_before: f64,
    pub max_after: f64,
    pub swaps: usize,
}

/// Permutes the hidden units of `model` so the structural chip
/// autocorrelation over `1..=max_lag` is small. Deterministic in `seed`.
pub fn decorrelate_chip_order(
    model: &mut NetworkModel,
    max_lag: usize,
    proposals: usize,
    seed: u64,
) -> Result<OrderReport> {
    check_linear(model)?;
    let n = model.hidden_dim();
    let max_lag = max_lag.min(n.saturating_sub(1));
    let gram = model.w1.dot(&model.w1.t());
    let norm = gram.diag().sum();
    let mut order: Vec<usize> = (0..n).collect();
    let mut sums = lag_sums(&gram, &order, max_lag);
    let peak = |s: &[f64]| s.iter().fold(0.0f64, |m, v| m.max(v.abs())) / norm;
    let max_before = peak(&sums);
    let mut cost: f64 = sums.iter().map(|v| v * v).sum();
    let mut rng = rng_from(seed, &[0x0de4]);
    let (mut old, mut new) = (vec![0.0; max_lag], vec![0.0; max_lag]);
    let mut swaps = 0;
    // Annealed acceptance: the temperature decays geometrically from a
    // fraction of the starting cost to zero over the proposal budget.
    let t0 = 1e-4 * cost;
    let mut best = (cost, order.clone(), sums.clone());
    for it in 0..proposals {
        if n < 2 || max_lag == 0 {
            break;
        }
        let p = rng.random_range(0..n);
        let q = rng.random_range(0..n);
        if p == q {
            continue;
        }
        touching(&gram, &order, p, q, &mut old);
        order.swap(p, q);
        touching(&gram, &order, p, q, &mut new);
        let trial: f64 = sums
            .iter()
            .zip(old.iter().zip(&new))
            .map(|(s, (o, nw))| (s - o + nw).powi(2))
            .sum();
        let temp = t0 * (1.0 - it as f64 / proposals as f64).powi(4);
        let accept = trial < cost || (temp > 0.0 && rng.random::<f64>() < (-(trial - cost) / temp).exp());
        if accept {
            for (s, (o, nw)) in sums.iter_mut().zip(old.iter().zip(&new)) {
                *s += nw - o;
            }
            cost = trial;
            swaps += 1;
            if cost < best.0 {
                best = (cost, order.clone(), sums.clone());
            }
        } else {
            order.swap(p, q);
        }
    }
    let (_, order, sums) = best;
    model.permute_hidden(&order)?;
    Ok(OrderReport {
        max_before,
        max_after: peak(&sums),
        swaps,
    })
}
