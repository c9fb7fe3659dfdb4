//! One-step secant (memoryless BFGS) optimizer with backtracking line search.
//!
//! Search direction `d = −g + A·s + B·y` where `s` is the previous step,
//! `y` the change in gradient across it, and
//!
//! ```text
//! B = sᵀg / sᵀy
//! A = −(1 + yᵀy / sᵀy)·B + yᵀg / sᵀy
//! ```
//!
//! The direction falls back to steepest descent on the first iteration,
//! after a rejected step, or whenever `sᵀy` is not safely positive.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearch {
    /// Step multiplier applied after each failed trial.
    pub shrink: f64,
    pub max_halvings: u32,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            max_halvings: 40,
            sufficient_decrease: 1e-4,
        }
    }
}

/// Curvature threshold below which the secant update is discarded.
pub const MIN_CURVATURE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct OssState {
    /// `s = w_k − w_{k−1}` of the last accepted step.
    pub prev_step: Vec<f64>,
    /// `y = g_k − g_{k−1}` computed on the latest call.
    pub prev_grad_delta: Vec<f64>,
    prev_grad: Vec<f64>,
    /// Initial trial step for steepest-descent iterations.
    pub step_size: f64,
    pub line_search: LineSearch,
    /// Forces a steepest-descent direction on the next call.
    pub reset: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Steepest,
    Secant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub direction: Direction,
    pub loss_before: f64,
    pub loss_after: f64,
    pub alpha: f64,
}

impl OssState {
    pub fn new(n_params: usize) -> Self {
        Self::with_line_search(n_params, 1.0, LineSearch::default())
    }

    pub fn with_line_search(n_params: usize, step_size: f64, line_search: LineSearch) -> Self {
        Self {
            prev_step: vec![0.0; n_params],
            prev_grad_delta: vec![0.0; n_params],
            prev_grad: vec![0.0; n_params],
            step_size,
            line_search,
            reset: true,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Search direction for the current gradient; updates `y` in the state.
pub fn search_direction(grad: &[f64], state: &mut OssState) -> (Vec<f64>, Direction) {
    let steepest = || grad.iter().map(|g| -g).collect::<Vec<_>>();
    if state.reset {
        return (steepest(), Direction::Steepest);
    }
    for ((y, g), pg) in state.prev_grad_delta.iter_mut().zip(grad).zip(&state.prev_grad) {
        *y = g - pg;
    }
    let s = &state.prev_step;
    let y = &state.prev_grad_delta;
    let sy = dot(s, y);
    if sy <= MIN_CURVATURE {
        return (steepest(), Direction::Steepest);
    }
    let b = dot(s, grad) / sy;
    let a = -(1.0 + dot(y, y) / sy) * b + dot(y, grad) / sy;
    let d: Vec<f64> = grad
        .iter()
        .zip(s)
        .zip(y)
        .map(|((g, sv), yv)| -g + a * sv + b * yv)
        .collect();
    if dot(&d, grad) >= 0.0 || d.iter().any(|v| !v.is_finite()) {
        return (steepest(), Direction::Steepest);
    }
    (d, Direction::Secant)
}

/// One optimizer iteration.
///
/// `loss` is the loss at `params`. On success returns the new parameters;
/// when every line-search trial fails the parameters are returned unchanged,
/// the step size halves and the next call starts from steepest descent.
pub fn oss_step<F>(
    params: &[f64],
    loss: f64,
    grad: &[f64],
    state: &mut OssState,
    mut eval_loss: F,
) -> Result<(Vec<f64>, StepOutcome)>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != grad.len() || state.prev_step.len() != params.len() {
        return Err(Error::DimensionMismatch {
            what: "optimizer state",
            expected: params.len(),
            got: grad.len().min(state.prev_step.len()),
        });
    }
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged(format!("loss is {loss}")));
    }
    let (dir, kind) = search_direction(grad, state);
    let slope = dot(grad, &dir);
    let ls = state.line_search;
    let mut alpha = match kind {
        Direction::Secant => 1.0,
        Direction::Steepest => state.step_size,
    };
    let mut trial = vec![0.0; params.len()];
    for _ in 0..=ls.max_halvings {
        for ((t, p), d) in trial.iter_mut().zip(params).zip(&dir) {
            *t = p + alpha * d;
        }
        let f = eval_loss(&trial);
        if !f.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "non-finite loss {f} during line search at step {alpha:e}"
            )));
        }
        if f <= loss + ls.sufficient_decrease * alpha * slope {
            for (s, d) in state.prev_step.iter_mut().zip(&dir) {
                *s = alpha * d;
            }
            state.prev_grad.copy_from_slice(grad);
            if kind == Direction::Steepest {
                state.step_size = 2.0 * alpha;
            }
            state.reset = false;
            return Ok((
                trial,
                StepOutcome {
                    accepted: true,
                    direction: kind,
                    loss_before: loss,
                    loss_after: f,
                    alpha,
                },
            ));
        }
        alpha *= ls.shrink;
    }
    state.step_size *= 0.5;
    state.reset = true;
    Ok((
        params.to_vec(),
        StepOutcome {
            accepted: false,
            direction: kind,
            loss_before: loss,
            loss_after: loss,
            alpha: 0.0,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(w: &[f64]) -> f64 {
        0.5 * dot(w, w)
    }

    #[test]
    fn first_direction_is_negative_gradient() {
        let mut st = OssState::new(3);
        let g = [0.5, -2.0, 1.0];
        let (d, kind) = search_direction(&g, &mut st);
        assert_eq!(kind, Direction::Steepest);
        assert_eq!(d, vec![-0.5, 2.0, -1.0]);
    }

    #[test]
    fn quadratic_bowl_converges_monotonically() {
        let mut w = vec![4.0, 3.0];
        let mut st = OssState::new(2);
        let mut last = bowl(&w);
        for _ in 0..200 {
            let g = w.clone();
            let (next, out) = oss_step(&w, bowl(&w), &g, &mut st, bowl).unwrap();
            assert!(out.loss_after <= last);
            last = out.loss_after;
            w = next;
            if dot(&w, &w).sqrt() < 1e-3 {
                break;
            }
        }
        assert!(dot(&w, &w).sqrt() < 1e-3);
    }

    #[test]
    fn ill_conditioned_quadratic_uses_secant_steps() {
        let f = |w: &[f64]| 0.5 * (w[0] * w[0] + 50.0 * w[1] * w[1]) + 0.1 * w[0] * w[1];
        let gf = |w: &[f64]| vec![w[0] + 0.1 * w[1], 50.0 * w[1] + 0.1 * w[0]];
        let mut w = vec![3.0, -2.0];
        let mut st = OssState::with_line_search(2, 0.01, LineSearch::default());
        let mut secant = 0;
        for _ in 0..300 {
            let (next, out) = oss_step(&w, f(&w), &gf(&w), &mut st, f).unwrap();
            assert!(out.loss_after <= out.loss_before);
            secant += (out.direction == Direction::Secant) as usize;
            w = next;
        }
        assert!(secant > 0);
        assert!(f(&w) < 1e-10, "{}", f(&w));
    }

    #[test]
    fn non_finite_loss_is_divergence() {
        let mut st = OssState::new(1);
        let r = oss_step(&[1.0], 1.0, &[1.0], &mut st, |_| f64::NAN);
        assert!(matches!(r, Err(Error::TrainingDiverged(_))));
    }

    #[test]
    fn rejected_step_leaves_parameters() {
        let mut st = OssState::with_line_search(
            1,
            1.0,
            LineSearch {
                max_halvings: 3,
                ..LineSearch::default()
            },
        );
        // Gradient points the wrong way, so no trial can decrease the loss.
        let (p, out) = oss_step(&[0.0], 0.0, &[-1.0], &mut st, |w| w[0] * w[0] + 1.0).unwrap();
        assert!(!out.accepted);
        assert_eq!(p, vec![0.0]);
        assert!(st.reset);
        assert_eq!(st.step_size, 0.5);
    }
}
