use serde::{Deserialize, Serialize};

/// Layer activation functions used by the two spreading networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Softmax,
    /// Elliott symmetric sigmoid, `z / (1 + |z|)`.
    EllSig,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Softmax => 1,
            Activation::EllSig => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Softmax),
            2 => Some(Activation::EllSig),
            _ => None,
        }
    }

    /// Applies the activation in place to one pre-activation vector.
    pub fn apply_in_place(self, z: &mut [f64]) {
        match self {
            Activation::Linear => {}
            Activation::Softmax => softmax_in_place(z),
            Activation::EllSig => z.iter_mut().for_each(|v| *v = ess_scalar(*v)),
        }
    }
}

/// Numerically stable softmax; subtracts the maximum before exponentiating.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax_first(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

#[inline]
pub fn ess_scalar(z: f64) -> f64 {
    if z.is_infinite() {
        return z.signum();
    }
    z / (1.0 + z.abs())
}

#[inline]
pub fn ess_derivative(z: f64) -> f64 {
    let d = 1.0 + z.abs();
    1.0 / (d * d)
}

pub fn ess(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| ess_scalar(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let out = softmax(&[0.0; 4]);
        for v in out {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_point_values() {
        // e^1/(e^1+e^2) and e^2/(e^1+e^2) evaluated by hand.
        let e1 = 1f64.exp();
        let e2 = 2f64.exp();
        let out = softmax(&[1.0, 2.0]);
        assert!((out[0] - e1 / (e1 + e2)).abs() < 1e-15);
        assert!((out[0] - 0.26894).abs() < 1e-5);
        assert!((out[1] - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn ess_reference_points() {
        assert_eq!(ess_scalar(0.0), 0.0);
        assert_eq!(ess_scalar(1.0), 0.5);
        assert_eq!(ess_scalar(-1.0), -0.5);
        assert!(ess_scalar(1e300) <= 1.0 && ess_scalar(1e300) > 0.999);
        assert!(ess_scalar(-1e300) >= -1.0);
        assert_eq!(ess_scalar(f64::INFINITY), 1.0);
    }

    #[test]
    fn ess_derivative_matches_central_difference() {
        let h = 1e-6;
        for &z in &[-7.5, -1.3, -0.2, 0.4, 1.0, 3.7, 40.0] {
            let fd = (ess_scalar(z + h) - ess_scalar(z - h)) / (2.0 * h);
            let an = ess_derivative(z);
            assert!(((fd - an) / an).abs() <= 1e-6, "z={z} fd={fd} an={an}");
        }
    }

    proptest! {
        #[test]
        fn softmax_is_simplex_and_keeps_argmax(z in prop::collection::vec(-50.0f64..50.0, 1..40), c in -100.0f64..100.0) {
            let p = softmax(&z);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
            let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
            prop_assert_eq!(argmax(&p), argmax(&z));
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn ess_is_odd_bounded_monotone(a in -1e300f64..1e300, b in -1e3f64..1e3) {
            prop_assert!(ess_scalar(a).abs() <= 1.0);
            prop_assert_eq!(ess_scalar(-a), -ess_scalar(a));
            let (lo, hi) = if b < b + 1.0 { (b, b + 1.0) } else { (b + 1.0, b) };
            prop_assert!(ess_scalar(lo) < ess_scalar(hi));
        }
    }
}
