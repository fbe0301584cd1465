//! Adam with bias correction, plus norm clipping.

use super::ParameterStore;
use crate::{Error, Result};

/// Optimizer state; `m` and `v` run parallel to the flat parameter vector.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Default betas 0.9/0.999 and eps 1e-8.
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update with bias correction; increments the step count.
    pub fn step(&mut self, params: &mut ParameterStore, grads: &[f64]) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam: {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Train {
                step: self.t as usize + 1,
                detail: format!("non-finite gradient at component {i}"),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let flat = params.flat_mut();
        for i in 0..grads.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            flat[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// `v` unchanged when ‖v‖₂ ≤ max_norm, else rescaled onto the ball.
pub fn clip_vector(v: &[f64], max_norm: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    clip_vector_in_place(&mut out, max_norm);
    out
}

pub fn clip_vector_in_place(v: &mut [f64], max_norm: f64) {
    debug_assert!(max_norm > 0.0);
    let n = crate::math::norm(v);
    if n > max_norm {
        let s = max_norm / n;
        for x in v.iter_mut() {
            *x *= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamLayout;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn store_with(vals: &[f64]) -> ParameterStore {
        let mut b = ParamLayout::builder();
        b.push("p", vals.len(), 1);
        let mut s = ParameterStore::zeros(b.finish());
        s.flat_mut().copy_from_slice(vals);
        s
    }

    #[test]
    fn zero_gradient_leaves_params_fixed() {
        let mut store = store_with(&[0.3, -1.5]);
        let mut adam = AdamState::new(2, 0.1);
        for _ in 0..5 {
            adam.step(&mut store, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(store.flat(), &[0.3, -1.5]);
        assert_eq!(adam.t, 5);
    }

    #[test]
    fn first_step_matches_bias_corrected_formula() {
        // g = 1, lr = 0.1: m̂ = v̂ = 1, so the update is −0.1·(1/(1+1e-8)).
        let mut store = store_with(&[0.0]);
        let mut adam = AdamState::new(1, 0.1);
        adam.step(&mut store, &[1.0]).unwrap();
        assert_relative_eq!(store.flat()[0], -0.1 / (1.0 + 1e-8), epsilon = 1e-15);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn constant_gradient_matches_scalar_reimplementation() {
        let mut store = store_with(&[0.5]);
        let mut adam = AdamState::new(1, 0.05);

        // Independent scalar Adam.
        let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
        let (mut p, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=3u32 {
            adam.step(&mut store, &[1.0]).unwrap();
            m = b1 * m + (1.0 - b1) * 1.0;
            v = b2 * v + (1.0 - b2) * 1.0;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            p -= lr * mh / (vh.sqrt() + eps);
            assert_relative_eq!(store.flat()[0], p, epsilon = 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_is_a_training_error() {
        let mut store = store_with(&[0.0]);
        let mut adam = AdamState::new(1, 0.1);
        let err = adam.step(&mut store, &[f64::NAN]).unwrap_err();
        assert!(matches!(err, crate::Error::Train { step: 1, .. }));
    }

    #[test]
    fn clip_reference_cases() {
        assert_eq!(clip_vector(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        let clipped = clip_vector(&[3.0, 4.0], 1.0);
        assert_relative_eq!(clipped[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(clipped[1], 0.8, epsilon = 1e-15);
        assert_eq!(clip_vector(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
    }

    proptest! {
        #[test]
        fn clip_bounds_norm_and_preserves_direction(
            v in proptest::collection::vec(-100.0f64..100.0, 1..6),
            max_norm in 0.01f64..10.0,
        ) {
            let c = clip_vector(&v, max_norm);
            prop_assert!(crate::math::norm(&c) <= max_norm * (1.0 + 1e-12));
            let n = crate::math::norm(&v);
            if n > 0.0 {
                // Direction preserved: c is a non-negative multiple of v.
                let scale = if n > max_norm { max_norm / n } else { 1.0 };
                for (ci, vi) in c.iter().zip(&v) {
                    prop_assert!((ci - scale * vi).abs() <= 1e-12 * vi.abs().max(1.0));
                }
            }
        }
    }
}
