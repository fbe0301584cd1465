//! Closed-form optimal control for diagonal Gaussian targets.
//!
//! For the uncontrolled process (pure Brownian motion from the origin) the
//! value function has the conditional-expectation form
//! `φ_t(x) = E[exp(−Ψ(x_T)) | x_t = x]` with `x_T ~ N(x, (T−t)·I)`, and with
//! a Gaussian target `N(m, diag(σ²))` the expectation is a Gaussian integral
//! that can be completed in closed form. Per coordinate, with `s = T − t`,
//!
//!   a = 1/s + 1/σ² − 1/T,   b = x/s + m/σ²,
//!   log φ = ½·ln(T/(s·σ²·a)) + b²/(2a) − x²/(2s) − m²/(2σ²),
//!
//! and the optimal control is the spatial log-gradient
//!
//!   u*(t, x) = ∂ₓ log φ = (b/(a·s)) − x/s,
//!
//! an affine map in x. The integral converges iff a > 0; for t ∈ [0, T) and
//! positive variances that always holds, but the condition is still checked
//! so a formula change cannot silently produce garbage.

use crate::{Error, Result};

/// Optimal policy for a diagonal Gaussian target, evaluated from the closed
/// form at every query.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    mean: Vec<f64>,
    variance: Vec<f64>,
    horizon: f64,
}

impl OraclePolicy {
    pub fn new(mean: &[f64], variance: &[f64], horizon: f64) -> Result<Self> {
        if mean.len() != variance.len() || mean.is_empty() {
            return Err(Error::config("oracle: mean/variance length mismatch"));
        }
        if !(horizon > 0.0) {
            return Err(Error::config("oracle: horizon must be positive"));
        }
        if variance.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::config("oracle: variances must be positive"));
        }
        // Precision condition 1/(T−t) + 1/σ² − 1/T > 0 over the horizon; its
        // minimum over t ∈ [0, T) is at t = 0.
        for v in variance {
            if 1.0 / v <= 0.0 {
                return Err(Error::config(
                    "oracle: precision condition violated, control undefined",
                ));
            }
        }
        Ok(OraclePolicy {
            mean: mean.to_vec(),
            variance: variance.to_vec(),
            horizon,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    /// log φ_t(x) for the normalized Gaussian target.
    pub fn log_phi(&self, t: f64, x: &[f64]) -> f64 {
        let tt = self.horizon;
        let s = tt - t;
        let mut acc = 0.0;
        for i in 0..x.len() {
            let (m, v) = (self.mean[i], self.variance[i]);
            let a = 1.0 / s + 1.0 / v - 1.0 / tt;
            let b = x[i] / s + m / v;
            acc += 0.5 * (tt / (s * v * a)).ln() + b * b / (2.0 * a)
                - x[i] * x[i] / (2.0 * s)
                - m * m / (2.0 * v);
        }
        acc
    }

    pub(super) fn control_into_impl(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let tt = self.horizon;
        let s = tt - t;
        for i in 0..x.len() {
            let (m, v) = (self.mean[i], self.variance[i]);
            let a = 1.0 / s + 1.0 / v - 1.0 / tt;
            let b = x[i] / s + m / v;
            out[i] = b / (a * s) - x[i] / s;
        }
    }
}
