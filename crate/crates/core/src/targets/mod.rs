//! Unnormalized target densities with log-density and gradient.
//!
//! Every target reports its dimension and, where the construction makes it
//! available, the true log normalizing constant (used by tests and bias
//! reports). Targets are immutable after construction and shared across
//! worker threads behind an `Arc`.

mod lgcp;

pub use lgcp::{lgcp_target, parse_observations, synthetic_lgcp_observations, LgcpConfig, LgcpTarget};

use std::sync::Arc;

use crate::math::{logsumexp, normal_log_pdf};
use crate::{Error, Result};

/// An unnormalized log-density μ̂ with gradient.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    /// log μ̂(x).
    fn log_unnorm(&self, x: &[f64]) -> f64;
    /// ∇ log μ̂(x) written into `out`.
    fn grad_log_into(&self, x: &[f64], out: &mut [f64]);
    /// log Z when known (for testing and bias reports).
    fn true_log_z(&self) -> Option<f64> {
        None
    }

    fn grad_log(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_log_into(x, &mut out);
        out
    }
}

/// Shared handle used throughout the crate.
pub type TargetHandle = Arc<dyn Target>;

/// Diagonal-covariance Gaussian, optionally scaled: log μ̂ = s + log N(x; m, diag(v)).
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: Vec<f64>,
    cov_diag: Vec<f64>,
    scale_log_z: f64,
}

/// `log_unnorm(x) = scale_log_z + log N(x; mean, diag(cov_diag))`, so the
/// normalizing constant is exactly `exp(scale_log_z)`.
pub fn gaussian_target(mean: Vec<f64>, cov_diag: Vec<f64>, scale_log_z: f64) -> Result<GaussianTarget> {
    if mean.len() != cov_diag.len() || mean.is_empty() {
        return Err(Error::config("gaussian target: mean/cov_diag length mismatch"));
    }
    if cov_diag.iter().any(|v| *v <= 0.0) {
        return Err(Error::config("gaussian target: cov_diag must be positive"));
    }
    Ok(GaussianTarget {
        mean,
        cov_diag,
        scale_log_z,
    })
}

impl GaussianTarget {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov_diag(&self) -> &[f64] {
        &self.cov_diag
    }
}

impl Target for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn name(&self) -> &str {
        "gaussian"
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        let mut acc = self.scale_log_z;
        for i in 0..x.len() {
            acc += normal_log_pdf(x[i], self.mean[i], self.cov_diag[i]);
        }
        acc
    }

    fn grad_log_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = (self.mean[i] - x[i]) / self.cov_diag[i];
        }
    }

    fn true_log_z(&self) -> Option<f64> {
        Some(self.scale_log_z)
    }
}

/// Nine equal-weight Gaussians on the grid {−5, 0, 5}², each with variance
/// 0.3; constructed normalized so log Z = 0.
#[derive(Debug, Clone)]
pub struct MogTarget {
    centers: Vec<[f64; 2]>,
    variance: f64,
    log_weight: f64,
}

pub fn mog_target() -> MogTarget {
    let mut centers = Vec::with_capacity(9);
    for cx in [-5.0, 0.0, 5.0] {
        for cy in [-5.0, 0.0, 5.0] {
            centers.push([cx, cy]);
        }
    }
    MogTarget {
        centers,
        variance: 0.3,
        log_weight: -(9f64.ln()),
    }
}

impl MogTarget {
    fn component_logs(&self, x: &[f64]) -> Vec<f64> {
        self.centers
            .iter()
            .map(|c| {
                self.log_weight
                    + normal_log_pdf(x[0], c[0], self.variance)
                    + normal_log_pdf(x[1], c[1], self.variance)
            })
            .collect()
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }
}

impl Target for MogTarget {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "mog"
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        logsumexp(&self.component_logs(x))
    }

    fn grad_log_into(&self, x: &[f64], out: &mut [f64]) {
        let logs = self.component_logs(x);
        let lse = logsumexp(&logs);
        out[0] = 0.0;
        out[1] = 0.0;
        for (c, l) in self.centers.iter().zip(&logs) {
            let r = (l - lse).exp();
            out[0] += r * (c[0] - x[0]) / self.variance;
            out[1] += r * (c[1] - x[1]) / self.variance;
        }
    }

    fn true_log_z(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// x₀ ~ N(0, 9), x_{1..9} | x₀ ~ N(0, e^{x₀} I); normalized, log Z = 0.
#[derive(Debug, Clone)]
pub struct FunnelTarget {
    dim: usize,
    neck_variance: f64,
}

pub fn funnel_target() -> FunnelTarget {
    FunnelTarget {
        dim: 10,
        neck_variance: 9.0,
    }
}

impl Target for FunnelTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &str {
        "funnel"
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        let v = x[0].exp();
        let mut acc = normal_log_pdf(x[0], 0.0, self.neck_variance);
        for xi in &x[1..] {
            acc += normal_log_pdf(*xi, 0.0, v);
        }
        acc
    }

    fn grad_log_into(&self, x: &[f64], out: &mut [f64]) {
        let v = x[0].exp();
        let k = (self.dim - 1) as f64;
        // d/dx₀ of Σᵢ log N(xᵢ; 0, e^{x₀}) = Σᵢ (xᵢ²/(2v) − ½).
        let mut acc = -x[0] / self.neck_variance - 0.5 * k;
        for (i, xi) in x[1..].iter().enumerate() {
            acc += xi * xi / (2.0 * v);
            out[i + 1] = -xi / v;
        }
        out[0] = acc;
    }

    fn true_log_z(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Concentric rings: log μ̂ = −min((‖x‖−1)², (‖x‖−3)², (‖x‖−5)²)/100.
#[derive(Debug, Clone)]
pub struct RingsTarget {
    radii: [f64; 3],
    sharpness: f64,
}

pub fn rings_target() -> RingsTarget {
    RingsTarget {
        radii: [1.0, 3.0, 5.0],
        sharpness: 100.0,
    }
}

impl RingsTarget {
    fn nearest_radius(&self, r: f64) -> f64 {
        let mut best = self.radii[0];
        let mut best_d = (r - best) * (r - best);
        for &c in &self.radii[1..] {
            let d = (r - c) * (r - c);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }
}

impl Target for RingsTarget {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "rings"
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        let r = crate::math::norm(x);
        let c = self.nearest_radius(r);
        -(r - c) * (r - c) / self.sharpness
    }

    fn grad_log_into(&self, x: &[f64], out: &mut [f64]) {
        let r = crate::math::norm(x);
        if r == 0.0 {
            // Radial direction undefined at the origin; zero is the
            // symmetric selection from the subgradient set.
            out.fill(0.0);
            return;
        }
        let c = self.nearest_radius(r);
        let scale = -2.0 * (r - c) / (self.sharpness * r);
        for i in 0..x.len() {
            out[i] = scale * x[i];
        }
    }
}

/// Targets exercised by the registry-wide invariant tests.
pub fn benchmark_targets() -> Vec<TargetHandle> {
    vec![
        Arc::new(gaussian_target(vec![1.0], vec![0.25], 0.0).unwrap()),
        Arc::new(gaussian_target(vec![0.5, -0.25], vec![1.5, 0.5], 2f64.ln()).unwrap()),
        Arc::new(mog_target()),
        Arc::new(funnel_target()),
        Arc::new(rings_target()),
        Arc::new(lgcp_target(4, 1.0 / 33.0, &synthetic_lgcp_observations(4, 1.0 / 33.0, 7)).unwrap()),
    ]
}
