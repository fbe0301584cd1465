//! Log-Gaussian Cox process posterior on a square grid.
//!
//! A latent field x over the M×M unit-square grid has prior N(μ·1, K) with
//! exponential kernel K(u, v) = σ²·exp(−‖u−v‖₂/(Mβ)); counts are Poisson
//! with intensity α·exp(xᵢ) per cell. The posterior log-density is
//!
//!   log μ̂(x) = −½ (x−μ)ᵀ K⁻¹ (x−μ) + Σᵢ (xᵢ yᵢ − α e^{xᵢ})
//!
//! up to the data-dependent constant. K is Cholesky-factorized once at
//! construction (with diagonal jitter) and the factorization is reused by
//! both the log-density and its gradient.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use rand_distr::{Distribution, Poisson};

use super::Target;
use crate::rng::Stream;
use crate::{Error, Result};

const KERNEL_VARIANCE: f64 = 1.91;
const JITTER: f64 = 1e-6;

/// Grid and prior hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LgcpConfig {
    pub grid_side: usize,
    pub beta: f64,
    /// Marginal variance σ² of the kernel.
    pub kernel_variance: f64,
    /// Prior mean; defaults to log(126) − σ².
    pub mean: f64,
}

impl LgcpConfig {
    pub fn new(grid_side: usize, beta: f64) -> Self {
        LgcpConfig {
            grid_side,
            beta,
            kernel_variance: KERNEL_VARIANCE,
            mean: 126f64.ln() - KERNEL_VARIANCE,
        }
    }

    fn alpha(&self) -> f64 {
        1.0 / (self.grid_side * self.grid_side) as f64
    }
}

pub struct LgcpTarget {
    config: LgcpConfig,
    observations: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    mean: DVector<f64>,
}

fn grid_point(m: usize, idx: usize) -> (f64, f64) {
    let (r, c) = (idx / m, idx % m);
    (
        (r as f64 + 0.5) / m as f64,
        (c as f64 + 0.5) / m as f64,
    )
}

fn kernel_matrix(config: &LgcpConfig) -> DMatrix<f64> {
    let m = config.grid_side;
    let d = m * m;
    let scale = m as f64 * config.beta;
    let mut k = DMatrix::zeros(d, d);
    for i in 0..d {
        let (xi, yi) = grid_point(m, i);
        for j in 0..d {
            let (xj, yj) = grid_point(m, j);
            let dist = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            k[(i, j)] = config.kernel_variance * (-dist / scale).exp();
        }
        k[(i, i)] += JITTER;
    }
    k
}

/// Posterior for counts `observations` (length M², row-major).
pub fn lgcp_target(grid_side: usize, beta: f64, observations: &[u64]) -> Result<LgcpTarget> {
    LgcpTarget::new(LgcpConfig::new(grid_side, beta), observations)
}

impl LgcpTarget {
    pub fn new(config: LgcpConfig, observations: &[u64]) -> Result<Self> {
        if config.grid_side < 2 {
            return Err(Error::config("lgcp: grid_side must be at least 2"));
        }
        if config.beta <= 0.0 {
            return Err(Error::config("lgcp: beta must be positive"));
        }
        let d = config.grid_side * config.grid_side;
        if observations.len() != d {
            return Err(Error::config(format!(
                "lgcp: {} observations for a {0}×{0} grid, wanted {d}",
                observations.len(),
            )));
        }
        let k = kernel_matrix(&config);
        let chol = Cholesky::new(k)
            .ok_or_else(|| Error::Numerical("lgcp kernel matrix is not positive definite".into()))?;
        let mean = DVector::from_element(d, config.mean);
        Ok(LgcpTarget {
            config,
            observations: observations.iter().map(|y| *y as f64).collect(),
            chol,
            mean,
        })
    }

    pub fn config(&self) -> &LgcpConfig {
        &self.config
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }
}

impl Target for LgcpTarget {
    fn dim(&self) -> usize {
        self.config.grid_side * self.config.grid_side
    }

    fn name(&self) -> &str {
        "lgcp"
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        let alpha = self.config.alpha();
        let r = DVector::from_column_slice(x) - &self.mean;
        let w = self.chol.solve(&r);
        let quad = -0.5 * r.dot(&w);
        let mut lik = 0.0;
        for i in 0..x.len() {
            lik += x[i] * self.observations[i] - alpha * x[i].exp();
        }
        quad + lik
    }

    fn grad_log_into(&self, x: &[f64], out: &mut [f64]) {
        let alpha = self.config.alpha();
        let r = DVector::from_column_slice(x) - &self.mean;
        let w = self.chol.solve(&r);
        for i in 0..x.len() {
            out[i] = -w[i] + self.observations[i] - alpha * x[i].exp();
        }
    }
}

/// A seeded draw from the generative model: latent field from the grid
/// prior, then Poisson counts per cell. Used to ship a fixed synthetic
/// observation set.
pub fn synthetic_lgcp_observations(grid_side: usize, beta: f64, seed: u64) -> Vec<u64> {
    let config = LgcpConfig::new(grid_side, beta);
    let k = kernel_matrix(&config);
    let chol = Cholesky::new(k).expect("kernel matrix is positive definite");
    let d = grid_side * grid_side;
    let mut rng = Stream::root(seed, "lgcp-synthetic").rng();
    let z = DVector::from_iterator(d, (0..d).map(|_| crate::rng::standard_normal(&mut rng)));
    let x = chol.l() * z + DVector::from_element(d, config.mean);
    let alpha = config.alpha();
    (0..d)
        .map(|i| {
            let lambda = alpha * x[i].exp();
            Poisson::new(lambda.max(1e-12))
                .map(|p| p.sample(&mut rng) as u64)
                .unwrap_or(0)
        })
        .collect()
}

/// Parse a counts file: one non-negative integer per line, row-major.
pub fn parse_observations(text: &str) -> Result<Vec<u64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<u64>()
                .map_err(|_| Error::config(format!("lgcp observations: bad count on line {}", i + 1)))
        })
        .collect()
}
