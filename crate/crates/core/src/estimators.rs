//! Weighted sampling and normalizing-constant estimation.
//!
//! Running the controlled SDE under any policy and weighting each terminal
//! state by `exp(−Ŝ)`, where `Ŝ = ∫(uᵀdw + ½‖u‖²dt) + Ψ̂(x_T)` is the
//! path-wise log density ratio to the optimally-controlled process, yields
//! importance-weighted samples of the target. Two log-Z estimators follow:
//! the mean of `−Ŝ` (a lower bound, tight only at the optimal policy) and
//! the log of the mean of `exp(−Ŝ)` (unbiased on the exponential scale).
//! All weight arithmetic stays in log space.

use std::io::Write;

use crate::math::{logsumexp, mean_stderr};
use crate::policy::Control;
use crate::rng::Stream;
use crate::sde::{simulate_terminal_batch, terminal_cost, SdeConfig};
use crate::targets::Target;
use crate::Result;

/// Terminal states with unnormalized log importance weights.
#[derive(Debug, Clone)]
pub struct WeightedSamples {
    dim: usize,
    points: Vec<f64>,
    log_w: Vec<f64>,
    pub seed: u64,
    pub config: SdeConfig,
}

impl WeightedSamples {
    pub fn from_parts(dim: usize, points: Vec<f64>, log_w: Vec<f64>, config: SdeConfig) -> Result<Self> {
        if points.len() != dim * log_w.len() || log_w.is_empty() {
            return Err(crate::Error::shape(format!(
                "{} points of dim {dim} with {} weights",
                points.len() / dim.max(1),
                log_w.len()
            )));
        }
        Ok(WeightedSamples {
            dim,
            points,
            log_w,
            seed: config.seed,
            config,
        })
    }

    pub fn n(&self) -> usize {
        self.log_w.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn log_w(&self) -> &[f64] {
        &self.log_w
    }

    /// Normalized weights (summing to one), for downstream consumers.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let lse = logsumexp(&self.log_w);
        self.log_w.iter().map(|lw| (lw - lse).exp()).collect()
    }
}

/// Simulate `n` trajectories and attach `log w = −(Girsanov cost + Ψ̂(x_T))`
/// to each terminal state.
pub fn sample_weighted(
    policy: &dyn Control,
    target: &dyn Target,
    config: &SdeConfig,
    n: usize,
    stream: Stream,
) -> Result<WeightedSamples> {
    if n == 0 {
        return Err(crate::Error::config("sample_weighted: n must be at least 1"));
    }
    let samples = simulate_terminal_batch(policy, config, n, stream)?;
    let mut points = Vec::with_capacity(n * config.dim);
    let mut log_w = Vec::with_capacity(n);
    for s in &samples {
        log_w.push(-(s.cost_girsanov + terminal_cost(&s.state, target, config)));
        points.extend_from_slice(&s.state);
    }
    WeightedSamples::from_parts(config.dim, points, log_w, config.clone())
}

/// Lower-bound estimate of log Z: mean of the log weights, with the standard
/// error of the mean.
pub fn log_z_elbo(ws: &WeightedSamples) -> (f64, f64) {
    mean_stderr(ws.log_w())
}

/// Unbiased-on-exp-scale estimate of log Z: log-mean-exp of the log weights.
/// The standard error comes from a first-order delta method on the weight
/// distribution and is approximate.
pub fn log_z_is(ws: &WeightedSamples) -> (f64, f64) {
    let n = ws.n() as f64;
    let lse = logsumexp(ws.log_w());
    let estimate = lse - n.ln();
    if ws.n() < 2 {
        return (estimate, 0.0);
    }
    // sd(w)/(√n·mean(w)) computed on shifted weights so the ratio is exact.
    let m = ws.log_w().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = ws.log_w().iter().map(|lw| (lw - m).exp()).collect();
    let (mean, _) = mean_stderr(&shifted);
    let var = shifted.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0);
    (estimate, var.sqrt() / (n.sqrt() * mean))
}

/// Effective sample size as a fraction of n: (Σw)²/(n·Σw²), via log-sum-exp.
pub fn ess_fraction(ws: &WeightedSamples) -> f64 {
    ess_fraction_of(ws.log_w())
}

pub fn ess_fraction_of(log_w: &[f64]) -> f64 {
    let n = log_w.len() as f64;
    let lse1 = logsumexp(log_w);
    let doubled: Vec<f64> = log_w.iter().map(|lw| 2.0 * lw).collect();
    let lse2 = logsumexp(&doubled);
    (2.0 * lse1 - lse2 - n.ln()).exp()
}

/// Self-normalized expectation Σ wᵢ f(xᵢ)/Σ wᵢ with a delta-method standard
/// error.
pub fn self_normalized_expectation<F>(ws: &WeightedSamples, test_fn: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let w = ws.normalized_weights();
    let fx: Vec<f64> = (0..ws.n()).map(|i| test_fn(ws.point(i))).collect();
    let estimate: f64 = w.iter().zip(&fx).map(|(wi, fi)| wi * fi).sum();
    let var: f64 = w
        .iter()
        .zip(&fx)
        .map(|(wi, fi)| wi * wi * (fi - estimate) * (fi - estimate))
        .sum();
    (estimate, var.sqrt())
}

/// Summary record attached to a sampling run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub log_z_elbo: f64,
    pub log_z_elbo_stderr: f64,
    pub log_z_is: f64,
    pub log_z_is_stderr: f64,
    pub ess_fraction: f64,
    pub n: usize,
    pub seed: u64,
    pub config_hash: String,
}

pub fn metrics(ws: &WeightedSamples, config_hash: impl Into<String>) -> Metrics {
    let (elbo, elbo_se) = log_z_elbo(ws);
    let (is, is_se) = log_z_is(ws);
    Metrics {
        log_z_elbo: elbo,
        log_z_elbo_stderr: elbo_se,
        log_z_is: is,
        log_z_is_stderr: is_se,
        ess_fraction: ess_fraction(ws),
        n: ws.n(),
        seed: ws.seed,
        config_hash: config_hash.into(),
    }
}

/// Decimal float with 17 significant digits; lossless for f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with header `x_1,…,x_d,log_w`.
pub fn write_samples_csv<W: Write>(ws: &WeightedSamples, out: &mut W) -> Result<()> {
    let header: Vec<String> = (1..=ws.dim()).map(|i| format!("x_{i}")).collect();
    writeln!(out, "{},log_w", header.join(","))?;
    for i in 0..ws.n() {
        for v in ws.point(i) {
            write!(out, "{},", format_f64(*v))?;
        }
        writeln!(out, "{}", format_f64(ws.log_w()[i]))?;
    }
    Ok(())
}
