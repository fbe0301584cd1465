//! Euler–Maruyama simulation of the controlled diffusion
//! `dx = u(t, x) dt + dw` from `x₀ = 0`, with the two running costs the
//! rest of the crate needs: the control energy `∫ ½‖u‖² dt` and the
//! Girsanov log-density ratio `∫ (uᵀdw + ½‖u‖² dt)`.
//!
//! With zero drift and identity diffusion the uncontrolled terminal state is
//! exactly N(0, T·I), which gives the reference terminal density a closed
//! form and makes the terminal cost `Ψ̂(x) = log μ⁰(x) − log μ̂(x)` cheap to
//! evaluate.

use crate::exec;
use crate::math::{isotropic_normal_log_pdf, norm_sq};
use crate::policy::Control;
use crate::rng::{fill_normal, Stream};
use crate::targets::Target;
use crate::{Error, Result};

/// Discretization of one simulation problem.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SdeConfig {
    pub dim: usize,
    /// Horizon T.
    pub horizon: f64,
    /// Number of uniform Euler steps N; Δt = T/N.
    pub steps: usize,
    pub seed: u64,
}

impl SdeConfig {
    pub fn new(dim: usize, horizon: f64, steps: usize, seed: u64) -> Result<Self> {
        let cfg = SdeConfig {
            dim,
            horizon,
            steps,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("sde: dim must be positive"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::config("sde: horizon must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::config("sde: steps must be at least 1"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// One discretized path with its cost accumulators.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    /// (N+1)·dim states, row-major in time.
    states: Vec<f64>,
    /// N·dim Brownian increments.
    noises: Vec<f64>,
    /// Σ ½‖u‖²Δt.
    pub cost_energy: f64,
    /// Σ (uᵀΔw + ½‖u‖²Δt).
    pub cost_girsanov: f64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.noises.len() / self.dim
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn noise(&self, k: usize) -> &[f64] {
        &self.noises[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.n_steps())
    }
}

/// Terminal state plus costs, for large batches where storing whole paths
/// would be wasteful.
#[derive(Debug, Clone)]
pub struct TerminalSample {
    pub state: Vec<f64>,
    pub cost_energy: f64,
    pub cost_girsanov: f64,
}

/// log μ⁰(x) = log N(x; 0, T·I), the uncontrolled terminal density.
pub fn reference_terminal_log_pdf(x: &[f64], config: &SdeConfig) -> f64 {
    isotropic_normal_log_pdf(x, config.horizon)
}

/// Ψ̂(x) = log μ⁰(x) − log μ̂(x).
pub fn terminal_cost(x: &[f64], target: &dyn Target, config: &SdeConfig) -> f64 {
    reference_terminal_log_pdf(x, config) - target.log_unnorm(x)
}

/// One Euler update; shared by every simulation path in the crate so that
/// recorded, terminal-only and taped rollouts agree bit for bit.
#[inline]
pub(crate) fn euler_step(
    x: &mut [f64],
    u: &[f64],
    dw: &[f64],
    dt: f64,
    cost_energy: &mut f64,
    cost_girsanov: &mut f64,
) {
    let half_dt = 0.5 * dt;
    let sumsq = norm_sq(u);
    let mut cross = 0.0;
    for i in 0..x.len() {
        cross += u[i] * dw[i];
        x[i] = x[i] + u[i] * dt + dw[i];
    }
    *cost_energy += half_dt * sumsq;
    *cost_girsanov += cross + half_dt * sumsq;
}

fn check_policy_dim(policy: &dyn Control, config: &SdeConfig) -> Result<()> {
    if policy.dim() != config.dim {
        return Err(Error::config(format!(
            "policy dimension {} does not match sde dimension {}",
            policy.dim(),
            config.dim
        )));
    }
    Ok(())
}

/// Simulate with externally supplied increments (`steps × dim`, flat).
pub fn simulate_with_noises(
    policy: &dyn Control,
    config: &SdeConfig,
    noises: &[f64],
) -> Result<Trajectory> {
    config.validate()?;
    check_policy_dim(policy, config)?;
    let (d, n) = (config.dim, config.steps);
    if noises.len() != d * n {
        return Err(Error::shape(format!(
            "expected {}×{} noise values, got {}",
            n,
            d,
            noises.len()
        )));
    }
    let dt = config.dt();
    let mut states = vec![0.0; (n + 1) * d];
    let mut u = vec![0.0; d];
    let (mut energy, mut girsanov) = (0.0, 0.0);
    for k in 0..n {
        let t = k as f64 * dt;
        let (head, tail) = states.split_at_mut((k + 1) * d);
        let x_prev = &head[k * d..];
        let x_next = &mut tail[..d];
        x_next.copy_from_slice(x_prev);
        policy.control_into(t, x_prev, &mut u);
        euler_step(x_next, &u, &noises[k * d..(k + 1) * d], dt, &mut energy, &mut girsanov);
        if !x_next.iter().all(|v| v.is_finite()) || !energy.is_finite() {
            return Err(Error::Simulation {
                step: k,
                detail: format!(
                    "non-finite state (max |u| = {:.3e})",
                    u.iter().fold(0.0f64, |a, v| a.max(v.abs()))
                ),
            });
        }
    }
    Ok(Trajectory {
        dim: d,
        states,
        noises: noises.to_vec(),
        cost_energy: energy,
        cost_girsanov: girsanov,
    })
}

/// Simulate one trajectory, drawing increments from `stream`.
pub fn simulate(policy: &dyn Control, config: &SdeConfig, stream: Stream) -> Result<Trajectory> {
    let mut noises = vec![0.0; config.steps * config.dim];
    let mut rng = stream.rng();
    let dt = config.dt();
    for k in 0..config.steps {
        fill_normal(&mut rng, dt, &mut noises[k * config.dim..(k + 1) * config.dim]);
    }
    simulate_with_noises(policy, config, &noises)
}

/// Terminal-only variant of [`simulate`]; same draws, same arithmetic.
pub fn simulate_terminal(
    policy: &dyn Control,
    config: &SdeConfig,
    stream: Stream,
) -> Result<TerminalSample> {
    config.validate()?;
    check_policy_dim(policy, config)?;
    let (d, n) = (config.dim, config.steps);
    let dt = config.dt();
    let mut rng = stream.rng();
    let mut x = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let (mut energy, mut girsanov) = (0.0, 0.0);
    for k in 0..n {
        let t = k as f64 * dt;
        policy.control_into(t, &x, &mut u);
        fill_normal(&mut rng, dt, &mut dw);
        euler_step(&mut x, &u, &dw, dt, &mut energy, &mut girsanov);
        if !x.iter().all(|v| v.is_finite()) || !energy.is_finite() {
            return Err(Error::Simulation {
                step: k,
                detail: format!(
                    "non-finite state (max |u| = {:.3e})",
                    u.iter().fold(0.0f64, |a, v| a.max(v.abs()))
                ),
            });
        }
    }
    Ok(TerminalSample {
        state: x,
        cost_energy: energy,
        cost_girsanov: girsanov,
    })
}

fn tag_index<T>(res: Result<T>, i: usize) -> Result<T> {
    res.map_err(|e| match e {
        Error::Simulation { step, detail } => Error::Simulation {
            step,
            detail: format!("trajectory {i}: {detail}"),
        },
        other => other,
    })
}

/// `batch` independent trajectories; trajectory `i` is driven by
/// `stream.substream(i)`, so results do not depend on execution order.
pub fn simulate_batch(
    policy: &dyn Control,
    config: &SdeConfig,
    batch: usize,
    stream: Stream,
) -> Result<Vec<Trajectory>> {
    exec::try_map_indexed(batch, |i| {
        tag_index(simulate(policy, config, stream.substream(i as u64)), i)
    })
}

/// Sequential twin of [`simulate_batch`]; bit-identical output.
pub fn simulate_batch_serial(
    policy: &dyn Control,
    config: &SdeConfig,
    batch: usize,
    stream: Stream,
) -> Result<Vec<Trajectory>> {
    exec::try_map_indexed_serial(batch, |i| {
        tag_index(simulate(policy, config, stream.substream(i as u64)), i)
    })
}

/// Batch of terminal samples, one substream per trajectory.
pub fn simulate_terminal_batch(
    policy: &dyn Control,
    config: &SdeConfig,
    batch: usize,
    stream: Stream,
) -> Result<Vec<TerminalSample>> {
    exec::try_map_indexed(batch, |i| {
        tag_index(simulate_terminal(policy, config, stream.substream(i as u64)), i)
    })
}
