//! Reference samplers: Hamiltonian Monte Carlo with a leapfrog integrator,
//! and annealed sequential Monte Carlo with HMC transition kernels and an
//! incremental-weight normalizing-constant estimate.

use rand_chacha::ChaCha8Rng;

use crate::exec;
use crate::math::{logsumexp, norm_sq, normal_log_pdf};
use crate::rng::{standard_normal, Stream};
use crate::targets::Target;
use crate::{Error, Result};

/// HMC kernel settings; the mass matrix is the identity.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HmcConfig {
    pub n_iterations: usize,
    pub leapfrog_steps: usize,
    pub step_size: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            n_iterations: 10,
            leapfrog_steps: 10,
            step_size: 0.1,
        }
    }
}

/// Annealed SMC settings: linear temperatures from 0 to 1 inclusive,
/// multinomial resampling below the ESS threshold, one HMC pass per level.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub n_temperatures: usize,
    pub hmc_per_level: HmcConfig,
    pub resample_threshold: f64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        SmcConfig {
            n_particles: 2000,
            n_temperatures: 10,
            hmc_per_level: HmcConfig::default(),
            resample_threshold: 0.5,
        }
    }
}

/// Standard kick-drift-kick leapfrog on H(x, p) = −log μ̂(x) + ½‖p‖².
pub fn leapfrog(
    target: &dyn Target,
    x: &[f64],
    p: &[f64],
    step_size: f64,
    n_steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    debug_assert!(step_size > 0.0);
    let d = x.len();
    let mut x = x.to_vec();
    let mut p = p.to_vec();
    let mut grad = vec![0.0; d];
    for _ in 0..n_steps {
        target.grad_log_into(&x, &mut grad);
        for i in 0..d {
            p[i] += 0.5 * step_size * grad[i];
        }
        for i in 0..d {
            x[i] += step_size * p[i];
        }
        target.grad_log_into(&x, &mut grad);
        for i in 0..d {
            p[i] += 0.5 * step_size * grad[i];
        }
    }
    (x, p)
}

fn hmc_chain(
    target: &dyn Target,
    config: &HmcConfig,
    init: Vec<f64>,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, usize) {
    let d = init.len();
    let mut x = init;
    let mut log_p = target.log_unnorm(&x);
    let mut accepted = 0;
    for _ in 0..config.n_iterations {
        let p: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let (x_new, p_new) = leapfrog(target, &x, &p, config.step_size, config.leapfrog_steps);
        let finite = x_new.iter().all(|v| v.is_finite()) && p_new.iter().all(|v| v.is_finite());
        let u: f64 = rand::Rng::random(rng);
        if finite {
            let log_p_new = target.log_unnorm(&x_new);
            let log_accept = (log_p_new - 0.5 * norm_sq(&p_new)) - (log_p - 0.5 * norm_sq(&p));
            if u.ln() < log_accept {
                x = x_new;
                log_p = log_p_new;
                accepted += 1;
            }
        }
        // Non-finite proposals are rejected outright (u is still consumed so
        // the draw sequence does not depend on the accept branch).
    }
    (x, accepted)
}

/// Endpoints of independent Metropolis-corrected HMC chains started from
/// N(0, I).
pub struct HmcOutput {
    pub dim: usize,
    /// n×dim terminal states, flat.
    pub samples: Vec<f64>,
    pub accept_rate: f64,
}

impl HmcOutput {
    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n(&self) -> usize {
        self.samples.len() / self.dim
    }
}

pub fn hmc_sample(
    target: &dyn Target,
    config: &HmcConfig,
    n_samples: usize,
    stream: Stream,
) -> HmcOutput {
    let d = target.dim();
    let results = exec::map_indexed(n_samples, |i| {
        let mut rng = stream.substream(i as u64).rng();
        let init: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
        hmc_chain(target, config, init, &mut rng)
    });
    let mut samples = Vec::with_capacity(n_samples * d);
    let mut accepted = 0usize;
    for (x, a) in results {
        samples.extend_from_slice(&x);
        accepted += a;
    }
    HmcOutput {
        dim: d,
        samples,
        accept_rate: accepted as f64 / (n_samples * config.n_iterations) as f64,
    }
}

/// Geometric bridge π_k ∝ N(0,I)^{1−β}·μ̂^β.
struct AnnealedTarget<'a> {
    target: &'a dyn Target,
    beta: f64,
}

/// Base log-density written as a per-coordinate sum so that a Gaussian
/// target built the same way cancels bit-exactly at β = 1.
fn base_log_pdf(x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for xi in x {
        acc += normal_log_pdf(*xi, 0.0, 1.0);
    }
    acc
}

impl Target for AnnealedTarget<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn name(&self) -> &str {
        "annealed"
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        (1.0 - self.beta) * base_log_pdf(x) + self.beta * self.target.log_unnorm(x)
    }

    fn grad_log_into(&self, x: &[f64], out: &mut [f64]) {
        self.target.grad_log_into(x, out);
        for i in 0..x.len() {
            out[i] = (1.0 - self.beta) * (-x[i]) + self.beta * out[i];
        }
    }
}

pub struct SmcOutput {
    pub dim: usize,
    /// Final particle positions, flat.
    pub samples: Vec<f64>,
    pub log_z: f64,
    /// ESS fraction per level, before resampling.
    pub ess_history: Vec<f64>,
}

/// Annealed SMC from N(0, I) to the target along linear temperatures,
/// accumulating log Z from the incremental weights.
pub fn smc_annealed(target: &dyn Target, config: &SmcConfig, stream: Stream) -> Result<SmcOutput> {
    if config.n_particles < 2 || config.n_temperatures < 2 {
        return Err(Error::config("smc: need at least 2 particles and 2 temperatures"));
    }
    if !(0.0..=1.0).contains(&config.resample_threshold) {
        return Err(Error::config("smc: resample_threshold must lie in [0, 1]"));
    }
    let d = target.dim();
    let n = config.n_particles;
    let k_levels = config.n_temperatures;
    let beta = |k: usize| k as f64 / (k_levels - 1) as f64;

    let mut particles: Vec<Vec<f64>> = {
        let init_stream = stream.substream(0);
        exec::map_indexed(n, |i| {
            let mut rng = init_stream.substream(i as u64).rng();
            (0..d).map(|_| standard_normal(&mut rng)).collect()
        })
    };
    let mut log_w = vec![-(n as f64).ln(); n];
    let mut log_z = 0.0;
    let mut ess_history = Vec::with_capacity(k_levels - 1);

    for k in 1..k_levels {
        let (b_prev, b_cur) = (beta(k - 1), beta(k));
        let delta = b_cur - b_prev;

        // Reweight by the incremental ratio π_k/π_{k−1} = (μ̂/base)^Δβ.
        let incs: Vec<f64> = particles
            .iter()
            .map(|x| delta * (target.log_unnorm(x) - base_log_pdf(x)))
            .collect();
        if incs.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::Estimation(
                "smc: all particles have zero density under the next level".into(),
            ));
        }
        let combined: Vec<f64> = log_w.iter().zip(&incs).map(|(w, i)| w + i).collect();
        let norm = logsumexp(&combined);
        log_z += norm;
        for (w, c) in log_w.iter_mut().zip(&combined) {
            *w = c - norm;
        }

        let ess = crate::estimators::ess_fraction_of(&log_w);
        ess_history.push(ess);
        if ess < config.resample_threshold {
            // Multinomial resampling; weights reset to uniform.
            let mut rng = stream.substream(1_000_000 + k as u64).rng();
            let cumulative: Vec<f64> = {
                let mut acc = 0.0;
                log_w
                    .iter()
                    .map(|w| {
                        acc += w.exp();
                        acc
                    })
                    .collect()
            };
            let total = *cumulative.last().unwrap();
            let picks: Vec<usize> = (0..n)
                .map(|_| {
                    let u: f64 = rand::Rng::random_range(&mut rng, 0.0..total);
                    cumulative.partition_point(|c| *c < u).min(n - 1)
                })
                .collect();
            particles = picks.iter().map(|&i| particles[i].clone()).collect();
            log_w.fill(-(n as f64).ln());
        }

        // Move each particle with HMC targeting π_k.
        let annealed = AnnealedTarget {
            target,
            beta: b_cur,
        };
        let move_stream = stream.substream(2_000_000 + k as u64);
        particles = exec::map_indexed(n, |i| {
            let mut rng = move_stream.substream(i as u64).rng();
            hmc_chain(&annealed, &config.hmc_per_level, particles[i].clone(), &mut rng).0
        });
    }

    Ok(SmcOutput {
        dim: d,
        samples: particles.into_iter().flatten().collect(),
        log_z,
        ess_history,
    })
}
