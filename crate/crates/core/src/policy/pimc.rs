//! Monte-Carlo estimates of the value function and optimal control from
//! uncontrolled rollouts.
//!
//! The uncontrolled process is Brownian motion, so a rollout from (t, x) to
//! the horizon is a single Gaussian jump and
//! `φ_t(x) = E[exp(−Ψ̂(x_T))]` can be averaged directly. The optimal control
//! is the short-time ratio estimator
//! `u*(t, x) ≈ E[exp(−Ψ̂(x_T))·Δw] / (Δt·E[exp(−Ψ̂(x_T))])`, where `Δw` is
//! the first increment over `[t, t+Δt]`. Both report delta-method standard
//! errors. Weights inside the ratio are shifted by `exp(Ψ̂(x))`, which
//! cancels in the ratio and keeps the averages in floating range.

use rand_chacha::ChaCha8Rng;

use crate::exec;
use crate::rng::{fill_normal, Stream};
use crate::sde::{terminal_cost, SdeConfig};
use crate::targets::Target;
use crate::{Error, Result};

const CHUNK: usize = 8192;

/// Accumulate `width` running sums over `n` rollouts, chunked so the work
/// parallelizes while the combination order stays fixed.
fn chunked_sums<F>(n: usize, width: usize, stream: Stream, f: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials = exec::map_indexed(n_chunks, |c| {
        let mut rng = stream.substream(c as u64).rng();
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(n);
        let mut acc = vec![0.0; width];
        for _ in lo..hi {
            f(&mut rng, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0; width];
    for p in partials {
        for (t, v) in total.iter_mut().zip(&p) {
            *t += v;
        }
    }
    total
}

/// Monte-Carlo mean of exp(−Ψ̂(x_T)) over uncontrolled rollouts from (t, x);
/// returns (estimate, standard error).
pub fn pi_value_mc(
    target: &dyn Target,
    config: &SdeConfig,
    t: f64,
    x: &[f64],
    n_rollouts: usize,
    stream: Stream,
) -> Result<(f64, f64)> {
    config.validate()?;
    if n_rollouts == 0 {
        return Err(Error::config("pi_value_mc: n_rollouts must be at least 1"));
    }
    if x.len() != config.dim {
        return Err(Error::shape(format!(
            "query point has dim {}, config has {}",
            x.len(),
            config.dim
        )));
    }
    if !(0.0..=config.horizon).contains(&t) {
        return Err(Error::config(format!(
            "query time {t} outside [0, {}]",
            config.horizon
        )));
    }
    let remaining = config.horizon - t;
    let d = x.len();

    let sums = chunked_sums(n_rollouts, 2, stream, |rng, acc| {
        let mut y = vec![0.0; d];
        fill_normal(rng, remaining.max(0.0), &mut y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += xi;
        }
        let w = (-terminal_cost(&y, target, config)).exp();
        acc[0] += w;
        acc[1] += w * w;
    });

    let n = n_rollouts as f64;
    let mean = sums[0] / n;
    let stderr = if n_rollouts < 2 {
        0.0
    } else {
        let var = ((sums[1] - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    };
    Ok((mean, stderr))
}

/// Ratio estimator of the optimal control at (t, x) using the first-step
/// increment over [t, t+Δt]; returns per-coordinate (estimate, standard
/// error).
pub fn pi_control_mc(
    target: &dyn Target,
    config: &SdeConfig,
    t: f64,
    x: &[f64],
    n_rollouts: usize,
    stream: Stream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    if n_rollouts == 0 {
        return Err(Error::config("pi_control_mc: n_rollouts must be at least 1"));
    }
    if x.len() != config.dim {
        return Err(Error::shape(format!(
            "query point has dim {}, config has {}",
            x.len(),
            config.dim
        )));
    }
    let dt = config.dt();
    let remaining = config.horizon - t - dt;
    if t < 0.0 || remaining < -1e-12 {
        return Err(Error::config(format!(
            "query time {t} leaves no room for a step of {dt} before the horizon"
        )));
    }
    let remaining = remaining.max(0.0);
    let d = x.len();
    let shift = terminal_cost(x, target, config);

    // Sums: [Σw, Σw², Σw·dwᵢ, Σ(w·dwᵢ)², Σw²·dwᵢ] with the latter three per
    // coordinate.
    let width = 2 + 3 * d;
    let sums = chunked_sums(n_rollouts, width, stream, |rng, acc| {
        let mut dw = vec![0.0; d];
        fill_normal(rng, dt, &mut dw);
        let mut y = vec![0.0; d];
        fill_normal(rng, remaining, &mut y);
        for i in 0..d {
            y[i] += x[i] + dw[i];
        }
        let w = (shift - terminal_cost(&y, target, config)).exp();
        acc[0] += w;
        acc[1] += w * w;
        for i in 0..d {
            let a = w * dw[i];
            acc[2 + 3 * i] += a;
            acc[2 + 3 * i + 1] += a * a;
            acc[2 + 3 * i + 2] += w * a;
        }
    });

    let n = n_rollouts as f64;
    let b_mean = sums[0] / n;
    if !(b_mean > 0.0) {
        return Err(Error::Estimation(
            "pi_control_mc: denominator estimate is not positive".into(),
        ));
    }
    let sigma_bb = (sums[1] / n - b_mean * b_mean).max(0.0);

    let mut est = vec![0.0; d];
    let mut stderr = vec![0.0; d];
    for i in 0..d {
        let a_mean = sums[2 + 3 * i] / n;
        let sigma_aa = (sums[2 + 3 * i + 1] / n - a_mean * a_mean).max(0.0);
        let sigma_ab = sums[2 + 3 * i + 2] / n - a_mean * b_mean;
        est[i] = a_mean / (dt * b_mean);
        let var_ratio = (sigma_aa / (b_mean * b_mean)
            - 2.0 * a_mean * sigma_ab / b_mean.powi(3)
            + a_mean * a_mean * sigma_bb / b_mean.powi(4))
        .max(0.0);
        stderr[i] = (var_ratio / n).sqrt() / dt;
    }
    Ok((est, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::normal_log_pdf;
    use crate::policy::{Control, Policy};
    use crate::targets::{gaussian_target, Target};
    use approx::assert_relative_eq;

    fn cfg(dim: usize, horizon: f64, steps: usize) -> SdeConfig {
        SdeConfig::new(dim, horizon, steps, 0).unwrap()
    }

    #[test]
    fn constant_integrand_gives_exact_value() {
        // Target equal to the reference terminal law: Ψ̂ ≡ 0.
        let config = cfg(1, 1.0, 100);
        let t = gaussian_target(vec![0.0], vec![1.0], 0.0).unwrap();
        let (est, se) = pi_value_mc(&t, &config, 0.25, &[0.3], 500, Stream::root(1, "v")).unwrap();
        assert_eq!(est, 1.0);
        assert_eq!(se, 0.0);

        // Doubled target: integrand constant at e^{ln 2}.
        let t2 = gaussian_target(vec![0.0], vec![1.0], 2f64.ln()).unwrap();
        let (est2, se2) =
            pi_value_mc(&t2, &config, 0.25, &[0.3], 500, Stream::root(1, "v2")).unwrap();
        assert_relative_eq!(est2, 2.0, epsilon = 1e-12);
        assert_eq!(se2, 0.0);
    }

    #[test]
    fn value_estimate_matches_quadrature() {
        let (m, v, tt) = (1.0, 0.25, 1.0);
        let config = cfg(1, tt, 100);
        let target = gaussian_target(vec![m], vec![v], 0.0).unwrap();
        let (t, x) = (0.0, [0.0]);

        // Quadrature oracle for φ_t(x).
        let s = tt - t;
        let f = |y: f64| {
            (normal_log_pdf(y, x[0], s) + normal_log_pdf(y, m, v) - normal_log_pdf(y, 0.0, tt))
                .exp()
        };
        let (a, b, n) = (-10.0f64, 10.0f64, 8000usize);
        let h = (b - a) / n as f64;
        let mut quad = f(a) + f(b);
        for k in 1..n {
            quad += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
        }
        quad *= h / 3.0;

        let (est, se) =
            pi_value_mc(&target, &config, t, &x, 200_000, Stream::root(2, "vq")).unwrap();
        assert!(
            (est - quad).abs() <= 3.0 * se,
            "estimate {est} ± {se} vs quadrature {quad}"
        );
    }

    #[test]
    fn value_estimator_is_unbiased_over_repetitions() {
        let (m, v, tt) = (1.0, 0.25, 1.0);
        let config = cfg(1, tt, 100);
        let target = gaussian_target(vec![m], vec![v], 0.0).unwrap();
        let oracle = crate::policy::OraclePolicy::new(&[m], &[v], tt).unwrap();
        let truth = oracle.log_phi(0.0, &[0.0]).exp();

        let reps = 100;
        let mut estimates = Vec::with_capacity(reps);
        let mut pooled_var = 0.0;
        for r in 0..reps {
            let (est, se) = pi_value_mc(
                &target,
                &config,
                0.0,
                &[0.0],
                2000,
                Stream::root(3, "unbiased").substream(r as u64),
            )
            .unwrap();
            estimates.push(est);
            pooled_var += se * se;
        }
        let mean = estimates.iter().sum::<f64>() / reps as f64;
        let pooled_se = (pooled_var).sqrt() / reps as f64;
        assert!(
            (mean - truth).abs() <= 3.0 * pooled_se,
            "mean {mean} vs truth {truth} ± {pooled_se}"
        );
    }

    #[test]
    fn zero_terminal_cost_gives_zero_control() {
        let config = cfg(1, 1.0, 100);
        let t = gaussian_target(vec![0.0], vec![1.0], 0.0).unwrap();
        let (est, se) =
            pi_control_mc(&t, &config, 0.2, &[0.4], 100_000, Stream::root(4, "c0")).unwrap();
        assert!(est[0].abs() <= 3.0 * se[0], "{} ± {}", est[0], se[0]);
    }

    #[test]
    fn control_estimate_matches_oracle() {
        let (m, v, tt) = (1.0, 0.25, 1.0);
        let config = cfg(1, tt, 1000);
        let target = gaussian_target(vec![m], vec![v], 0.0).unwrap();
        let policy = Policy::gaussian_oracle(&[m], &[v], tt).unwrap();
        let (t, x) = (0.0, [0.0]);
        let truth = policy.control_vec(t, &x);
        let (est, se) =
            pi_control_mc(&target, &config, t, &x, 1_000_000, Stream::root(5, "cg")).unwrap();
        // The first-step estimator carries an O(Δt) bias on top of the noise.
        let tol = 3.0 * se[0] + 5.0 * config.dt();
        assert!(
            (est[0] - truth[0]).abs() <= tol,
            "estimate {} ± {} vs oracle {}",
            est[0],
            se[0],
            truth[0]
        );
    }

    #[test]
    fn symmetric_bimodal_target_has_zero_control_at_center() {
        struct TwoMode;
        impl Target for TwoMode {
            fn dim(&self) -> usize {
                1
            }
            fn name(&self) -> &str {
                "two-mode"
            }
            fn log_unnorm(&self, x: &[f64]) -> f64 {
                crate::math::logsumexp(&[
                    normal_log_pdf(x[0], -2.0, 0.3),
                    normal_log_pdf(x[0], 2.0, 0.3),
                ])
            }
            fn grad_log_into(&self, _x: &[f64], _out: &mut [f64]) {
                unimplemented!("not needed in this test")
            }
        }
        let config = cfg(1, 1.0, 100);
        let (est, se) =
            pi_control_mc(&TwoMode, &config, 0.0, &[0.0], 400_000, Stream::root(6, "sym")).unwrap();
        assert!(est[0].abs() <= 3.0 * se[0], "{} ± {}", est[0], se[0]);
    }
}
