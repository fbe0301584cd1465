//! End-to-end policy training: gradient descent on the control cost with
//! backprop through the unrolled Euler discretization.
//!
//! The per-trajectory loss is `Σ ½‖u‖²Δt + Ψ̂(x_T)`; the Girsanov cross term
//! `uᵀΔw` has zero mean under the controlled process and is excluded from
//! the training objective. Noise increments enter the tape as constants, so
//! the gradient is the exact pathwise (reparameterized) gradient of the
//! discrete objective. Fresh noises are drawn every batch; the terminal-cost
//! gradient flows into the policy through x_T.

use crate::exec;
use crate::nn::{clip_vector_in_place, AdamState, Tape};
use crate::policy::{Control as _, Policy};
use crate::rng::{fill_normal, Stream};
use crate::sde::{simulate_terminal_batch, terminal_cost, SdeConfig};
use crate::targets::{Target, TargetHandle};
use crate::{Error, Result};

/// Training hyperparameters around an SDE discretization.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip_norm: f64,
    pub sde: SdeConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Paper-scale defaults: 30 epochs of 50 batches × 300 trajectories,
    /// Adam at 5e-3, global gradient clip at 1.
    pub fn new(sde: SdeConfig) -> Self {
        TrainConfig {
            epochs: 30,
            batches_per_epoch: 50,
            batch_size: 300,
            lr: 5e-3,
            grad_clip_norm: 1.0,
            seed: sde.seed,
            sde,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sde.validate()?;
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::config("train: epochs, batches and batch size must be positive"));
        }
        if !(self.lr > 0.0) || !(self.grad_clip_norm > 0.0) {
            return Err(Error::config("train: lr and grad_clip_norm must be positive"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.batches_per_epoch
    }
}

/// Per-step history entry: batch means of the loss and its two components.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub terminal: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub adam: AdamState,
    pub step: usize,
    pub loss_history: Vec<LossRecord>,
}

/// Reason a run stopped before completing all steps.
#[derive(Debug, Clone)]
pub struct TrainAbort {
    pub step: usize,
    pub detail: String,
}

/// Outcome of a training run; on abort the policy still carries the last
/// parameters that produced a finite loss.
pub struct TrainRun {
    pub policy: Policy,
    pub state: TrainState,
    pub abort: Option<TrainAbort>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryLoss {
    pub loss: f64,
    pub terminal: f64,
    pub energy: f64,
}

/// Batch means plus per-trajectory components.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub terminal: f64,
    pub energy: f64,
    pub per_trajectory: Vec<TrajectoryLoss>,
}

fn summarize(per_trajectory: Vec<TrajectoryLoss>) -> BatchLoss {
    let n = per_trajectory.len() as f64;
    let (mut l, mut t, mut e) = (0.0, 0.0, 0.0);
    for tl in &per_trajectory {
        l += tl.loss;
        t += tl.terminal;
        e += tl.energy;
    }
    BatchLoss {
        loss: l / n,
        terminal: t / n,
        energy: e / n,
        per_trajectory,
    }
}

/// Mean of `cost_energy + Ψ̂(x_T)` over a fresh batch (no gradients).
pub fn loss_batch(
    policy: &Policy,
    target: &dyn Target,
    config: &SdeConfig,
    batch: usize,
    stream: Stream,
) -> Result<BatchLoss> {
    if batch == 0 {
        return Err(Error::config("loss_batch: batch must be at least 1"));
    }
    let samples = simulate_terminal_batch(policy, config, batch, stream)?;
    let per: Vec<TrajectoryLoss> = samples
        .iter()
        .map(|s| {
            let terminal = terminal_cost(&s.state, target, config);
            TrajectoryLoss {
                loss: s.cost_energy + terminal,
                terminal,
                energy: s.cost_energy,
            }
        })
        .collect();
    let bl = summarize(per);
    if !bl.loss.is_finite() {
        return Err(Error::Train {
            step: 0,
            detail: "non-finite batch loss".into(),
        });
    }
    Ok(bl)
}

/// One trajectory's taped rollout: loss components plus the parameter
/// gradient. Draws the same noise sequence as the plain simulation paths.
fn rollout_loss_grad(
    policy: &Policy,
    target: &dyn Target,
    config: &SdeConfig,
    stream: Stream,
) -> Result<(TrajectoryLoss, Vec<f64>)> {
    let params = policy
        .params()
        .ok_or_else(|| Error::config("policy has no trainable parameters"))?;
    let d = config.dim;
    let dt = config.dt();
    let half_dt = 0.5 * dt;
    let mut rng = stream.rng();
    let mut dw = vec![0.0; d];

    let mut tape = Tape::new(params);
    let mut x = tape.input(vec![0.0; d]);
    let mut energy = tape.input_scalar(0.0);
    let mut max_u = 0.0f64;
    let mut max_x = 0.0f64;
    for k in 0..config.steps {
        let t = k as f64 * dt;
        let u = policy.control_tape(&mut tape, t, x)?;
        let e_k = tape.scaled_sq_norm(u, half_dt);
        energy = tape.add(energy, e_k);
        fill_normal(&mut rng, dt, &mut dw);
        max_u = max_u.max(tape.value(u).iter().fold(0.0f64, |a, v| a.max(v.abs())));
        x = tape.euler_step(x, u, dt, &dw);
        let xv = tape.value(x);
        max_x = max_x.max(xv.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        if !xv.iter().all(|v| v.is_finite()) {
            return Err(Error::Train {
                step: k,
                detail: format!("non-finite state (max ‖u‖∞ {max_u:.3e}, max ‖x‖∞ {max_x:.3e})"),
            });
        }
    }

    let x_term = tape.value(x).to_vec();
    let psi = terminal_cost(&x_term, target, config);
    let mut psi_grad = target.grad_log(&x_term);
    for i in 0..d {
        psi_grad[i] = -x_term[i] / config.horizon - psi_grad[i];
    }
    let psi_node = tape.external_scalar(x, psi, psi_grad);
    let loss_node = tape.add(energy, psi_node);
    let loss = tape.value(loss_node)[0];
    let energy_val = tape.value(energy)[0];
    if !loss.is_finite() {
        return Err(Error::Train {
            step: config.steps,
            detail: format!(
                "non-finite loss (max ‖u‖∞ {max_u:.3e}, max ‖x‖∞ {max_x:.3e})"
            ),
        });
    }
    let grads = tape.backward(loss_node, &[1.0])?;
    Ok((
        TrajectoryLoss {
            loss,
            terminal: psi,
            energy: energy_val,
        },
        grads.params,
    ))
}

const GRAD_CHUNK: usize = 8;

/// Batch loss plus the mean parameter gradient. Work fans out over fixed
/// chunks of trajectories and partial sums combine in index order, so the
/// result is independent of thread scheduling.
pub fn loss_grad_batch(
    policy: &Policy,
    target: &dyn Target,
    config: &SdeConfig,
    batch: usize,
    stream: Stream,
    serial: bool,
) -> Result<(BatchLoss, Vec<f64>)> {
    if batch == 0 {
        return Err(Error::config("loss_grad_batch: batch must be at least 1"));
    }
    let n_params = policy
        .params()
        .ok_or_else(|| Error::config("policy has no trainable parameters"))?
        .len();
    let n_chunks = batch.div_ceil(GRAD_CHUNK);
    let work = |c: usize| -> Result<(Vec<TrajectoryLoss>, Vec<f64>)> {
        let lo = c * GRAD_CHUNK;
        let hi = ((c + 1) * GRAD_CHUNK).min(batch);
        let mut grads = vec![0.0; n_params];
        let mut losses = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            let (tl, g) = rollout_loss_grad(policy, target, config, stream.substream(i as u64))?;
            for (acc, v) in grads.iter_mut().zip(&g) {
                *acc += v;
            }
            losses.push(tl);
        }
        Ok((losses, grads))
    };
    let chunks = if serial {
        exec::try_map_indexed_serial(n_chunks, work)?
    } else {
        exec::try_map_indexed(n_chunks, work)?
    };

    let mut per = Vec::with_capacity(batch);
    let mut grads = vec![0.0; n_params];
    for (losses, g) in chunks {
        per.extend(losses);
        for (acc, v) in grads.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    let scale = 1.0 / batch as f64;
    for g in &mut grads {
        *g *= scale;
    }
    Ok((summarize(per), grads))
}

/// Run the full training schedule, invoking `on_epoch` after each epoch.
pub fn train_with<F>(
    target: TargetHandle,
    cfg: &TrainConfig,
    mut policy: Policy,
    mut on_epoch: F,
) -> Result<TrainRun>
where
    F: FnMut(usize, &Policy, &TrainState),
{
    cfg.validate()?;
    let n_params = policy
        .params()
        .ok_or_else(|| Error::config("train: policy has no trainable parameters"))?
        .len();
    if policy.dim() != cfg.sde.dim || target.dim() != cfg.sde.dim {
        return Err(Error::config(format!(
            "train: dims disagree (policy {}, target {}, sde {})",
            policy.dim(),
            target.dim(),
            cfg.sde.dim
        )));
    }
    let mut state = TrainState {
        adam: AdamState::new(n_params, cfg.lr),
        step: 0,
        loss_history: Vec::with_capacity(cfg.total_steps()),
    };
    let stream = Stream::root(cfg.seed, "train");

    for epoch in 0..cfg.epochs {
        for _ in 0..cfg.batches_per_epoch {
            let step_stream = stream.substream(state.step as u64);
            let outcome = loss_grad_batch(&policy, target.as_ref(), &cfg.sde, cfg.batch_size, step_stream, false);
            let at_step = state.step;
            let (bl, mut grads) = match outcome {
                Ok(v) => v,
                Err(Error::Train { step, detail }) | Err(Error::Simulation { step, detail }) => {
                    return Ok(TrainRun {
                        policy,
                        state,
                        abort: Some(TrainAbort {
                            step: at_step,
                            detail: format!("rollout step {step}: {detail}"),
                        }),
                    });
                }
                Err(e) => return Err(e),
            };
            if !bl.loss.is_finite() {
                return Ok(TrainRun {
                    policy,
                    state,
                    abort: Some(TrainAbort {
                        step: at_step,
                        detail: "non-finite batch loss".into(),
                    }),
                });
            }
            clip_vector_in_place(&mut grads, cfg.grad_clip_norm);
            let params = policy.params_mut().expect("trainable policy");
            if let Err(e) = state.adam.step(params, &grads) {
                return Ok(TrainRun {
                    policy,
                    state,
                    abort: Some(TrainAbort {
                        step: at_step,
                        detail: e.to_string(),
                    }),
                });
            }
            state.loss_history.push(LossRecord {
                step: state.step,
                loss: bl.loss,
                terminal: bl.terminal,
                energy: bl.energy,
            });
            state.step += 1;
        }
        on_epoch(epoch, &policy, &state);
    }
    Ok(TrainRun {
        policy,
        state,
        abort: None,
    })
}

/// As [`train_with`] with no epoch hook.
pub fn train(target: TargetHandle, cfg: &TrainConfig, policy: Policy) -> Result<TrainRun> {
    train_with(target, cfg, policy, |_, _, _| {})
}

/// Monte-Carlo estimate of the divergence between the policy's path law and
/// the optimally-controlled one: mean of `Girsanov cost + Ψ̂(x_T)` plus the
/// true log Z. Non-negative up to noise, zero only at the optimum.
pub fn evaluate_kl_gap(
    policy: &Policy,
    target: &dyn Target,
    config: &SdeConfig,
    n: usize,
    stream: Stream,
) -> Result<(f64, f64)> {
    let log_z = target
        .true_log_z()
        .ok_or_else(|| Error::config("evaluate_kl_gap needs a target with known log Z"))?;
    let samples = simulate_terminal_batch(policy, config, n, stream)?;
    let values: Vec<f64> = samples
        .iter()
        .map(|s| s.cost_girsanov + terminal_cost(&s.state, target, config) + log_z)
        .collect();
    let (mean, se) = crate::math::mean_stderr(&values);
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gaussian_kl_1d;
    use crate::nn::Activation;
    use crate::policy::{PolicyArch, DEFAULT_SCORE_CLIP};
    use crate::targets::gaussian_target;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn tiny_arch() -> PolicyArch {
        PolicyArch {
            n_freq: 1,
            t_hidden: 1,
            x_hidden: 1,
            merge_hidden: 2,
            activation: Activation::Tanh,
            per_coord_scale: false,
        }
    }

    fn small_arch() -> PolicyArch {
        PolicyArch {
            n_freq: 8,
            t_hidden: 32,
            x_hidden: 32,
            merge_hidden: 32,
            activation: Activation::Tanh,
            per_coord_scale: false,
        }
    }

    fn randomize(policy: &mut Policy, seed: u64, scale: f64) {
        let mut rng = Stream::root(seed, "randomize").rng();
        for v in policy.params_mut().unwrap().flat_mut() {
            *v = rand::Rng::random_range(&mut rng, -scale..scale);
        }
    }

    #[test]
    fn zero_policy_on_reference_target_has_zero_loss() {
        let config = SdeConfig::new(1, 1.0, 20, 1).unwrap();
        let target = gaussian_target(vec![0.0], vec![1.0], 0.0).unwrap();
        let bl = loss_batch(&Policy::zero(1), &target, &config, 16, Stream::root(1, "l")).unwrap();
        for tl in &bl.per_trajectory {
            assert_eq!(tl.loss, 0.0);
        }
    }

    #[test]
    fn scaled_reference_target_gives_constant_loss() {
        let config = SdeConfig::new(1, 1.0, 20, 2).unwrap();
        let c = 2.5f64;
        let target = gaussian_target(vec![0.0], vec![1.0], c.ln()).unwrap();
        let bl = loss_batch(&Policy::zero(1), &target, &config, 16, Stream::root(2, "l")).unwrap();
        for tl in &bl.per_trajectory {
            assert_eq!(tl.loss, -c.ln());
        }
    }

    #[test]
    fn zero_policy_expected_loss_is_the_gaussian_kl() {
        let config = SdeConfig::new(1, 1.0, 100, 3).unwrap();
        let target = gaussian_target(vec![1.0], vec![0.25], 0.0).unwrap();
        let bl =
            loss_batch(&Policy::zero(1), &target, &config, 20_000, Stream::root(3, "kl")).unwrap();
        let losses: Vec<f64> = bl.per_trajectory.iter().map(|t| t.loss).collect();
        let (mean, se) = crate::math::mean_stderr(&losses);
        let kl = gaussian_kl_1d(0.0, 1.0, 1.0, 0.25);
        assert!((mean - kl).abs() <= 3.0 * se, "loss {mean} ± {se} vs KL {kl}");
    }

    #[test]
    fn taped_loss_equals_plain_loss_bitwise() {
        let config = SdeConfig::new(2, 1.0, 17, 4).unwrap();
        let target = Arc::new(crate::targets::mog_target());
        let mut policy = Policy::grad(target.clone(), 1.0, tiny_arch(), DEFAULT_SCORE_CLIP, 4);
        randomize(&mut policy, 5, 0.3);
        let stream = Stream::root(6, "eq");
        let plain = loss_batch(&policy, target.as_ref(), &config, 6, stream).unwrap();
        let (taped, _) = loss_grad_batch(&policy, target.as_ref(), &config, 6, stream, true).unwrap();
        for (a, b) in plain.per_trajectory.iter().zip(&taped.per_trajectory) {
            assert_eq!(a.loss, b.loss);
            assert_eq!(a.energy, b.energy);
        }
        assert_eq!(plain.loss, taped.loss);
    }

    #[test]
    fn serial_and_parallel_gradients_are_bit_identical() {
        let config = SdeConfig::new(1, 1.0, 10, 5).unwrap();
        let target = Arc::new(gaussian_target(vec![0.5], vec![0.5], 0.0).unwrap());
        let mut policy = Policy::nn(1, 1.0, tiny_arch(), 7);
        randomize(&mut policy, 8, 0.3);
        let stream = Stream::root(9, "sp");
        let (bl_s, g_s) = loss_grad_batch(&policy, target.as_ref(), &config, 37, stream, true).unwrap();
        let (bl_p, g_p) = loss_grad_batch(&policy, target.as_ref(), &config, 37, stream, false).unwrap();
        assert_eq!(bl_s.loss, bl_p.loss);
        assert_eq!(g_s, g_p);
    }

    #[test]
    fn bptt_gradient_matches_finite_differences() {
        // Tiny instance: d = 1, N = 3, batch = 2, two dozen parameters.
        let config = SdeConfig::new(1, 1.0, 3, 6).unwrap();
        let target = Arc::new(gaussian_target(vec![1.0], vec![0.5], 0.0).unwrap());
        let mut policy = Policy::nn(1, 1.0, tiny_arch(), 10);
        randomize(&mut policy, 11, 0.4);
        let stream = Stream::root(12, "fd");

        let (_, grads) = loss_grad_batch(&policy, target.as_ref(), &config, 2, stream, true).unwrap();
        let n_params = grads.len();
        assert!(n_params >= 20 && n_params <= 30, "tiny net has {n_params} params");

        let h = 1e-5;
        for p in 0..n_params {
            let mut plus = policy.clone();
            plus.params_mut().unwrap().flat_mut()[p] += h;
            let mut minus = policy.clone();
            minus.params_mut().unwrap().flat_mut()[p] -= h;
            let lp = loss_batch(&plus, target.as_ref(), &config, 2, stream).unwrap().loss;
            let lm = loss_batch(&minus, target.as_ref(), &config, 2, stream).unwrap().loss;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grads[p] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel <= 1e-4, "param {p}: bptt {} vs fd {fd}", grads[p]);
        }
    }

    #[test]
    fn grad_policy_bptt_matches_fd_on_single_step() {
        // With N = 1 the score is only evaluated at the fixed origin, so the
        // pathwise gradient is exact for the Grad policy too.
        let config = SdeConfig::new(1, 1.0, 1, 7).unwrap();
        let target = Arc::new(gaussian_target(vec![0.8], vec![0.4], 0.0).unwrap());
        let mut policy = Policy::grad(target.clone(), 1.0, tiny_arch(), DEFAULT_SCORE_CLIP, 13);
        randomize(&mut policy, 14, 0.4);
        let stream = Stream::root(15, "fd1");
        let (_, grads) = loss_grad_batch(&policy, target.as_ref(), &config, 4, stream, true).unwrap();
        let h = 1e-5;
        for p in 0..grads.len() {
            let mut plus = policy.clone();
            plus.params_mut().unwrap().flat_mut()[p] += h;
            let mut minus = policy.clone();
            minus.params_mut().unwrap().flat_mut()[p] -= h;
            let lp = loss_batch(&plus, target.as_ref(), &config, 4, stream).unwrap().loss;
            let lm = loss_batch(&minus, target.as_ref(), &config, 4, stream).unwrap().loss;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grads[p] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel <= 1e-4, "param {p}: bptt {} vs fd {fd}", grads[p]);
        }
    }

    #[test]
    fn training_an_already_optimal_policy_is_a_fixed_point() {
        // Target equals the reference terminal law; the zero-initialized
        // policy is optimal and gradients vanish identically.
        let sde = SdeConfig::new(1, 1.0, 10, 8).unwrap();
        let target = Arc::new(gaussian_target(vec![0.0], vec![1.0], 0.0).unwrap());
        let mut cfg = TrainConfig::new(sde);
        cfg.epochs = 2;
        cfg.batches_per_epoch = 3;
        cfg.batch_size = 8;
        let policy = Policy::nn(1, 1.0, tiny_arch(), 16);
        let before = policy.params().unwrap().flat().to_vec();
        let run = train(target, &cfg, policy).unwrap();
        assert!(run.abort.is_none());
        for rec in &run.state.loss_history {
            assert_eq!(rec.loss, 0.0);
        }
        let after = run.policy.params().unwrap().flat();
        for (a, b) in before.iter().zip(after) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn trains_one_dimensional_gaussian_to_near_zero_loss() {
        let sde = SdeConfig::new(1, 1.0, 100, 9).unwrap();
        let target = Arc::new(gaussian_target(vec![1.0], vec![0.25], 0.0).unwrap());
        let mut cfg = TrainConfig::new(sde);
        cfg.epochs = 5;
        cfg.batches_per_epoch = 60;
        cfg.batch_size = 128;
        let policy = Policy::grad(target.clone(), 1.0, small_arch(), DEFAULT_SCORE_CLIP, 17);
        let run = train(target.clone(), &cfg, policy).unwrap();
        assert!(run.abort.is_none());
        let tail: Vec<f64> = run
            .state
            .loss_history
            .iter()
            .rev()
            .take(20)
            .map(|r| r.loss)
            .collect();
        let final_loss = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(
            final_loss <= 0.02,
            "final loss {final_loss} should approach the optimum 0"
        );

        // Loss decreases from the first epoch to the last.
        let first: f64 = run.state.loss_history[..cfg.batches_per_epoch]
            .iter()
            .map(|r| r.loss)
            .sum::<f64>()
            / cfg.batches_per_epoch as f64;
        assert!(final_loss < first);

        // Thm-4 style bound: the training loss upper-bounds −log Z.
        let bl = loss_batch(&run.policy, target.as_ref(), &cfg.sde, 4000, Stream::root(18, "b"))
            .unwrap();
        let losses: Vec<f64> = bl.per_trajectory.iter().map(|t| t.loss).collect();
        let (mean, se) = crate::math::mean_stderr(&losses);
        assert!(mean >= -3.0 * se);
    }

    #[test]
    fn loss_history_is_reproducible() {
        let sde = SdeConfig::new(1, 1.0, 10, 10).unwrap();
        let target = Arc::new(gaussian_target(vec![0.6], vec![0.8], 0.0).unwrap());
        let mut cfg = TrainConfig::new(sde);
        cfg.epochs = 1;
        cfg.batches_per_epoch = 6;
        cfg.batch_size = 12;
        let run_a = train(target.clone(), &cfg, Policy::nn(1, 1.0, tiny_arch(), 20)).unwrap();
        let run_b = train(target, &cfg, Policy::nn(1, 1.0, tiny_arch(), 20)).unwrap();
        assert_eq!(run_a.state.loss_history.len(), run_b.state.loss_history.len());
        for (a, b) in run_a.state.loss_history.iter().zip(&run_b.state.loss_history) {
            assert_eq!(a.loss, b.loss);
            assert_eq!(a.terminal, b.terminal);
            assert_eq!(a.energy, b.energy);
        }
    }

    #[test]
    fn kl_gap_reference_behaviour() {
        let config = SdeConfig::new(1, 1.0, 400, 11).unwrap();
        let target = gaussian_target(vec![1.0], vec![0.25], 0.0).unwrap();

        // Optimal oracle: gap ≈ 0 up to noise and O(Δt) discretization bias.
        let oracle = Policy::gaussian_oracle(&[1.0], &[0.25], 1.0).unwrap();
        let (gap, se) = evaluate_kl_gap(&oracle, &target, &config, 4000, Stream::root(19, "g")).unwrap();
        assert!(gap.abs() <= 3.0 * se + 0.05, "oracle gap {gap} ± {se}");

        // Zero policy: gap equals the Gaussian KL.
        let (gap0, se0) =
            evaluate_kl_gap(&Policy::zero(1), &target, &config, 20_000, Stream::root(20, "g0")).unwrap();
        let kl = gaussian_kl_1d(0.0, 1.0, 1.0, 0.25);
        assert!((gap0 - kl).abs() <= 3.0 * se0, "gap {gap0} ± {se0} vs {kl}");
        assert!(gap0 >= -3.0 * se0);

        // Missing log Z is a configuration error.
        let rings = crate::targets::rings_target();
        let cfg2 = SdeConfig::new(2, 1.0, 10, 0).unwrap();
        assert!(evaluate_kl_gap(&Policy::zero(2), &rings, &cfg2, 10, Stream::root(0, "x")).is_err());
    }
}
