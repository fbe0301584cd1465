//! Control policies u(t, x).
//!
//! Four kinds: the zero control, a time-conditioned MLP, a score-informed
//! MLP (`u = NN₁(t,x) − NN₂(t)·clip(∇log μ̂(x))`), and a closed-form oracle
//! for diagonal Gaussian targets. Network policies are trainable through the
//! tape in [`crate::nn`]; the others are fixed.

mod oracle;
mod pimc;

pub use oracle::OraclePolicy;
pub use pimc::{pi_control_mc, pi_value_mc};

use std::path::Path;
use std::sync::Arc;

use crate::nn::{
    fourier_time_features, Activation, LayoutBuilder, Mlp, NodeId, ParamLayout, ParameterStore,
    Tape,
};
use crate::rng::Stream;
use crate::targets::TargetHandle;
use crate::{Error, Result};

/// A feedback control: deterministic in (t, x) and safe to evaluate from
/// many threads at once.
pub trait Control: Send + Sync {
    fn dim(&self) -> usize;
    /// Write u(t, x) into `out`. Callers guarantee 0 ≤ t < horizon and
    /// matching lengths.
    fn control_into(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn control_vec(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.control_into(t, x, &mut out);
        out
    }
}

/// Architecture hyperparameters for the network policies. The drift net
/// runs a Fourier-featurized time branch and a state branch (two layers
/// each) into a three-layer merge head; the score-scale net reuses the time
/// branch shape.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolicyArch {
    pub n_freq: usize,
    pub t_hidden: usize,
    pub x_hidden: usize,
    pub merge_hidden: usize,
    pub activation: Activation,
    /// One scale per coordinate instead of a single broadcast scalar.
    pub per_coord_scale: bool,
}

impl Default for PolicyArch {
    fn default() -> Self {
        PolicyArch {
            n_freq: 64,
            t_hidden: 64,
            x_hidden: 64,
            merge_hidden: 64,
            activation: Activation::Tanh,
            per_coord_scale: false,
        }
    }
}

/// Trainable drift network, optionally with the score-scale head.
#[derive(Debug, Clone)]
pub struct NetPolicy {
    dim: usize,
    horizon: f64,
    arch: PolicyArch,
    t_net: Mlp,
    x_net: Mlp,
    merge: Mlp,
    scale: Option<Mlp>,
    params: ParameterStore,
}

impl NetPolicy {
    fn layout(dim: usize, arch: &PolicyArch, with_scale: bool) -> (Arc<ParamLayout>, Mlp, Mlp, Mlp, Option<Mlp>) {
        let mut b: LayoutBuilder = ParamLayout::builder();
        let act = arch.activation;
        let t_in = 2 * arch.n_freq;
        let t_net = Mlp::reserve(&mut b, "t", &[t_in, arch.t_hidden, arch.t_hidden], act);
        let x_net = Mlp::reserve(&mut b, "x", &[dim, arch.x_hidden, arch.x_hidden], act);
        let merge = Mlp::reserve(
            &mut b,
            "m",
            &[arch.t_hidden + arch.x_hidden, arch.merge_hidden, arch.merge_hidden, dim],
            act,
        );
        let scale = with_scale.then(|| {
            let out = if arch.per_coord_scale { dim } else { 1 };
            Mlp::reserve(&mut b, "s", &[t_in, arch.t_hidden, arch.t_hidden, out], act)
        });
        (b.finish(), t_net, x_net, merge, scale)
    }

    /// Fresh network with the last layers zeroed, so the initial policy is
    /// the zero control.
    fn init(dim: usize, horizon: f64, arch: PolicyArch, with_scale: bool, seed: u64) -> Self {
        let (layout, t_net, x_net, merge, scale) = Self::layout(dim, &arch, with_scale);
        let mut params = ParameterStore::zeros(layout);
        let mut rng = Stream::root(seed, "policy-init").rng();
        t_net.init(&mut params, &mut rng, false);
        x_net.init(&mut params, &mut rng, false);
        merge.init(&mut params, &mut rng, true);
        if let Some(s) = &scale {
            s.init(&mut params, &mut rng, true);
        }
        NetPolicy {
            dim,
            horizon,
            arch,
            t_net,
            x_net,
            merge,
            scale,
            params,
        }
    }

    fn from_flat(dim: usize, horizon: f64, arch: PolicyArch, with_scale: bool, flat: Vec<f64>) -> Result<Self> {
        let (layout, t_net, x_net, merge, scale) = Self::layout(dim, &arch, with_scale);
        let params = ParameterStore::from_flat(layout, flat)?;
        Ok(NetPolicy {
            dim,
            horizon,
            arch,
            t_net,
            x_net,
            merge,
            scale,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn arch(&self) -> &PolicyArch {
        &self.arch
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    /// NN₁(t, x) without a tape.
    fn drift_plain(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let tf = fourier_time_features(t, self.horizon, self.arch.n_freq);
        let tfeat = self.t_net.forward_plain(&self.params, &tf);
        let xfeat = self.x_net.forward_plain(&self.params, x);
        let mut h = tfeat;
        h.extend_from_slice(&xfeat);
        self.merge.forward_plain(&self.params, &h)
    }

    /// NN₂(t) without a tape.
    fn scale_plain(&self, t: f64) -> Vec<f64> {
        let tf = fourier_time_features(t, self.horizon, self.arch.n_freq);
        self.scale
            .as_ref()
            .expect("scale head present")
            .forward_plain(&self.params, &tf)
    }

    /// Taped NN₁; `x` is an existing tape node.
    fn drift_tape(&self, tape: &mut Tape<'_>, t: f64, x: NodeId) -> NodeId {
        let tf = fourier_time_features(t, self.horizon, self.arch.n_freq);
        let tf_id = tape.input(tf);
        let tfeat = self.t_net.forward_tape(tape, tf_id);
        let xfeat = self.x_net.forward_tape(tape, x);
        let h = tape.concat(tfeat, xfeat);
        self.merge.forward_tape(tape, h)
    }

    fn scale_tape(&self, tape: &mut Tape<'_>, t: f64) -> NodeId {
        let tf = fourier_time_features(t, self.horizon, self.arch.n_freq);
        let tf_id = tape.input(tf);
        self.scale
            .as_ref()
            .expect("scale head present")
            .forward_tape(tape, tf_id)
    }
}

/// Policy variants.
#[derive(Clone)]
pub enum Policy {
    Zero { dim: usize },
    Nn(NetPolicy),
    Grad {
        net: NetPolicy,
        target: TargetHandle,
        grad_clip: f64,
    },
    GaussianOracle(OraclePolicy),
}

/// Default clip applied to the target score inside the Grad policy.
pub const DEFAULT_SCORE_CLIP: f64 = 1e2;

impl Policy {
    pub fn zero(dim: usize) -> Self {
        Policy::Zero { dim }
    }

    pub fn nn(dim: usize, horizon: f64, arch: PolicyArch, seed: u64) -> Self {
        Policy::Nn(NetPolicy::init(dim, horizon, arch, false, seed))
    }

    pub fn grad(target: TargetHandle, horizon: f64, arch: PolicyArch, grad_clip: f64, seed: u64) -> Self {
        let net = NetPolicy::init(target.dim(), horizon, arch, true, seed);
        Policy::Grad {
            net,
            target,
            grad_clip,
        }
    }

    /// Closed-form optimal control for a diagonal Gaussian target; see
    /// [`OraclePolicy`].
    pub fn gaussian_oracle(mean: &[f64], variance: &[f64], horizon: f64) -> Result<Self> {
        Ok(Policy::GaussianOracle(OraclePolicy::new(mean, variance, horizon)?))
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Zero { .. } => PolicyKind::Zero,
            Policy::Nn(_) => PolicyKind::Nn,
            Policy::Grad { .. } => PolicyKind::Grad,
            Policy::GaussianOracle(_) => PolicyKind::GaussianOracle,
        }
    }

    pub fn horizon(&self) -> Option<f64> {
        match self {
            Policy::Zero { .. } => None,
            Policy::Nn(n) => Some(n.horizon),
            Policy::Grad { net, .. } => Some(net.horizon),
            Policy::GaussianOracle(o) => Some(o.horizon()),
        }
    }

    /// Trainable parameters, when the policy has any.
    pub fn params(&self) -> Option<&ParameterStore> {
        match self {
            Policy::Nn(n) => Some(&n.params),
            Policy::Grad { net, .. } => Some(&net.params),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<&mut ParameterStore> {
        match self {
            Policy::Nn(n) => Some(&mut n.params),
            Policy::Grad { net, .. } => Some(&mut net.params),
            _ => None,
        }
    }

    /// Checked evaluation; rejects t outside the policy's time domain.
    pub fn control(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "state length {} != policy dim {}",
                x.len(),
                self.dim()
            )));
        }
        if let Some(horizon) = self.horizon() {
            let upper_open = matches!(self, Policy::GaussianOracle(_));
            let ok = t >= 0.0 && if upper_open { t < horizon } else { t <= horizon };
            if !ok {
                return Err(Error::config(format!(
                    "control time {t} outside [0, {horizon}{}",
                    if upper_open { ")" } else { "]" }
                )));
            }
        } else if t < 0.0 {
            return Err(Error::config(format!("control time {t} is negative")));
        }
        Ok(self.control_vec(t, x))
    }

    /// Record u(t, x) on a tape (network policies only). The target score
    /// inside the Grad policy enters as a constant input: its dependence on
    /// x is not differentiated, matching the pathwise gradient the trainer
    /// uses.
    pub fn control_tape(&self, tape: &mut Tape<'_>, t: f64, x: NodeId) -> Result<NodeId> {
        match self {
            Policy::Nn(net) => Ok(net.drift_tape(tape, t, x)),
            Policy::Grad {
                net,
                target,
                grad_clip,
            } => {
                let nn1 = net.drift_tape(tape, t, x);
                let score = crate::nn::clip_vector(&target.grad_log(tape.value(x)), *grad_clip);
                let scale = net.scale_tape(tape, t);
                let term = if net.arch.per_coord_scale {
                    tape.elem_mul_const(scale, &score)
                } else {
                    tape.broadcast_mul(scale, &score)
                };
                Ok(tape.sub(nn1, term))
            }
            _ => Err(Error::config("policy has no trainable network")),
        }
    }

    pub fn to_checkpoint(&self, steps: usize) -> Checkpoint {
        match self {
            Policy::Zero { dim } => Checkpoint {
                version: CHECKPOINT_VERSION,
                kind: PolicyKind::Zero,
                dim: *dim,
                horizon: 0.0,
                steps,
                grad_clip: None,
                arch: None,
                oracle_mean: None,
                oracle_variance: None,
                params: Vec::new(),
            },
            Policy::Nn(net) => Checkpoint {
                version: CHECKPOINT_VERSION,
                kind: PolicyKind::Nn,
                dim: net.dim,
                horizon: net.horizon,
                steps,
                grad_clip: None,
                arch: Some(net.arch.clone()),
                oracle_mean: None,
                oracle_variance: None,
                params: net.params.flat().to_vec(),
            },
            Policy::Grad {
                net, grad_clip, ..
            } => Checkpoint {
                version: CHECKPOINT_VERSION,
                kind: PolicyKind::Grad,
                dim: net.dim,
                horizon: net.horizon,
                steps,
                grad_clip: Some(*grad_clip),
                arch: Some(net.arch.clone()),
                oracle_mean: None,
                oracle_variance: None,
                params: net.params.flat().to_vec(),
            },
            Policy::GaussianOracle(o) => Checkpoint {
                version: CHECKPOINT_VERSION,
                kind: PolicyKind::GaussianOracle,
                dim: o.dim(),
                horizon: o.horizon(),
                steps,
                grad_clip: None,
                arch: None,
                oracle_mean: Some(o.mean().to_vec()),
                oracle_variance: Some(o.variance().to_vec()),
                params: Vec::new(),
            },
        }
    }

    /// Rebuild a policy from a checkpoint. Grad policies need the target
    /// back (only the clip value is stored).
    pub fn from_checkpoint(ck: &Checkpoint, target: Option<TargetHandle>) -> Result<Policy> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        match ck.kind {
            PolicyKind::Zero => Ok(Policy::zero(ck.dim)),
            PolicyKind::Nn => {
                let arch = ck.arch.clone().ok_or_else(|| Error::config("checkpoint missing arch"))?;
                Ok(Policy::Nn(NetPolicy::from_flat(
                    ck.dim,
                    ck.horizon,
                    arch,
                    false,
                    ck.params.clone(),
                )?))
            }
            PolicyKind::Grad => {
                let arch = ck.arch.clone().ok_or_else(|| Error::config("checkpoint missing arch"))?;
                let target = target.ok_or_else(|| {
                    Error::config("grad policy checkpoint needs a target to rebuild the score term")
                })?;
                if target.dim() != ck.dim {
                    return Err(Error::config(format!(
                        "checkpoint dim {} != target dim {}",
                        ck.dim,
                        target.dim()
                    )));
                }
                let net = NetPolicy::from_flat(ck.dim, ck.horizon, arch, true, ck.params.clone())?;
                Ok(Policy::Grad {
                    net,
                    target,
                    grad_clip: ck.grad_clip.unwrap_or(DEFAULT_SCORE_CLIP),
                })
            }
            PolicyKind::GaussianOracle => {
                let mean = ck.oracle_mean.clone().ok_or_else(|| Error::config("checkpoint missing oracle mean"))?;
                let var = ck
                    .oracle_variance
                    .clone()
                    .ok_or_else(|| Error::config("checkpoint missing oracle variance"))?;
                Policy::gaussian_oracle(&mean, &var, ck.horizon)
            }
        }
    }
}

impl Control for Policy {
    fn dim(&self) -> usize {
        match self {
            Policy::Zero { dim } => *dim,
            Policy::Nn(n) => n.dim,
            Policy::Grad { net, .. } => net.dim,
            Policy::GaussianOracle(o) => o.dim(),
        }
    }

    fn control_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Policy::Zero { .. } => out.fill(0.0),
            Policy::Nn(net) => out.copy_from_slice(&net.drift_plain(t, x)),
            Policy::Grad {
                net,
                target,
                grad_clip,
            } => {
                let nn1 = net.drift_plain(t, x);
                let score = crate::nn::clip_vector(&target.grad_log(x), *grad_clip);
                let scale = net.scale_plain(t);
                if net.arch.per_coord_scale {
                    for i in 0..out.len() {
                        out[i] = nn1[i] - score[i] * scale[i];
                    }
                } else {
                    let a = scale[0];
                    for i in 0..out.len() {
                        out[i] = nn1[i] - a * score[i];
                    }
                }
            }
            Policy::GaussianOracle(o) => o.control_into_impl(t, x, out),
        }
    }
}

/// Policy discriminant used in checkpoints and run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Zero,
    Nn,
    Grad,
    #[serde(rename = "oracle")]
    GaussianOracle,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PolicyKind::Zero => "zero",
            PolicyKind::Nn => "nn",
            PolicyKind::Grad => "grad",
            PolicyKind::GaussianOracle => "oracle",
        };
        f.write_str(s)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk policy format: a single JSON document holding the header (kind,
/// architecture, dimensions, horizon, step count, clip) and the flat
/// parameter vector. serde_json round-trips f64 exactly.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: PolicyKind,
    pub dim: usize,
    pub horizon: f64,
    pub steps: usize,
    pub grad_clip: Option<f64>,
    pub arch: Option<PolicyArch>,
    pub oracle_mean: Option<Vec<f64>>,
    pub oracle_variance: Option<Vec<f64>>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("bad checkpoint {}: {e}", path.display())))?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{gaussian_target, mog_target};
    use approx::assert_relative_eq;

    fn small_arch() -> PolicyArch {
        PolicyArch {
            n_freq: 4,
            t_hidden: 8,
            x_hidden: 8,
            merge_hidden: 8,
            activation: Activation::Tanh,
            per_coord_scale: false,
        }
    }

    #[test]
    fn zero_policy_returns_zero() {
        let p = Policy::zero(3);
        assert_eq!(p.control(0.3, &[1.0, -2.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn grad_policy_is_zero_at_init() {
        let target = Arc::new(mog_target());
        let p = Policy::grad(target, 1.0, small_arch(), DEFAULT_SCORE_CLIP, 3);
        let u = p.control(0.4, &[1.0, 2.0]).unwrap();
        assert_eq!(u, vec![0.0, 0.0]);
    }

    #[test]
    fn nn_policy_is_zero_at_init_and_deterministic() {
        let p = Policy::nn(2, 1.0, small_arch(), 5);
        assert_eq!(p.control(0.2, &[0.5, -0.5]).unwrap(), vec![0.0, 0.0]);
        // Determinism holds for arbitrary parameters too.
        let mut p = p;
        if let Policy::Nn(net) = &mut p {
            let mut rng = Stream::root(6, "fill").rng();
            for v in net.params_mut().flat_mut() {
                *v = rand::Rng::random_range(&mut rng, -0.5..0.5);
            }
        }
        let a = p.control(0.7, &[0.1, 0.9]).unwrap();
        let b = p.control(0.7, &[0.1, 0.9]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checked_control_rejects_bad_time() {
        let p = Policy::nn(1, 1.0, small_arch(), 0);
        assert!(p.control(-0.1, &[0.0]).is_err());
        assert!(p.control(1.5, &[0.0]).is_err());
        assert!(p.control(1.0, &[0.0]).is_ok());
        let o = Policy::gaussian_oracle(&[0.0], &[1.0], 1.0).unwrap();
        assert!(o.control(1.0, &[0.0]).is_err(), "oracle is undefined at t = T");
    }

    #[test]
    fn grad_policy_score_term_is_norm_bounded() {
        // ‖NN₂(t)·clip(score)‖ ≤ |NN₂(t)|·clip.
        let target = Arc::new(gaussian_target(vec![50.0, -50.0], vec![1e-3, 1e-3], 0.0).unwrap());
        let clip = 2.0;
        let mut p = Policy::grad(target.clone(), 1.0, small_arch(), clip, 8);
        if let Policy::Grad { net, .. } = &mut p {
            let mut rng = Stream::root(9, "fill2").rng();
            for v in net.params_mut().flat_mut() {
                *v = rand::Rng::random_range(&mut rng, -0.5..0.5);
            }
        }
        let (t, x) = (0.3, [0.2, 0.1]);
        let u = p.control_vec(t, &x);
        let (nn1, scale) = match &p {
            Policy::Grad { net, .. } => (net.drift_plain(t, &x), net.scale_plain(t)[0]),
            _ => unreachable!(),
        };
        let term: Vec<f64> = nn1.iter().zip(&u).map(|(a, b)| a - b).collect();
        assert!(crate::math::norm(&term) <= scale.abs() * clip + 1e-12);
    }

    #[test]
    fn tape_control_matches_plain_control() {
        let target = Arc::new(mog_target());
        let mut p = Policy::grad(target, 1.0, small_arch(), DEFAULT_SCORE_CLIP, 11);
        if let Policy::Grad { net, .. } = &mut p {
            let mut rng = Stream::root(12, "fill3").rng();
            for v in net.params_mut().flat_mut() {
                *v = rand::Rng::random_range(&mut rng, -0.3..0.3);
            }
        }
        let (t, x) = (0.55, vec![0.7, -1.1]);
        let plain = p.control_vec(t, &x);
        let params = p.params().unwrap().clone();
        let mut tape = Tape::new(&params);
        let xid = tape.input(x);
        let uid = p.control_tape(&mut tape, t, xid).unwrap();
        assert_eq!(tape.value(uid), plain.as_slice());
    }

    #[test]
    fn checkpoint_roundtrip_preserves_control() {
        let dir = std::env::temp_dir().join(format!("sbs-ck-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let target: TargetHandle = Arc::new(mog_target());
        let mut p = Policy::grad(target.clone(), 1.0, small_arch(), 50.0, 13);
        if let Policy::Grad { net, .. } = &mut p {
            let mut rng = Stream::root(14, "fill4").rng();
            for v in net.params_mut().flat_mut() {
                *v = rand::Rng::random_range(&mut rng, -0.4..0.4);
            }
        }
        let path = dir.join("p.json");
        p.to_checkpoint(100).save(&path).unwrap();
        let ck = Checkpoint::load(&path).unwrap();
        assert_eq!(ck.steps, 100);
        let q = Policy::from_checkpoint(&ck, Some(target)).unwrap();
        let (t, x) = (0.25, [0.4, -0.6]);
        assert_eq!(p.control_vec(t, &x), q.control_vec(t, &x));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn grad_checkpoint_without_target_is_rejected() {
        let target: TargetHandle = Arc::new(mog_target());
        let p = Policy::grad(target, 1.0, small_arch(), 50.0, 1);
        let ck = p.to_checkpoint(10);
        assert!(Policy::from_checkpoint(&ck, None).is_err());
    }
}
