//! Reverse-mode differentiation tape.
//!
//! Nodes are appended in forward order (so the list is topologically
//! sorted); the reverse pass walks them once from back to front. Leaf kinds
//! come in two flavors: [`Tape::input`] values are exogenous constants whose
//! adjoints can be queried afterwards, while parameters are not nodes at all
//! — linear layers read them straight out of the shared [`ParameterStore`]
//! and the reverse pass accumulates into one flat gradient buffer.

use super::ParameterStore;
use crate::{Error, Result};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Node {
    /// Exogenous constant.
    Input,
    /// y = W x + b with W, b taken from the parameter store.
    Linear {
        w_off: usize,
        b_off: usize,
        in_dim: usize,
        out_dim: usize,
        x: NodeId,
    },
    Tanh {
        x: NodeId,
    },
    Relu {
        x: NodeId,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    /// y = x + dt·u + noise; the Euler update with the noise as a constant
    /// (the noise value is baked into the forward result and plays no role
    /// in the reverse pass).
    EulerStep {
        x: NodeId,
        u: NodeId,
        dt: f64,
    },
    /// y_i = a·v_i for a scalar node `a` and a constant vector `v`.
    BroadcastMul {
        scalar: NodeId,
        v: Vec<f64>,
    },
    /// y_i = x_i·v_i for a constant vector `v`.
    ElemMulConst {
        x: NodeId,
        v: Vec<f64>,
    },
    /// Scalar y = c·Σ x_i².
    ScaledSqNorm {
        x: NodeId,
        c: f64,
    },
    /// Scalar node for a function evaluated outside the tape; `grad` is its
    /// gradient with respect to `x` at the forward point.
    External {
        x: NodeId,
        grad: Vec<f64>,
    },
}

/// Recording of one forward pass.
pub struct Tape<'p> {
    params: &'p ParameterStore,
    nodes: Vec<Node>,
    vals: Vec<Vec<f64>>,
    consumed: bool,
}

/// Result of a reverse pass: parameter gradients plus the adjoints of every
/// node (so gradients of designated inputs can be read off).
pub struct Gradients {
    pub params: Vec<f64>,
    adjoints: Vec<Vec<f64>>,
}

impl Gradients {
    /// Adjoint of a node (typically an input leaf).
    pub fn input(&self, id: NodeId) -> &[f64] {
        &self.adjoints[id.0]
    }
}

/// out = W x + b. Shared by the tape and the plain (untaped) forward path so
/// both produce bit-identical values.
pub fn linear_forward(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let in_dim = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * in_dim..(i + 1) * in_dim];
        let mut acc = b[i];
        for (wij, xj) in row.iter().zip(x) {
            acc += wij * xj;
        }
        *o = acc;
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParameterStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            vals: Vec::new(),
            consumed: false,
        }
    }

    pub fn params(&self) -> &ParameterStore {
        self.params
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.vals[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node, val: Vec<f64>) -> NodeId {
        self.nodes.push(node);
        self.vals.push(val);
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, data: Vec<f64>) -> NodeId {
        self.push(Node::Input, data)
    }

    pub fn input_scalar(&mut self, v: f64) -> NodeId {
        self.input(vec![v])
    }

    /// Affine layer reading `out_dim × in_dim` weights at `w_off` and
    /// `out_dim` biases at `b_off`.
    pub fn linear(
        &mut self,
        w_off: usize,
        b_off: usize,
        in_dim: usize,
        out_dim: usize,
        x: NodeId,
    ) -> NodeId {
        debug_assert_eq!(self.vals[x.0].len(), in_dim);
        let w = &self.params.flat()[w_off..w_off + out_dim * in_dim];
        let b = &self.params.flat()[b_off..b_off + out_dim];
        let mut out = vec![0.0; out_dim];
        linear_forward(w, b, &self.vals[x.0], &mut out);
        self.push(
            Node::Linear {
                w_off,
                b_off,
                in_dim,
                out_dim,
                x,
            },
            out,
        )
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.vals[x.0].iter().map(|v| v.tanh()).collect();
        self.push(Node::Tanh { x }, out)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.vals[x.0].iter().map(|v| v.max(0.0)).collect();
        self.push(Node::Relu { x }, out)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.vals[a.0].clone();
        out.extend_from_slice(&self.vals[b.0]);
        self.push(Node::Concat { a, b }, out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out: Vec<f64> = self.vals[a.0]
            .iter()
            .zip(&self.vals[b.0])
            .map(|(x, y)| x + y)
            .collect();
        self.push(Node::Add { a, b }, out)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out: Vec<f64> = self.vals[a.0]
            .iter()
            .zip(&self.vals[b.0])
            .map(|(x, y)| x - y)
            .collect();
        self.push(Node::Sub { a, b }, out)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let out: Vec<f64> = self.vals[x.0].iter().map(|v| c * v).collect();
        self.push(Node::Scale { x, c }, out)
    }

    /// y = x + dt·u + noise.
    pub fn euler_step(&mut self, x: NodeId, u: NodeId, dt: f64, noise: &[f64]) -> NodeId {
        let out: Vec<f64> = self.vals[x.0]
            .iter()
            .zip(&self.vals[u.0])
            .zip(noise)
            .map(|((xi, ui), wi)| xi + ui * dt + wi)
            .collect();
        self.push(Node::EulerStep { x, u, dt }, out)
    }

    /// y_i = scalar·v_i.
    pub fn broadcast_mul(&mut self, scalar: NodeId, v: &[f64]) -> NodeId {
        debug_assert_eq!(self.vals[scalar.0].len(), 1);
        let a = self.vals[scalar.0][0];
        let out: Vec<f64> = v.iter().map(|vi| a * vi).collect();
        self.push(
            Node::BroadcastMul {
                scalar,
                v: v.to_vec(),
            },
            out,
        )
    }

    /// y_i = x_i·v_i.
    pub fn elem_mul_const(&mut self, x: NodeId, v: &[f64]) -> NodeId {
        let out: Vec<f64> = self.vals[x.0].iter().zip(v).map(|(xi, vi)| xi * vi).collect();
        self.push(Node::ElemMulConst { x, v: v.to_vec() }, out)
    }

    /// Scalar c·‖x‖².
    pub fn scaled_sq_norm(&mut self, x: NodeId, c: f64) -> NodeId {
        let s: f64 = self.vals[x.0].iter().map(|v| v * v).sum();
        self.push(Node::ScaledSqNorm { x, c }, vec![c * s])
    }

    /// Scalar node for an externally evaluated function of `x` with known
    /// value and gradient at the forward point.
    pub fn external_scalar(&mut self, x: NodeId, value: f64, grad: Vec<f64>) -> NodeId {
        debug_assert_eq!(self.vals[x.0].len(), grad.len());
        self.push(Node::External { x, grad }, vec![value])
    }

    /// Reverse pass seeded at `output`. Consumes the tape: a second call is
    /// a usage error.
    pub fn backward(&mut self, output: NodeId, seed: &[f64]) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Usage("tape already consumed by backward".into()));
        }
        self.consumed = true;
        if seed.len() != self.vals[output.0].len() {
            return Err(Error::shape(format!(
                "seed length {} != output length {}",
                seed.len(),
                self.vals[output.0].len()
            )));
        }

        let mut adj: Vec<Vec<f64>> = self.vals.iter().map(|v| vec![0.0; v.len()]).collect();
        adj[output.0].copy_from_slice(seed);
        let mut pgrad = vec![0.0; self.params.len()];

        for idx in (0..self.nodes.len()).rev() {
            // Take this node's adjoint out so we can mutate the others.
            let dy = std::mem::take(&mut adj[idx]);
            if dy.iter().all(|v| *v == 0.0) {
                adj[idx] = dy;
                continue;
            }
            match &self.nodes[idx] {
                Node::Input => {}
                Node::Linear {
                    w_off,
                    b_off,
                    in_dim,
                    out_dim,
                    x,
                } => {
                    let xv = &self.vals[x.0];
                    let w = &self.params.flat()[*w_off..*w_off + out_dim * in_dim];
                    let dx = &mut adj[x.0];
                    for i in 0..*out_dim {
                        let d = dy[i];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &w[i * in_dim..(i + 1) * in_dim];
                        let gw = &mut pgrad[w_off + i * in_dim..w_off + (i + 1) * in_dim];
                        for j in 0..*in_dim {
                            gw[j] += d * xv[j];
                            dx[j] += d * row[j];
                        }
                        pgrad[b_off + i] += d;
                    }
                }
                Node::Tanh { x } => {
                    let yv = &self.vals[idx];
                    for (i, d) in dy.iter().enumerate() {
                        adj[x.0][i] += d * (1.0 - yv[i] * yv[i]);
                    }
                }
                Node::Relu { x } => {
                    let xv = &self.vals[x.0];
                    for (i, d) in dy.iter().enumerate() {
                        if xv[i] > 0.0 {
                            adj[x.0][i] += d;
                        }
                    }
                }
                Node::Concat { a, b } => {
                    let na = self.vals[a.0].len();
                    for (i, d) in dy[..na].iter().enumerate() {
                        adj[a.0][i] += d;
                    }
                    for (i, d) in dy[na..].iter().enumerate() {
                        adj[b.0][i] += d;
                    }
                }
                Node::Add { a, b } => {
                    for (i, d) in dy.iter().enumerate() {
                        adj[a.0][i] += d;
                    }
                    for (i, d) in dy.iter().enumerate() {
                        adj[b.0][i] += d;
                    }
                }
                Node::Sub { a, b } => {
                    for (i, d) in dy.iter().enumerate() {
                        adj[a.0][i] += d;
                    }
                    for (i, d) in dy.iter().enumerate() {
                        adj[b.0][i] -= d;
                    }
                }
                Node::Scale { x, c } => {
                    for (i, d) in dy.iter().enumerate() {
                        adj[x.0][i] += c * d;
                    }
                }
                Node::EulerStep { x, u, dt, .. } => {
                    for (i, d) in dy.iter().enumerate() {
                        adj[x.0][i] += d;
                    }
                    for (i, d) in dy.iter().enumerate() {
                        adj[u.0][i] += dt * d;
                    }
                }
                Node::BroadcastMul { scalar, v } => {
                    let mut acc = 0.0;
                    for (d, vi) in dy.iter().zip(v) {
                        acc += d * vi;
                    }
                    adj[scalar.0][0] += acc;
                }
                Node::ElemMulConst { x, v } => {
                    for (i, d) in dy.iter().enumerate() {
                        adj[x.0][i] += d * v[i];
                    }
                }
                Node::ScaledSqNorm { x, c } => {
                    let d = dy[0];
                    let xv = &self.vals[x.0];
                    for (i, xi) in xv.iter().enumerate() {
                        adj[x.0][i] += 2.0 * c * xi * d;
                    }
                }
                Node::External { x, grad } => {
                    let d = dy[0];
                    for (i, g) in grad.iter().enumerate() {
                        adj[x.0][i] += d * g;
                    }
                }
            }
            adj[idx] = dy;
        }

        Ok(Gradients {
            params: pgrad,
            adjoints: adj,
        })
    }
}
