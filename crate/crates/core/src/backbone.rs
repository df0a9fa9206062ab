//! Trainable encoders: a 2-layer GCN and a 2-layer MLP, each with an affine
//! prediction head.
//!
//! The contrastive representations `z_i` are the second-layer outputs (before
//! the head); the head projects them to class logits and a row softmax yields
//! the prediction matrix `P`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{GraphBundle, NormalizedOperators};
use crate::scalar::Scalar;
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Gcn,
    Mlp,
}

impl BackboneKind {
    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::Gcn => "gcn",
            BackboneKind::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gcn" => Ok(BackboneKind::Gcn),
            "mlp" => Ok(BackboneKind::Mlp),
            other => Err(format!("unknown backbone {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Layer weights, biases, and head projection.
#[derive(Debug, Clone)]
pub struct BackboneParams<S: Scalar> {
    pub w1: Tensor<S>,
    pub b1: Tensor<S>,
    pub w2: Tensor<S>,
    pub b2: Tensor<S>,
    pub w_head: Tensor<S>,
    pub b_head: Tensor<S>,
}

impl<S: Scalar> BackboneParams<S> {
    /// Glorot-uniform initialization. Weight matrices are drawn row-major in
    /// the order w1, w2, w_head; biases start at zero and consume no draws.
    pub fn glorot<R: Rng>(n_features: usize, hidden: usize, n_classes: usize, rng: &mut R) -> Self {
        let mut weight = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| S::of((rng.random::<f64>() * 2.0 - 1.0) * limit))
                .collect();
            Tensor::from_vec(fan_in, fan_out, data)
                .expect("weight shape")
                .with_grad()
        };
        let w1 = weight(n_features, hidden);
        let w2 = weight(hidden, hidden);
        let w_head = weight(hidden, n_classes);
        BackboneParams {
            w1,
            b1: Tensor::zeros(1, hidden).with_grad(),
            w2,
            b2: Tensor::zeros(1, hidden).with_grad(),
            w_head,
            b_head: Tensor::zeros(1, n_classes).with_grad(),
        }
    }

    pub fn tensors(&self) -> [&Tensor<S>; 6] {
        [
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.w_head,
            &self.b_head,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<S>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w_head,
            &mut self.b_head,
        ]
    }
}

/// A recorded forward pass: the tape plus handles to Z, P, and the parameter
/// leaves (aligned with [`BackboneParams::tensors`]).
pub struct ForwardOutput<S: Scalar> {
    pub tape: Tape<S>,
    pub z: VarId,
    pub p: VarId,
    pub param_ids: [VarId; 6],
}

impl<S: Scalar> ForwardOutput<S> {
    pub fn predictions(&self) -> &Tensor<S> {
        self.tape.value(self.p)
    }

    pub fn representations(&self) -> &Tensor<S> {
        self.tape.value(self.z)
    }
}

/// GCN forward: Z = A_hat . ReLU(A_hat . drop(X) W1 + b1) W2 + b2, followed by
/// the affine head and a row softmax. Dropout is applied before each weight
/// multiply in train mode; eval mode is deterministic.
pub fn gcn_forward<S: Scalar, R: Rng>(
    params: &BackboneParams<S>,
    bundle: &GraphBundle<S>,
    operators: &NormalizedOperators<S>,
    mode: Mode,
    dropout: f64,
    rng: &mut R,
) -> Result<ForwardOutput<S>> {
    forward(params, bundle, Some(operators), mode, dropout, rng)
}

/// MLP forward: the GCN graph with the propagation operator replaced by the
/// identity, i.e. no neighborhood mixing.
pub fn mlp_forward<S: Scalar, R: Rng>(
    params: &BackboneParams<S>,
    bundle: &GraphBundle<S>,
    mode: Mode,
    dropout: f64,
    rng: &mut R,
) -> Result<ForwardOutput<S>> {
    forward(params, bundle, None, mode, dropout, rng)
}

fn forward<S: Scalar, R: Rng>(
    params: &BackboneParams<S>,
    bundle: &GraphBundle<S>,
    operators: Option<&NormalizedOperators<S>>,
    mode: Mode,
    dropout: f64,
    rng: &mut R,
) -> Result<ForwardOutput<S>> {
    let train = mode == Mode::Train;
    let mut tape = Tape::new();
    let x = tape.shared(bundle.features_arc());
    let w1 = tape.leaf(params.w1.clone());
    let b1 = tape.leaf(params.b1.clone());
    let w2 = tape.leaf(params.w2.clone());
    let b2 = tape.leaf(params.b2.clone());
    let w_head = tape.leaf(params.w_head.clone());
    let b_head = tape.leaf(params.b_head.clone());

    let xd = tape.dropout(x, dropout, train, rng)?;
    let mut h = tape.matmul(xd, w1)?;
    if let Some(ops) = operators {
        h = tape.spmm(ops.gcn_adj.clone(), h)?;
    }
    h = tape.add_row_bias(h, b1)?;
    let h = tape.relu(h);

    let hd = tape.dropout(h, dropout, train, rng)?;
    let mut z = tape.matmul(hd, w2)?;
    if let Some(ops) = operators {
        z = tape.spmm(ops.gcn_adj.clone(), z)?;
    }
    let z = tape.add_row_bias(z, b2)?;

    let logits = tape.matmul(z, w_head)?;
    let logits = tape.add_row_bias(logits, b_head)?;
    let p = tape.row_softmax(logits);

    Ok(ForwardOutput {
        tape,
        z,
        p,
        param_ids: [w1, b1, w2, b2, w_head, b_head],
    })
}
