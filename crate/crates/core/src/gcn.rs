//! The GCN branch and the delivery operator that feeds autoencoder
//! representations into it layer by layer.
//!
//! With `depth` deliveries the stack is
//!
//! ```text
//! Z¹     = φ(Â X W¹)
//! Zˡ⁺¹   = φ(Â ((1−ε) Zˡ + ε Hˡ) Wˡ⁺¹)        l = 1 … depth−1
//! Z      = softmax(Â ((1−ε) Z^depth + ε H^depth) W^{depth+1})
//! ```
//!
//! where `H¹ … H^depth` are the last `depth` encoder outputs.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CsrMatrix;
use crate::optim::glorot_uniform;
use crate::tape::{GradTape, Var};
use crate::tensor::DenseMatrix;

/// Balance coefficient of the delivery operator, in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Epsilon(f64);

impl Epsilon {
    pub const HALF: Epsilon = Epsilon(0.5);
    pub const ZERO: Epsilon = Epsilon(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::param(format!("epsilon must lie in [0, 1], got {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Self::HALF
    }
}

impl TryFrom<f64> for Epsilon {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Epsilon> for f64 {
    fn from(e: Epsilon) -> f64 {
        e.0
    }
}

/// `(1−ε) Z + ε H`.
pub fn deliver(z: &DenseMatrix, h: &DenseMatrix, eps: Epsilon) -> Result<DenseMatrix> {
    z.lincomb(1.0 - eps.0, h, eps.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// GCN weight matrices; layer `l` maps width `widths[l]` to `widths[l+1]`.
/// The layers carry no bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub weights: Vec<DenseMatrix>,
}

impl GcnParams {
    /// `widths = [d, w_1, …, w_depth, K]`.
    pub fn init(widths: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if widths.len() < 3 || widths.contains(&0) {
            return Err(Error::param(format!("invalid GCN widths {widths:?}")));
        }
        Ok(Self {
            weights: widths
                .windows(2)
                .map(|w| glorot_uniform(w[0], w[1], rng))
                .collect(),
        })
    }

    /// Widths for a stack delivering the last `depth` of `encoder_widths`.
    pub fn widths_for(
        input_dim: usize,
        encoder_widths: &[usize],
        depth: usize,
        k: usize,
    ) -> Result<Vec<usize>> {
        if depth == 0 || depth > encoder_widths.len() {
            return Err(Error::param(format!(
                "depth {depth} must lie in 1..={}",
                encoder_widths.len()
            )));
        }
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&encoder_widths[encoder_widths.len() - depth..]);
        widths.push(k);
        Ok(widths)
    }

    /// Number of delivery steps.
    pub fn depth(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn n_clusters(&self) -> usize {
        self.weights.last().map_or(0, DenseMatrix::cols)
    }
}

/// One propagation `Â · input · W`, multiplying in the cheaper order.
fn propagate_layer<'g>(
    tape: &mut GradTape<'g>,
    adj: &'g CsrMatrix,
    input: Var,
    weight: Var,
) -> Result<Var> {
    let (in_cols, out_cols) = (tape.value(input).cols(), tape.value(weight).cols());
    if in_cols < out_cols {
        let p = tape.propagate(adj, input)?;
        tape.matmul(p, weight)
    } else {
        let xw = tape.matmul(input, weight)?;
        tape.propagate(adj, xw)
    }
}

/// Tape outputs of a GCN forward pass.
pub struct GcnVars {
    /// `Z¹ … Z^depth`.
    pub hidden: Vec<Var>,
    /// Row-stochastic prediction `Z`.
    pub z: Var,
}

/// Records the GCN stack. `delivered` holds the representations mixed in
/// before layers `2 … depth+1`; its length must equal `weights.len() − 1`.
pub fn gcn_forward_on<'g>(
    tape: &mut GradTape<'g>,
    x: Var,
    delivered: &[Var],
    adj: &'g CsrMatrix,
    weights: &[Var],
    eps: Epsilon,
    act: Activation,
) -> Result<GcnVars> {
    if weights.len() != delivered.len() + 1 {
        return Err(Error::param(format!(
            "{} GCN weights cannot consume {} delivered representations",
            weights.len(),
            delivered.len()
        )));
    }
    let activate = |tape: &mut GradTape<'g>, v: Var| match act {
        Activation::Relu => tape.relu(v),
        Activation::Identity => v,
    };
    let mut hidden = Vec::with_capacity(delivered.len());
    let first = propagate_layer(tape, adj, x, weights[0])?;
    let mut cur = activate(tape, first);
    hidden.push(cur);
    for (l, &h) in delivered.iter().enumerate() {
        let mixed = tape.lincomb(1.0 - eps.get(), cur, eps.get(), h)?;
        let out = propagate_layer(tape, adj, mixed, weights[l + 1])?;
        if l + 1 == delivered.len() {
            let z = tape.row_softmax(out);
            return Ok(GcnVars { hidden, z });
        }
        cur = activate(tape, out);
        hidden.push(cur);
    }
    unreachable!("weights.len() >= 2 guarantees a classification layer")
}

/// Values of a GCN forward pass.
#[derive(Clone, Debug)]
pub struct GcnOutput {
    pub hidden: Vec<DenseMatrix>,
    pub z: DenseMatrix,
}

/// Runs the GCN branch with relu hidden layers. `hs` are all encoder
/// outputs `[H¹ … H^L]`; the last `p.depth()` of them are delivered.
pub fn gcn_forward(
    x: &DenseMatrix,
    hs: &[DenseMatrix],
    adj: &CsrMatrix,
    p: &GcnParams,
    eps: Epsilon,
) -> Result<GcnOutput> {
    gcn_forward_with(x, hs, adj, p, eps, Activation::Relu)
}

pub fn gcn_forward_with(
    x: &DenseMatrix,
    hs: &[DenseMatrix],
    adj: &CsrMatrix,
    p: &GcnParams,
    eps: Epsilon,
    act: Activation,
) -> Result<GcnOutput> {
    let depth = p.depth();
    if hs.len() < depth {
        return Err(Error::param(format!(
            "GCN depth {depth} needs at least {depth} encoder layers, got {}",
            hs.len()
        )));
    }
    let mut tape = GradTape::new();
    let xv = tape.constant(x);
    let delivered: Vec<Var> = hs[hs.len() - depth..].iter().map(|h| tape.leaf(h)).collect();
    let weights: Vec<Var> = p.weights.iter().map(|w| tape.leaf(w)).collect();
    let out = gcn_forward_on(&mut tape, xv, &delivered, adj, &weights, eps, act)?;
    Ok(GcnOutput {
        hidden: out.hidden.iter().map(|&v| tape.value(v).clone()).collect(),
        z: tape.value(out.z).clone(),
    })
}
