//! The joint model: autoencoder, GCN branch and cluster centers, recorded
//! together on one tape so a single backward sweep updates all of them.

use serde::{Deserialize, Serialize};

use crate::autoencoder::{decode_on, encode_on, AeVars, AutoencoderParams};
use crate::error::{Error, Result};
use crate::gcn::{gcn_forward_on, Activation, Epsilon, GcnParams};
use crate::graph::CsrMatrix;
use crate::selfsup::{target_distribution, ClusterCenters};
use crate::tape::{GradTape, Var};
use crate::tensor::DenseMatrix;

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub ae: AutoencoderParams,
    pub gcn: GcnParams,
    pub centers: ClusterCenters,
}

impl ModelParams {
    pub fn new(ae: AutoencoderParams, gcn: GcnParams, centers: ClusterCenters) -> Result<Self> {
        let depth = gcn.depth();
        let enc = ae.layer_dims();
        if depth == 0 || depth > ae.depth() {
            return Err(Error::param(format!(
                "GCN depth {depth} does not fit an encoder of depth {}",
                ae.depth()
            )));
        }
        let expect = GcnParams::widths_for(ae.input_dim(), &enc[1..ae.depth() + 1], depth, gcn.n_clusters())?;
        let got: Vec<usize> = gcn
            .weights
            .iter()
            .map(DenseMatrix::rows)
            .chain(std::iter::once(gcn.n_clusters()))
            .collect();
        if expect != got {
            return Err(Error::param(format!("GCN widths {got:?}, expected {expect:?}")));
        }
        if centers.centers.cols() != ae.embedding_dim() {
            return Err(Error::dim(
                "cluster centers",
                centers.centers.shape(),
                (centers.k(), ae.embedding_dim()),
            ));
        }
        if centers.k() != gcn.n_clusters() {
            return Err(Error::param(format!(
                "{} centers but the GCN predicts {} clusters",
                centers.k(),
                gcn.n_clusters()
            )));
        }
        Ok(Self { ae, gcn, centers })
    }

    pub fn n_clusters(&self) -> usize {
        self.centers.k()
    }

    /// Autoencoder tensors, then GCN weights, then the centers.
    pub fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out = self.ae.tensors();
        out.extend(&self.gcn.weights);
        out.push(&self.centers.centers);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = self.ae.tensors_mut();
        out.extend(&mut self.gcn.weights);
        out.push(&mut self.centers.centers);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Weights of the clustering and GCN terms in the total loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: crate::selfsup::DEFAULT_ALPHA,
            beta: crate::selfsup::DEFAULT_BETA,
        }
    }
}

/// Scalar losses of one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub res: f64,
    pub clu: f64,
    pub gcn: f64,
    pub total: f64,
}

impl Losses {
    pub fn is_finite(&self) -> bool {
        [self.res, self.clu, self.gcn, self.total].iter().all(|v| v.is_finite())
    }
}

/// Tape handles of the parameters, in [`ModelParams::tensors`] order.
pub struct ModelVars {
    pub ae: AeVars,
    pub gcn: Vec<Var>,
    pub centers: Var,
}

impl ModelVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.ae.all();
        out.extend(&self.gcn);
        out.push(self.centers);
        out
    }
}

/// Inputs of a forward pass that are not parameters.
#[derive(Clone, Copy)]
pub struct ForwardInputs<'g> {
    pub x: &'g DenseMatrix,
    /// Propagation matrix: the normalized adjacency, or the identity for the
    /// MLP variant.
    pub adj: &'g CsrMatrix,
    pub eps: Epsilon,
    pub weights: LossWeights,
}

/// A recorded forward pass.
pub struct ForwardPass<'g> {
    pub tape: GradTape<'g>,
    pub vars: ModelVars,
    pub hs: Vec<Var>,
    pub q: Var,
    pub z: Var,
    pub x_hat: Var,
    /// Target distribution used by both KL terms; constant for the backward pass.
    pub p: DenseMatrix,
    pub l_res: Var,
    pub l_clu: Var,
    pub l_gcn: Var,
    pub l_total: Var,
}

impl<'g> ForwardPass<'g> {
    pub fn losses(&self) -> Losses {
        let s = |v| self.tape.value(v).scalar();
        Losses {
            res: s(self.l_res),
            clu: s(self.l_clu),
            gcn: s(self.l_gcn),
            total: s(self.l_total),
        }
    }

    pub fn q(&self) -> &DenseMatrix {
        self.tape.value(self.q)
    }

    pub fn z(&self) -> &DenseMatrix {
        self.tape.value(self.z)
    }

    /// Gradients of `loss` for every parameter, in [`ModelParams::tensors`] order.
    pub fn gradients_of(&self, loss: Var) -> Result<Vec<DenseMatrix>> {
        let mut grads = self.tape.backward(loss)?;
        Ok(self
            .vars
            .all()
            .into_iter()
            .map(|v| grads.take(v, self.tape.value(v).shape()))
            .collect())
    }

    pub fn gradients(&self) -> Result<Vec<DenseMatrix>> {
        self.gradients_of(self.l_total)
    }
}

/// Records the full model. With `target = None` the target distribution is
/// derived from this pass's `Q`; otherwise the given matrix is used.
pub fn forward<'g>(
    params: &'g ModelParams,
    inputs: ForwardInputs<'g>,
    target: Option<&DenseMatrix>,
) -> Result<ForwardPass<'g>> {
    let ForwardInputs { x, adj, eps, weights } = inputs;
    let LossWeights { alpha, beta } = weights;
    if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::param(format!("loss weights must be finite and >= 0, got α={alpha}, β={beta}")));
    }
    if adj.n() != x.rows() {
        return Err(Error::dim("forward", (adj.n(), adj.n()), x.shape()));
    }
    let depth = params.gcn.depth();
    if depth > params.ae.depth() {
        return Err(Error::param("GCN deeper than the encoder"));
    }

    let mut tape = GradTape::new();
    let xv = tape.constant(x);
    let ae = AeVars::register(&mut tape, &params.ae);
    let gcn: Vec<Var> = params.gcn.weights.iter().map(|w| tape.leaf(w)).collect();
    let centers = tape.leaf(&params.centers.centers);
    let vars = ModelVars { ae, gcn, centers };

    let hs = encode_on(&mut tape, xv, &vars.ae)?;
    let h_last = *hs.last().expect("encoder has at least one layer");
    let q = tape.student_t(h_last, vars.centers, params.centers.dof)?;
    let p = match target {
        Some(t) if t.shape() != tape.value(q).shape() => {
            return Err(Error::dim("target distribution", t.shape(), tape.value(q).shape()));
        }
        Some(t) => t.clone(),
        None => target_distribution(tape.value(q))?,
    };
    let delivered = &hs[hs.len() - depth..];
    let out = gcn_forward_on(&mut tape, xv, delivered, adj, &vars.gcn, eps, Activation::Relu)?;
    let x_hat = decode_on(&mut tape, h_last, &vars.ae)?;

    let l_res = tape.half_mse(x_hat, xv)?;
    let l_clu = tape.kl(p.clone(), q)?;
    let l_gcn = tape.kl(p.clone(), out.z)?;
    let partial = tape.lincomb(1.0, l_res, alpha, l_clu)?;
    let l_total = tape.lincomb(1.0, partial, beta, l_gcn)?;

    Ok(ForwardPass {
        tape,
        vars,
        hs,
        q,
        z: out.z,
        x_hat,
        p,
        l_res,
        l_clu,
        l_gcn,
        l_total,
    })
}
