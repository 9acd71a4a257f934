//! Joint optimization: pretrain the autoencoder, seed the cluster centers
//! with k-means on the embedding, then take one full-batch Adam step per
//! epoch on the combined loss.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, AutoencoderParams, PretrainConfig, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::gcn::{Epsilon, GcnParams};
use crate::graph::{CsrMatrix, SparseGraph};
use crate::kmeans::kmeans;
use crate::metrics::{Partition, Scores};
use crate::model::{forward, ForwardInputs, LossWeights, Losses, ModelParams};
use crate::optim::Adam;
use crate::selfsup::{hard_labels, ClusterCenters, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::tensor::DenseMatrix;

/// Stream of the master seed used for GCN weight initialization. Streams 0
/// and 1 belong to autoencoder initialization and batch shuffling.
const GCN_INIT_STREAM: u64 = 2;
/// Mixed into the master seed to key the k-means restarts.
const KMEANS_KEY: u64 = 0x6b6d_6561_6e73;

/// Model variants compared in the ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Delivery, graph propagation, labels from `Z`.
    #[default]
    Full,
    /// `ε = 0` in every delivery step.
    NoDelivery,
    /// The identity replaces `Â` in every propagation.
    Mlp,
    /// Same training as `Full`; labels come from `Q`.
    QOutput,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoDelivery, Variant::Mlp, Variant::QOutput];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDelivery => "no-delivery",
            Variant::Mlp => "mlp",
            Variant::QOutput => "q-output",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no-delivery" => Ok(Variant::NoDelivery),
            "mlp" | "mlp-instead-of-gcn" => Ok(Variant::Mlp),
            "q-output" => Ok(Variant::QOutput),
            other => Err(Error::param(format!(
                "unknown variant {other:?} (expected full, no-delivery, mlp or q-output)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: Epsilon,
    pub n_clusters: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Encoder widths `[d_1, …, d_L]`; ignored when pretrained parameters are supplied.
    pub hidden: Vec<usize>,
    /// Number of encoder layers delivered into the GCN.
    pub depth: usize,
    pub dof: f64,
    pub kmeans_restarts: usize,
    pub pretrain_epochs: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let pre = PretrainConfig::default();
        Self {
            epochs: 200,
            lr: 1e-3,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            epsilon: Epsilon::HALF,
            n_clusters: 3,
            seed: 0,
            variant: Variant::Full,
            hidden: DEFAULT_HIDDEN.to_vec(),
            depth: DEFAULT_HIDDEN.len(),
            dof: 1.0,
            kmeans_restarts: 20,
            pretrain_epochs: pre.epochs,
            pretrain_batch_size: pre.batch_size,
            pretrain_lr: pre.lr,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.epochs == 0 {
            return Err(Error::param("epochs must be >= 1"));
        }
        if !positive(self.lr) || !positive(self.pretrain_lr) {
            return Err(Error::param("learning rates must be positive"));
        }
        if !positive(self.alpha) || !positive(self.beta) {
            return Err(Error::param(format!(
                "α and β must be positive, got α={}, β={}",
                self.alpha, self.beta
            )));
        }
        if self.n_clusters == 0 {
            return Err(Error::param("n_clusters must be >= 1"));
        }
        if !positive(self.dof) {
            return Err(Error::param("dof must be positive"));
        }
        if self.kmeans_restarts == 0 || self.pretrain_epochs == 0 || self.pretrain_batch_size == 0 {
            return Err(Error::param(
                "kmeans_restarts, pretrain_epochs and pretrain_batch_size must be >= 1",
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param(format!("invalid hidden widths {:?}", self.hidden)));
        }
        if self.depth == 0 || self.depth > self.hidden.len() {
            return Err(Error::param(format!(
                "depth {} must lie in 1..={}",
                self.depth,
                self.hidden.len()
            )));
        }
        Ok(())
    }

    /// Pretraining settings, seeded from the master seed.
    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch_size,
            lr: self.pretrain_lr,
            seed: self.seed,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    /// The delivery weight actually used by the variant.
    pub fn effective_epsilon(&self) -> Epsilon {
        match self.variant {
            Variant::NoDelivery => Epsilon::ZERO,
            _ => self.epsilon,
        }
    }
}

/// Losses and, when ground truth is known, scores of the hard labelings of
/// `P`, `Q` and `Z`, all measured before that epoch's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_res: f64,
    pub loss_clu: f64,
    pub loss_gcn: f64,
    pub loss_total: f64,
    pub p: Option<Scores>,
    pub q: Option<Scores>,
    pub z: Option<Scores>,
}

impl EpochRecord {
    fn new(epoch: usize, losses: Losses) -> Self {
        Self {
            epoch,
            loss_res: losses.res,
            loss_clu: losses.clu,
            loss_gcn: losses.gcn,
            loss_total: losses.total,
            p: None,
            q: None,
            z: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Labels from the final parameters: `Z` for most variants, `Q` for `q-output`.
    pub labels: Partition,
    pub scores: Option<Scores>,
    /// Per-epoch pretraining losses; empty when pretrained parameters were given.
    pub pretrain_losses: Vec<f64>,
}

/// Centers from the best of `restarts` k-means fits on the embedding, `v = 1`.
pub fn init_centers(h_last: &DenseMatrix, k: usize, restarts: usize, seed: u64) -> Result<ClusterCenters> {
    let fit = kmeans(h_last, k, restarts, seed ^ KMEANS_KEY)?;
    ClusterCenters::new(fit.centers, 1.0)
}

/// Pretrains (unless `pretrained` is given), initializes the centers and the
/// GCN, and runs the joint optimization.
pub fn train_sdcn(
    x: &DenseMatrix,
    graph: &SparseGraph,
    truth: Option<&Partition>,
    pretrained: Option<&AutoencoderParams>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = x.rows();
    if graph.n() != n {
        return Err(Error::param(format!("graph has {} nodes but there are {n} samples", graph.n())));
    }
    if let Some(t) = truth {
        if t.len() != n {
            return Err(Error::param(format!("{} labels for {n} samples", t.len())));
        }
    }
    if config.n_clusters > n {
        return Err(Error::param(format!("{} clusters for {n} samples", config.n_clusters)));
    }

    let (ae, pretrain_losses) = match pretrained {
        Some(p) => {
            if p.input_dim() != x.cols() {
                return Err(Error::dim("pretrained autoencoder", x.shape(), (n, p.input_dim())));
            }
            (p.clone(), Vec::new())
        }
        None => {
            let report = autoencoder::pretrain(x, &config.hidden, &config.pretrain_config())?;
            (report.params, report.epoch_losses)
        }
    };
    if config.depth > ae.depth() {
        return Err(Error::param(format!(
            "depth {} exceeds the {} encoder layers",
            config.depth,
            ae.depth()
        )));
    }

    let hs = autoencoder::encode(x, &ae)?;
    let mut centers = init_centers(hs.last().expect("non-empty encoder"), config.n_clusters, config.kmeans_restarts, config.seed)?;
    centers.dof = config.dof;
    let dims = ae.layer_dims();
    let widths = GcnParams::widths_for(x.cols(), &dims[1..], config.depth, config.n_clusters)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(GCN_INIT_STREAM);
    let gcn = GcnParams::init(&widths, &mut rng)?;
    let mut params = ModelParams::new(ae, gcn, centers)?;

    let identity;
    let adj: &CsrMatrix = match config.variant {
        Variant::Mlp => {
            identity = CsrMatrix::identity(n);
            &identity
        }
        _ => graph.normalized(),
    };
    let eps = config.effective_epsilon();
    let weights = config.loss_weights();

    let mut adam = Adam::new(config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let inputs = ForwardInputs { x, adj, eps, weights };
        let (record, grads) = {
            let pass = forward(&params, inputs, None)?;
            let losses = pass.losses();
            if !losses.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!(
                        "non-finite loss: res={} clu={} gcn={} total={}",
                        losses.res, losses.clu, losses.gcn, losses.total
                    ),
                });
            }
            let mut record = EpochRecord::new(epoch, losses);
            if let Some(t) = truth {
                record.p = Some(Scores::compute(&hard_labels(&pass.p), t)?);
                record.q = Some(Scores::compute(&hard_labels(pass.q()), t)?);
                record.z = Some(Scores::compute(&hard_labels(pass.z()), t)?);
            }
            (record, pass.gradients()?)
        };
        if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite gradient for parameter tensor {idx}"),
            });
        }
        history.push(record);
        adam.step(&mut params.tensors_mut(), &grads);
    }

    let labels = {
        let pass = forward(&params, ForwardInputs { x, adj, eps, weights }, None)?;
        match config.variant {
            Variant::QOutput => hard_labels(pass.q()),
            _ => hard_labels(pass.z()),
        }
    };
    let scores = truth.map(|t| Scores::compute(&labels, t)).transpose()?;
    Ok(TrainOutcome {
        params,
        history,
        labels,
        scores,
        pretrain_losses,
    })
}

/// Trains `config` with its variant replaced by `variant`.
pub fn run_variant(
    variant: Variant,
    x: &DenseMatrix,
    graph: &SparseGraph,
    truth: Option<&Partition>,
    pretrained: Option<&AutoencoderParams>,
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    let config = TrainConfig {
        variant,
        ..config.clone()
    };
    Ok(train_sdcn(x, graph, truth, pretrained, &config)?.history)
}

/// Final scores for each delivery depth in `depths`.
pub fn depth_sweep(
    x: &DenseMatrix,
    graph: &SparseGraph,
    truth: &Partition,
    pretrained: Option<&AutoencoderParams>,
    config: &TrainConfig,
    depths: &[usize],
) -> Result<Vec<(usize, Scores)>> {
    depths
        .iter()
        .map(|&depth| {
            let config = TrainConfig {
                depth,
                ..config.clone()
            };
            let outcome = train_sdcn(x, graph, Some(truth), pretrained, &config)?;
            Ok((depth, outcome.scores.expect("truth was supplied")))
        })
        .collect()
}
