//! Experiment orchestration and report files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use sdcn::autoencoder::{self, AutoencoderParams};
use sdcn::gcn::Epsilon;
use sdcn::graph::{
    build_knn_graph, dot_product_similarity, heat_kernel_similarity, mean_sq_pairwise_distance, SparseGraph,
};
use sdcn::metrics::{Partition, Scores};
use sdcn::params_io;
use sdcn::trainer::{train_sdcn, EpochRecord, TrainConfig, TrainOutcome};
use sdcn::DenseMatrix;

use crate::config::{DataSource, ExperimentConfig, GraphSource, Similarity};
use crate::dataset::{load_dataset, write_labels, DatasetBundle};
use crate::error::{CliError, Result};
use crate::synth::make_synthetic;

pub const EPOCHS_FILE: &str = "epochs.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LABELS_FILE: &str = "labels.txt";
pub const PARAMS_FILE: &str = "params.bin";
pub const PRETRAINED_FILE: &str = "pretrained.bin";

pub const EPSILON_GRID: [f64; 7] = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
pub const KNN_GRID: [usize; 4] = [1, 3, 5, 10];
pub const DEPTH_GRID: [usize; 4] = [1, 2, 3, 4];

/// Loads or generates the configured dataset.
pub fn load_data(config: &ExperimentConfig) -> Result<DatasetBundle> {
    match &config.data {
        Some(DataSource::Dir(dir)) => load_dataset(dir),
        Some(DataSource::Synthetic { kind, params, seed }) => make_synthetic(*kind, params, *seed),
        None => Err(CliError::Config("no data: set dataset or synthetic".into())),
    }
}

/// KNN graph over the features with the configured similarity.
pub fn knn_graph(x: &DenseMatrix, k: usize, similarity: Similarity, heat_t: Option<f64>) -> Result<SparseGraph> {
    let s = match similarity {
        Similarity::Heat => {
            let t = heat_t.unwrap_or_else(|| mean_sq_pairwise_distance(x));
            heat_kernel_similarity(x, t.max(f64::MIN_POSITIVE))?
        }
        Similarity::Dot => dot_product_similarity(x),
    };
    Ok(build_knn_graph(&s, k.min(x.rows().saturating_sub(1)))?)
}

/// The graph the model propagates over.
pub fn select_graph(config: &ExperimentConfig, bundle: &DatasetBundle) -> Result<SparseGraph> {
    match config.graph_source {
        GraphSource::Knn => knn_graph(&bundle.features, config.knn_k, config.similarity, config.heat_t),
        GraphSource::File => bundle
            .graph
            .clone()
            .ok_or_else(|| CliError::Config(format!("graph_source = file but {} has no graph", bundle.name))),
    }
}

/// Training settings with the cluster count filled in.
pub fn train_config(config: &ExperimentConfig, bundle: &DatasetBundle) -> Result<TrainConfig> {
    let n_clusters = match (config.n_clusters, &bundle.labels) {
        (Some(k), _) => k,
        (None, Some(l)) => l.num_clusters(),
        (None, None) => return Err(CliError::Config("n_clusters is required for unlabeled data".into())),
    };
    Ok(TrainConfig {
        n_clusters,
        ..config.train.clone()
    })
}

/// Loads the configured pretrained autoencoder or trains one.
pub fn pretrained_autoencoder(config: &ExperimentConfig, x: &DenseMatrix) -> Result<AutoencoderParams> {
    match &config.pretrained {
        Some(path) => Ok(params_io::load_autoencoder(path)?),
        None => Ok(autoencoder::pretrain(x, &config.train.hidden, &config.train.pretrain_config())?.params),
    }
}

/// Pretrains on the configured data and writes `pretrained.bin` into `out`.
pub fn run_pretrain(config: &ExperimentConfig) -> Result<PathBuf> {
    let bundle = load_data(config)?;
    let report = autoencoder::pretrain(&bundle.features, &config.train.hidden, &config.train.pretrain_config())?;
    fs::create_dir_all(&config.out)?;
    let path = config.out.join(PRETRAINED_FILE);
    params_io::save_autoencoder(&path, &report.params)?;
    Ok(path)
}

/// Final report of one training run. Contains no paths or timings, so equal
/// runs produce equal files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: String,
    pub n_samples: usize,
    pub n_clusters: usize,
    pub graph_edges: usize,
    pub variant: String,
    pub seed: u64,
    pub epochs: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub depth: usize,
    pub layer_dims: Vec<usize>,
    pub final_losses: Option<EpochRecord>,
    pub scores: Option<Scores>,
    pub cluster_sizes: Vec<usize>,
}

pub fn summarize(bundle: &DatasetBundle, graph: &SparseGraph, cfg: &TrainConfig, outcome: &TrainOutcome) -> Summary {
    let mut sizes = vec![0; cfg.n_clusters];
    for &l in outcome.labels.labels() {
        if l >= sizes.len() {
            sizes.resize(l + 1, 0);
        }
        sizes[l] += 1;
    }
    Summary {
        dataset: bundle.name.clone(),
        n_samples: bundle.n_samples(),
        n_clusters: cfg.n_clusters,
        graph_edges: graph.edge_count(),
        variant: cfg.variant.to_string(),
        seed: cfg.seed,
        epochs: cfg.epochs,
        epsilon: cfg.effective_epsilon().get(),
        alpha: cfg.alpha,
        beta: cfg.beta,
        depth: cfg.depth,
        layer_dims: outcome.params.ae.layer_dims(),
        final_losses: outcome.history.last().cloned(),
        scores: outcome.scores,
        cluster_sizes: sizes,
    }
}

pub fn write_epochs(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for record in history {
        serde_json::to_writer(&mut f, record)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_epochs(path: &Path) -> Result<Vec<EpochRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Runs pretraining (or loads it) and joint training, then writes
/// `epochs.jsonl`, `summary.json`, `labels.txt` and `params.bin` into the
/// output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    let bundle = load_data(config)?;
    let graph = select_graph(config, &bundle)?;
    let cfg = train_config(config, &bundle)?;
    let pretrained = config
        .pretrained
        .as_ref()
        .map(params_io::load_autoencoder)
        .transpose()?;
    let outcome = train_sdcn(&bundle.features, &graph, bundle.labels.as_ref(), pretrained.as_ref(), &cfg)?;

    let out = &config.out;
    fs::create_dir_all(out)?;
    write_epochs(&out.join(EPOCHS_FILE), &outcome.history)?;
    write_labels(&out.join(LABELS_FILE), &outcome.labels)?;
    params_io::save_model(out.join(PARAMS_FILE), &outcome.params)?;
    let summary = summarize(&bundle, &graph, &cfg, &outcome);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(out.join(SUMMARY_FILE), text)?;
    Ok(summary)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Epsilon,
    KnnK,
    Depth,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Epsilon => "epsilon",
            SweepKind::KnnK => "knn_k",
            SweepKind::Depth => "depth",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(SweepKind::Epsilon),
            "knn_k" | "knn-k" => Ok(SweepKind::KnnK),
            "depth" => Ok(SweepKind::Depth),
            other => Err(CliError::Config(format!(
                "unknown sweep {other:?} (expected epsilon, knn_k or depth)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: f64,
    pub scores: Scores,
}

/// Tab-separated table: a `# kind` line, a header, then one row per setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
}

const TABLE_HEADER: &str = "setting\tacc\tnmi\tari\tf1";

impl SweepTable {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# {}\n{TABLE_HEADER}\n", self.kind);
        for r in &self.rows {
            let s = r.scores;
            out.push_str(&format!("{:?}\t{:?}\t{:?}\t{:?}\t{:?}\n", r.setting, s.acc, s.nmi, s.ari, s.f1));
        }
        out
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let kind = match lines.next() {
            Some((_, l)) if l.starts_with("# ") => l[2..].trim().parse()?,
            _ => return Err(CliError::format(path, 1, "expected '# <sweep kind>'")),
        };
        match lines.next() {
            Some((_, l)) if l.trim() == TABLE_HEADER => {}
            _ => return Err(CliError::format(path, 2, "missing table header")),
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split('\t')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CliError::format(path, idx + 1, e.to_string()))?;
            let [setting, acc, nmi, ari, f1] = nums[..] else {
                return Err(CliError::format(path, idx + 1, format!("expected 5 columns, found {}", nums.len())));
            };
            rows.push(SweepRow {
                setting,
                scores: Scores { acc, nmi, ari, f1 },
            });
        }
        Ok(Self { kind, rows })
    }
}

/// Trains once per grid point and tabulates the final scores. The
/// autoencoder is pretrained once and shared across points.
pub fn sweep(kind: SweepKind, config: &ExperimentConfig) -> Result<SweepTable> {
    let bundle = load_data(config)?;
    let truth = bundle
        .labels
        .clone()
        .ok_or_else(|| CliError::Config("sweeps need ground-truth labels".into()))?;
    let base = train_config(config, &bundle)?;
    let ae = pretrained_autoencoder(config, &bundle.features)?;
    let run = |graph: &SparseGraph, cfg: &TrainConfig| -> Result<Scores> {
        let outcome = train_sdcn(&bundle.features, graph, Some(&truth), Some(&ae), cfg)?;
        Ok(outcome.scores.expect("truth was supplied"))
    };

    let mut rows = Vec::new();
    match kind {
        SweepKind::Epsilon => {
            let graph = select_graph(config, &bundle)?;
            for eps in EPSILON_GRID {
                let cfg = TrainConfig {
                    epsilon: Epsilon::new(eps)?,
                    ..base.clone()
                };
                rows.push(SweepRow { setting: eps, scores: run(&graph, &cfg)? });
            }
        }
        SweepKind::KnnK => {
            for k in KNN_GRID {
                let graph = knn_graph(&bundle.features, k, config.similarity, config.heat_t)?;
                rows.push(SweepRow { setting: k as f64, scores: run(&graph, &base)? });
            }
        }
        SweepKind::Depth => {
            let graph = select_graph(config, &bundle)?;
            for depth in DEPTH_GRID.into_iter().filter(|&d| d <= ae.depth()) {
                let cfg = TrainConfig { depth, ..base.clone() };
                rows.push(SweepRow { setting: depth as f64, scores: run(&graph, &cfg)? });
            }
        }
    }
    let table = SweepTable { kind, rows };
    fs::create_dir_all(&config.out)?;
    fs::write(config.out.join(format!("sweep_{kind}.tsv")), table.to_tsv())?;
    Ok(table)
}

/// Scores of a predicted label file against a ground-truth label file.
pub fn evaluate_files(pred: &Path, truth: &Path) -> Result<Scores> {
    let p = crate::dataset::read_labels(pred)?;
    let t = crate::dataset::read_labels(truth)?;
    if p.len() != t.len() {
        return Err(CliError::Config(format!(
            "{} has {} labels but {} has {}",
            pred.display(),
            p.len(),
            truth.display(),
            t.len()
        )));
    }
    Ok(Scores::compute(&p, &t)?)
}

/// Convenience for callers holding labels in memory.
pub fn evaluate(pred: &Partition, truth: &Partition) -> Result<Scores> {
    Ok(Scores::compute(pred, truth)?)
}
