//! Flat `key = value` experiment configuration.
//!
//! Values resolve in three layers: built-in defaults, then the config file,
//! then command-line flags. Unknown keys are errors in every layer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use sdcn::gcn::Epsilon;
use sdcn::trainer::{TrainConfig, Variant};

use crate::error::{CliError, Result};
use crate::synth::{SynthKind, SynthParams};

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "dataset",
    "synthetic",
    "synth_clusters",
    "synth_per_cluster",
    "synth_dim",
    "synth_sigma",
    "synth_p_in",
    "synth_p_out",
    "synth_noise",
    "synth_knn_k",
    "synth_seed",
    "graph_source",
    "knn_k",
    "similarity",
    "heat_t",
    "pretrained",
    "out",
    "epochs",
    "lr",
    "alpha",
    "beta",
    "epsilon",
    "n_clusters",
    "seed",
    "variant",
    "hidden",
    "depth",
    "dof",
    "kmeans_restarts",
    "pretrain_epochs",
    "pretrain_batch_size",
    "pretrain_lr",
];

/// One layer of raw settings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigLayer {
    values: BTreeMap<String, String>,
}

impl ConfigLayer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut layer = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::format(path, idx + 1, format!("expected key = value, got {line:?}")));
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(CliError::UnknownKey {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    key: key.to_string(),
                });
            }
            layer.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(layer)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(CliError::UnknownKey {
                path: PathBuf::from("<command line>"),
                line: 0,
                key: key.to_string(),
            });
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// `other` wins on shared keys.
    pub fn overlay(&mut self, other: &ConfigLayer) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphSource {
    Knn,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    Heat,
    Dot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Dir(PathBuf),
    Synthetic { kind: SynthKind, params: SynthParams, seed: u64 },
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Dir(p) => write!(f, "{}", p.display()),
            DataSource::Synthetic { kind, seed, .. } => write!(f, "{kind} (seed {seed})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: Option<DataSource>,
    pub graph_source: GraphSource,
    pub knn_k: usize,
    pub similarity: Similarity,
    /// Heat-kernel bandwidth; `None` uses the mean squared pairwise distance.
    pub heat_t: Option<f64>,
    pub pretrained: Option<PathBuf>,
    pub out: PathBuf,
    /// `None` infers the count from the ground-truth labels.
    pub n_clusters: Option<usize>,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            graph_source: GraphSource::Knn,
            knn_k: 5,
            similarity: Similarity::Heat,
            heat_t: None,
            pretrained: None,
            out: PathBuf::from("out"),
            n_clusters: None,
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| CliError::BadValue {
        key: key.to_string(),
        message: format!("{value:?}: {e}"),
    })
}

impl ExperimentConfig {
    /// Defaults, then `file`, then `flags`.
    pub fn resolve(file: Option<&ConfigLayer>, flags: &ConfigLayer) -> Result<Self> {
        let mut merged = ConfigLayer::new();
        if let Some(f) = file {
            merged.overlay(f);
        }
        merged.overlay(flags);
        Self::from_layer(&merged)
    }

    /// Reads the optional config file and applies `flags` on top.
    pub fn load(path: Option<&Path>, flags: &ConfigLayer) -> Result<Self> {
        let file = path.map(ConfigLayer::read).transpose()?;
        Self::resolve(file.as_ref(), flags)
    }

    pub fn from_layer(layer: &ConfigLayer) -> Result<Self> {
        let mut c = Self::default();
        let mut synth = SynthParams::default();
        let mut synth_kind = None;
        let mut synth_seed = 0;
        let t = &mut c.train;
        for (key, value) in &layer.values {
            let (k, v) = (key.as_str(), value.as_str());
            match k {
                "dataset" => c.data = Some(DataSource::Dir(PathBuf::from(v))),
                "synthetic" => synth_kind = Some(parse::<SynthKind>(k, v)?),
                "synth_clusters" => synth.clusters = parse(k, v)?,
                "synth_per_cluster" => synth.per_cluster = parse(k, v)?,
                "synth_dim" => synth.dim = parse(k, v)?,
                "synth_sigma" => synth.sigma = parse(k, v)?,
                "synth_p_in" => synth.p_in = parse(k, v)?,
                "synth_p_out" => synth.p_out = parse(k, v)?,
                "synth_noise" => synth.noise = parse(k, v)?,
                "synth_knn_k" => synth.knn_k = parse(k, v)?,
                "synth_seed" => synth_seed = parse(k, v)?,
                "graph_source" => {
                    c.graph_source = match v {
                        "knn" => GraphSource::Knn,
                        "file" => GraphSource::File,
                        _ => return Err(bad(k, v, "expected knn or file")),
                    }
                }
                "knn_k" => c.knn_k = parse(k, v)?,
                "similarity" => {
                    c.similarity = match v {
                        "heat" => Similarity::Heat,
                        "dot" => Similarity::Dot,
                        _ => return Err(bad(k, v, "expected heat or dot")),
                    }
                }
                "heat_t" => c.heat_t = Some(parse(k, v)?),
                "pretrained" => c.pretrained = Some(PathBuf::from(v)),
                "out" => c.out = PathBuf::from(v),
                "epochs" => t.epochs = parse(k, v)?,
                "lr" => t.lr = parse(k, v)?,
                "alpha" => t.alpha = parse(k, v)?,
                "beta" => t.beta = parse(k, v)?,
                "epsilon" => t.epsilon = Epsilon::new(parse(k, v)?).map_err(|e| bad(k, v, &e.to_string()))?,
                "n_clusters" => c.n_clusters = Some(parse(k, v)?),
                "seed" => t.seed = parse(k, v)?,
                "variant" => t.variant = parse::<Variant>(k, v)?,
                "hidden" => {
                    t.hidden = v
                        .split(',')
                        .map(|w| parse::<usize>(k, w.trim()))
                        .collect::<Result<_>>()?;
                }
                "depth" => t.depth = parse(k, v)?,
                "dof" => t.dof = parse(k, v)?,
                "kmeans_restarts" => t.kmeans_restarts = parse(k, v)?,
                "pretrain_epochs" => t.pretrain_epochs = parse(k, v)?,
                "pretrain_batch_size" => t.pretrain_batch_size = parse(k, v)?,
                "pretrain_lr" => t.pretrain_lr = parse(k, v)?,
                other => unreachable!("key {other} passed validation"),
            }
        }
        if let Some(kind) = synth_kind {
            if matches!(c.data, Some(DataSource::Dir(_))) {
                return Err(CliError::Config("set either dataset or synthetic, not both".into()));
            }
            c.data = Some(DataSource::Synthetic {
                kind,
                params: synth,
                seed: synth_seed,
            });
        }
        if c.knn_k == 0 {
            return Err(bad("knn_k", "0", "must be >= 1"));
        }
        Ok(c)
    }
}

fn bad(key: &str, value: &str, message: &str) -> CliError {
    CliError::BadValue {
        key: key.to_string(),
        message: format!("{value:?}: {message}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_names_the_key_and_line() {
        let err = ConfigLayer::parse("seed = 1\nlearning_rate = 0.1\n", Path::new("run.conf")).unwrap_err();
        match err {
            CliError::UnknownKey { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "learning_rate");
            }
            other => panic!("{other:?}"),
        }
        assert!(err_text("learning_rate = 1").contains("learning_rate"));
    }

    fn err_text(text: &str) -> String {
        ConfigLayer::parse(text, Path::new("c")).unwrap_err().to_string()
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file = ConfigLayer::parse("seed = 7\nepochs = 12\n# comment\nlr = 0.01 # trailing\n", Path::new("c")).unwrap();
        let mut flags = ConfigLayer::new();
        flags.set("seed", "9").unwrap();
        let c = ExperimentConfig::resolve(Some(&file), &flags).unwrap();
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.train.epochs, 12);
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.train.alpha, TrainConfig::default().alpha);
    }

    #[test]
    fn values_are_typed() {
        let text = "hidden = 32, 16,4\ndepth = 2\nvariant = no-delivery\nepsilon = 0.3\nsynthetic = sbm\nsynth_p_in = 0.3\ngraph_source = file\n";
        let c = ExperimentConfig::from_layer(&ConfigLayer::parse(text, Path::new("c")).unwrap()).unwrap();
        assert_eq!(c.train.hidden, vec![32, 16, 4]);
        assert_eq!(c.train.variant, Variant::NoDelivery);
        assert_eq!(c.train.epsilon.get(), 0.3);
        assert_eq!(c.graph_source, GraphSource::File);
        match c.data {
            Some(DataSource::Synthetic { kind, params, .. }) => {
                assert_eq!(kind, SynthKind::Sbm);
                assert_eq!(params.p_in, 0.3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_are_reported() {
        for text in ["epsilon = 1.5", "variant = deep", "epochs = many", "graph_source = web", "seed 3"] {
            let layer = ConfigLayer::parse(text, Path::new("c"));
            assert!(layer.and_then(|l| ExperimentConfig::from_layer(&l)).is_err(), "{text}");
        }
    }

    #[test]
    fn unknown_flag_key_is_rejected() {
        assert!(ConfigLayer::new().set("sed", "1").is_err());
    }
}
