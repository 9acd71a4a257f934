//! Deterministic synthetic datasets.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use sdcn::graph::{build_knn_graph, heat_kernel_similarity, mean_sq_pairwise_distance, SparseGraph};
use sdcn::metrics::Partition;
use sdcn::DenseMatrix;

use crate::dataset::DatasetBundle;
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Isotropic Gaussian clusters, no graph.
    Blobs,
    /// Two interleaved half circles with a KNN graph over the points.
    TwoMoonsGraph,
    /// Stochastic block model graph with block-correlated features.
    Sbm,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Blobs => "blobs",
            SynthKind::TwoMoonsGraph => "two-moons-graph",
            SynthKind::Sbm => "sbm",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(SynthKind::Blobs),
            "two-moons-graph" | "two-moons" => Ok(SynthKind::TwoMoonsGraph),
            "sbm" => Ok(SynthKind::Sbm),
            other => Err(CliError::Config(format!(
                "unknown synthetic dataset {other:?} (expected blobs, two-moons-graph or sbm)"
            ))),
        }
    }
}

/// Generator parameters; each kind reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub clusters: usize,
    pub per_cluster: usize,
    pub dim: usize,
    /// Blob spread, or the coordinate noise of the moons.
    pub sigma: f64,
    pub p_in: f64,
    pub p_out: f64,
    /// Feature noise around each SBM block mean.
    pub noise: f64,
    /// Neighbors per node for the moons graph.
    pub knn_k: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            clusters: 3,
            per_cluster: 100,
            dim: 16,
            sigma: 0.1,
            p_in: 0.2,
            p_out: 0.02,
            noise: 1.0,
            knn_k: 5,
        }
    }
}

impl SynthParams {
    fn validate(&self, kind: SynthKind) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(format!("{kind}: {m}")));
        if self.per_cluster == 0 || self.dim == 0 {
            return bad("per_cluster and dim must be >= 1");
        }
        if kind != SynthKind::TwoMoonsGraph && self.clusters == 0 {
            return bad("clusters must be >= 1");
        }
        if !(self.sigma >= 0.0 && self.noise >= 0.0) {
            return bad("sigma and noise must be >= 0");
        }
        if !((0.0..=1.0).contains(&self.p_in) && (0.0..=1.0).contains(&self.p_out)) {
            return bad("p_in and p_out must lie in [0, 1]");
        }
        Ok(())
    }
}

pub fn make_synthetic(kind: SynthKind, params: &SynthParams, seed: u64) -> Result<DatasetBundle> {
    params.validate(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = format!("{kind}-seed{seed}");
    match kind {
        SynthKind::Blobs => {
            let (x, labels) = gaussian_clusters(&mut rng, params.clusters, params.per_cluster, params.dim, params.sigma);
            DatasetBundle::new(name, x, Some(labels), None)
        }
        SynthKind::Sbm => {
            let (x, labels) = gaussian_clusters(&mut rng, params.clusters, params.per_cluster, params.dim, params.noise);
            let graph = block_model(&mut rng, labels.labels(), params.p_in, params.p_out)?;
            DatasetBundle::new(name, x, Some(labels), Some(graph))
        }
        SynthKind::TwoMoonsGraph => {
            let (x, labels) = two_moons(&mut rng, params.per_cluster, params.dim, params.sigma);
            let s = heat_kernel_similarity(&x, mean_sq_pairwise_distance(&x).max(f64::MIN_POSITIVE))?;
            let graph = build_knn_graph(&s, params.knn_k.min(x.rows().saturating_sub(1)))?;
            DatasetBundle::new(name, x, Some(labels), Some(graph))
        }
    }
}

/// Cluster means drawn from a standard normal, samples at `mean + N(0, spread²)`.
fn gaussian_clusters(
    rng: &mut ChaCha8Rng,
    clusters: usize,
    per_cluster: usize,
    dim: usize,
    spread: f64,
) -> (DenseMatrix, Partition) {
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let means: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| unit.sample(rng)).collect())
        .collect();
    let mut data = Vec::with_capacity(clusters * per_cluster * dim);
    let mut labels = Vec::with_capacity(clusters * per_cluster);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_cluster {
            data.extend(mean.iter().map(|m| m + spread * unit.sample(rng)));
            labels.push(c);
        }
    }
    let x = DenseMatrix::from_vec(clusters * per_cluster, dim, data).expect("sizes agree");
    (x, Partition::new(labels))
}

fn block_model(rng: &mut ChaCha8Rng, blocks: &[usize], p_in: f64, p_out: f64) -> Result<SparseGraph> {
    let n = blocks.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if blocks[i] == blocks[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    Ok(SparseGraph::from_edges(n, pairs)?)
}

/// Two half circles in the first two coordinates; any further coordinates
/// carry pure noise.
fn two_moons(rng: &mut ChaCha8Rng, per_moon: usize, dim: usize, sigma: f64) -> (DenseMatrix, Partition) {
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let dim = dim.max(2);
    let mut data = Vec::with_capacity(2 * per_moon * dim);
    let mut labels = Vec::with_capacity(2 * per_moon);
    for moon in 0..2 {
        for i in 0..per_moon {
            let t = std::f64::consts::PI * i as f64 / (per_moon.max(2) - 1) as f64;
            let (x, y) = if moon == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            data.push(x + sigma * unit.sample(rng));
            data.push(y + sigma * unit.sample(rng));
            data.extend((2..dim).map(|_| sigma * unit.sample(rng)));
            labels.push(moon);
        }
    }
    let x = DenseMatrix::from_vec(2 * per_moon, dim, data).expect("sizes agree");
    (x, Partition::new(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse() {
        for k in [SynthKind::Blobs, SynthKind::TwoMoonsGraph, SynthKind::Sbm] {
            assert_eq!(k.name().parse::<SynthKind>().unwrap(), k);
        }
        assert!("spiral".parse::<SynthKind>().is_err());
    }

    #[test]
    fn blob_shapes() {
        let b = make_synthetic(SynthKind::Blobs, &SynthParams::default(), 0).unwrap();
        assert_eq!(b.features.shape(), (300, 16));
        assert_eq!(b.labels.as_ref().unwrap().num_clusters(), 3);
        assert!(b.graph.is_none());
    }

    #[test]
    fn sbm_is_modular() {
        let params = SynthParams {
            per_cluster: 50,
            ..SynthParams::default()
        };
        let b = make_synthetic(SynthKind::Sbm, &params, 1).unwrap();
        let labels = b.labels.unwrap();
        let g = b.graph.unwrap();
        let inside = g
            .edges()
            .iter()
            .filter(|(i, j)| labels.labels()[*i] == labels.labels()[*j])
            .count();
        assert!(inside as f64 > 0.7 * g.edge_count() as f64, "{inside}/{}", g.edge_count());
    }

    #[test]
    fn moons_have_a_graph() {
        let params = SynthParams {
            per_cluster: 40,
            dim: 2,
            ..SynthParams::default()
        };
        let b = make_synthetic(SynthKind::TwoMoonsGraph, &params, 2).unwrap();
        assert_eq!(b.features.shape(), (80, 2));
        assert!(b.graph.unwrap().edge_count() >= 80 * 5 / 2);
    }

    #[test]
    fn invalid_probability_is_rejected() {
        let params = SynthParams {
            p_in: 1.5,
            ..SynthParams::default()
        };
        assert!(make_synthetic(SynthKind::Sbm, &params, 0).is_err());
    }
}
