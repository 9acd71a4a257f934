//! Randomized numerical checks of the propagation identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use sdcn::gcn::Epsilon;
use sdcn::graph::SparseGraph;
use sdcn::probes::{probe_second_order_bound, probe_unrolled_propagation, smoothing_curve};
use sdcn::DenseMatrix;

use crate::error::Result;

pub const EPSILONS: [f64; 4] = [0.0, 0.25, 0.5, 1.0];
/// Slack allowed on the distance bound.
pub const BOUND_SLACK: f64 = 1e-9;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Erdős–Rényi graph with edge probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> SparseGraph {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    SparseGraph::from_edges(n, pairs).expect("indices in range")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub unrolled_cases: usize,
    pub unrolled_max_diff: f64,
    pub bound_cases: usize,
    pub bound_violations: usize,
    /// Mean pairwise distance at depth 4 with `ε = 0.5` over that with `ε = 0`.
    pub smoothing_ratio: f64,
}

/// Unrolled-identity residual over `graphs` random graphs, every depth 1–4
/// and every `ε` in [`EPSILONS`].
pub fn unrolled_check(seed: u64, graphs: usize) -> Result<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0;
    let mut worst = 0.0f64;
    for _ in 0..graphs {
        let n = rng.random_range(2..=16);
        let d = rng.random_range(1..=4);
        let density = rng.random_range(0.1..0.6);
        let g = random_graph(&mut rng, n, density);
        let x = random_matrix(&mut rng, n, d);
        let hs: Vec<DenseMatrix> = (0..4).map(|_| random_matrix(&mut rng, n, d)).collect();
        for layers in 1..=4 {
            for eps in EPSILONS {
                let p = probe_unrolled_propagation(&x, &hs, g.normalized(), Epsilon::new(eps)?, layers)?;
                worst = worst.max(p.max_abs_diff);
                cases += 1;
            }
        }
    }
    Ok((cases, worst))
}

/// Distance-bound violations over `graphs` random graphs, all node pairs.
pub fn bound_check(seed: u64, graphs: usize) -> Result<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0;
    let mut violations = 0;
    for _ in 0..graphs {
        let n = rng.random_range(2..=12);
        let density = rng.random_range(0.1..0.7);
        let g = random_graph(&mut rng, n, density);
        let d = rng.random_range(1..=5);
        let h = random_matrix(&mut rng, n, d);
        for i in 0..n {
            for j in (i + 1)..n {
                let p = probe_second_order_bound(&h, &g, i, j)?;
                cases += 1;
                if p.distance > p.bound + BOUND_SLACK {
                    violations += 1;
                }
            }
        }
    }
    Ok((cases, violations))
}

/// Block-model graph resampled until connected.
pub fn connected_sbm(rng: &mut ChaCha8Rng, blocks: usize, per_block: usize, p_in: f64, p_out: f64) -> SparseGraph {
    let labels: Vec<usize> = (0..blocks * per_block).map(|i| i / per_block).collect();
    loop {
        let n = labels.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if labels[i] == labels[j] { p_in } else { p_out };
                if rng.random::<f64>() < p {
                    pairs.push((i, j));
                }
            }
        }
        let g = SparseGraph::from_edges(n, pairs).expect("indices in range");
        if g.is_connected() {
            return g;
        }
    }
}

/// Depth-4 mean pairwise distance with `ε = 0.5` over that with `ε = 0`,
/// identity weights, on a connected 3×50 block graph (`p_in = 0.2`,
/// `p_out = 0.02`). `X` and each delivered `H^(ℓ)` are independent random
/// matrices.
pub fn smoothing_ratio(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = connected_sbm(&mut rng, 3, 50, 0.2, 0.02);
    let x = random_matrix(&mut rng, 150, 16);
    let hs: Vec<DenseMatrix> = (0..4).map(|_| random_matrix(&mut rng, 150, 16)).collect();
    depth4_ratio(&g, &x, &hs)
}

/// Same graph family, but `X` holds noisy block means and is delivered as
/// every `H^(ℓ)`, so the representations share the graph's block structure.
pub fn smoothing_ratio_block_features(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = connected_sbm(&mut rng, 3, 50, 0.2, 0.02);
    let means = random_matrix(&mut rng, 3, 16);
    let noise = random_matrix(&mut rng, 150, 16);
    let x = DenseMatrix::from_fn(150, 16, |i, j| means[(i / 50, j)] + noise[(i, j)]);
    depth4_ratio(&g, &x, &vec![x.clone(); 4])
}

fn depth4_ratio(g: &SparseGraph, x: &DenseMatrix, hs: &[DenseMatrix]) -> Result<f64> {
    let with = smoothing_curve(x, hs, g.normalized(), Epsilon::HALF)?;
    let without = smoothing_curve(x, hs, g.normalized(), Epsilon::ZERO)?;
    Ok(with[3] / without[3])
}

pub fn run_probes(seed: u64) -> Result<ProbeReport> {
    let (unrolled_cases, unrolled_max_diff) = unrolled_check(seed, 20)?;
    let (bound_cases, bound_violations) = bound_check(seed.wrapping_add(1), 100)?;
    Ok(ProbeReport {
        unrolled_cases,
        unrolled_max_diff,
        bound_cases,
        bound_violations,
        smoothing_ratio: smoothing_ratio(seed)?,
    })
}
