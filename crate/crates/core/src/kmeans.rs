//! Lloyd's k-means with k-means++ seeding and best-of-`restarts` selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::Partition;
use crate::tensor::DenseMatrix;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub centers: DenseMatrix,
    pub partition: Partition,
    /// Sum of squared distances of samples to their centers.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs `restarts` seeded k-means fits and keeps the lowest inertia.
///
/// Restart `r` draws from stream `r` of a ChaCha generator keyed by `seed`,
/// so results do not depend on execution order. A cluster that loses all its
/// points is re-seeded at the sample farthest from its current center.
pub fn kmeans(x: &DenseMatrix, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::param(format!("k-means needs 1 <= k <= N, got k={k}, N={n}")));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let fit = lloyd(x, plus_plus_init(x, k, &mut rng));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_init(x: &DenseMatrix, k: usize, rng: &mut impl Rng) -> DenseMatrix {
    let n = x.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // all remaining points coincide with a chosen center
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

fn assign(x: &DenseMatrix, centers: &DenseMatrix) -> (Vec<usize>, Vec<f64>) {
    (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..centers.rows() {
                let d = sq_dist(row, centers.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

fn lloyd(x: &DenseMatrix, mut centers: DenseMatrix) -> KMeansResult {
    let (k, dim) = centers.shape();
    let (mut labels, mut dists) = assign(x, &centers);
    for _ in 0..MAX_ITERATIONS {
        let mut sums = DenseMatrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums.row_mut(l).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                let far = dists
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map_or(0, |(i, _)| i);
                centers.row_mut(c).copy_from_slice(x.row(far));
                dists[far] = 0.0;
            }
        }
        let (next, next_dists) = assign(x, &centers);
        let changed = next != labels;
        labels = next;
        dists = next_dists;
        if !changed {
            break;
        }
    }
    KMeansResult {
        centers,
        partition: Partition::new(labels),
        inertia: dists.iter().sum(),
    }
}
