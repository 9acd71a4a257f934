//! External clustering metrics: accuracy under the best cluster-to-class
//! mapping, NMI, ARI and macro-F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cluster labels, one per sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One past the largest label.
    pub fn num_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Relabels clusters by first appearance so ids are dense in `0..k`.
    pub fn compact(&self) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Self { labels }
    }
}

impl From<Vec<usize>> for Partition {
    fn from(labels: Vec<usize>) -> Self {
        Self::new(labels)
    }
}

/// The four reported scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

impl Scores {
    pub fn compute(pred: &Partition, truth: &Partition) -> Result<Self> {
        Ok(Self {
            acc: accuracy(pred, truth)?,
            nmi: nmi(pred, truth)?,
            ari: ari(pred, truth)?,
            f1: macro_f1(pred, truth)?,
        })
    }
}

/// `table[p][t]` counts samples with predicted cluster `p` and class `t`.
#[derive(Clone, Debug)]
pub struct Contingency {
    pub table: Vec<Vec<usize>>,
    pub n: usize,
}

impl Contingency {
    pub fn new(pred: &Partition, truth: &Partition) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::param(format!(
                "partition length mismatch: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::param("empty partition"));
        }
        let mut table = vec![vec![0; truth.num_clusters()]; pred.num_clusters()];
        for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
            table[p][t] += 1;
        }
        Ok(Self {
            table,
            n: pred.len(),
        })
    }

    fn row_sums(&self) -> Vec<usize> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<usize> {
        let cols = self.table.first().map_or(0, Vec::len);
        (0..cols)
            .map(|c| self.table.iter().map(|r| r[c]).sum())
            .collect()
    }
}

/// Maps each predicted cluster id to a class id so the number of agreeing
/// samples is maximal (Hungarian method on the contingency table).
///
/// When there are more clusters than classes, the surplus clusters map to
/// ids `>= truth.num_clusters()`, which match no sample.
pub fn best_mapping(pred: &Partition, truth: &Partition) -> Result<Vec<usize>> {
    let c = Contingency::new(pred, truth)?;
    let size = c.table.len().max(c.table[0].len());
    let mut cost = vec![vec![0i64; size]; size];
    for (p, row) in c.table.iter().enumerate() {
        for (t, &count) in row.iter().enumerate() {
            cost[p][t] = -(count as i64);
        }
    }
    let assignment = hungarian(&cost);
    Ok(assignment[..c.table.len()].to_vec())
}

/// Minimum-cost perfect assignment on a square matrix; returns the column
/// assigned to each row. Shortest augmenting path with potentials, O(n³).
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based internally; column 0 is a sentinel
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = row_of_col[col0];
            let mut delta = INF;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r - 1][col - 1] - u[r] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of_col[col0] = row_of_col[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if row_of_col[col] > 0 {
            assignment[row_of_col[col] - 1] = col - 1;
        }
    }
    assignment
}

fn mapped(pred: &Partition, truth: &Partition) -> Result<Vec<usize>> {
    let map = best_mapping(pred, truth)?;
    Ok(pred.labels.iter().map(|&p| map[p]).collect())
}

/// Fraction of samples whose mapped cluster equals their class.
pub fn accuracy(pred: &Partition, truth: &Partition) -> Result<f64> {
    let m = mapped(pred, truth)?;
    let hits = m.iter().zip(&truth.labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

fn entropy_of_counts(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `I(U;V) / ((H(U) + H(V)) / 2)`.
///
/// When one side is a single cluster and the other is not, the score is 0;
/// when both are single clusters it is 1.
pub fn nmi(pred: &Partition, truth: &Partition) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let (rows, cols) = (c.row_sums(), c.col_sums());
    let hu = entropy_of_counts(&rows, c.n);
    let hv = entropy_of_counts(&cols, c.n);
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    let n = c.n as f64;
    let mut mi = 0.0;
    for (p, row) in c.table.iter().enumerate() {
        for (t, &count) in row.iter().enumerate() {
            if count > 0 {
                let nij = count as f64;
                mi += nij / n * (n * nij / (rows[p] as f64 * cols[t] as f64)).ln();
            }
        }
    }
    Ok((mi / ((hu + hv) / 2.0)).clamp(0.0, 1.0))
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from the contingency table.
pub fn ari(pred: &Partition, truth: &Partition) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let index: f64 = c.table.iter().flatten().map(|&v| comb2(v)).sum();
    let sum_rows: f64 = c.row_sums().into_iter().map(comb2).sum();
    let sum_cols: f64 = c.col_sums().into_iter().map(comb2).sum();
    let total = comb2(c.n);
    let expected = if total > 0.0 { sum_rows * sum_cols / total } else { 0.0 };
    let max_index = (sum_rows + sum_cols) / 2.0;
    let denom = max_index - expected;
    if denom == 0.0 {
        // both partitions trivial (all-in-one or all-singletons) and equal
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Macro-averaged F1 after the best mapping, over every label that appears
/// among the classes or the mapped predictions.
pub fn macro_f1(pred: &Partition, truth: &Partition) -> Result<f64> {
    let m = mapped(pred, truth)?;
    let labels = m
        .iter()
        .chain(&truth.labels)
        .copied()
        .collect::<std::collections::BTreeSet<_>>();
    let mut total = 0.0;
    for &l in &labels {
        let tp = m
            .iter()
            .zip(&truth.labels)
            .filter(|&(&a, &b)| a == l && b == l)
            .count() as f64;
        let predicted = m.iter().filter(|&&a| a == l).count() as f64;
        let actual = truth.labels.iter().filter(|&&b| b == l).count() as f64;
        let denom = predicted + actual;
        if denom > 0.0 {
            total += 2.0 * tp / denom;
        }
    }
    Ok(total / labels.len() as f64)
}
