//! Dual self-supervision: Student-t soft assignments `Q`, the sharpened
//! target distribution `P`, and the KL objectives that pull both the
//! autoencoder assignments `Q` and the GCN predictions `Z` toward `P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Partition;
use crate::tape::PROB_FLOOR;
use crate::tensor::{row_argmax, DenseMatrix};

/// Default loss weight on `KL(P‖Q)`.
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Default loss weight on `KL(P‖Z)`.
pub const DEFAULT_BETA: f64 = 0.01;

/// Cluster centers in embedding space and the Student-t degrees of freedom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterCenters {
    pub centers: DenseMatrix,
    pub dof: f64,
}

impl ClusterCenters {
    pub fn new(centers: DenseMatrix, dof: f64) -> Result<Self> {
        if centers.rows() == 0 {
            return Err(Error::param("at least one cluster center is required"));
        }
        if !(dof > 0.0 && dof.is_finite()) {
            return Err(Error::param(format!("degrees of freedom must be > 0, got {dof}")));
        }
        if !centers.is_finite() {
            return Err(Error::NonFinite("cluster centers".into()));
        }
        Ok(Self { centers, dof })
    }

    pub fn k(&self) -> usize {
        self.centers.rows()
    }
}

/// Student-t kernel assignments, normalized per row.
pub fn soft_assignment(h: &DenseMatrix, c: &ClusterCenters) -> Result<DenseMatrix> {
    student_t_assign(h, &c.centers, c.dof)
}

pub(crate) fn student_t_assign(h: &DenseMatrix, mu: &DenseMatrix, dof: f64) -> Result<DenseMatrix> {
    if h.cols() != mu.cols() {
        return Err(Error::dim("soft_assignment", h.shape(), mu.shape()));
    }
    let power = -(dof + 1.0) / 2.0;
    let mut q = DenseMatrix::zeros(h.rows(), mu.rows());
    for i in 0..h.rows() {
        let hi = h.row(i);
        let row = q.row_mut(i);
        for (j, slot) in row.iter_mut().enumerate() {
            let d2: f64 = hi
                .iter()
                .zip(mu.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            *slot = (1.0 + d2 / dof).powf(power);
        }
        let total: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(q)
}

/// `p_ij = (q_ij² / f_j) / Σ_j' (q_ij'² / f_j')` with `f_j = Σ_i q_ij`.
pub fn target_distribution(q: &DenseMatrix) -> Result<DenseMatrix> {
    let freq = q.col_sums();
    if let Some(j) = freq.data().iter().position(|&f| f.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::DegenerateCluster { cluster: j });
    }
    let mut p = DenseMatrix::zeros(q.rows(), q.cols());
    for i in 0..q.rows() {
        let row = p.row_mut(i);
        for (j, slot) in row.iter_mut().enumerate() {
            let v = q[(i, j)];
            *slot = v * v / freq.data()[j];
        }
        let total: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(p)
}

/// `Σ_ij p_ij log(p_ij / q_ij)` with `0 · log 0 = 0`.
pub fn kl_divergence(p: &DenseMatrix, q: &DenseMatrix) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::dim("kl_divergence", p.shape(), q.shape()));
    }
    let mut total = 0.0;
    for i in 0..p.rows() {
        for (j, (&pv, &qv)) in p.row(i).iter().zip(q.row(i)).enumerate() {
            if pv > 0.0 {
                if qv <= 0.0 {
                    return Err(Error::InfiniteDivergence { row: i, col: j });
                }
                total += pv * (pv / qv).ln();
            }
        }
    }
    Ok(total)
}

/// KL with `q` floored at [`PROB_FLOOR`]; the form used in training.
pub(crate) fn kl_divergence_clamped(p: &DenseMatrix, q: &DenseMatrix) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::dim("kl_divergence", p.shape(), q.shape()));
    }
    Ok(p.data()
        .iter()
        .zip(q.data())
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| pv * (pv / qv.max(PROB_FLOOR)).ln())
        .sum())
}

/// `L_res + α L_clu + β L_gcn`.
pub fn total_loss(l_res: f64, l_clu: f64, l_gcn: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::param(format!(
            "loss weights must be positive, got alpha={alpha} beta={beta}"
        )));
    }
    Ok(l_res + alpha * l_clu + beta * l_gcn)
}

/// Row-wise argmax, ties to the lowest cluster index.
pub fn hard_labels(z: &DenseMatrix) -> Partition {
    Partition::new(row_argmax(z))
}

/// Shannon entropy (nats) of one probability row.
pub fn entropy(row: &[f64]) -> f64 {
    row.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum()
}
