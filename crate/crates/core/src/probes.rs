//! Numerical probes of the two structural claims about the delivery
//! operator, in the linear identity-weight setting (`φ(x) = x`, `W = I`).
//!
//! * [`probe_unrolled_propagation`]: after `L` delivery steps the GCN
//!   representation equals a damped `Â^L X` term plus a sum of
//!   `Â^m`-propagated autoencoder representations.
//! * [`probe_second_order_bound`]: the distance between two propagated rows
//!   is bounded by a self term, a degree-mismatch term on common neighbors
//!   and a non-common-neighbor term.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gcn::{deliver, Epsilon};
use crate::graph::{CsrMatrix, SparseGraph};
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, Serialize)]
pub struct UnrolledProbe {
    /// `Z^(L)` by iterating the layer recursion.
    pub lhs: DenseMatrix,
    /// The closed-form sum computed from dense powers of `Â`.
    pub rhs: DenseMatrix,
    pub max_abs_diff: f64,
}

/// Compares the layer recursion `Z⁽⁰⁾ = X`,
/// `Z⁽ˡ⁾ = Â((1−ε) Z⁽ˡ⁻¹⁾ + ε H⁽ˡ⁾)` against
///
/// ```text
/// (1−ε)^L Â^L X + ε Σ_{m=1..L} (1−ε)^{m−1} Â^m H⁽ᴸ⁻ᵐ⁺¹⁾
/// ```
///
/// i.e. the representation delivered `m` steps before the output is
/// propagated `m` times. `hs` must hold at least `layers` matrices, all with
/// the shape of `x` (identity weights need square layers).
pub fn probe_unrolled_propagation(
    x: &DenseMatrix,
    hs: &[DenseMatrix],
    adj: &CsrMatrix,
    eps: Epsilon,
    layers: usize,
) -> Result<UnrolledProbe> {
    if layers == 0 || hs.len() < layers {
        return Err(Error::param(format!(
            "need 1 <= L <= {} delivered representations, got L={layers}",
            hs.len()
        )));
    }
    if let Some(bad) = hs[..layers].iter().find(|h| h.shape() != x.shape()) {
        return Err(Error::param(format!(
            "identity-weight probe needs equal widths: X is {:?}, H is {:?}",
            x.shape(),
            bad.shape()
        )));
    }
    if adj.n() != x.rows() {
        return Err(Error::dim("probe_unrolled_propagation", (adj.n(), adj.n()), x.shape()));
    }

    let mut lhs = x.clone();
    for h in &hs[..layers] {
        lhs = adj.matmul(&deliver(&lhs, h, eps)?)?;
    }

    let e = eps.get();
    let a = adj.to_dense();
    let mut power = a.clone();
    let mut rhs = DenseMatrix::zeros(x.rows(), x.cols());
    for m in 1..=layers {
        let h = &hs[layers - m];
        rhs.axpy(e * (1.0 - e).powi(m as i32 - 1), &power.matmul(h)?)?;
        if m < layers {
            power = power.matmul(&a)?;
        }
    }
    rhs.axpy((1.0 - e).powi(layers as i32), &power.matmul(x)?)?;

    let max_abs_diff = lhs.max_abs_diff(&rhs)?;
    Ok(UnrolledProbe {
        lhs,
        rhs,
        max_abs_diff,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondOrderProbe {
    /// `‖ĥ_i − ĥ_j‖₂` after one propagation.
    pub distance: f64,
    /// `‖h_i/d_i − h_j/d_j‖₂`
    pub self_term: f64,
    /// `|√d_i − √d_j| / (√d_i √d_j) · ‖S‖₂`
    pub common_term: f64,
    /// `‖D_i/√d_i‖₂ + ‖D_j/√d_j‖₂`
    pub noncommon_term: f64,
    /// Sum of the three terms.
    pub bound: f64,
    /// Tighter middle form, with `‖D_i/√d_i − D_j/√d_j‖₂` as third term.
    pub tight_bound: f64,
    /// `C / (√d_i √d_j)`, common neighbors over the raw-degree geometric mean.
    pub second_order_similarity: f64,
}

/// Decomposes `ĥ = Â h` rows `i` and `j` into self, common-neighbor and
/// non-common-neighbor parts and evaluates the three-term bound.
///
/// Degrees `d` count the self-loop (they are the diagonal of `D̃`); neighbor
/// sets exclude the node itself.
pub fn probe_second_order_bound(
    h: &DenseMatrix,
    graph: &SparseGraph,
    i: usize,
    j: usize,
) -> Result<SecondOrderProbe> {
    let n = graph.n();
    if i == j {
        return Err(Error::param("second-order probe needs two distinct nodes"));
    }
    if i >= n || j >= n {
        return Err(Error::param(format!("nodes ({i}, {j}) out of range for {n}")));
    }
    if h.rows() != n {
        return Err(Error::dim("probe_second_order_bound", (n, n), h.shape()));
    }
    let propagated = graph.normalized().matmul(h)?;
    let distance = norm(&sub(propagated.row(i), propagated.row(j)));

    let nbrs = graph.neighbors();
    let deg: Vec<f64> = nbrs.iter().map(|v| v.len() as f64 + 1.0).collect();
    let (di, dj) = (deg[i], deg[j]);
    let dim = h.cols();
    let weighted_sum = |nodes: &mut dyn Iterator<Item = usize>| {
        let mut acc = vec![0.0; dim];
        for p in nodes {
            let s = deg[p].sqrt();
            for (a, v) in acc.iter_mut().zip(h.row(p)) {
                *a += v / s;
            }
        }
        acc
    };
    let is_common = |p: &usize| nbrs[j].binary_search(p).is_ok();
    let common = weighted_sum(&mut nbrs[i].iter().copied().filter(|p| is_common(p)));
    let d_i = weighted_sum(&mut nbrs[i].iter().copied().filter(|p| !is_common(p)));
    let d_j = weighted_sum(
        &mut nbrs[j]
            .iter()
            .copied()
            .filter(|p| nbrs[i].binary_search(p).is_err()),
    );
    let n_common = nbrs[i].iter().filter(|p| is_common(p)).count() as f64;

    let self_term = norm(&sub(&scaled(h.row(i), 1.0 / di), &scaled(h.row(j), 1.0 / dj)));
    let common_term = ((di.sqrt() - dj.sqrt()) / (di.sqrt() * dj.sqrt())).abs() * norm(&common);
    let di_part = scaled(&d_i, 1.0 / di.sqrt());
    let dj_part = scaled(&d_j, 1.0 / dj.sqrt());
    let noncommon_term = norm(&di_part) + norm(&dj_part);
    let raw = |d: f64| (d - 1.0).max(0.0).sqrt();
    let second_order_similarity = if raw(di) * raw(dj) > 0.0 {
        n_common / (raw(di) * raw(dj))
    } else {
        0.0
    };
    Ok(SecondOrderProbe {
        distance,
        self_term,
        common_term,
        noncommon_term,
        bound: self_term + common_term + noncommon_term,
        tight_bound: self_term + common_term + norm(&sub(&di_part, &dj_part)),
        second_order_similarity,
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|v| v * s).collect()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Mean Euclidean distance over all pairs of distinct rows.
pub fn mean_pairwise_distance(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += norm(&sub(m.row(i), m.row(j)));
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Mean pairwise row distance of the identity-weight GCN output at each depth
/// `1..=hs.len()`, delivering `hs[0..L]` in order.
pub fn smoothing_curve(
    x: &DenseMatrix,
    hs: &[DenseMatrix],
    adj: &CsrMatrix,
    eps: Epsilon,
) -> Result<Vec<f64>> {
    (1..=hs.len())
        .map(|l| {
            probe_unrolled_propagation(x, hs, adj, eps, l).map(|p| mean_pairwise_distance(&p.lhs))
        })
        .collect()
}
