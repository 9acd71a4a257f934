//! A small reverse-mode gradient tape.
//!
//! Only the primitives the model graph uses are supported, each with a
//! hand-written backward rule. Ops are appended in forward order and the
//! backward pass walks them in exact reverse order.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::graph::CsrMatrix;
use crate::tensor::{self, DenseMatrix};

/// Floor applied to probabilities before taking logs in KL terms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'g> {
    Leaf,
    MatMul(Var, Var),
    Propagate(&'g CsrMatrix, Var),
    AddBias(Var, Var),
    Relu(Var),
    RowSoftmax(Var),
    /// `a·x + b·y`
    LinComb(Var, f64, Var, f64),
    /// `(1/2N)‖x − y‖²_F`, N = rows
    HalfMse(Var, Var),
    /// `Σ p log(p / q)` with `p` held constant
    Kl(Cow<'g, DenseMatrix>, Var),
    /// Student-t soft assignment of rows of `h` to rows of `centers`
    StudentT { h: Var, centers: Var, dof: f64 },
}

struct Node<'g> {
    value: Cow<'g, DenseMatrix>,
    op: Op<'g>,
    /// False for constants and anything computed only from constants.
    tracked: bool,
}

/// Records a forward pass for one backward sweep.
pub struct GradTape<'g> {
    nodes: Vec<Node<'g>>,
}

impl Default for GradTape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'g> GradTape<'g> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: impl Into<Cow<'g, DenseMatrix>>, op: Op<'g>) -> Var {
        let t = |v: &Var| self.nodes[v.0].tracked;
        let tracked = match &op {
            Op::Leaf => true,
            Op::Propagate(_, x) | Op::Relu(x) | Op::RowSoftmax(x) | Op::Kl(_, x) => t(x),
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::LinComb(a, _, b, _) | Op::HalfMse(a, b) => t(a) || t(b),
            Op::StudentT { h, centers, .. } => t(h) || t(centers),
        };
        self.nodes.push(Node {
            value: value.into(),
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Registers a borrowed input that receives a gradient.
    pub fn leaf(&mut self, value: &'g DenseMatrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers an owned input that receives a gradient.
    pub fn leaf_owned(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers data that never needs a gradient; backward skips every
    /// branch that only leads here.
    pub fn constant(&mut self, value: &'g DenseMatrix) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].tracked = false;
        v
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn propagate(&mut self, adj: &'g CsrMatrix, x: Var) -> Result<Var> {
        let out = adj.matmul(self.value(x))?;
        Ok(self.push(out, Op::Propagate(adj, x)))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let out = self.value(x).add_row(self.value(bias))?;
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = tensor::relu(self.value(x));
        self.push(out, Op::Relu(x))
    }

    pub fn row_softmax(&mut self, x: Var) -> Var {
        let out = tensor::row_softmax(self.value(x));
        self.push(out, Op::RowSoftmax(x))
    }

    pub fn lincomb(&mut self, a: f64, x: Var, b: f64, y: Var) -> Result<Var> {
        let out = self.value(x).lincomb(a, self.value(y), b)?;
        Ok(self.push(out, Op::LinComb(x, a, y, b)))
    }

    pub fn half_mse(&mut self, x: Var, y: Var) -> Result<Var> {
        let (a, b) = (self.value(x), self.value(y));
        if a.shape() != b.shape() {
            return Err(Error::dim("half_mse", a.shape(), b.shape()));
        }
        let n = a.rows().max(1) as f64;
        let loss = a.sub(b)?.frobenius_sq() / (2.0 * n);
        Ok(self.push(DenseMatrix::filled(1, 1, loss), Op::HalfMse(x, y)))
    }

    /// `KL(p ‖ q)` summed over all rows; `p` is a constant target.
    pub fn kl(&mut self, p: impl Into<Cow<'g, DenseMatrix>>, q: Var) -> Result<Var> {
        let p = p.into();
        let loss = crate::selfsup::kl_divergence_clamped(&p, self.value(q))?;
        Ok(self.push(DenseMatrix::filled(1, 1, loss), Op::Kl(p, q)))
    }

    pub fn student_t(&mut self, h: Var, centers: Var, dof: f64) -> Result<Var> {
        let out = crate::selfsup::student_t_assign(self.value(h), self.value(centers), dof)?;
        Ok(self.push(out, Op::StudentT { h, centers, dof }))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::dim("backward", shape, (1, 1)));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) || !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if self.tracked(a) {
                        accumulate(&mut grads, a, g.matmul_t(self.value(b))?)?;
                    }
                    if self.tracked(b) {
                        accumulate(&mut grads, b, self.value(a).t_matmul(&g)?)?;
                    }
                }
                Op::Propagate(adj, x) => {
                    accumulate(&mut grads, x, adj.t_matmul(&g)?)?;
                }
                Op::AddBias(x, bias) => {
                    let gb = g.col_sums();
                    accumulate(&mut grads, x, g)?;
                    accumulate(&mut grads, bias, gb)?;
                }
                Op::Relu(x) => {
                    let input = self.value(x);
                    let mut gx = g;
                    for (gv, &xv) in gx.data_mut().iter_mut().zip(input.data()) {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut grads, x, gx)?;
                }
                Op::RowSoftmax(x) => {
                    let y = &node.value;
                    let mut gx = g;
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let gr = gx.row_mut(i);
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for (gv, &yv) in gr.iter_mut().zip(yr) {
                            *gv = yv * (*gv - dot);
                        }
                    }
                    accumulate(&mut grads, x, gx)?;
                }
                Op::LinComb(x, a, y, b) => {
                    if self.tracked(x) {
                        accumulate(&mut grads, x, g.scale(a))?;
                    }
                    if self.tracked(y) {
                        accumulate(&mut grads, y, g.scale(b))?;
                    }
                }
                Op::HalfMse(x, y) => {
                    let (a, b) = (self.value(x), self.value(y));
                    let n = a.rows().max(1) as f64;
                    let gx = a.sub(b)?.scale(g.scalar() / n);
                    if self.tracked(y) {
                        accumulate(&mut grads, y, gx.scale(-1.0))?;
                    }
                    if self.tracked(x) {
                        accumulate(&mut grads, x, gx)?;
                    }
                }
                Op::Kl(ref p, q) => {
                    let qv = self.value(q);
                    let s = g.scalar();
                    let gq = DenseMatrix::from_fn(qv.rows(), qv.cols(), |i, j| {
                        let (pv, qq) = (p[(i, j)], qv[(i, j)]);
                        if pv > 0.0 && qq > PROB_FLOOR {
                            -s * pv / qq
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, q, gq)?;
                }
                Op::StudentT { h, centers, dof } => {
                    let (gh, gc) =
                        student_t_backward(self.value(h), self.value(centers), &node.value, &g, dof);
                    accumulate(&mut grads, h, gh)?;
                    accumulate(&mut grads, centers, gc)?;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Backward of `q_ij ∝ (1 + ‖h_i − μ_j‖²/v)^{-(v+1)/2}`.
///
/// Writing `q = softmax_j(log k_ij)`, the gradient w.r.t. `log k_ij` is
/// `q_ij (g_ij − Σ_j' g_ij' q_ij')`, and `∂ log k_ij / ∂ d_ij = −(v+1) / (2(v + d_ij))`.
fn student_t_backward(
    h: &DenseMatrix,
    centers: &DenseMatrix,
    q: &DenseMatrix,
    g: &DenseMatrix,
    dof: f64,
) -> (DenseMatrix, DenseMatrix) {
    let (n, k) = q.shape();
    let dim = h.cols();
    let mut gh = DenseMatrix::zeros(n, dim);
    let mut gc = DenseMatrix::zeros(k, dim);
    for i in 0..n {
        let qr = q.row(i);
        let gr = g.row(i);
        let dot: f64 = qr.iter().zip(gr).map(|(a, b)| a * b).sum();
        let hi = h.row(i);
        for j in 0..k {
            let mu = centers.row(j);
            let d2: f64 = hi.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
            let g_logk = qr[j] * (gr[j] - dot);
            // chain through d_ij = ‖h_i − μ_j‖², ∂d/∂h_i = 2(h_i − μ_j)
            let coeff = g_logk * -(dof + 1.0) / (2.0 * (dof + d2)) * 2.0;
            for c in 0..dim {
                let diff = hi[c] - mu[c];
                gh[(i, c)] += coeff * diff;
                gc[(j, c)] -= coeff * diff;
            }
        }
    }
    (gh, gc)
}

/// Gradients from one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Moves the gradient of `v` out, or returns zeros of `shape` if
    /// nothing flowed into it.
    pub fn take(&mut self, v: Var, shape: (usize, usize)) -> DenseMatrix {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| DenseMatrix::zeros(shape.0, shape.1))
    }

    /// Gradient of `v`, or zeros of `shape` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> DenseMatrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| DenseMatrix::zeros(shape.0, shape.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn backward_requires_scalar() {
        let m = DenseMatrix::zeros(2, 2);
        let mut tape = GradTape::new();
        let v = tape.leaf(&m);
        assert!(tape.backward(v).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let x = DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let w = DenseMatrix::from_rows(&[[0.3, 0.1], [-0.2, 0.4]]);
        let mut tape = GradTape::new();
        let xv = tape.constant(&x);
        let wv = tape.leaf(&w);
        let y = tape.matmul(xv, wv).unwrap();
        let loss = tape.half_mse(y, xv).unwrap();
        let mut g = tape.backward(loss).unwrap();
        assert!(g.get(xv).is_none());
        // ∂L/∂W = Xᵀ(XW − X)/N
        let expect = x.t_matmul(&x.matmul(&w).unwrap().sub(&x).unwrap()).unwrap().scale(0.5);
        let got = g.take(wv, w.shape());
        assert!(got.max_abs_diff(&expect).unwrap() < 1e-12);
        assert!(g.get(wv).is_none(), "take moves the gradient out");
    }

    #[test]
    fn shared_input_accumulates() {
        // L = half_mse(x + x, 0) = (1/2N)‖2x‖² → ∂L/∂x = 4x/N
        let x = DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let zero = DenseMatrix::zeros(2, 2);
        let mut tape = GradTape::new();
        let xv = tape.leaf(&x);
        let z = tape.leaf(&zero);
        let twice = tape.lincomb(1.0, xv, 1.0, xv).unwrap();
        let loss = tape.half_mse(twice, z).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(xv).unwrap(), &x.scale(2.0));
    }

    #[test]
    fn relu_softmax_chain_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = vec![rand_matrix(&mut rng, 5, 4), rand_matrix(&mut rng, 4, 3)];
        let target = tensor::row_softmax(&rand_matrix(&mut rng, 5, 3));
        let adj = crate::graph::SparseGraph::from_edges(5, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let f = |p: &[DenseMatrix]| -> Result<(f64, Vec<DenseMatrix>)> {
            let mut tape = GradTape::new();
            let x = tape.leaf(&p[0]);
            let w = tape.leaf(&p[1]);
            let xw = tape.matmul(x, w)?;
            let r = tape.relu(xw);
            let prop = tape.propagate(adj.normalized(), r)?;
            let s = tape.row_softmax(prop);
            let loss = tape.kl(&target, s)?;
            let g = tape.backward(loss)?;
            Ok((
                tape.value(loss).scalar(),
                vec![g.get_or_zeros(x, p[0].shape()), g.get_or_zeros(w, p[1].shape())],
            ))
        };
        let err = grad_check(f, &params, 1e-6).unwrap();
        assert!(err < 1e-6, "max rel err {err}");
    }

    #[test]
    fn student_t_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dof in [1.0, 2.5] {
            let params = vec![rand_matrix(&mut rng, 6, 3), rand_matrix(&mut rng, 4, 3)];
            let target = tensor::row_softmax(&rand_matrix(&mut rng, 6, 4));
            let f = |p: &[DenseMatrix]| -> Result<(f64, Vec<DenseMatrix>)> {
                let mut tape = GradTape::new();
                let h = tape.leaf(&p[0]);
                let mu = tape.leaf(&p[1]);
                let q = tape.student_t(h, mu, dof)?;
                let loss = tape.kl(&target, q)?;
                let g = tape.backward(loss)?;
                Ok((
                    tape.value(loss).scalar(),
                    vec![g.get_or_zeros(h, p[0].shape()), g.get_or_zeros(mu, p[1].shape())],
                ))
            };
            let err = grad_check(f, &params, 1e-6).unwrap();
            assert!(err < 1e-6, "dof {dof}: max rel err {err}");
        }
    }

    #[test]
    fn bias_and_mse_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = vec![
            rand_matrix(&mut rng, 5, 4),
            rand_matrix(&mut rng, 1, 4),
            rand_matrix(&mut rng, 5, 4),
        ];
        let f = |p: &[DenseMatrix]| -> Result<(f64, Vec<DenseMatrix>)> {
            let mut tape = GradTape::new();
            let x = tape.leaf(&p[0]);
            let b = tape.leaf(&p[1]);
            let y = tape.leaf(&p[2]);
            let xb = tape.add_bias(x, b)?;
            let loss = tape.half_mse(xb, y)?;
            let g = tape.backward(loss)?;
            Ok((
                tape.value(loss).scalar(),
                vec![
                    g.get_or_zeros(x, p[0].shape()),
                    g.get_or_zeros(b, p[1].shape()),
                    g.get_or_zeros(y, p[2].shape()),
                ],
            ))
        };
        assert!(grad_check(f, &params, 1e-5).unwrap() < 1e-8);
    }
}
