//! Sample graphs: KNN construction from features, edge-list loading, and the
//! symmetric normalized adjacency `D̃^{-1/2}(A + I)D̃^{-1/2}` used for
//! propagation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Compressed sparse row matrix, square `n × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// `self · dense`.
    pub fn matmul(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if dense.rows() != self.n {
            return Err(Error::dim(
                "sparse_dense_matmul",
                (self.n, self.n),
                dense.shape(),
            ));
        }
        let cols = dense.cols();
        let mut out = DenseMatrix::zeros(self.n, cols);
        for i in 0..self.n {
            let out_row = out.row_mut(i);
            for (j, v) in self.row(i) {
                for (o, x) in out_row.iter_mut().zip(dense.row(j)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, by scattering rows.
    pub fn t_matmul(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if dense.rows() != self.n {
            return Err(Error::dim("sparse_t_matmul", (self.n, self.n), dense.shape()));
        }
        let mut out = DenseMatrix::zeros(self.n, dense.cols());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let src = dense.row(i);
                for (o, x) in out.row_mut(j).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.row(i)
                .all(|(j, v)| self.row(j).any(|(k, w)| k == i && w == v))
        })
    }
}

/// Convenience wrapper matching the operation name used throughout the docs.
pub fn sparse_dense_matmul(s: &CsrMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    s.matmul(d)
}

/// Undirected, unweighted graph on `n` nodes.
///
/// `edges` holds each undirected edge once as `(i, j)` with `i < j`, sorted.
/// Self-loops are never stored; they enter only through [`normalize_adjacency`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    normalized: CsrMatrix,
}

impl SparseGraph {
    /// Builds a graph from arbitrary pairs. Pairs are symmetrized,
    /// deduplicated, and self-loops are dropped.
    pub fn from_edges(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::param(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a != b {
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let normalized = normalize_edges(n, &edges);
        Ok(Self {
            n,
            edges,
            normalized,
        })
    }

    /// Graph with no edges; its normalized adjacency is the identity.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: Vec::new(),
            normalized: CsrMatrix::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// The normalized adjacency `Â`.
    pub fn normalized(&self) -> &CsrMatrix {
        &self.normalized
    }

    /// Raw adjacency `A` (no self-loops) as a dense matrix.
    pub fn adjacency_dense(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// Sorted neighbor lists of the raw graph.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Serializes as an edge list readable by [`load_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }
}

/// `Â = D̃^{-1/2}(A + I)D̃^{-1/2}` for a graph given by its (symmetric) edges.
pub fn normalize_adjacency(g: &SparseGraph) -> CsrMatrix {
    normalize_edges(g.n, &g.edges)
}

fn normalize_edges(n: usize, edges: &[(usize, usize)]) -> CsrMatrix {
    let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let deg: Vec<f64> = adj.iter().map(|a| a.len() as f64).collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for (i, list) in adj.iter_mut().enumerate() {
        list.sort_unstable();
        for &j in list.iter() {
            indices.push(j);
            values.push(1.0 / (deg[i] * deg[j]).sqrt());
        }
        indptr.push(indices.len());
    }
    CsrMatrix {
        n,
        indptr,
        indices,
        values,
    }
}

/// Heat-kernel similarity `S_ij = exp(-‖x_i - x_j‖² / t)`.
pub fn heat_kernel_similarity(x: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param(format!("heat kernel time must be > 0, got {t}")));
    }
    let d2 = pairwise_sq_distances(x);
    Ok(d2.map(|v| (-v / t).exp()))
}

/// Dot-product similarity `S_ij = x_jᵀ x_i`.
pub fn dot_product_similarity(x: &DenseMatrix) -> DenseMatrix {
    x.matmul_t(x).expect("shapes agree by construction")
}

/// Squared Euclidean distances between all pairs of rows.
pub fn pairwise_sq_distances(x: &DenseMatrix) -> DenseMatrix {
    let n = x.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

/// Mean squared distance over distinct pairs; the default heat-kernel time.
pub fn mean_sq_pairwise_distance(x: &DenseMatrix) -> f64 {
    let n = x.rows();
    if n < 2 {
        return 1.0;
    }
    let d2 = pairwise_sq_distances(x);
    d2.sum() / (n * (n - 1)) as f64
}

/// Links each node to its `k` most similar other nodes and symmetrizes by
/// union. Ties go to the lower node index.
pub fn build_knn_graph(s: &DenseMatrix, k: usize) -> Result<SparseGraph> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::dim("build_knn_graph", s.shape(), (n, n)));
    }
    if k == 0 || k >= n {
        return Err(Error::param(format!(
            "neighbor count k={k} must satisfy 1 <= k < N={n}"
        )));
    }
    let mut pairs = Vec::with_capacity(n * k);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let row = s.row(i);
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        pairs.extend(order[..k].iter().map(|&j| (i, j)));
    }
    SparseGraph::from_edges(n, pairs)
}

/// Reads an edge list: one `i j` pair per line, 0-based, whitespace
/// separated, `#` starts a comment.
pub fn load_edge_list(path: impl AsRef<Path>, n: usize) -> Result<SparseGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_edge_list(&text, n).map_err(|(line, message)| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    })
}

/// Parses edge-list text; errors carry the 1-based line number.
pub fn parse_edge_list(text: &str, n: usize) -> Result<SparseGraph, (usize, String)> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize, String> {
            let tok = tok.ok_or_else(|| "expected two node indices".to_string())?;
            let v: usize = tok
                .parse()
                .map_err(|_| format!("invalid node index {tok:?}"))?;
            if v >= n {
                return Err(format!("node index {v} out of range for {n} nodes"));
            }
            Ok(v)
        };
        let a = parse(fields.next()).map_err(|m| (lineno + 1, m))?;
        let b = parse(fields.next()).map_err(|m| (lineno + 1, m))?;
        if fields.next().is_some() {
            return Err((lineno + 1, "trailing fields after edge".into()));
        }
        pairs.push((a, b));
    }
    SparseGraph::from_edges(n, pairs).map_err(|e| (0, e.to_string()))
}
