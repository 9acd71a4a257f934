//! Analytic gradients of every loss term against central differences on a
//! small instance: 20 samples, 8 features, 3 clusters.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdcn::autoencoder::AutoencoderParams;
use sdcn::gcn::{Epsilon, GcnParams};
use sdcn::gradcheck::grad_check;
use sdcn::graph::SparseGraph;
use sdcn::model::{forward, ForwardInputs, ForwardPass, LossWeights, ModelParams};
use sdcn::selfsup::{target_distribution, ClusterCenters};
use sdcn::{DenseMatrix, Result};

const N: usize = 20;
const D: usize = 8;
const K: usize = 3;
const HIDDEN: [usize; 4] = [10, 8, 6, 4];
const STEP: f64 = 1e-6;

struct Instance {
    x: DenseMatrix,
    graph: SparseGraph,
    params: ModelParams,
    target: DenseMatrix,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DenseMatrix::from_fn(N, D, |_, _| rng.random_range(-1.0..1.0));
    let mut edges: Vec<(usize, usize)> = (0..N).map(|i| (i, (i + 1) % N)).collect();
    edges.extend((0..N).map(|_| (rng.random_range(0..N), rng.random_range(0..N))).filter(|(a, b)| a != b));
    let graph = SparseGraph::from_edges(N, edges).unwrap();
    let ae = AutoencoderParams::init(D, &HIDDEN, &mut rng).unwrap();
    let gcn = GcnParams::init(&GcnParams::widths_for(D, &HIDDEN, 4, K).unwrap(), &mut rng).unwrap();
    let centers = ClusterCenters::new(DenseMatrix::from_fn(K, 4, |_, _| rng.random_range(-1.0..1.0)), 1.0).unwrap();
    let mut params = ModelParams::new(ae, gcn, centers).unwrap();
    // Zero biases put samples whose previous layer is fully inactive exactly
    // on a relu kink, where central differences see half a slope.
    for b in params.ae.encoder.iter_mut().chain(params.ae.decoder.iter_mut()) {
        b.bias = DenseMatrix::from_fn(1, b.bias.cols(), |_, _| rng.random_range(-0.2..0.2));
    }
    // A fixed, sharpened target keeps every loss a smooth function of the
    // parameters.
    let q = DenseMatrix::from_fn(N, K, |_, _| rng.random_range(0.05..1.0));
    let q = DenseMatrix::from_fn(N, K, |i, j| q[(i, j)] / q.row(i).iter().sum::<f64>());
    let target = target_distribution(&q).unwrap();
    Instance { x, graph, params, target }
}

#[derive(Clone, Copy, Debug)]
enum Term {
    Res,
    Clu,
    Gcn,
    Total,
}

fn pick(pass: &ForwardPass<'_>, term: Term) -> sdcn::tape::Var {
    match term {
        Term::Res => pass.l_res,
        Term::Clu => pass.l_clu,
        Term::Gcn => pass.l_gcn,
        Term::Total => pass.l_total,
    }
}

fn loss_and_grads(inst: &Instance, tensors: &[DenseMatrix], term: Term) -> Result<(f64, Vec<DenseMatrix>)> {
    let mut params = inst.params.clone();
    for (dst, src) in params.tensors_mut().into_iter().zip(tensors) {
        *dst = src.clone();
    }
    let inputs = ForwardInputs {
        x: &inst.x,
        adj: inst.graph.normalized(),
        eps: Epsilon::HALF,
        weights: LossWeights { alpha: 0.1, beta: 0.01 },
    };
    let pass = forward(&params, inputs, Some(&inst.target))?;
    let v = pick(&pass, term);
    Ok((pass.tape.value(v).scalar(), pass.gradients_of(v)?))
}

/// Worst `|analytic − numeric| / max(|analytic|, |numeric|, 1e-3)` over all
/// entries. Stricter than the unit floor for small gradients; below 1e-3 the
/// central difference itself carries ~1e-10 of round-off.
fn strict_relative_error(inst: &Instance, term: Term) -> f64 {
    let base: Vec<DenseMatrix> = inst.params.tensors().into_iter().cloned().collect();
    let (_, analytic) = loss_and_grads(inst, &base, term).unwrap();
    let mut work = base.clone();
    let mut worst = 0.0f64;
    for t in 0..base.len() {
        for e in 0..base[t].data().len() {
            let orig = base[t].data()[e];
            work[t].data_mut()[e] = orig + STEP;
            let plus = loss_and_grads(inst, &work, term).unwrap().0;
            work[t].data_mut()[e] = orig - STEP;
            let minus = loss_and_grads(inst, &work, term).unwrap().0;
            work[t].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[t].data()[e];
            let scale = a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}

#[test]
fn every_loss_term_matches_finite_differences() {
    let start = Instant::now();
    let inst = instance(42);
    let base: Vec<DenseMatrix> = inst.params.tensors().into_iter().cloned().collect();
    for term in [Term::Res, Term::Clu, Term::Gcn, Term::Total] {
        let err = grad_check(|t| loss_and_grads(&inst, t, term), &base, STEP).unwrap();
        assert!(err < 1e-4, "{term:?}: relative error {err:e}");
    }
    assert!(start.elapsed().as_secs_f64() < 10.0, "took {:?}", start.elapsed());
}

#[test]
fn small_gradients_are_accurate_too() {
    let inst = instance(7);
    for term in [Term::Res, Term::Clu, Term::Gcn, Term::Total] {
        let err = strict_relative_error(&inst, term);
        assert!(err < 1e-4, "{term:?}: strict relative error {err:e}");
    }
}

#[test]
fn loss_terms_touch_the_expected_parameters() {
    let inst = instance(3);
    let base: Vec<DenseMatrix> = inst.params.tensors().into_iter().cloned().collect();
    let n_ae = inst.params.ae.tensors().len();
    let n_gcn = inst.params.gcn.weights.len();
    let nonzero = |g: &DenseMatrix| g.data().iter().any(|&v| v != 0.0);

    let (_, res) = loss_and_grads(&inst, &base, Term::Res).unwrap();
    assert!(res[n_ae..].iter().all(|g| !nonzero(g)), "reconstruction ignores the GCN and centers");

    let (_, clu) = loss_and_grads(&inst, &base, Term::Clu).unwrap();
    assert!(clu[n_ae..n_ae + n_gcn].iter().all(|g| !nonzero(g)), "KL(P‖Q) ignores the GCN");
    assert!(nonzero(&clu[n_ae + n_gcn]), "KL(P‖Q) moves the centers");

    let (_, gcn) = loss_and_grads(&inst, &base, Term::Gcn).unwrap();
    assert!(gcn[n_ae..n_ae + n_gcn].iter().all(nonzero), "every GCN weight gets a gradient");
    assert!(!nonzero(&gcn[n_ae + n_gcn]), "KL(P‖Z) ignores the centers when P is fixed");
}

