//! Metric implementations against brute-force oracles on every partition of
//! six elements into at most three blocks.

use sdcn::metrics::{accuracy, ari, best_mapping, macro_f1, nmi, Partition, Scores};

const N: usize = 6;

/// Restricted growth strings: each label is at most one more than the
/// largest label before it, so every set partition appears exactly once.
fn partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, max_blocks: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for label in 0..=next.min(max_blocks - 1) {
            prefix.push(label);
            grow(prefix, n, max_blocks, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, max_blocks, &mut out);
    out
}

fn blocks(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Every injective map from predicted clusters into `0..width`.
fn injections(k: usize, width: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut Vec<bool>, k: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for t in 0..used.len() {
            if !used[t] {
                used[t] = true;
                cur.push(t);
                go(cur, used, k, out);
                cur.pop();
                used[t] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; width], k, &mut out);
    out
}

fn hits(pred: &[usize], truth: &[usize], map: &[usize]) -> usize {
    pred.iter().zip(truth).filter(|&(&p, &t)| map[p] == t).count()
}

fn oracle_f1(pred: &[usize], truth: &[usize], map: &[usize]) -> f64 {
    let mapped: Vec<usize> = pred.iter().map(|&p| map[p]).collect();
    let mut labels: Vec<usize> = mapped.iter().chain(truth).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let per_label: Vec<f64> = labels
        .iter()
        .map(|&l| {
            let tp = mapped.iter().zip(truth).filter(|&(&a, &b)| a == l && b == l).count();
            let fp = mapped.iter().zip(truth).filter(|&(&a, &b)| a == l && b != l).count();
            let fn_ = mapped.iter().zip(truth).filter(|&(&a, &b)| a != l && b == l).count();
            if tp == 0 {
                0.0
            } else {
                let precision = tp as f64 / (tp + fp) as f64;
                let recall = tp as f64 / (tp + fn_) as f64;
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect();
    per_label.iter().sum::<f64>() / per_label.len() as f64
}

/// Pair counts `(a, b, c, d)`: together in both, only in `pred`, only in
/// `truth`, apart in both.
fn pair_counts(pred: &[usize], truth: &[usize]) -> (f64, f64, f64, f64) {
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        for j in (i + 1)..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    (a, b, c, d)
}

fn oracle_ari(pred: &[usize], truth: &[usize]) -> f64 {
    let (a, b, c, d) = pair_counts(pred, truth);
    let denom = (a + b) * (b + d) + (a + c) * (c + d);
    if denom == 0.0 {
        return 1.0;
    }
    2.0 * (a * d - b * c) / denom
}

fn oracle_nmi(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let prob = |f: &dyn Fn(usize) -> bool| (0..pred.len()).filter(|&i| f(i)).count() as f64 / n;
    let h = |labels: &[usize]| -> f64 {
        (0..blocks(labels))
            .map(|l| prob(&|i| labels[i] == l))
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    };
    let (hu, hv) = (h(pred), h(truth));
    if hu == 0.0 && hv == 0.0 {
        return 1.0;
    }
    if hu == 0.0 || hv == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for u in 0..blocks(pred) {
        for v in 0..blocks(truth) {
            let puv = prob(&|i| pred[i] == u && truth[i] == v);
            if puv > 0.0 {
                mi += puv * (puv / (prob(&|i| pred[i] == u) * prob(&|i| truth[i] == v))).ln();
            }
        }
    }
    mi / ((hu + hv) / 2.0)
}

#[test]
fn every_pair_of_partitions_matches_the_oracles() {
    let all = partitions(N, 3);
    // Bell-number check: S(6,1) + S(6,2) + S(6,3) = 1 + 31 + 90
    assert_eq!(all.len(), 122);
    for pred in &all {
        for truth in &all {
            let (p, t) = (Partition::new(pred.clone()), Partition::new(truth.clone()));
            let width = blocks(pred).max(blocks(truth));
            let maps = injections(blocks(pred), width);
            let best = maps.iter().map(|m| hits(pred, truth, m)).max().unwrap();
            let acc = accuracy(&p, &t).unwrap();
            assert_eq!(acc, best as f64 / N as f64, "acc {pred:?} {truth:?}");

            let chosen = best_mapping(&p, &t).unwrap();
            assert_eq!(hits(pred, truth, &chosen), best, "mapping {pred:?} {truth:?}");

            // ties between optimal maps are allowed; the score must come from one of them
            let f1 = macro_f1(&p, &t).unwrap();
            let optimal_f1: Vec<f64> = maps
                .iter()
                .filter(|m| hits(pred, truth, m) == best)
                .map(|m| oracle_f1(pred, truth, m))
                .collect();
            assert!(
                optimal_f1.iter().any(|o| (o - f1).abs() < 1e-12),
                "f1 {f1} not in {optimal_f1:?} for {pred:?} {truth:?}"
            );

            assert!((ari(&p, &t).unwrap() - oracle_ari(pred, truth)).abs() < 1e-12, "ari {pred:?} {truth:?}");
            assert!((nmi(&p, &t).unwrap() - oracle_nmi(pred, truth)).abs() < 1e-12, "nmi {pred:?} {truth:?}");
        }
    }
}

#[test]
fn identical_partitions_score_exactly_one() {
    for labels in partitions(N, 3) {
        let p = Partition::new(labels.clone());
        let s = Scores::compute(&p, &p).unwrap();
        assert_eq!(s, Scores { acc: 1.0, nmi: 1.0, ari: 1.0, f1: 1.0 }, "{labels:?}");
    }
}

#[test]
fn single_cluster_prediction_scores_zero_nmi_and_ari() {
    let lumped = Partition::new(vec![0; N]);
    for labels in partitions(N, 3).into_iter().filter(|l| blocks(l) > 1) {
        let t = Partition::new(labels.clone());
        assert_eq!(nmi(&lumped, &t).unwrap(), 0.0, "{labels:?}");
        assert_eq!(ari(&lumped, &t).unwrap(), 0.0, "{labels:?}");
    }
}

#[test]
fn scores_ignore_cluster_names() {
    let truth = Partition::new(vec![0, 0, 1, 1, 2, 2]);
    let renamed = Partition::new(vec![7, 7, 3, 3, 5, 5]);
    assert_eq!(accuracy(&renamed, &truth).unwrap(), 1.0);
    assert!((nmi(&renamed, &truth).unwrap() - 1.0).abs() < 1e-12);
    assert!((ari(&renamed, &truth).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn length_mismatch_is_an_error() {
    let a = Partition::new(vec![0, 1]);
    let b = Partition::new(vec![0, 1, 1]);
    assert!(accuracy(&a, &b).is_err());
    assert!(nmi(&a, &b).is_err());
}
