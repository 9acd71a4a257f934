use std::fs;
use std::path::Path;

use sdcn::metrics::Scores;
use sdcn_cli::config::{ConfigLayer, ExperimentConfig};
use sdcn_cli::experiment::{
    evaluate_files, read_epochs, run_experiment, sweep, SweepKind, SweepRow, SweepTable, EPOCHS_FILE, LABELS_FILE,
    PARAMS_FILE, SUMMARY_FILE,
};

/// Small blobs run with narrow layers; a few seconds end to end.
fn small(out: &Path, extra: &[(&str, &str)]) -> ExperimentConfig {
    let mut layer = ConfigLayer::new();
    let base = [
        ("synthetic", "blobs"),
        ("synth_per_cluster", "20"),
        ("synth_dim", "6"),
        ("synth_sigma", "0.2"),
        ("hidden", "16,8,3"),
        ("depth", "3"),
        ("epochs", "8"),
        ("pretrain_epochs", "8"),
        ("lr", "0.01"),
    ];
    for (k, v) in base.iter().chain(extra) {
        layer.set(k, *v).unwrap();
    }
    layer.set("out", out.display().to_string()).unwrap();
    ExperimentConfig::from_layer(&layer).unwrap()
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let sa = run_experiment(&small(&a, &[])).unwrap();
    let sb = run_experiment(&small(&b, &[])).unwrap();
    assert_eq!(sa, sb);
    for file in [EPOCHS_FILE, SUMMARY_FILE, LABELS_FILE, PARAMS_FILE] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }

    let history = read_epochs(&a.join(EPOCHS_FILE)).unwrap();
    assert_eq!(history.len(), 8);
    assert_eq!(sa.final_losses.as_ref(), history.last());
    assert_eq!(sa.n_samples, 60);
    assert_eq!(sa.n_clusters, 3);
    assert_eq!(sa.cluster_sizes.iter().sum::<usize>(), 60);
    assert_eq!(sa.layer_dims, vec![6, 16, 8, 3]);

    let c = dir.path().join("c");
    run_experiment(&small(&c, &[("seed", "1")])).unwrap();
    assert_ne!(fs::read(a.join(EPOCHS_FILE)).unwrap(), fs::read(c.join(EPOCHS_FILE)).unwrap());
}

#[test]
fn labels_file_scores_like_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let summary = run_experiment(&small(&out, &[])).unwrap();

    let data = dir.path().join("data");
    let bundle = sdcn_cli::experiment::load_data(&small(&out, &[])).unwrap();
    sdcn_cli::dataset::save_dataset(&data, &bundle).unwrap();
    let scores = evaluate_files(&out.join(LABELS_FILE), &data.join("labels.txt")).unwrap();
    assert_eq!(Some(scores), summary.scores);
}

#[test]
fn file_graph_requires_edges() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&small(dir.path(), &[("graph_source", "file")])).unwrap_err();
    assert!(err.to_string().contains("no graph"), "{err}");
}

#[test]
fn epsilon_sweep_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let table = sweep(SweepKind::Epsilon, &small(dir.path(), &[("epochs", "3")])).unwrap();
    let settings: Vec<f64> = table.rows.iter().map(|r| r.setting).collect();
    assert_eq!(settings, sdcn_cli::experiment::EPSILON_GRID);
    let written = fs::read_to_string(dir.path().join("sweep_epsilon.tsv")).unwrap();
    assert_eq!(SweepTable::parse_tsv(&written, Path::new("t")).unwrap(), table);
}

#[test]
fn sweep_table_round_trips_and_rejects_junk() {
    let table = SweepTable {
        kind: SweepKind::KnnK,
        rows: vec![
            SweepRow { setting: 1.0, scores: Scores { acc: 0.5, nmi: 1.0 / 3.0, ari: -0.01, f1: 0.25 } },
            SweepRow { setting: 10.0, scores: Scores { acc: 1.0, nmi: 1.0, ari: 1.0, f1: 1.0 } },
        ],
    };
    let text = table.to_tsv();
    assert!(text.starts_with("# knn_k\n"), "{text}");
    assert_eq!(SweepTable::parse_tsv(&text, Path::new("t")).unwrap(), table);

    let p = Path::new("t.tsv");
    assert!(SweepTable::parse_tsv("setting\tacc\n", p).is_err());
    assert!(SweepTable::parse_tsv("# width\nsetting\tacc\tnmi\tari\tf1\n", p).is_err());
    let err = SweepTable::parse_tsv("# depth\nsetting\tacc\tnmi\tari\tf1\n1\t0.5\n", p).unwrap_err();
    assert!(err.to_string().contains("t.tsv:3"), "{err}");
}

#[test]
fn evaluate_rejects_mismatched_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    fs::write(&a, "0\n1\n1\n").unwrap();
    fs::write(&b, "1\n0\n").unwrap();
    assert!(evaluate_files(&a, &b).is_err());
    fs::write(&b, "5\n3\n3\n").unwrap();
    assert_eq!(evaluate_files(&a, &b).unwrap().acc, 1.0);
}
