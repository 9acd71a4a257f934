//! Dataset directories.
//!
//! A dataset directory holds `features.csv` (one sample per row, no
//! header), optionally `labels.txt` (one integer per line) and optionally
//! `edges.txt` (whitespace-separated node pairs, `#` comments allowed).

use std::fs;
use std::io::Write;
use std::path::Path;

use sdcn::graph::{parse_edge_list, SparseGraph};
use sdcn::metrics::Partition;
use sdcn::DenseMatrix;

use crate::error::{CliError, Result};

pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";
pub const EDGES_FILE: &str = "edges.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub features: DenseMatrix,
    pub labels: Option<Partition>,
    pub graph: Option<SparseGraph>,
}

impl DatasetBundle {
    pub fn new(
        name: impl Into<String>,
        features: DenseMatrix,
        labels: Option<Partition>,
        graph: Option<SparseGraph>,
    ) -> Result<Self> {
        let n = features.rows();
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(CliError::Config(format!("{} labels for {n} samples", l.len())));
            }
        }
        if let Some(g) = &graph {
            if g.n() != n {
                return Err(CliError::Config(format!("graph has {} nodes for {n} samples", g.n())));
            }
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            graph,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }
}

pub fn read_features(path: &Path) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::format(path, 0, e.to_string()))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            CliError::format(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let width = *cols.get_or_insert(record.len());
        if record.len() != width {
            return Err(CliError::format(
                path,
                line,
                format!("expected {width} values, found {}", record.len()),
            ));
        }
        for field in &record {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::format(path, line, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(CliError::format(path, line, format!("non-finite value {field:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CliError::format(path, 0, "no samples"))?;
    Ok(DenseMatrix::from_vec(rows, cols, data)?)
}

pub fn write_features(path: &Path, x: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for row in x.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Partition> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let label = line
            .parse()
            .map_err(|_| CliError::format(path, idx + 1, format!("not a label: {line:?}")))?;
        labels.push(label);
    }
    Ok(Partition::new(labels))
}

pub fn write_labels(path: &Path, labels: &Partition) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for l in labels.labels() {
        writeln!(f, "{l}")?;
    }
    f.flush()?;
    Ok(())
}

/// Loads a dataset directory. Label and graph files are optional, but when
/// present they must agree with the feature rows.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let features_path = dir.join(FEATURES_FILE);
    let features = read_features(&features_path)?;
    let n = features.rows();

    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        let labels = read_labels(&labels_path)?;
        if labels.len() != n {
            return Err(CliError::format(
                &labels_path,
                labels.len(),
                format!("{} labels but {} has {n} rows", labels.len(), FEATURES_FILE),
            ));
        }
        Some(labels)
    } else {
        None
    };

    let edges_path = dir.join(EDGES_FILE);
    let graph = if edges_path.exists() {
        let text = fs::read_to_string(&edges_path)?;
        Some(parse_edge_list(&text, n).map_err(|(line, msg)| CliError::format(&edges_path, line, msg))?)
    } else {
        None
    };

    let name = dir
        .file_name()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    DatasetBundle::new(name, features, labels, graph)
}

pub fn save_dataset(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_features(&dir.join(FEATURES_FILE), &bundle.features)?;
    if let Some(l) = &bundle.labels {
        write_labels(&dir.join(LABELS_FILE), l)?;
    }
    if let Some(g) = &bundle.graph {
        fs::write(dir.join(EDGES_FILE), g.to_edge_list())?;
    }
    Ok(())
}
