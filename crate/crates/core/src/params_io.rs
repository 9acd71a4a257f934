//! Flat binary parameter files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "SDCNPAR1"
//! kind       u8       0 = autoencoder, 1 = full model
//! n_dims     u32      then n_dims × u64: [d, d_1, …, d_L]
//! (model only)
//! n_widths   u32      then n_widths × u64: GCN widths [d, w_1, …, K]
//! dof        f64
//! tensors    f64…     row-major, in `tensors()` order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autoencoder::AutoencoderParams;
use crate::error::{Error, Result};
use crate::gcn::GcnParams;
use crate::model::ModelParams;
use crate::selfsup::ClusterCenters;
use crate::tensor::DenseMatrix;

const MAGIC: &[u8; 8] = b"SDCNPAR1";
const KIND_AUTOENCODER: u8 = 0;
const KIND_MODEL: u8 = 1;
/// Guards against absurd allocations from corrupt headers.
const MAX_DIM: u64 = 1 << 24;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::ParamFile(msg.into())
}

fn write_dims(w: &mut impl Write, dims: &[usize]) -> Result<()> {
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

fn write_tensors<'a>(w: &mut impl Write, tensors: impl IntoIterator<Item = &'a DenseMatrix>) -> Result<()> {
    for t in tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => corrupt("truncated file"),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_header(r: &mut impl Read, expect: u8) -> Result<()> {
    if &read_array::<8>(r)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let [kind] = read_array::<1>(r)?;
    if kind != expect {
        return Err(corrupt(format!("expected kind {expect}, found {kind}")));
    }
    Ok(())
}

fn read_dims(r: &mut impl Read) -> Result<Vec<usize>> {
    let n = u32::from_le_bytes(read_array(r)?) as u64;
    if n > 64 {
        return Err(corrupt(format!("{n} layer dimensions")));
    }
    (0..n)
        .map(|_| {
            let d = u64::from_le_bytes(read_array(r)?);
            if d == 0 || d > MAX_DIM {
                return Err(corrupt(format!("layer dimension {d}")));
            }
            Ok(d as usize)
        })
        .collect()
}

fn read_tensors<'a>(r: &mut impl Read, tensors: impl IntoIterator<Item = &'a mut DenseMatrix>) -> Result<()> {
    for t in tensors {
        for v in t.data_mut() {
            *v = f64::from_le_bytes(read_array(r)?);
        }
    }
    Ok(())
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(corrupt("trailing bytes after the last tensor")),
    }
}

pub fn write_autoencoder(w: &mut impl Write, p: &AutoencoderParams) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[KIND_AUTOENCODER])?;
    write_dims(w, &p.layer_dims())?;
    write_tensors(w, p.tensors())
}

pub fn read_autoencoder(r: &mut impl Read) -> Result<AutoencoderParams> {
    read_header(r, KIND_AUTOENCODER)?;
    let dims = read_dims(r)?;
    if dims.len() < 2 {
        return Err(corrupt("autoencoder needs at least one layer"));
    }
    let mut p = AutoencoderParams::zeros(dims[0], &dims[1..])?;
    read_tensors(r, p.tensors_mut())?;
    expect_eof(r)?;
    Ok(p)
}

pub fn write_model(w: &mut impl Write, p: &ModelParams) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[KIND_MODEL])?;
    write_dims(w, &p.ae.layer_dims())?;
    let mut widths: Vec<usize> = p.gcn.weights.iter().map(DenseMatrix::rows).collect();
    widths.push(p.gcn.n_clusters());
    write_dims(w, &widths)?;
    w.write_all(&p.centers.dof.to_le_bytes())?;
    write_tensors(w, p.tensors())
}

pub fn read_model(r: &mut impl Read) -> Result<ModelParams> {
    read_header(r, KIND_MODEL)?;
    let dims = read_dims(r)?;
    let widths = read_dims(r)?;
    if dims.len() < 2 || widths.len() < 3 {
        return Err(corrupt("model header lists too few layers"));
    }
    let dof = f64::from_le_bytes(read_array(r)?);
    let k = *widths.last().expect("checked length");
    let ae = AutoencoderParams::zeros(dims[0], &dims[1..])?;
    let gcn = GcnParams {
        weights: widths.windows(2).map(|w| DenseMatrix::zeros(w[0], w[1])).collect(),
    };
    let centers = ClusterCenters::new(DenseMatrix::zeros(k, dims[dims.len() - 1]), dof)?;
    let mut p = ModelParams::new(ae, gcn, centers)?;
    read_tensors(r, p.tensors_mut())?;
    expect_eof(r)?;
    if !p.is_finite() {
        return Err(Error::NonFinite("loaded parameters".into()));
    }
    Ok(p)
}

pub fn save_autoencoder(path: impl AsRef<Path>, p: &AutoencoderParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_autoencoder(&mut w, p)?;
    w.flush()?;
    Ok(())
}

pub fn load_autoencoder(path: impl AsRef<Path>) -> Result<AutoencoderParams> {
    read_autoencoder(&mut BufReader::new(File::open(path)?))
}

pub fn save_model(path: impl AsRef<Path>, p: &ModelParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, p)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_model(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ae = AutoencoderParams::init(5, &[4, 3, 2], &mut rng).unwrap();
        let gcn = GcnParams::init(&[5, 3, 2, 3], &mut rng).unwrap();
        let centers = ClusterCenters::new(DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 - 0.5), 1.0).unwrap();
        ModelParams::new(ae, gcn, centers).unwrap()
    }

    #[test]
    fn autoencoder_round_trip_is_exact() {
        let p = model().ae;
        let mut buf = Vec::new();
        write_autoencoder(&mut buf, &p).unwrap();
        assert_eq!(read_autoencoder(&mut buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn model_round_trip_is_exact() {
        let p = model();
        let mut buf = Vec::new();
        write_model(&mut buf, &p).unwrap();
        assert_eq!(read_model(&mut buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let p = model();
        save_model(&path, &p).unwrap();
        assert_eq!(load_model(&path).unwrap(), p);
    }

    #[test]
    fn rejects_truncation_kind_and_trailing_bytes() {
        let p = model();
        let mut buf = Vec::new();
        write_model(&mut buf, &p).unwrap();

        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_model(&mut &short[..]), Err(Error::ParamFile(_))));
        assert!(matches!(read_autoencoder(&mut buf.as_slice()), Err(Error::ParamFile(_))));

        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_model(&mut long.as_slice()), Err(Error::ParamFile(_))));

        let mut bad = buf;
        bad[0] = b'X';
        assert!(matches!(read_model(&mut bad.as_slice()), Err(Error::ParamFile(_))));
    }
}
