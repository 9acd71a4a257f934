//! The stacked fully connected autoencoder.
//!
//! Hidden layers use relu; the bottleneck layer and the reconstruction
//! layer are linear.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{glorot_uniform, Adam};
use crate::tape::{GradTape, Var};
use crate::tensor::DenseMatrix;

/// Encoder widths after the input layer: `d-500-500-2000-10`.
pub const DEFAULT_HIDDEN: [usize; 4] = [500, 500, 2000, 10];

/// A dense layer `y = x·W + b` with `W: in × out` and `b: 1 × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

impl Linear {
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: glorot_uniform(fan_in, fan_out, rng),
            bias: DenseMatrix::zeros(1, fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(fan_in, fan_out),
            bias: DenseMatrix::zeros(1, fan_out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    pub encoder: Vec<Linear>,
    pub decoder: Vec<Linear>,
}

impl AutoencoderParams {
    /// Glorot-initialized weights and zero biases for `input_dim` followed by
    /// the encoder `hidden` widths; the decoder mirrors the encoder.
    pub fn init(input_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::build(input_dim, hidden, |i, o| Linear::glorot(i, o, rng))
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Result<Self> {
        Self::build(input_dim, hidden, Linear::zeros)
    }

    fn build(
        input_dim: usize,
        hidden: &[usize],
        mut make: impl FnMut(usize, usize) -> Linear,
    ) -> Result<Self> {
        if hidden.is_empty() || input_dim == 0 || hidden.contains(&0) {
            return Err(Error::param(format!(
                "invalid autoencoder dims {input_dim} -> {hidden:?}"
            )));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        let encoder = dims.windows(2).map(|w| make(w[0], w[1])).collect();
        let decoder = dims.iter().rev().collect::<Vec<_>>().windows(2).map(|w| make(*w[0], *w[1])).collect();
        Ok(Self { encoder, decoder })
    }

    /// `[d, d_1, …, d_L]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.encoder.iter().map(Linear::out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.last().map_or(0, Linear::out_dim)
    }

    pub fn depth(&self) -> usize {
        self.encoder.len()
    }

    /// Every tensor in fixed order: encoder `(W, b)` pairs then decoder pairs.
    pub fn tensors(&self) -> Vec<&DenseMatrix> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Tape handles for every autoencoder tensor, in [`AutoencoderParams::tensors`] order.
pub struct AeVars {
    pub encoder: Vec<(Var, Var)>,
    pub decoder: Vec<(Var, Var)>,
}

impl AeVars {
    pub fn register<'g>(tape: &mut GradTape<'g>, p: &'g AutoencoderParams) -> Self {
        let mut reg = |layers: &'g [Linear]| {
            layers
                .iter()
                .map(|l| (tape.leaf(&l.weight), tape.leaf(&l.bias)))
                .collect()
        };
        let encoder = reg(&p.encoder);
        let decoder = reg(&p.decoder);
        Self { encoder, decoder }
    }

    pub fn all(&self) -> Vec<Var> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|&(w, b)| [w, b])
            .collect()
    }
}

fn dense_stack(tape: &mut GradTape<'_>, input: Var, layers: &[(Var, Var)]) -> Result<Vec<Var>> {
    let mut outs = Vec::with_capacity(layers.len());
    let mut cur = input;
    for (idx, &(w, b)) in layers.iter().enumerate() {
        let lin = tape.matmul(cur, w)?;
        let lin = tape.add_bias(lin, b)?;
        cur = if idx + 1 < layers.len() {
            tape.relu(lin)
        } else {
            lin
        };
        outs.push(cur);
    }
    Ok(outs)
}

/// Records the encoder; returns `[H^(1), …, H^(L)]`.
pub fn encode_on(tape: &mut GradTape<'_>, x: Var, vars: &AeVars) -> Result<Vec<Var>> {
    dense_stack(tape, x, &vars.encoder)
}

/// Records the decoder; returns the reconstruction `X̂`.
pub fn decode_on(tape: &mut GradTape<'_>, h: Var, vars: &AeVars) -> Result<Var> {
    let outs = dense_stack(tape, h, &vars.decoder)?;
    Ok(*outs.last().expect("decoder has at least one layer"))
}

/// Layer representations `[H^(1), …, H^(L)]` of `x`.
pub fn encode(x: &DenseMatrix, p: &AutoencoderParams) -> Result<Vec<DenseMatrix>> {
    let mut tape = GradTape::new();
    let xv = tape.constant(x);
    let vars = AeVars::register(&mut tape, p);
    let hs = encode_on(&mut tape, xv, &vars)?;
    Ok(hs.into_iter().map(|h| tape.value(h).clone()).collect())
}

/// Reconstruction from a bottleneck representation.
pub fn decode(h: &DenseMatrix, p: &AutoencoderParams) -> Result<DenseMatrix> {
    let mut tape = GradTape::new();
    let hv = tape.leaf(h);
    let vars = AeVars::register(&mut tape, p);
    let out = decode_on(&mut tape, hv, &vars)?;
    Ok(tape.value(out).clone())
}

/// `(1/2N)‖X − X̂‖²_F`.
pub fn reconstruction_loss(x: &DenseMatrix, x_hat: &DenseMatrix) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::dim("reconstruction_loss", x.shape(), x_hat.shape()));
    }
    Ok(x.sub(x_hat)?.frobenius_sq() / (2.0 * x.rows().max(1) as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainReport {
    pub params: AutoencoderParams,
    /// Sample-weighted mean mini-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Full-data loss before the first update.
    pub initial_loss: f64,
    /// Full-data loss after the last update.
    pub final_loss: f64,
}

/// Full-data reconstruction loss of `x` under `p`.
pub fn full_loss(x: &DenseMatrix, p: &AutoencoderParams) -> Result<f64> {
    let hs = encode(x, p)?;
    let x_hat = decode(hs.last().expect("non-empty encoder"), p)?;
    reconstruction_loss(x, &x_hat)
}

/// Initializes from `config.seed` and trains on reconstruction alone.
pub fn pretrain(x: &DenseMatrix, hidden: &[usize], config: &PretrainConfig) -> Result<PretrainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = AutoencoderParams::init(x.cols(), hidden, &mut rng)?;
    pretrain_from(params, x, config)
}

/// Mini-batch Adam on the reconstruction loss starting from `params`.
pub fn pretrain_from(
    mut params: AutoencoderParams,
    x: &DenseMatrix,
    config: &PretrainConfig,
) -> Result<PretrainReport> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::param("pretraining needs epochs >= 1 and batch_size >= 1"));
    }
    if x.cols() != params.input_dim() {
        return Err(Error::dim("pretrain", x.shape(), (x.rows(), params.input_dim())));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let initial_loss = full_loss(x, &params)?;
    let mut adam = Adam::new(config.lr);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = x.select_rows(batch);
            let (loss, grads) = {
                let mut tape = GradTape::new();
                let xv = tape.constant(&xb);
                let vars = AeVars::register(&mut tape, &params);
                let hs = encode_on(&mut tape, xv, &vars)?;
                let x_hat = decode_on(&mut tape, *hs.last().unwrap(), &vars)?;
                let loss = tape.half_mse(x_hat, xv)?;
                let mut g = tape.backward(loss)?;
                let grads: Vec<DenseMatrix> = vars
                    .all()
                    .into_iter()
                    .zip(params.tensors())
                    .map(|(v, t)| g.take(v, t.shape()))
                    .collect();
                (tape.value(loss).scalar(), grads)
            };
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("pretraining loss {loss}"),
                });
            }
            weighted += loss * batch.len() as f64;
            adam.step(&mut params.tensors_mut(), &grads);
        }
        epoch_losses.push(weighted / x.rows() as f64);
    }
    let final_loss = full_loss(x, &params)?;
    if !final_loss.is_finite() {
        return Err(Error::Training {
            epoch: config.epochs,
            message: format!("pretraining loss {final_loss}"),
        });
    }
    Ok(PretrainReport {
        params,
        epoch_losses,
        initial_loss,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use rand::Rng;

    fn single_layer_identity(d: usize) -> AutoencoderParams {
        AutoencoderParams {
            encoder: vec![Linear {
                weight: DenseMatrix::identity(d),
                bias: DenseMatrix::zeros(1, d),
            }],
            decoder: vec![Linear {
                weight: DenseMatrix::identity(d),
                bias: DenseMatrix::zeros(1, d),
            }],
        }
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        let p = AutoencoderParams::zeros(3, &[4, 5, 2]).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, -1.0]]);
        let hs = encode(&x, &p).unwrap();
        assert_eq!(hs.len(), 3);
        assert!(hs.iter().all(|h| h.data().iter().all(|&v| v == 0.0)));
        assert_eq!(decode(&hs[2], &p).unwrap(), DenseMatrix::zeros(2, 3));
    }

    #[test]
    fn default_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = AutoencoderParams::init(16, &DEFAULT_HIDDEN, &mut rng).unwrap();
        let x = DenseMatrix::zeros(2, 16);
        let widths: Vec<usize> = encode(&x, &p).unwrap().iter().map(DenseMatrix::cols).collect();
        assert_eq!(widths, vec![500, 500, 2000, 10]);
        assert_eq!(p.layer_dims(), vec![16, 500, 500, 2000, 10]);
        let dec: Vec<usize> = p.decoder.iter().map(Linear::out_dim).collect();
        assert_eq!(dec, vec![2000, 500, 500, 16]);
    }

    #[test]
    fn identity_layers() {
        let x = DenseMatrix::from_rows(&[[1.0, -2.0], [-0.5, 3.0]]);
        // a lone layer is the bottleneck, so it stays linear
        let p = single_layer_identity(2);
        assert_eq!(encode(&x, &p).unwrap()[0], x);
        assert_eq!(decode(&x, &p).unwrap(), x);
        // as a hidden layer it applies relu
        let mut p2 = AutoencoderParams::zeros(2, &[2, 2]).unwrap();
        p2.encoder[0].weight = DenseMatrix::identity(2);
        assert_eq!(encode(&x, &p2).unwrap()[0], crate::tensor::relu(&x));
    }

    #[test]
    fn hand_computed_first_layer() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]]);
        let mut p = AutoencoderParams::zeros(3, &[2, 1]).unwrap();
        p.encoder[0].weight = DenseMatrix::from_rows(&[[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6]]);
        p.encoder[0].bias = DenseMatrix::from_rows(&[[0.05, -0.1]]);
        // row 0: [0.1-1.0+0.05, -0.2+1.2-0.1] = [-0.85, 0.9] → relu [0, 0.9]
        // row 1: [0.3+0.5+0.05, 0.4-0.6-0.1] = [0.85, -0.3] → relu [0.85, 0]
        let h1 = &encode(&x, &p).unwrap()[0];
        let want = DenseMatrix::from_rows(&[[0.0, 0.9], [0.85, 0.0]]);
        assert!(h1.max_abs_diff(&want).unwrap() < 1e-15);
    }

    #[test]
    fn encode_shape_error() {
        let p = AutoencoderParams::zeros(3, &[2]).unwrap();
        assert!(encode(&DenseMatrix::zeros(2, 4), &p).is_err());
        assert!(decode(&DenseMatrix::zeros(2, 4), &p).is_err());
    }

    #[test]
    fn reconstruction_loss_examples() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0]]);
        assert_eq!(reconstruction_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&x, &DenseMatrix::zeros(1, 2)).unwrap(), 2.5);
        let ones = DenseMatrix::filled(4, 3, 1.0);
        assert_eq!(reconstruction_loss(&ones, &DenseMatrix::zeros(4, 3)).unwrap(), 1.5);
    }

    #[test]
    fn reconstruction_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DenseMatrix::from_fn(5, 4, |_, _| rng.random::<f64>());
        let params = AutoencoderParams::init(4, &[6, 3], &mut rng).unwrap();
        let flat: Vec<DenseMatrix> = params.tensors().into_iter().cloned().collect();
        let f = |t: &[DenseMatrix]| -> Result<(f64, Vec<DenseMatrix>)> {
            let mut p = params.clone();
            for (dst, src) in p.tensors_mut().into_iter().zip(t) {
                *dst = src.clone();
            }
            let mut tape = GradTape::new();
            let xv = tape.constant(&x);
            let vars = AeVars::register(&mut tape, &p);
            let hs = encode_on(&mut tape, xv, &vars)?;
            let x_hat = decode_on(&mut tape, *hs.last().unwrap(), &vars)?;
            let loss = tape.half_mse(x_hat, xv)?;
            let g = tape.backward(loss)?;
            let grads = vars
                .all()
                .into_iter()
                .zip(t)
                .map(|(v, m)| g.get_or_zeros(v, m.shape()))
                .collect();
            Ok((tape.value(loss).scalar(), grads))
        };
        let err = grad_check(f, &flat, 1e-6).unwrap();
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn pretraining_memorizes_four_points() {
        let x = DenseMatrix::from_rows(&[
            [1.0, 0.0, 0.5],
            [0.0, 1.0, -0.5],
            [-1.0, 0.5, 0.0],
            [0.3, -0.7, 1.0],
        ]);
        let cfg = PretrainConfig {
            epochs: 200,
            batch_size: 256,
            lr: 1e-2,
            seed: 3,
        };
        let report = pretrain(&x, &[16, 16, 8], &cfg).unwrap();
        assert!(report.final_loss < 0.01 * report.initial_loss, "{report:?}");
    }

    #[test]
    fn constant_input_is_fit_by_biases() {
        let x = DenseMatrix::filled(8, 3, 0.7);
        let cfg = PretrainConfig {
            epochs: 300,
            batch_size: 4,
            lr: 1e-2,
            seed: 1,
        };
        let report = pretrain(&x, &[4, 2], &cfg).unwrap();
        assert!(report.final_loss < 1e-4, "{}", report.final_loss);
    }

    #[test]
    fn seeded_pretraining_is_reproducible() {
        let x = DenseMatrix::from_fn(20, 4, |i, j| ((i * 13 + j * 5) % 7) as f64 / 7.0);
        let cfg = PretrainConfig {
            epochs: 5,
            batch_size: 8,
            lr: 1e-3,
            seed: 9,
        };
        let a = pretrain(&x, &[8, 3], &cfg).unwrap();
        let b = pretrain(&x, &[8, 3], &cfg).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.epoch_losses), bits(&b.epoch_losses));
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn rejects_zero_epochs() {
        let x = DenseMatrix::zeros(2, 2);
        let cfg = PretrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(pretrain(&x, &[2], &cfg).is_err());
    }
}
