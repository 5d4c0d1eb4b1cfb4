//! Comparison uncertainty methods: Monte-Carlo dropout and ProbOut, a
//! network with a doubled output head predicting a Gaussian mean and
//! variance.

use crate::adam::{AdamConfig, AdamState};
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::nn::{LayerParams, LayerSpec, Network};
use crate::rng::{stream_rng, subseed, SeededRng};
use crate::tensor::{mse, Tensor};
use crate::train::RunStreams;

/// Mean and standard deviation per output component.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrediction {
    pub mean: Tensor,
    pub std: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McDropConfig {
    /// Number of stochastic passes, at least 2.
    pub samples: usize,
    pub seed: u64,
}

const MCDROP_TAG: u64 = 0x3C0;

/// Dropout stream of stochastic pass `pass`.
pub fn mcdrop_pass_rng(seed: u64, pass: usize) -> SeededRng {
    stream_rng(subseed(seed, MCDROP_TAG), pass as u64)
}

/// Sample mean and sample standard deviation (`n - 1` denominator) over
/// `passes` outputs of equal shape.
pub fn sample_moments(passes: &[Tensor]) -> Result<GaussianPrediction> {
    if passes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 passes for a sample variance, got {}",
            passes.len()
        )));
    }
    let t = passes.len() as f64;
    let mut mean = Tensor::zeros(passes[0].shape());
    for p in passes {
        p.expect_same_shape(&mean, "sample moments")?;
        for (m, v) in mean.data_mut().iter_mut().zip(p.data()) {
            *m += v;
        }
    }
    for m in mean.data_mut() {
        *m /= t;
    }
    let mut var = Tensor::zeros(passes[0].shape());
    for p in passes {
        for ((s, v), m) in var.data_mut().iter_mut().zip(p.data()).zip(mean.data()) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.map(|s| (s / (t - 1.0)).sqrt());
    Ok(GaussianPrediction { mean, std })
}

/// MC-dropout prediction from `cfg.samples` train-mode forward passes.
pub fn mcdrop_predict(net: &Network, x: &Tensor, cfg: &McDropConfig) -> Result<GaussianPrediction> {
    if !net.has_dropout() {
        return Err(Error::InvalidArgument(
            "MC dropout needs a network with at least one dropout layer".into(),
        ));
    }
    if cfg.samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "MC dropout needs at least 2 samples, got {}",
            cfg.samples
        )));
    }
    let passes = (0..cfg.samples)
        .map(|t| {
            let mut rng = mcdrop_pass_rng(cfg.seed, t);
            net.forward_cached(x, Some(&mut rng)).map(|(y, _)| y)
        })
        .collect::<Result<Vec<_>>>()?;
    sample_moments(&passes)
}

pub const VARIANCE_FLOOR: f64 = 1e-6;

fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Inverse of softplus for `v > 0`.
fn softplus_inv(v: f64) -> f64 {
    if v > 30.0 {
        v + (-(-v).exp()).ln_1p()
    } else {
        v.exp_m1().ln()
    }
}

/// `sigma^2 = softplus(s) + 1e-6`
pub fn variance_from_raw(s: f64) -> f64 {
    softplus(s) + VARIANCE_FLOOR
}

/// A network whose final affine layer emits `2 * out` values: the mean in
/// the first half, the raw scale in the second.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbOutNetwork {
    net: Network,
}

impl ProbOutNetwork {
    pub fn from_network(net: Network) -> Result<Self> {
        if net.output_dim() % 2 != 0 {
            return Err(Error::shape("probout head", "even output width", net.output_dim()));
        }
        Ok(Self { net })
    }

    /// Copies `base` and doubles its final layer. The mean half starts at
    /// the base parameters; the scale half has zero weights and a bias giving
    /// variance `init_variance` everywhere.
    pub fn from_base(base: &Network, init_variance: f64) -> Result<Self> {
        let mut layers = base.layers().to_vec();
        let last = layers.len() - 1;
        let (old_g, new_spec) = match layers[last] {
            LayerSpec::Dense { inputs, outputs } => (
                layers[last].geometry().unwrap(),
                LayerSpec::Dense {
                    inputs,
                    outputs: 2 * outputs,
                },
            ),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                len,
            } => (
                layers[last].geometry().unwrap(),
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels: 2 * out_channels,
                    kernel,
                    len,
                },
            ),
            _ => unreachable!("networks end in an affine layer"),
        };
        layers[last] = new_spec;
        let new_g = layers[last].geometry().unwrap();
        let mut params = base.params().to_vec();
        let old = params.pop().unwrap();
        let mut head = LayerParams::zeros(&new_g);
        let wlen = old_g.weight_len();
        head.weight.data_mut()[..wlen].copy_from_slice(old.weight.data());
        head.bias.data_mut()[..old_g.out_ch].copy_from_slice(old.bias.data());
        let raw = softplus_inv((init_variance - VARIANCE_FLOOR).max(1e-12));
        head.bias.data_mut()[old_g.out_ch..].fill(raw);
        params.push(head);
        Self::from_network(Network::new(base.input_dim(), layers, params)?)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim() / 2
    }

    /// Mean and variance for a batch (one inference pass).
    pub fn predict(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let raw = self.net.forward(x)?;
        Ok(split_head(&raw))
    }

    pub fn predict_gaussian(&self, x: &Tensor) -> Result<GaussianPrediction> {
        let (mean, var) = self.predict(x)?;
        Ok(GaussianPrediction {
            mean,
            std: var.map(f64::sqrt),
        })
    }
}

fn split_head(raw: &Tensor) -> (Tensor, Tensor) {
    let batch = raw.rows();
    let half = raw.row_len() / 2;
    let mut mean = Tensor::zeros(&[batch, half]);
    let mut var = Tensor::zeros(&[batch, half]);
    for b in 0..batch {
        let r = raw.row(b);
        mean.row_mut(b).copy_from_slice(&r[..half]);
        for (v, &s) in var.row_mut(b).iter_mut().zip(&r[half..]) {
            *v = variance_from_raw(s);
        }
    }
    (mean, var)
}

/// Gaussian negative log-likelihood without the constant:
/// `mean_batch sum_c [ log(sigma^2) / 2 + (y - mu)^2 / (2 sigma^2) ]`.
pub fn probout_loss(mean: &Tensor, var: &Tensor, y: &Tensor) -> Result<f64> {
    mean.expect_same_shape(y, "probout loss")?;
    var.expect_same_shape(y, "probout loss")?;
    if let Some(v) = var.data().iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!("nonpositive variance {v}")));
    }
    let total: f64 = mean
        .data()
        .iter()
        .zip(var.data())
        .zip(y.data())
        .map(|((m, v), t)| 0.5 * v.ln() + (t - m) * (t - m) / (2.0 * v))
        .sum();
    Ok(total / y.rows() as f64)
}

/// Loss and gradient w.r.t. the raw `[mean | scale]` head output.
fn probout_loss_grad(raw: &Tensor, y: &Tensor) -> Result<(f64, Tensor)> {
    let (mean, var) = split_head(raw);
    let loss = probout_loss(&mean, &var, y)?;
    let batch = y.rows();
    let half = y.row_len();
    let mut grad = Tensor::zeros(raw.shape());
    for b in 0..batch {
        let r = raw.row(b);
        let (m, v, t) = (mean.row(b), var.row(b), y.row(b));
        let g = grad.row_mut(b);
        for c in 0..half {
            let res = m[c] - t[c];
            g[c] = res / v[c] / batch as f64;
            let dv = 0.5 / v[c] - res * res / (2.0 * v[c] * v[c]);
            g[half + c] = dv * sigmoid(r[half + c]) / batch as f64;
        }
    }
    Ok((loss, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbOutConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

/// Fine-tunes a ProbOut head initialized from `base` on the Gaussian
/// likelihood. Returns the network and the per-epoch mean loss.
pub fn train_probout(
    base: &Network,
    data: &Samples,
    cfg: &ProbOutConfig,
) -> Result<(ProbOutNetwork, Vec<f64>)> {
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let init_var = mse(&base.forward(&data.inputs)?, &data.targets)?;
    let mut po = ProbOutNetwork::from_base(base, init_var)?;
    let sizes: Vec<usize> = po
        .net
        .params()
        .iter()
        .flat_map(|p| [p.weight.len(), p.bias.len()])
        .collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &sizes)?;
    let streams = RunStreams::new(subseed(cfg.seed, 0x960));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let order = streams.epoch_order(epoch, data.len());
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch = data.select(chunk);
            let mut rng = streams.dropout_rng(step);
            let (raw, cache) = po.net.forward_cached(&batch.inputs, Some(&mut rng))?;
            let (loss, grad) = probout_loss_grad(&raw, &batch.targets)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "ProbOut loss became {loss} at epoch {epoch} step {step} (seed {})",
                    cfg.seed
                )));
            }
            total += loss * chunk.len() as f64;
            let grads = po.net.backward(&cache, &grad)?;
            adam.step(&mut po.net.param_slices_mut(), &grads.slices())?;
            step += 1;
        }
        history.push(total / data.len() as f64);
    }
    Ok((po, history))
}
