//! Mean-squared-error training of point networks.

use crate::adam::{AdamConfig, AdamState};
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{permutation, stream_rng, subseed};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

const SHUFFLE_TAG: u64 = 0x5F1;
const DROPOUT_TAG: u64 = 0xD70;

/// Seeds derived for one training run: epoch shuffles and per-step dropout.
pub(crate) struct RunStreams {
    shuffle: u64,
    dropout: u64,
}

impl RunStreams {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            shuffle: subseed(seed, SHUFFLE_TAG),
            dropout: subseed(seed, DROPOUT_TAG),
        }
    }

    pub(crate) fn epoch_order(&self, epoch: usize, m: usize) -> Vec<usize> {
        permutation(&mut stream_rng(self.shuffle, epoch as u64), m)
    }

    pub(crate) fn dropout_rng(&self, step: usize) -> crate::rng::SeededRng {
        stream_rng(self.dropout, step as u64)
    }
}

/// Per-epoch mean training loss.
pub type LossHistory = Vec<f64>;

/// `dL/dpred` of the batch MSE (mean over every component).
fn mse_grad(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let scale = 2.0 / pred.len() as f64;
    let loss = crate::tensor::mse(pred, target)?;
    Ok((loss, pred.zip_map(target, |p, t| scale * (p - t))?))
}

/// Trains `net` in place on `data` with Adam and train-mode dropout.
pub fn train_mse(net: &mut Network, data: &Samples, cfg: &TrainConfig) -> Result<LossHistory> {
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let sizes: Vec<usize> = net
        .params()
        .iter()
        .flat_map(|p| [p.weight.len(), p.bias.len()])
        .collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &sizes)?;
    let streams = RunStreams::new(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let order = streams.epoch_order(epoch, data.len());
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch = data.select(chunk);
            let mut rng = streams.dropout_rng(step);
            let (pred, cache) = net.forward_cached(&batch.inputs, Some(&mut rng))?;
            let (loss, grad) = mse_grad(&pred, &batch.targets)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "base training loss became {loss} at epoch {epoch} step {step} (seed {})",
                    cfg.seed
                )));
            }
            total += loss * chunk.len() as f64;
            let grads = net.backward(&cache, &grad)?;
            adam.step(&mut net.param_slices_mut(), &grads.slices())?;
            step += 1;
        }
        let mean = total / data.len() as f64;
        log::debug!("base epoch {epoch}: mse {mean:.6}");
        history.push(mean);
    }
    Ok(history)
}
