//! Supervised source-domain training.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::mean_pearson;
use crate::nn::generator::{generator_forward, GeneratorModel};
use crate::nn::optim::{linear_decay, Adam, AdamSettings};
use crate::nn::tensor::Tensor;
use crate::nn::{scale_grads, Network};
use crate::rng::substream;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamSettings,
    /// Epoch (0-based) at which the linear decay to zero begins.
    pub decay_start: usize,
    pub seed: u64,
}

impl Default for SourceTrainConfig {
    fn default() -> Self {
        SourceTrainConfig {
            epochs: 200,
            batch_size: 8,
            optimizer: AdamSettings::regression(2e-4),
            decay_start: 0,
            seed: 0,
        }
    }
}

impl SourceTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.optimizer.lr > 0.0) || !self.optimizer.lr.is_finite() {
            return Err(Error::Config(format!("source learning rate must be positive, got {}", self.optimizer.lr)));
        }
        if self.decay_start >= self.epochs {
            return Err(Error::Config("decay_start must precede the last epoch".into()));
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.decay_start {
            return self.optimizer.lr;
        }
        linear_decay(self.optimizer.lr, epoch - self.decay_start, self.epochs - self.decay_start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// `None` when a prediction was constant and the correlation undefined.
    pub val_pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_pearson: f64,
}

/// 1-based index of the first maximum; undefined entries never win.
pub fn best_epoch(val_pearson: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in val_pearson.iter().enumerate() {
        if let Some(v) = v.filter(|v| v.is_finite()) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i + 1, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub(crate) fn to_tensor<T: Real>(x: &Image<T>) -> Tensor<T> {
    Tensor::from_vec(1, x.height(), x.width(), x.data().to_vec())
}

/// Mean validation Pearson of `model` on normalized pairs.
pub fn validate_pearson<T: Real>(model: &GeneratorModel<T>, pairs: &[(Image<T>, Image<T>)]) -> Result<f64> {
    let preds = pairs.iter().map(|(x, _)| generator_forward(model, x)).collect::<Result<Vec<_>>>()?;
    let targets: Vec<Image<T>> = pairs.iter().map(|(_, y)| y.clone()).collect();
    mean_pearson(&preds, &targets)
}

/// Train `model` on `train` with an MSE loss, returning the weights of the
/// epoch with the highest mean validation Pearson.
pub fn train_source<T: Real>(
    model: GeneratorModel<T>,
    train: &Dataset<T>,
    val: &Dataset<T>,
    cfg: &SourceTrainConfig,
) -> Result<(GeneratorModel<T>, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("source training needs nonempty train and validation sets".into()));
    }
    let train_pairs = train.normalized_pairs()?;
    let val_pairs = val.normalized_pairs()?;
    for (x, _) in train_pairs.iter().chain(&val_pairs) {
        model.check_input(x.height(), x.width())?;
    }
    let inputs: Vec<Tensor<T>> = train_pairs.iter().map(|(x, _)| to_tensor(x)).collect();

    let mut model = model;
    let mut adam = Adam::new(&model, cfg.optimizer);
    let all = vec![true; model.blocks().len()];
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut rng = substream(cfg.seed, "source-shuffle");
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, GeneratorModel<T>)> = None;
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.zero_grads();
            let mut batch_loss = 0.0;
            let mut count = 0usize;
            for &i in batch {
                let (out, cache) = model.forward_train(&inputs[i])?;
                let y = train_pairs[i].1.data();
                let diff: Vec<T> = out.data.iter().zip(y).map(|(&a, &b)| a - b).collect();
                batch_loss += diff.iter().map(|d| d.as_f64() * d.as_f64()).sum::<f64>();
                count += diff.len();
                let two = T::lit(2.0);
                let dout = Tensor::from_vec(1, out.height, out.width, diff.into_iter().map(|d| d * two).collect());
                model.backward(cache, dout, &mut grads, &all);
            }
            step += 1;
            let batch_loss = batch_loss / count as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence { stage: "source", step });
            }
            scale_grads(&mut grads, T::lit(1.0 / count as f64));
            adam.step(&mut model, &grads, None, lr);
            if !model.all_finite() {
                return Err(Error::Divergence { stage: "source", step });
            }
            loss_sum += batch_loss * batch.len() as f64;
        }
        let val_pearson = match validate_pearson(&model, &val_pairs) {
            Ok(v) => Some(v),
            Err(Error::UndefinedCorrelation(_)) => None,
            Err(e) => return Err(e),
        };
        if let Some(v) = val_pearson {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, model.clone()));
            }
        }
        records.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / train_pairs.len() as f64,
            val_pearson,
        });
    }

    let best_idx = best_epoch(&records.iter().map(|r| r.val_pearson).collect::<Vec<_>>())
        .ok_or_else(|| Error::Data("validation Pearson undefined at every epoch".into()))?;
    let (best_val, best_model) = best.expect("best epoch exists");
    Ok((best_model, TrainReport { epochs: records, best_epoch: best_idx, best_val_pearson: best_val }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_choice_is_argmax() {
        assert_eq!(best_epoch(&[Some(0.6), Some(0.8), Some(0.75)]), Some(2));
        assert_eq!(best_epoch(&[None, Some(0.1), Some(0.1)]), Some(2));
        assert_eq!(best_epoch(&[None, None]), None);
        assert_eq!(best_epoch(&[]), None);
    }

    #[test]
    fn decay_schedule() {
        let cfg = SourceTrainConfig { epochs: 4, decay_start: 2, ..Default::default() };
        let base = cfg.optimizer.lr;
        assert_eq!(cfg.lr_at(0), base);
        assert_eq!(cfg.lr_at(1), base);
        assert_eq!(cfg.lr_at(2), base);
        assert_eq!(cfg.lr_at(3), base * 0.5);
        assert!(SourceTrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        let bad = SourceTrainConfig { optimizer: AdamSettings::regression(0.0), ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
