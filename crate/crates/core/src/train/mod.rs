//! Deep-supervision loss, AdamW, the step schedule and the training loop.

mod loss;
mod optim;

pub use loss::{bce_dice, seg_loss, DICE_SMOOTH};
pub use optim::{AdamW, AdamWConfig, Schedule};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{CmfdNet, Mode};
use crate::data::{augment, resize_bilinear, to_batch, AugmentConfig, Sample};
use crate::error::{Error, Result};
use crate::metrics::{dice_iou, evaluate_dataset, Map, MetricsReport, DICE_THRESHOLD};
use crate::nn::Scope;
use crate::tensor::{Graph, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub halving_period: usize,
    pub weight_decay: f64,
    /// Loss weight per output map (main first); missing entries count as 1.
    pub head_weights: Vec<f64>,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk scale: 10 epochs of 20 batches over 160 training images.
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            lr: 5e-3,
            halving_period: 4,
            weight_decay: 1e-2,
            head_weights: vec![1.0; 4],
            grad_clip: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// 150 epochs, batch 8, lr 1e-4 halved every 50 epochs.
    pub fn full_scale() -> Self {
        Self {
            epochs: 150,
            lr: Schedule::FULL_SCALE.lr0,
            halving_period: Schedule::FULL_SCALE.halving_period,
            ..Self::default()
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            lr0: self.lr,
            halving_period: self.halving_period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.halving_period == 0 {
            return Err(Error::InvalidArgument(
                "epochs, batch_size and halving_period must be positive".into(),
            ));
        }
        let positive = |v: f64| v > 0.0;
        if !positive(self.lr) || self.weight_decay < 0.0 || !positive(self.grad_clip) {
            return Err(Error::InvalidArgument(
                "lr and grad_clip must be positive, weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub train_mdice: f64,
    pub val_mdice: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mdice: f64,
    /// Checkpoint bytes of the best epoch by validation mDice.
    pub best_checkpoint: Vec<u8>,
}

fn dice_of(prob_or_logit: &[f32], mask: &[f32], side: usize, threshold: f64) -> Result<f64> {
    let pred = Map::new(
        side,
        side,
        prob_or_logit
            .iter()
            .map(|&v| if f64::from(v) >= threshold { 1.0 } else { 0.0 })
            .collect(),
    )?;
    let gt = Map::new(side, side, mask.iter().map(|&m| f64::from(m)).collect())?;
    Ok(dice_iou(&pred, &gt, 0.5)?.0)
}

/// Foreground probability maps for `samples`, evaluated `batch` at a time.
pub fn predict_samples(
    net: &CmfdNet,
    params: &ParamStore<f32>,
    samples: &[Sample],
    batch: usize,
) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (images, _) = to_batch(&refs)?;
        let probs = net.predict(params, &images)?;
        let hw = probs.numel() / chunk.len();
        out.extend(probs.data().chunks(hw).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// Mean dice of thresholded predictions over `samples`.
pub fn mean_dice(
    net: &CmfdNet,
    params: &ParamStore<f32>,
    samples: &[Sample],
    batch: usize,
) -> Result<f64> {
    let probs = predict_samples(net, params, samples, batch)?;
    let mut total = 0.0;
    for (p, s) in probs.iter().zip(samples) {
        let mask: Vec<f32> = s.mask.iter().map(|&m| f32::from(m)).collect();
        total += dice_of(p, &mask, s.height, DICE_THRESHOLD)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Metrics of `samples` at their native size: each image is resized to the
/// model input, and the probability map is resized back before scoring.
pub fn evaluate(
    net: &CmfdNet,
    params: &ParamStore<f32>,
    samples: &[Sample],
    batch: usize,
) -> Result<MetricsReport> {
    let side = net.config.input_size;
    let inputs: Vec<Sample> = samples.iter().map(|s| s.resized(side)).collect();
    let probs = predict_samples(net, params, &inputs, batch)?;
    let mut preds = Vec::with_capacity(samples.len());
    let mut gts = Vec::with_capacity(samples.len());
    for (p, s) in probs.iter().zip(samples) {
        let back = if (s.height, s.width) == (side, side) {
            p.clone()
        } else {
            resize_bilinear(p, (side, side), (s.height, s.width))
        };
        let data = back.iter().map(|&v| f64::from(v).clamp(0.0, 1.0)).collect();
        preds.push(Map::new(s.height, s.width, data)?);
        let mask: Vec<bool> = s.mask.iter().map(|&m| m != 0).collect();
        gts.push(Map::from_mask(s.height, s.width, &mask)?);
    }
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    evaluate_dataset(&ids, &preds, &gts)
}

/// Trains `params` in place. Samples must already be at the model input
/// size. `on_epoch` sees each log record as soon as it is complete.
pub fn train(
    net: &CmfdNet,
    params: &mut ParamStore<f32>,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    aug: &AugmentConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainResult> {
    cfg.validate()?;
    aug.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let side = net.config.input_size;
    if let Some(s) = train_set
        .iter()
        .chain(val_set)
        .find(|s| (s.height, s.width) != (side, side))
    {
        return Err(Error::shape(
            &[side, side],
            &[s.height, s.width],
            "sample vs model input",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(
        AdamWConfig {
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        params,
    );
    let schedule = cfg.schedule();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut result = TrainResult {
        log: Vec::new(),
        best_epoch: 0,
        best_val_mdice: f64::NEG_INFINITY,
        best_checkpoint: Vec::new(),
    };
    let hw = side * side;
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut steps) = (0.0, 0usize);
        let (mut dice_sum, mut seen) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let augmented: Vec<Sample> = batch
                .iter()
                .map(|&i| augment(&train_set[i], aug, &mut rng))
                .collect();
            let refs: Vec<&Sample> = augmented.iter().collect();
            let (images, masks) = to_batch(&refs)?;
            let graph = Graph::new();
            let s = Scope::new(&graph, params);
            let maps = net.forward(s, s.constant(images), Mode::Train)?;
            let loss = seg_loss(&maps, &masks, &cfg.head_weights)?;
            let loss_value = f64::from(loss.value().item());
            if !loss_value.is_finite() {
                graph.check_finite()?;
                return Err(Error::NonFinite {
                    op: "seg_loss",
                    node: loss.id(),
                });
            }
            let main = maps[0].value();
            for k in 0..batch.len() {
                let logits = &main.data()[k * hw..(k + 1) * hw];
                dice_sum += dice_of(logits, &masks.data()[k * hw..(k + 1) * hw], side, 0.0)?;
                seen += 1;
            }
            let mut grads = graph.backward(loss, params)?;
            drop(graph);
            if !grads.is_finite() {
                return Err(Error::NonFinite {
                    op: "gradient",
                    node: 0,
                });
            }
            let norm = grads.global_norm();
            if norm > cfg.grad_clip {
                grads.scale((cfg.grad_clip / norm) as f32);
            }
            opt.update(params, &grads, lr)?;
            loss_sum += loss_value;
            steps += 1;
        }
        let train_mdice = dice_sum / seen as f64;
        let val_mdice = if val_set.is_empty() {
            train_mdice
        } else {
            mean_dice(net, params, val_set, cfg.batch_size)?
        };
        let record = EpochLog {
            epoch,
            lr,
            mean_loss: loss_sum / steps as f64,
            train_mdice,
            val_mdice,
        };
        on_epoch(&record);
        if val_mdice > result.best_val_mdice {
            result.best_val_mdice = val_mdice;
            result.best_epoch = epoch;
            result.best_checkpoint = net.to_checkpoint(params)?;
        }
        result.log.push(record);
    }
    Ok(result)
}
