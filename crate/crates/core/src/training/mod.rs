//! Mini-batch Adam on the mean cross-entropy, with plateau learning-rate decay,
//! early stopping on validation loss, and best-epoch parameter selection.

mod adam;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, adam_update, AdamState, BETA1, BETA2, EPSILON};

use crate::data::{DatasetSplit, LabeledWindow};
use crate::error::{Error, Result};
use crate::model::{forward, init_params, loss_and_gradients, CttsConfig, CttsParams, Gradients};
use crate::numerics::{argmax, cross_entropy};
use crate::parallel::map_ordered;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    /// Shuffling seed.
    pub seed: u64,
    /// Loss multiplier per class, indexed Down, Flat, Up.
    pub class_weights: [f64; 3],
    /// Worker threads for per-window gradients. Results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 300,
            patience: 15,
            learning_rate: 1e-3,
            lr_decay_factor: 0.1,
            seed: 0,
            class_weights: [1.0; 3],
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return fail("batch_size, max_epochs and patience must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return fail(format!(
                "lr_decay_factor must lie in (0, 1), got {}",
                self.lr_decay_factor
            ));
        }
        if self.class_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return fail(format!("class weights must be positive, got {:?}", self.class_weights));
        }
        Ok(())
    }

    /// Stagnant epochs between learning-rate decays; zero disables decay.
    pub fn decay_interval(&self) -> usize {
        self.patience / 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) with the lowest validation loss.
    pub best_epoch: usize,
    /// Optimizer updates performed.
    pub steps: u64,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// `epoch,train_loss,val_loss,val_acc,lr` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_acc,lr\n");
        for r in &self.epochs {
            writeln!(
                s,
                "{},{:?},{:?},{:?},{:?}",
                r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr
            )
            .unwrap();
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Mean cross-entropy and argmax accuracy. Never mutates `params`.
pub fn evaluate_loss(params: &CttsParams, config: &CttsConfig, windows: &[LabeledWindow]) -> Result<(f64, f64)> {
    evaluate_loss_with(params, config, windows, 1)
}

pub fn evaluate_loss_with(
    params: &CttsParams,
    config: &CttsConfig,
    windows: &[LabeledWindow],
    threads: usize,
) -> Result<(f64, f64)> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("evaluate_loss on an empty set".into()));
    }
    let per = map_ordered(threads, windows, |w| -> Result<(f64, bool)> {
        let trace = forward(w, params, config)?;
        let label = w.label.index();
        Ok((cross_entropy(&trace.probs, label)?, argmax(&trace.probs) == label))
    });
    let mut loss = 0.0;
    let mut correct = 0usize;
    for r in per {
        let (l, ok) = r?;
        loss += l;
        correct += ok as usize;
    }
    let n = windows.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Largest window volatility in the training set.
pub fn max_volatility(windows: &[LabeledWindow]) -> Result<f64> {
    let m = windows.iter().map(|w| w.volatility).fold(0.0, f64::max);
    if !(m > 0.0) {
        return Err(Error::InvalidArgument("training windows have zero volatility".into()));
    }
    Ok(m)
}

pub fn fit(
    split: &DatasetSplit,
    model_config: &CttsConfig,
    train_config: &TrainConfig,
) -> Result<(CttsParams, TrainLog)> {
    fit_with_callback(split, model_config, train_config, |_, _| Ok(()))
}

/// Like [`fit`], calling `on_best` each time validation loss reaches a new minimum.
pub fn fit_with_callback<F>(
    split: &DatasetSplit,
    model_config: &CttsConfig,
    train_config: &TrainConfig,
    mut on_best: F,
) -> Result<(CttsParams, TrainLog)>
where
    F: FnMut(&CttsParams, &EpochRecord) -> Result<()>,
{
    model_config.validate()?;
    train_config.validate()?;
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "training needs non-empty train and validation sets, got {} and {}",
            split.train.len(),
            split.validation.len()
        )));
    }
    let mut params = init_params(model_config, model_config.seed)?;
    params.freeze_sigma_max(max_volatility(&split.train)?)?;

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut state = AdamState::new(&params);
    let mut lr = train_config.learning_rate;
    let mut log = TrainLog::default();
    let mut best: Option<(f64, CttsParams)> = None;
    let mut stale = 0usize;

    for epoch in 1..=train_config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_no, batch) in order.chunks(train_config.batch_size).enumerate() {
            let windows: Vec<&LabeledWindow> = batch.iter().map(|&i| &split.train[i]).collect();
            let per = map_ordered(train_config.threads, &windows, |w| {
                let label = w.label.index();
                loss_and_gradients(
                    &w.inputs,
                    w.volatility,
                    label,
                    train_config.class_weights[label],
                    &params,
                    model_config,
                )
            });
            let mut grads = Gradients::zeros_like(&params);
            let mut batch_loss = 0.0;
            for r in per {
                let (l, g) = r?;
                batch_loss += l;
                grads.add_assign(&g);
            }
            let scale = 1.0 / windows.len() as f64;
            grads.scale(scale);
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no,
                    msg: format!("loss {batch_loss}"),
                });
            }
            loss_sum += batch_loss;
            adam_step(&mut params, &grads, &mut state, lr)?;
        }

        let (val_loss, val_acc) = evaluate_loss_with(&params, model_config, &split.validation, train_config.threads)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                msg: format!("validation loss {val_loss}"),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / split.train.len() as f64,
            val_loss,
            val_acc,
            lr,
        };
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
            log.best_epoch = epoch;
            stale = 0;
            on_best(&params, &record)?;
        } else {
            stale += 1;
            let interval = train_config.decay_interval();
            if interval > 0 && stale.is_multiple_of(interval) {
                lr *= train_config.lr_decay_factor;
            }
        }
        log.epochs.push(record);
        if stale >= train_config.patience {
            break;
        }
    }
    log.steps = state.step;
    Ok((best.expect("at least one epoch runs").1, log))
}
