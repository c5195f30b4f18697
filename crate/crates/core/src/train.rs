//! Mini-batch training loop with best-checkpoint selection.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Fwd;
use crate::seed::derive_seed;
use crate::tensor::{clip_global_norm, Adam, AdamConfig, Gradients, NodeId, ParamStore, Result, TensorError};

pub const CLIP_NORM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Encoder rate when encoder and decoder are optimized separately.
    pub lr_encoder: f64,
    /// Decoder and head rate when optimized separately.
    pub lr_decoder: f64,
    /// Stop after this many epochs without a better validation score.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            max_epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            lr_encoder: 1e-4,
            lr_decoder: 5e-4,
            patience: None,
            seed: 1,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self, epoch_cap: usize) -> Result<()> {
        if self.max_epochs > epoch_cap {
            return Err(TensorError::Contract(format!(
                "max_epochs {} exceeds the cap of {epoch_cap}",
                self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(TensorError::Contract("batch_size must be positive".into()));
        }
        for lr in [self.lr, self.lr_encoder, self.lr_decoder] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(TensorError::Contract(format!("learning rate {lr}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub best: ParamStore,
    pub best_epoch: usize,
    pub best_validation: f64,
    pub history: Vec<EpochLog>,
}

/// One or more Adam instances, each over its own parameter group, sharing a
/// clipped gradient.
pub struct Optimizer {
    groups: Vec<Adam>,
}

impl Optimizer {
    pub fn single(store: &ParamStore, lr: f64) -> Self {
        Optimizer {
            groups: vec![Adam::over_all(store, AdamConfig::with_lr(lr))],
        }
    }

    /// Parameters named `{prefix}*` at `lr_prefix`, the rest at `lr_rest`.
    pub fn split(store: &ParamStore, prefix: &str, lr_prefix: f64, lr_rest: f64) -> Self {
        let (a, b): (Vec<_>, Vec<_>) = store.ids().partition(|&id| store.name(id).starts_with(prefix));
        Optimizer {
            groups: vec![
                Adam::new(store, a, AdamConfig::with_lr(lr_prefix)),
                Adam::new(store, b, AdamConfig::with_lr(lr_rest)),
            ],
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &mut Gradients) -> Result<()> {
        clip_global_norm(grads, CLIP_NORM);
        for g in &mut self.groups {
            g.step(store, grads)?;
        }
        Ok(())
    }
}

const SHUFFLE_STREAM: u64 = 0x7368_7566;
const DROPOUT_STREAM: u64 = 0x6472_6f70;

/// Trains for up to `schedule.max_epochs`, scoring the validation set after
/// each epoch (higher is better) and keeping the best parameters. Epoch 0 is
/// the untrained model.
pub fn fit(
    store: &mut ParamStore,
    optimizer: &mut Optimizer,
    n_train: usize,
    dropout: f64,
    schedule: &TrainSchedule,
    mut loss: impl FnMut(&mut Fwd, usize) -> Result<NodeId>,
    mut validate: impl FnMut(&ParamStore) -> Result<f64>,
) -> Result<FitOutcome> {
    let mut best = store.clone();
    let mut best_validation = validate(store)?;
    let mut best_epoch = 0;
    let mut history = vec![EpochLog {
        epoch: 0,
        train_loss: f64::NAN,
        validation: best_validation,
    }];
    let mut grads = Gradients::zeros_like(store);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut step = 0u64;
    for epoch in 1..=schedule.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(schedule.seed, SHUFFLE_STREAM, epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            grads.zero();
            for &i in batch {
                let mut cx = Fwd::train(store, dropout, derive_seed(schedule.seed, DROPOUT_STREAM, step));
                step += 1;
                let l = loss(&mut cx, i)?;
                total += cx.g.scalar(l);
                cx.g.backward(l)?;
                cx.g.accumulate_param_grads(&mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            optimizer.step(store, &mut grads)?;
        }
        let v = validate(store)?;
        history.push(EpochLog {
            epoch,
            train_loss: total / n_train.max(1) as f64,
            validation: v,
        });
        if v > best_validation {
            best_validation = v;
            best_epoch = epoch;
            best.clone_from(store);
        }
        if schedule.patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }
    Ok(FitOutcome {
        best,
        best_epoch,
        best_validation,
        history,
    })
}
