use serde::{Deserialize, Serialize};

use super::optim::{AdamWConfig, ScheduleKind};
use crate::error::{Error, Result};
use crate::models::{Architecture, ModelConfig, ModelKind, Preset, DEFAULT_MAX_LEN};
use crate::parallel::Parallelism;

pub const PAPER_LR: f64 = 2e-5;
pub const PAPER_BATCH_SIZE: usize = 16;
pub const EVAL_EVERY_EPOCHS: usize = 5;
pub const WARMUP_FRACTION: f64 = 0.1;
pub const CLIP_NORM: f64 = 1.0;

pub fn paper_epochs(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Transformer => 15,
        ModelKind::Rcnn | ModelKind::BilstmAttn => 50,
    }
}

/// Learning rates for the desk preset. Randomly initialized small models
/// do not move at the fine-tuning rate.
pub fn desk_lr(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Transformer => 1e-3,
        ModelKind::Rcnn => 3e-3,
        ModelKind::BilstmAttn => 1e-3,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub preset: Preset,
    pub arch: Architecture,
    pub max_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub schedule: ScheduleKind,
    pub warmup_fraction: f64,
    pub adamw: AdamWConfig,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub eval_every_epochs: usize,
    pub seed: u64,
    pub fold: usize,
    /// Target size of the vocabulary trained on the fold's training texts.
    pub vocab_size: usize,
    pub vocab_min_freq: usize,
    #[serde(skip, default)]
    pub parallelism: Parallelism,
}

impl TrainConfig {
    pub fn new(model: ModelKind, preset: Preset) -> Self {
        let (base_lr, vocab_size) = match preset {
            Preset::Paper => (PAPER_LR, 30_000),
            Preset::Desk => (desk_lr(model), 2_000),
        };
        TrainConfig {
            model,
            preset,
            arch: Architecture::preset(model, preset),
            max_len: DEFAULT_MAX_LEN,
            epochs: paper_epochs(model),
            batch_size: PAPER_BATCH_SIZE,
            base_lr,
            // the RCNN was trained at a fixed rate
            schedule: match model {
                ModelKind::Rcnn => ScheduleKind::Constant,
                _ => ScheduleKind::LinearDecayWithWarmup,
            },
            warmup_fraction: WARMUP_FRACTION,
            adamw: AdamWConfig::default(),
            clip_norm: match model {
                ModelKind::Transformer => None,
                _ => Some(CLIP_NORM),
            },
            eval_every_epochs: EVAL_EVERY_EPOCHS,
            seed: 0,
            fold: 0,
            vocab_size,
            vocab_min_freq: 1,
            parallelism: Parallelism::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.eval_every_epochs == 0 {
            return bad("eval_every_epochs must be at least 1".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup fraction {} outside [0, 1)", self.warmup_fraction));
        }
        if self.arch.kind() != self.model {
            return bad(format!("architecture is {}, model is {}", self.arch.kind(), self.model));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip norm {c} must be positive"));
            }
        }
        self.model_config(self.vocab_size.max(1), 1).validate()
    }

    pub fn model_config(&self, vocab_size: usize, num_classes: usize) -> ModelConfig {
        ModelConfig { vocab_size, num_classes, max_len: self.max_len, arch: self.arch.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_hyperparameter_table() {
        for kind in ModelKind::ALL {
            let c = TrainConfig::new(kind, Preset::Paper);
            c.validate().unwrap();
            assert_eq!(c.batch_size, 16);
            assert_eq!(c.base_lr, 2e-5);
            assert_eq!(c.eval_every_epochs, 5);
        }
        assert_eq!(TrainConfig::new(ModelKind::Transformer, Preset::Paper).epochs, 15);
        assert_eq!(TrainConfig::new(ModelKind::Rcnn, Preset::Paper).epochs, 50);
        assert_eq!(TrainConfig::new(ModelKind::BilstmAttn, Preset::Paper).epochs, 50);
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut c = TrainConfig::new(ModelKind::Rcnn, Preset::Desk);
        c.epochs = 0;
        assert!(c.validate().is_err());
        c.epochs = 1;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
