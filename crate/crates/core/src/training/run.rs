use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::{adamw_step, clip_global_norm, lr_at, OptimizerState, Schedule, ScheduleKind};
use crate::dataset::{ClassInfo, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::evaluation::{confusion, metrics, ConfusionMatrix, MetricsRow};
use crate::models::{
    batch_gradients, forward, save_params, write_atomic, ModelConfig, ModelKind, ModelParams, Mode,
};
use crate::parallel::Parallelism;
use crate::rng;
use crate::textnorm::Normalizer;
use crate::tokenizer::{train_vocab, TokenizedInput, Tokenizer, Vocab};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const RECORD_FILE: &str = "record.json";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Encoded examples with their dense labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EncodedSplit {
    pub inputs: Vec<TokenizedInput>,
    pub labels: Vec<usize>,
}

impl EncodedSplit {
    pub fn encode<'a>(
        examples: impl IntoIterator<Item = &'a crate::dataset::Example>,
        normalizer: &Normalizer,
        tokenizer: &Tokenizer,
    ) -> Self {
        let mut s = EncodedSplit::default();
        for e in examples {
            s.inputs.push(tokenizer.encode(&normalizer.normalize(&e.text)));
            s.labels.push(e.label);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// One fold's tokenizer and encoded splits. The vocabulary is trained on
/// the training split only.
#[derive(Clone, Debug)]
pub struct FoldData {
    pub tokenizer: Tokenizer,
    pub train: EncodedSplit,
    pub validation: EncodedSplit,
    pub test: EncodedSplit,
}

pub fn prepare_fold(
    ds: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    cfg: &TrainConfig,
    normalizer: &Normalizer,
) -> Result<FoldData> {
    if plan.assignments.len() != ds.len() {
        return Err(Error::Config(format!(
            "fold plan covers {} examples, dataset has {}",
            plan.assignments.len(),
            ds.len()
        )));
    }
    let split = plan.split(fold)?;
    if split.train.is_empty() {
        return Err(Error::Config(format!("fold {fold} has no training examples")));
    }
    let train_texts: Vec<String> =
        split.train.iter().map(|&i| normalizer.normalize(&ds.examples[i].text)).collect();
    let vocab = train_vocab(train_texts.iter().map(String::as_str), cfg.vocab_size, cfg.vocab_min_freq)?;
    let tokenizer = Tokenizer::new(vocab, cfg.max_len)?;
    let enc = |idx: &[usize]| EncodedSplit::encode(ds.subset(idx), normalizer, &tokenizer);
    Ok(FoldData {
        train: enc(&split.train),
        validation: enc(&split.validation),
        test: enc(&split.test),
        tokenizer,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: MetricsRow,
    /// Mean cross-entropy.
    pub loss: f64,
    pub confusion: ConfusionMatrix,
}

pub fn predict(
    params: &ModelParams<f32>,
    inputs: &[TokenizedInput],
    par: Parallelism,
) -> Result<Vec<usize>> {
    Ok(forward(params, inputs, Mode::Eval, par)?.argmax_rows())
}

pub fn evaluate(params: &ModelParams<f32>, split: &EncodedSplit, par: Parallelism) -> Result<Evaluation> {
    if split.is_empty() {
        return Err(Error::Metrics("cannot evaluate an empty split".into()));
    }
    let logits = forward(params, &split.inputs, Mode::Eval, par)?;
    let mut loss = 0.0;
    for (r, &y) in split.labels.iter().enumerate() {
        let row: Vec<f64> = logits.row(r).iter().map(|&v| v as f64).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
    }
    let cm = confusion(&logits.argmax_rows(), &split.labels, params.config().num_classes)?;
    Ok(Evaluation { metrics: metrics(&cm)?, loss: loss / split.len() as f64, confusion: cm })
}

/// Epoch-at-a-time training over one split.
pub struct Trainer<'d> {
    cfg: TrainConfig,
    params: ModelParams<f32>,
    opt: OptimizerState<f32>,
    schedule: Schedule,
    data: &'d EncodedSplit,
    run_seed: u64,
    epoch: usize,
}

impl<'d> Trainer<'d> {
    pub fn new(cfg: &TrainConfig, model: &ModelConfig, data: &'d EncodedSplit) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Config("no training examples".into()));
        }
        let run_seed = rng::derive_seed(cfg.seed, &[cfg.fold as u64]);
        let params = ModelParams::init(model, rng::derive_seed(run_seed, &[0]))?;
        let opt = OptimizerState::new(&params, cfg.adamw);
        let batches = data.len().div_ceil(cfg.batch_size) as u64;
        let total = batches * cfg.epochs as u64;
        let schedule = match cfg.schedule {
            ScheduleKind::Constant => Schedule::constant(total),
            ScheduleKind::LinearDecayWithWarmup => Schedule::linear(total, cfg.warmup_fraction)?,
        };
        Ok(Trainer { cfg: cfg.clone(), params, opt, schedule, data, run_seed, epoch: 0 })
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<f32> {
        self.params
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Runs one epoch and returns the mean training loss over examples.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut rng::stream(self.run_seed, &[1, epoch as u64]));
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let inputs: Vec<TokenizedInput> = chunk.iter().map(|&i| self.data.inputs[i].clone()).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| self.data.labels[i]).collect();
            let seed = rng::derive_seed(self.run_seed, &[2, epoch as u64, batch as u64]);
            let mut bg = batch_gradients(
                &self.params,
                &inputs,
                &targets,
                Mode::Train { seed },
                self.cfg.parallelism,
            )?;
            if !bg.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            if let Some(max) = self.cfg.clip_norm {
                clip_global_norm(&mut bg.grads, max);
            }
            let lr = lr_at(self.opt.step, &self.schedule, self.cfg.base_lr);
            adamw_step(&mut self.params, &bg.grads, &mut self.opt, lr)?;
            total += bg.loss * chunk.len() as f64;
        }
        self.epoch += 1;
        Ok(total / self.data.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    /// 1-based epoch after which validation ran.
    pub epoch: usize,
    pub loss: f64,
    pub metrics: MetricsRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestValidation {
    pub epoch: usize,
    pub f1: f64,
    /// Test metrics of the parameters from that epoch.
    pub test: MetricsRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizerInfo {
    pub vocab_size: usize,
    pub max_len: usize,
    pub normalization_table_version: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    pub fold: usize,
    pub config: TrainConfig,
    pub model_config: ModelConfig,
    pub tokenizer: TokenizerInfo,
    pub train_losses: Vec<f64>,
    pub validation: Vec<ValidationPoint>,
    /// Final-epoch parameters on the test split.
    pub test: MetricsRow,
    pub test_loss: f64,
    /// Classes present in the test split that were never predicted.
    pub never_predicted: Vec<usize>,
    pub best_validation: Option<BestValidation>,
    pub duration_secs: f64,
    pub best_checkpoint: Option<PathBuf>,
    pub final_checkpoint: Option<PathBuf>,
}

impl RunRecord {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Sidecar stored next to each checkpoint as `<checkpoint>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_config: ModelConfig,
    pub classes: Vec<ClassInfo>,
    /// Relative to the checkpoint's directory.
    pub vocab_file: String,
    pub normalization_table_version: Option<String>,
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl ModelMeta {
    pub fn load_for(checkpoint: &Path) -> Result<Self> {
        let path = meta_path(checkpoint);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn vocab_path(&self, checkpoint: &Path) -> PathBuf {
        checkpoint.parent().unwrap_or(Path::new(".")).join(&self.vocab_file)
    }
}

fn save_checkpoint(params: &ModelParams<f32>, meta: &ModelMeta, path: &Path) -> Result<()> {
    save_params(params, path)?;
    write_atomic(&meta_path(path), serde_json::to_string_pretty(meta)?.as_bytes())
}

/// Trains one fold. With `out`, writes the vocabulary, best-validation and
/// final checkpoints and the run record under it.
pub fn train_fold(
    ds: &Dataset,
    plan: &FoldPlan,
    cfg: &TrainConfig,
    normalizer: &Normalizer,
    out: Option<&Path>,
) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let data = prepare_fold(ds, plan, cfg.fold, cfg, normalizer)?;
    if data.test.is_empty() {
        return Err(Error::Config(format!("fold {} has no test examples", cfg.fold)));
    }
    let model = cfg.model_config(data.tokenizer.vocab().len(), ds.num_classes());
    model.validate()?;
    let meta = ModelMeta {
        model_config: model.clone(),
        classes: ds.classes.clone(),
        vocab_file: VOCAB_FILE.into(),
        normalization_table_version: normalizer.table().version().map(str::to_string),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join(VOCAB_FILE), data.tokenizer.vocab().to_file_string().as_bytes())?;
    }
    let best_path = out.map(|d| d.join(BEST_CHECKPOINT));
    let final_path = out.map(|d| d.join(FINAL_CHECKPOINT));

    // The test split stays out of the loop until training is over.
    let FoldData { train, validation, test, tokenizer } = data;
    let mut trainer = Trainer::new(cfg, &model, &train)?;
    let mut train_losses = Vec::with_capacity(cfg.epochs);
    let mut points = Vec::new();
    let mut best: Option<(usize, f64, ModelParams<f32>)> = None;
    for epoch in 1..=cfg.epochs {
        let loss = trainer.run_epoch()?;
        log::info!("{} fold {} epoch {epoch}: loss {loss:.5}", cfg.model, cfg.fold);
        train_losses.push(loss);
        let due = epoch % cfg.eval_every_epochs == 0 || epoch == cfg.epochs;
        if due && !validation.is_empty() {
            let ev = evaluate(trainer.params(), &validation, cfg.parallelism)?;
            log::info!("validation at epoch {epoch}: f1 {:.2}", ev.metrics.f1);
            if best.as_ref().is_none_or(|(_, f1, _)| ev.metrics.f1 > *f1) {
                if let Some(p) = &best_path {
                    save_checkpoint(trainer.params(), &meta, p)?;
                }
                best = Some((epoch, ev.metrics.f1, trainer.params().clone()));
            }
            points.push(ValidationPoint { epoch, loss: ev.loss, metrics: ev.metrics });
        }
    }
    let params = trainer.into_params();
    if let Some(p) = &final_path {
        save_checkpoint(&params, &meta, p)?;
    }

    let test_eval = evaluate(&params, &test, cfg.parallelism)?;
    let best_validation = match best {
        Some((epoch, f1, p)) => {
            Some(BestValidation { epoch, f1, test: evaluate(&p, &test, cfg.parallelism)?.metrics })
        }
        None => None,
    };

    let record = RunRecord {
        model: cfg.model,
        fold: cfg.fold,
        config: cfg.clone(),
        model_config: model,
        tokenizer: TokenizerInfo {
            vocab_size: tokenizer.vocab().len(),
            max_len: tokenizer.max_len(),
            normalization_table_version: normalizer.table().version().map(str::to_string),
        },
        train_losses,
        validation: points,
        test: test_eval.metrics,
        test_loss: test_eval.loss,
        never_predicted: test_eval.confusion.never_predicted(),
        best_validation,
        duration_secs: start.elapsed().as_secs_f64(),
        best_checkpoint: best_path.filter(|p| p.exists()),
        final_checkpoint: final_path,
    };
    if let Some(dir) = out {
        record.save(dir.join(RECORD_FILE))?;
    }
    Ok(record)
}

/// Loads a checkpoint with its sidecar and vocabulary. `vocab` overrides
/// the vocabulary file named in the sidecar.
pub fn load_model(
    checkpoint: &Path,
    vocab: Option<&Path>,
) -> Result<(ModelParams<f32>, ModelMeta, Vocab)> {
    let meta = ModelMeta::load_for(checkpoint)?;
    let params = crate::models::load_params(checkpoint, &meta.model_config)?;
    let vocab_path = vocab.map_or_else(|| meta.vocab_path(checkpoint), Path::to_path_buf);
    let vocab = Vocab::from_file(vocab_path)?;
    if vocab.len() != meta.model_config.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocabulary has {} entries, model expects {}",
            vocab.len(),
            meta.model_config.vocab_size
        )));
    }
    Ok((params, meta, vocab))
}
