//! Per-example graphs and batch entry points.
//!
//! Each example is run on its real (non-padding) prefix only, so padding
//! cannot influence the logits. Batch results are assembled in input
//! order regardless of how the examples were scheduled.

use super::config::{Architecture, ModelConfig, ModelKind};
use super::layers::{attention_pool, bilstm, encoder_states, linear};
use super::params::{Bound, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::{Graph, Padding, Scalar, Tensor, Var};
use crate::parallel::{map_indexed, Parallelism};
use crate::rng::{self, StreamRng};
use crate::tokenizer::TokenizedInput;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active; example `i` draws from `stream(seed, [i])`.
    Train { seed: u64 },
}

impl Mode {
    fn rng(self, index: usize) -> Option<StreamRng> {
        match self {
            Mode::Eval => None,
            Mode::Train { seed } => Some(rng::stream(seed, &[index as u64])),
        }
    }
}

/// Validates one input against the config and returns its real ids.
pub fn real_ids(cfg: &ModelConfig, input: &TokenizedInput) -> Result<Vec<usize>> {
    if input.ids.len() != cfg.max_len {
        return Err(Error::shape("model input", &[input.ids.len()], &[cfg.max_len]));
    }
    input.check_real().map_err(|m| Error::Config(format!("invalid input: {m}")))?;
    input
        .real_ids()
        .iter()
        .enumerate()
        .map(|(position, &id)| {
            if (id as usize) < cfg.vocab_size {
                Ok(id as usize)
            } else {
                Err(Error::TokenOutOfRange { position, id, size: cfg.vocab_size })
            }
        })
        .collect()
}

/// Logits (`1 × num_classes`) for one example's real ids.
pub fn logits_graph<T: Scalar>(
    g: &mut Graph<'_, T>,
    b: &Bound,
    cfg: &ModelConfig,
    ids: &[usize],
    mut rng: Option<&mut StreamRng>,
) -> Result<Var> {
    let pooled = match &cfg.arch {
        Architecture::Transformer(t) => {
            let states = encoder_states(g, b, "", t, ids, None, rng.as_deref_mut())?;
            let cls = g.row(states, 0)?;
            g.dropout(cls, t.dropout, rng.as_deref_mut())?
        }
        Architecture::Rcnn(r) => {
            let emb = g.gather_rows(b.get("embedding.token")?, ids)?;
            let seq = bilstm(g, b, "lstm", emb)?;
            let conv = g.conv1d(seq, b.get("conv.kernel")?, Padding::Same)?;
            let conv = g.add_row(conv, b.get("conv.bias")?)?;
            let act = g.relu(conv);
            let pooled = g.max_pool_rows(act, None)?;
            g.dropout(pooled, r.dropout, rng.as_deref_mut())?
        }
        Architecture::BilstmAttn(a) => {
            let enc = encoder_states(g, b, "encoder.", &a.encoder, ids, None, rng.as_deref_mut())?;
            let seq = bilstm(g, b, "lstm", enc)?;
            let w = b.get("attention.weight")?;
            let v = b.get("attention.vector")?;
            let pooled = attention_pool(g, seq, None, w, v)?;
            g.dropout(pooled, a.dropout, rng.as_deref_mut())?
        }
    };
    linear(g, b, "classifier", pooled)
}

fn example_logits<T: Scalar>(
    params: &ModelParams<T>,
    input: &TokenizedInput,
    mode: Mode,
    index: usize,
) -> Result<Vec<T>> {
    let ids = real_ids(params.config(), input)?;
    let mut g = Graph::new();
    let b = params.bind(&mut g, false);
    let mut rng = mode.rng(index);
    let out = logits_graph(&mut g, &b, params.config(), &ids, rng.as_mut())?;
    Ok(g.value(out).values().to_vec())
}

/// Logits for a batch, `batch × num_classes`.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[TokenizedInput],
    mode: Mode,
    par: Parallelism,
) -> Result<Tensor<T>> {
    let c = params.config().num_classes;
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let rows = map_indexed(batch, par, |i, x| example_logits(params, x, mode, i));
    let mut values = Vec::with_capacity(batch.len() * c);
    for r in rows {
        values.extend(r?);
    }
    Tensor::new(vec![batch.len(), c], values)
}

fn forward_kind<T: Scalar>(
    kind: ModelKind,
    params: &ModelParams<T>,
    batch: &[TokenizedInput],
    train_mode: Option<u64>,
) -> Result<Tensor<T>> {
    if params.config().kind() != kind {
        return Err(Error::Config(format!(
            "parameters are for {}, not {kind}",
            params.config().kind()
        )));
    }
    let mode = train_mode.map_or(Mode::Eval, |seed| Mode::Train { seed });
    forward(params, batch, mode, Parallelism::default())
}

/// `train_mode` carries the dropout seed; `None` evaluates.
pub fn transformer_forward<T: Scalar>(
    batch: &[TokenizedInput],
    params: &ModelParams<T>,
    train_mode: Option<u64>,
) -> Result<Tensor<T>> {
    forward_kind(ModelKind::Transformer, params, batch, train_mode)
}

pub fn rcnn_forward<T: Scalar>(
    batch: &[TokenizedInput],
    params: &ModelParams<T>,
    train_mode: Option<u64>,
) -> Result<Tensor<T>> {
    forward_kind(ModelKind::Rcnn, params, batch, train_mode)
}

pub fn bilstm_attn_forward<T: Scalar>(
    batch: &[TokenizedInput],
    params: &ModelParams<T>,
    train_mode: Option<u64>,
) -> Result<Tensor<T>> {
    forward_kind(ModelKind::BilstmAttn, params, batch, train_mode)
}

#[derive(Clone, Debug)]
pub struct BatchGradients<T> {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    /// One tensor per parameter in spec order, averaged over the batch;
    /// frozen tensors get zeros.
    pub grads: Vec<Tensor<T>>,
}

fn example_gradients<T: Scalar>(
    params: &ModelParams<T>,
    input: &TokenizedInput,
    target: usize,
    mode: Mode,
    index: usize,
) -> Result<(T, Vec<Tensor<T>>)> {
    let ids = real_ids(params.config(), input)?;
    let mut g = Graph::new();
    let b = params.bind(&mut g, true);
    let mut rng = mode.rng(index);
    let logits = logits_graph(&mut g, &b, params.config(), &ids, rng.as_mut())?;
    let loss = g.cross_entropy(logits, &[target])?;
    let loss_value = g.value(loss).values()[0];
    let mut trained = g.backward(loss)?.into_tensors().into_iter();
    let grads = params
        .specs()
        .iter()
        .map(|s| {
            if s.trainable {
                trained.next().expect("one gradient per trainable tensor")
            } else {
                Tensor::zeros(&s.dims)
            }
        })
        .collect();
    Ok((loss_value, grads))
}

/// Mean loss and gradients for a batch. Per-example work may run in
/// parallel; the reduction is sequential in batch order.
pub fn batch_gradients<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[TokenizedInput],
    targets: &[usize],
    mode: Mode,
    par: Parallelism,
) -> Result<BatchGradients<T>> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::shape("batch_gradients", &[batch.len()], &[targets.len()]));
    }
    let items: Vec<(&TokenizedInput, usize)> = batch.iter().zip(targets.iter().copied()).collect();
    let results = map_indexed(&items, par, |i, &(x, y)| example_gradients(params, x, y, mode, i));
    let mut loss = T::zero();
    let mut grads: Vec<Tensor<T>> = params.specs().iter().map(|s| Tensor::zeros(&s.dims)).collect();
    for r in results {
        let (l, gs) = r?;
        loss = loss + l;
        for (acc, g) in grads.iter_mut().zip(&gs) {
            acc.add_assign(g);
        }
    }
    let inv = T::of(1.0 / batch.len() as f64);
    for g in &mut grads {
        g.scale_assign(inv);
    }
    Ok(BatchGradients { loss: (loss * inv).as_f64(), grads })
}
