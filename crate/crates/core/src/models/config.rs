use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Transformer,
    Rcnn,
    BilstmAttn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Transformer, ModelKind::Rcnn, ModelKind::BilstmAttn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Transformer => "transformer",
            ModelKind::Rcnn => "rcnn",
            ModelKind::BilstmAttn => "bilstm-attn",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Transformer => "Transformer",
            ModelKind::Rcnn => "RCNN",
            ModelKind::BilstmAttn => "BiLSTM with Attention",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(ModelKind::Transformer),
            "rcnn" => Ok(ModelKind::Rcnn),
            "bilstm-attn" | "bilstm_attn" => Ok(ModelKind::BilstmAttn),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Published dimensions; constructible, far too slow to train here.
    Paper,
    /// Small dimensions for CPU-scale runs.
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ff_inner: usize,
    pub dropout: f64,
}

impl TransformerConfig {
    pub fn paper() -> Self {
        TransformerConfig { layers: 12, heads: 12, hidden: 768, ff_inner: 4 * 768, dropout: 0.1 }
    }

    pub fn desk() -> Self {
        TransformerConfig { layers: 2, heads: 2, hidden: 64, ff_inner: 4 * 64, dropout: 0.1 }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcnnConfig {
    pub emb_dim: usize,
    pub lstm_hidden: usize,
    pub conv_width: usize,
    pub conv_filters: usize,
    pub dropout: f64,
}

impl RcnnConfig {
    pub fn paper() -> Self {
        RcnnConfig { emb_dim: 128, lstm_hidden: 256, conv_width: 3, conv_filters: 256, dropout: 0.5 }
    }

    pub fn desk() -> Self {
        RcnnConfig { emb_dim: 32, lstm_hidden: 32, conv_width: 3, conv_filters: 64, dropout: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilstmAttnConfig {
    pub encoder: TransformerConfig,
    pub lstm_hidden: usize,
    pub attention_dim: usize,
    pub dropout: f64,
    /// Keep encoder weights fixed during training.
    pub freeze_encoder: bool,
}

impl BilstmAttnConfig {
    pub fn paper() -> Self {
        BilstmAttnConfig {
            encoder: TransformerConfig::paper(),
            lstm_hidden: 256,
            attention_dim: 256,
            dropout: 0.3,
            freeze_encoder: false,
        }
    }

    pub fn desk() -> Self {
        BilstmAttnConfig {
            encoder: TransformerConfig::desk(),
            lstm_hidden: 32,
            attention_dim: 32,
            dropout: 0.3,
            freeze_encoder: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Transformer(TransformerConfig),
    Rcnn(RcnnConfig),
    BilstmAttn(BilstmAttnConfig),
}

impl Architecture {
    pub fn preset(kind: ModelKind, preset: Preset) -> Self {
        match (kind, preset) {
            (ModelKind::Transformer, Preset::Paper) => Architecture::Transformer(TransformerConfig::paper()),
            (ModelKind::Transformer, Preset::Desk) => Architecture::Transformer(TransformerConfig::desk()),
            (ModelKind::Rcnn, Preset::Paper) => Architecture::Rcnn(RcnnConfig::paper()),
            (ModelKind::Rcnn, Preset::Desk) => Architecture::Rcnn(RcnnConfig::desk()),
            (ModelKind::BilstmAttn, Preset::Paper) => Architecture::BilstmAttn(BilstmAttnConfig::paper()),
            (ModelKind::BilstmAttn, Preset::Desk) => Architecture::BilstmAttn(BilstmAttnConfig::desk()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::Transformer(_) => ModelKind::Transformer,
            Architecture::Rcnn(_) => ModelKind::Rcnn,
            Architecture::BilstmAttn(_) => ModelKind::BilstmAttn,
        }
    }

    pub fn dropout(&self) -> f64 {
        match self {
            Architecture::Transformer(t) => t.dropout,
            Architecture::Rcnn(r) => r.dropout,
            Architecture::BilstmAttn(b) => b.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub num_classes: usize,
    pub max_len: usize,
    pub arch: Architecture,
}

fn check_transformer(t: &TransformerConfig, max_len: usize) -> Result<()> {
    let _ = max_len;
    if t.layers == 0 || t.heads == 0 || t.hidden == 0 || t.ff_inner == 0 {
        return Err(Error::Config("transformer extents must be at least 1".into()));
    }
    if t.hidden % t.heads != 0 {
        return Err(Error::Config(format!(
            "hidden size {} is not divisible by {} heads",
            t.hidden, t.heads
        )));
    }
    check_dropout(t.dropout)
}

fn check_dropout(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout {rate} outside [0, 1)")));
    }
    Ok(())
}

impl ModelConfig {
    pub fn new(kind: ModelKind, preset: Preset, vocab_size: usize, num_classes: usize) -> Self {
        ModelConfig {
            vocab_size,
            num_classes,
            max_len: DEFAULT_MAX_LEN,
            arch: Architecture::preset(kind, preset),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.num_classes == 0 {
            return Err(Error::Config("vocab_size and num_classes must be at least 1".into()));
        }
        if self.max_len < 3 {
            return Err(Error::Config(format!("max_len must be at least 3, got {}", self.max_len)));
        }
        match &self.arch {
            Architecture::Transformer(t) => check_transformer(t, self.max_len),
            Architecture::Rcnn(r) => {
                if r.emb_dim == 0 || r.lstm_hidden == 0 || r.conv_filters == 0 {
                    return Err(Error::Config("rcnn extents must be at least 1".into()));
                }
                if r.conv_width % 2 == 0 {
                    return Err(Error::Config(format!(
                        "conv width {} must be odd for same padding",
                        r.conv_width
                    )));
                }
                check_dropout(r.dropout)
            }
            Architecture::BilstmAttn(b) => {
                check_transformer(&b.encoder, self.max_len)?;
                if b.lstm_hidden == 0 || b.attention_dim == 0 {
                    return Err(Error::Config("bilstm extents must be at least 1".into()));
                }
                check_dropout(b.dropout)
            }
        }
    }
}
