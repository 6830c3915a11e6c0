//! Transformer, RCNN and BiLSTM-with-attention classifiers.

mod checkpoint;
mod config;
mod forward;
pub mod layers;
mod params;

pub use checkpoint::{
    decode_params, decode_tensors, encode_params, load_params, save_params, write_atomic, FORMAT_VERSION,
    MAGIC,
};
pub use config::{
    Architecture, BilstmAttnConfig, ModelConfig, ModelKind, Preset, RcnnConfig, TransformerConfig,
    DEFAULT_MAX_LEN,
};
pub use forward::{
    batch_gradients, bilstm_attn_forward, forward, logits_graph, rcnn_forward, real_ids,
    transformer_forward, BatchGradients, Mode,
};
pub use layers::attention_pool;
pub use params::{param_specs, Bound, ModelParams, ParamKind, ParamSpec, EMBEDDING_STD, LSTM_FORGET_BIAS};
