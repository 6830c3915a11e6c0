use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Architecture, ModelConfig, TransformerConfig};
use crate::error::{Error, Result};
use crate::numcore::{Graph, Scalar, Tensor, Var};
use crate::rng;

pub const EMBEDDING_STD: f64 = 0.02;
pub const LSTM_FORGET_BIAS: f64 = 1.0;

/// Decides initialization and whether weight decay applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    /// Gate bias laid out `[i|f|g|o]`; the forget block starts at 1.
    LstmBias,
    Embedding,
    NormGain,
    NormBias,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        self == ParamKind::Weight
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub kind: ParamKind,
    pub trainable: bool,
}

struct SpecList(Vec<ParamSpec>);

impl SpecList {
    fn push(&mut self, name: String, dims: &[usize], kind: ParamKind) {
        self.0.push(ParamSpec { name, dims: dims.to_vec(), kind, trainable: true });
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize) {
        self.push(format!("{prefix}.weight"), &[d_in, d_out], ParamKind::Weight);
        self.push(format!("{prefix}.bias"), &[1, d_out], ParamKind::Bias);
    }

    fn norm(&mut self, prefix: &str, d: usize) {
        self.push(format!("{prefix}.gain"), &[1, d], ParamKind::NormGain);
        self.push(format!("{prefix}.bias"), &[1, d], ParamKind::NormBias);
    }

    fn encoder(&mut self, p: &str, t: &TransformerConfig, vocab: usize, max_len: usize) {
        let h = t.hidden;
        self.push(format!("{p}embeddings.token"), &[vocab, h], ParamKind::Embedding);
        self.push(format!("{p}embeddings.position"), &[max_len, h], ParamKind::Embedding);
        self.norm(&format!("{p}embeddings.norm"), h);
        for l in 0..t.layers {
            for part in ["query", "key", "value", "output"] {
                self.linear(&format!("{p}layers.{l}.attention.{part}"), h, h);
            }
            self.norm(&format!("{p}layers.{l}.attention.norm"), h);
            self.linear(&format!("{p}layers.{l}.ffn.inner"), h, t.ff_inner);
            self.linear(&format!("{p}layers.{l}.ffn.outer"), t.ff_inner, h);
            self.norm(&format!("{p}layers.{l}.ffn.norm"), h);
        }
    }

    fn bilstm(&mut self, p: &str, d_in: usize, hidden: usize) {
        for dir in ["forward", "backward"] {
            self.push(format!("{p}.{dir}.w_ih"), &[d_in, 4 * hidden], ParamKind::Weight);
            self.push(format!("{p}.{dir}.w_hh"), &[hidden, 4 * hidden], ParamKind::Weight);
            self.push(format!("{p}.{dir}.bias"), &[1, 4 * hidden], ParamKind::LstmBias);
        }
    }
}

/// Names, shapes and kinds of every tensor, derived from the config alone.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut s = SpecList(Vec::new());
    let classifier_in = match &cfg.arch {
        Architecture::Transformer(t) => {
            s.encoder("", t, cfg.vocab_size, cfg.max_len);
            t.hidden
        }
        Architecture::Rcnn(r) => {
            s.push("embedding.token".into(), &[cfg.vocab_size, r.emb_dim], ParamKind::Embedding);
            s.bilstm("lstm", r.emb_dim, r.lstm_hidden);
            s.push(
                "conv.kernel".into(),
                &[r.conv_width, 2 * r.lstm_hidden, r.conv_filters],
                ParamKind::Weight,
            );
            s.push("conv.bias".into(), &[1, r.conv_filters], ParamKind::Bias);
            r.conv_filters
        }
        Architecture::BilstmAttn(b) => {
            s.encoder("encoder.", &b.encoder, cfg.vocab_size, cfg.max_len);
            if b.freeze_encoder {
                for spec in &mut s.0 {
                    spec.trainable = false;
                }
            }
            s.bilstm("lstm", b.encoder.hidden, b.lstm_hidden);
            s.push("attention.weight".into(), &[2 * b.lstm_hidden, b.attention_dim], ParamKind::Weight);
            s.push("attention.vector".into(), &[b.attention_dim, 1], ParamKind::Weight);
            2 * b.lstm_hidden
        }
    };
    s.linear("classifier", classifier_in, cfg.num_classes);
    s.0
}

fn fans(dims: &[usize]) -> (usize, usize) {
    match dims {
        [a, b] => (*a, *b),
        [w, a, b] => (w * a, w * b),
        _ => {
            let n: usize = dims.iter().product();
            (n, n)
        }
    }
}

fn init_tensor<T: Scalar, R: Rng>(spec: &ParamSpec, rng: &mut R) -> Tensor<T> {
    let n: usize = spec.dims.iter().product();
    let values: Vec<T> = match spec.kind {
        ParamKind::Weight => {
            let (fan_in, fan_out) = fans(&spec.dims);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| T::of(rng.gen_range(-limit..limit))).collect()
        }
        ParamKind::Embedding => {
            let normal = Normal::new(0.0, EMBEDDING_STD).expect("valid std");
            (0..n).map(|_| T::of(normal.sample(rng))).collect()
        }
        ParamKind::Bias | ParamKind::NormBias => vec![T::zero(); n],
        ParamKind::NormGain => vec![T::one(); n],
        ParamKind::LstmBias => {
            let h = n / 4;
            (0..n)
                .map(|i| if (h..2 * h).contains(&i) { T::of(LSTM_FORGET_BIAS) } else { T::zero() })
                .collect()
        }
    };
    Tensor::new(spec.dims.clone(), values).expect("spec dims are positive")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

fn index_of(specs: &[ParamSpec]) -> HashMap<String, usize> {
    specs.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect()
}

impl<T: Scalar> ModelParams<T> {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(config);
        let mut rng = rng::stream(seed, &[]);
        let tensors = specs.iter().map(|s| init_tensor(s, &mut rng)).collect();
        Ok(ModelParams { config: config.clone(), index: index_of(&specs), specs, tensors })
    }

    /// Builds parameters from named tensors, checking them against the
    /// config. The first missing tensor (in spec order) is reported before
    /// any unknown one.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(config);
        let mut order = Vec::with_capacity(named.len());
        let mut by_name: HashMap<String, Tensor<T>> = HashMap::with_capacity(named.len());
        for (name, t) in named {
            if by_name.contains_key(&name) {
                return Err(Error::Param { name, message: "appears twice".into() });
            }
            order.push(name.clone());
            by_name.insert(name, t);
        }
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in &specs {
            let t = by_name
                .remove(&spec.name)
                .ok_or_else(|| Error::MissingTensor(spec.name.clone()))?;
            if t.dims() != spec.dims.as_slice() {
                return Err(Error::Param {
                    name: spec.name.clone(),
                    message: format!("expected dims {:?}, got {:?}", spec.dims, t.dims()),
                });
            }
            tensors.push(t);
        }
        if let Some(extra) = order.into_iter().find(|n| by_name.contains_key(n)) {
            return Err(Error::UnknownTensor(extra));
        }
        let params = ModelParams { config: config.clone(), index: index_of(&specs), specs, tensors };
        params.check_finite()?;
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.specs.iter().map(|s| s.name.as_str()).zip(&self.tensors)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (spec, t) in self.specs.iter().zip(&self.tensors) {
            if !t.all_finite() {
                return Err(Error::Param { name: spec.name.clone(), message: "non-finite value".into() });
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            specs: self.specs.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Adds every tensor to `g`: trainable specs as gradient leaves when
    /// `with_grads`, everything else as constants. Leaves are created in
    /// spec order.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a, T>, with_grads: bool) -> Bound<'a> {
        let vars = self
            .specs
            .iter()
            .zip(&self.tensors)
            .map(|(s, t)| if with_grads && s.trainable { g.param_ref(t) } else { g.constant_ref(t) })
            .collect();
        Bound { index: &self.index, vars }
    }
}

/// Graph handles for one [`ModelParams`], looked up by tensor name.
pub struct Bound<'a> {
    index: &'a HashMap<String, usize>,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.index.get(name).map(|&i| self.vars[i]).ok_or_else(|| Error::Param {
            name: name.to_string(),
            message: "not part of this model".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::config::{ModelKind, Preset};

    #[test]
    fn names_unique_and_shapes_follow_config() {
        for kind in ModelKind::ALL {
            let cfg = ModelConfig::new(kind, Preset::Desk, 50, 4);
            let specs = param_specs(&cfg);
            let idx = index_of(&specs);
            assert_eq!(idx.len(), specs.len());
            let last = specs.last().unwrap();
            assert_eq!(last.name, "classifier.bias");
            assert_eq!(last.dims, vec![1, 4]);
        }
    }

    #[test]
    fn paper_transformer_is_bert_base_sized() {
        let cfg = ModelConfig::new(ModelKind::Transformer, Preset::Paper, 30_000, 102);
        let n: usize = param_specs(&cfg).iter().map(|s| s.dims.iter().product::<usize>()).sum();
        assert!((100_000_000..120_000_000).contains(&n), "{n}");
    }

    #[test]
    fn init_follows_kinds() {
        let cfg = ModelConfig::new(ModelKind::Rcnn, Preset::Desk, 50, 4);
        let p = ModelParams::<f64>::init(&cfg, 3).unwrap();
        let bias = p.get("lstm.forward.bias").unwrap().values();
        let h = bias.len() / 4;
        assert!(bias[..h].iter().all(|&v| v == 0.0));
        assert!(bias[h..2 * h].iter().all(|&v| v == 1.0));
        assert!(p.get("conv.bias").unwrap().values().iter().all(|&v| v == 0.0));
        let w = p.get("classifier.weight").unwrap();
        let limit = (6.0 / (64.0 + 4.0f64)).sqrt();
        assert!(w.values().iter().all(|v| v.abs() < limit));
        assert_eq!(p, ModelParams::<f64>::init(&cfg, 3).unwrap());
        assert_ne!(p, ModelParams::<f64>::init(&cfg, 4).unwrap());
    }

    #[test]
    fn frozen_encoder_marks_specs() {
        let mut cfg = ModelConfig::new(ModelKind::BilstmAttn, Preset::Desk, 50, 4);
        if let Architecture::BilstmAttn(b) = &mut cfg.arch {
            b.freeze_encoder = true;
        }
        for s in param_specs(&cfg) {
            assert_eq!(s.trainable, !s.name.starts_with("encoder."), "{}", s.name);
        }
    }

    #[test]
    fn from_named_reports_first_missing_then_unknown() {
        let t = ModelConfig::new(ModelKind::Transformer, Preset::Desk, 50, 4);
        let r = ModelConfig::new(ModelKind::Rcnn, Preset::Desk, 50, 4);
        let p = ModelParams::<f32>::init(&t, 0).unwrap();
        let named: Vec<_> = p.named().map(|(n, t)| (n.to_string(), t.clone())).collect();
        match ModelParams::from_named(&r, named.clone()) {
            Err(Error::MissingTensor(name)) => assert_eq!(name, "embedding.token"),
            other => panic!("unexpected {other:?}"),
        }
        let mut extra = named.clone();
        extra.push(("stray".into(), Tensor::zeros(&[1])));
        assert!(matches!(ModelParams::from_named(&t, extra), Err(Error::UnknownTensor(n)) if n == "stray"));
        assert_eq!(ModelParams::from_named(&t, named).unwrap(), p);
    }
}
