//! Building blocks shared by the three classifiers.

use super::config::TransformerConfig;
use super::params::Bound;
use crate::error::{Error, Result};
use crate::numcore::{lstm_cell_projected, Graph, LstmWeights, Scalar, Tensor, Var};
use crate::rng::StreamRng;

pub const LAYER_NORM_EPS: f64 = 1e-12;

fn norm<T: Scalar>(g: &mut Graph<'_, T>, b: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let gain = b.get(&format!("{prefix}.gain"))?;
    let bias = b.get(&format!("{prefix}.bias"))?;
    g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
}

pub fn linear<T: Scalar>(g: &mut Graph<'_, T>, b: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = b.get(&format!("{prefix}.weight"))?;
    let bias = b.get(&format!("{prefix}.bias"))?;
    g.linear(x, w, bias)
}

/// Transformer encoder states (`len × hidden`) for `ids`.
///
/// `key_mask` marks the positions attention may read; `None` means all.
/// Positions are embedded from 0, so callers that drop padding get the
/// same real-position states as callers that mask it.
pub fn encoder_states<T: Scalar>(
    g: &mut Graph<'_, T>,
    b: &Bound,
    prefix: &str,
    cfg: &TransformerConfig,
    ids: &[usize],
    key_mask: Option<&[bool]>,
    mut rng: Option<&mut StreamRng>,
) -> Result<Var> {
    let len = ids.len();
    let positions: Vec<usize> = (0..len).collect();
    let tok = g.gather_rows(b.get(&format!("{prefix}embeddings.token"))?, ids)?;
    let pos = g.gather_rows(b.get(&format!("{prefix}embeddings.position"))?, &positions)?;
    let x = g.add(tok, pos)?;
    let x = norm(g, b, &format!("{prefix}embeddings.norm"), x)?;
    let mut x = g.dropout(x, cfg.dropout, rng.as_deref_mut())?;

    let dh = cfg.head_dim();
    let scale = T::of(1.0 / (dh as f64).sqrt());
    for l in 0..cfg.layers {
        let p = format!("{prefix}layers.{l}");
        let q = linear(g, b, &format!("{p}.attention.query"), x)?;
        let k = linear(g, b, &format!("{p}.attention.key"), x)?;
        let v = linear(g, b, &format!("{p}.attention.value"), x)?;
        let mut heads = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let weights = g.softmax(scores, key_mask)?;
            heads.push(g.matmul(weights, vh)?);
        }
        let ctx = g.concat_cols(&heads)?;
        let attn = linear(g, b, &format!("{p}.attention.output"), ctx)?;
        let attn = g.dropout(attn, cfg.dropout, rng.as_deref_mut())?;
        let res = g.add(x, attn)?;
        x = norm(g, b, &format!("{p}.attention.norm"), res)?;

        let inner = linear(g, b, &format!("{p}.ffn.inner"), x)?;
        let inner = g.gelu(inner);
        let outer = linear(g, b, &format!("{p}.ffn.outer"), inner)?;
        let outer = g.dropout(outer, cfg.dropout, rng.as_deref_mut())?;
        let res = g.add(x, outer)?;
        x = norm(g, b, &format!("{p}.ffn.norm"), res)?;
    }
    debug_assert_eq!(g.value(x).rows(), len);
    Ok(x)
}

fn lstm_weights(b: &Bound, prefix: &str) -> Result<LstmWeights> {
    Ok(LstmWeights {
        w_ih: b.get(&format!("{prefix}.w_ih"))?,
        w_hh: b.get(&format!("{prefix}.w_hh"))?,
        bias: b.get(&format!("{prefix}.bias"))?,
    })
}

/// Bidirectional LSTM over the rows of `xs` (`len × d_in`). Returns
/// `len × 2H`: forward state then backward state for each position.
pub fn bilstm<T: Scalar>(g: &mut Graph<'_, T>, b: &Bound, prefix: &str, xs: Var) -> Result<Var> {
    let len = g.value(xs).rows();
    let mut outputs = Vec::with_capacity(2);
    for dir in ["forward", "backward"] {
        let w = lstm_weights(b, &format!("{prefix}.{dir}"))?;
        let hidden = w.hidden(g);
        let proj = g.matmul(xs, w.w_ih)?;
        let mut h = g.constant(Tensor::zeros(&[1, hidden]));
        let mut c = g.constant(Tensor::zeros(&[1, hidden]));
        let mut states = vec![h; len];
        let order: Vec<usize> =
            if dir == "forward" { (0..len).collect() } else { (0..len).rev().collect() };
        for t in order {
            let x_t = g.row(proj, t)?;
            (h, c) = lstm_cell_projected(g, x_t, h, c, &w)?;
            states[t] = h;
        }
        outputs.push(g.stack_rows(&states)?);
    }
    g.concat_cols(&outputs)
}

/// Additive attention pooling: `score_t = tanh(s_t·W)·v`, weights are the
/// softmax of the scores over unmasked positions, output `1×d` is the
/// weighted sum of states.
pub fn attention_pool<T: Scalar>(
    g: &mut Graph<'_, T>,
    states: Var,
    mask: Option<&[bool]>,
    w: Var,
    v: Var,
) -> Result<Var> {
    let len = g.value(states).rows();
    if let Some(m) = mask {
        if m.len() != len {
            return Err(Error::shape("attention_pool mask", &[len], &[m.len()]));
        }
        if !m.iter().any(|&k| k) {
            return Err(Error::AllMasked { row: 0 });
        }
    }
    let proj = g.matmul(states, w)?;
    let act = g.tanh(proj);
    let scores = g.matmul(act, v)?;
    let scores = g.transpose(scores)?;
    let weights = g.softmax(scores, mask)?;
    g.matmul(weights, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows)
    }

    #[test]
    fn single_state_pools_to_itself() {
        let mut g = Graph::<f64>::new();
        let s = g.constant(t(&[&[0.3, -2.0]]));
        let w = g.constant(t(&[&[5.0], &[-1.0]]));
        let v = g.constant(t(&[&[7.0]]));
        let out = attention_pool(&mut g, s, None, w, v).unwrap();
        assert_eq!(g.value(out).values(), &[0.3, -2.0]);
    }

    #[test]
    fn zero_vector_gives_masked_mean() {
        let mut g = Graph::<f64>::new();
        let s = g.constant(t(&[&[1.0, 2.0], &[3.0, 6.0], &[100.0, 100.0]]));
        let w = g.constant(t(&[&[0.5, 1.0], &[-1.0, 0.2]]));
        let v = g.constant(Tensor::zeros(&[2, 1]));
        let out = attention_pool(&mut g, s, Some(&[true, true, false]), w, v).unwrap();
        assert_eq!(g.value(out).values(), &[2.0, 4.0]);
        assert!(attention_pool(&mut g, s, Some(&[false; 3]), w, v).is_err());
    }

    #[test]
    fn three_states_hand_computed() {
        // W = [[1],[0]], v = [[2]]: score_t = 2·tanh(s_t[0])
        let states: [[f64; 2]; 3] = [[0.5, 1.0], [-0.5, 2.0], [0.0, 3.0]];
        let scores: Vec<f64> = states.iter().map(|s| 2.0 * s[0].tanh()).collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let expect: Vec<f64> = (0..2)
            .map(|j| states.iter().zip(&scores).map(|(s, sc)| sc.exp() / z * s[j]).sum())
            .collect();

        let mut g = Graph::<f64>::new();
        let s = g.constant(t(&[&states[0], &states[1], &states[2]]));
        let w = g.constant(t(&[&[1.0], &[0.0]]));
        let v = g.constant(t(&[&[2.0]]));
        let out = attention_pool(&mut g, s, None, w, v).unwrap();
        for (a, e) in g.value(out).values().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
