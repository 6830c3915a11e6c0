//! Gated recurrent cell.
//!
//! Pre-activations for all four gates come from one product per input,
//! laid out as column blocks `[input | forget | candidate | output]`:
//!
//! ```text
//! z = x·W_ih + h_prev·W_hh + b          (1×4H)
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c = f ⊙ c_prev + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```

use super::graph::{Graph, Var};
use super::tensor::Scalar;
use crate::error::{Error, Result};

/// Graph handles for one direction of an LSTM layer.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    /// `d_in × 4H`
    pub w_ih: Var,
    /// `H × 4H`
    pub w_hh: Var,
    /// `1 × 4H`
    pub bias: Var,
}

impl LstmWeights {
    pub fn hidden<T: Scalar>(&self, g: &Graph<'_, T>) -> usize {
        g.value(self.w_hh).dims()[0]
    }
}

/// One step of the cell for a single `1×d_in` input row.
pub fn lstm_cell<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w: &LstmWeights,
) -> Result<(Var, Var)> {
    let projected = g.matmul(x, w.w_ih)?;
    lstm_cell_projected(g, projected, h_prev, c_prev, w)
}

/// Same as [`lstm_cell`] but with `x·W_ih` already computed, so a whole
/// sequence can be projected in one product.
pub fn lstm_cell_projected<T: Scalar>(
    g: &mut Graph<'_, T>,
    x_proj: Var,
    h_prev: Var,
    c_prev: Var,
    w: &LstmWeights,
) -> Result<(Var, Var)> {
    let hidden = w.hidden(g);
    let gate_dims = [1, 4 * hidden];
    for (name, v, want) in [
        ("lstm input projection", x_proj, &gate_dims[..]),
        ("lstm h_prev", h_prev, &[1, hidden][..]),
        ("lstm c_prev", c_prev, &[1, hidden][..]),
        ("lstm w_hh", w.w_hh, &[hidden, 4 * hidden][..]),
    ] {
        if g.value(v).dims() != want {
            return Err(Error::shape(name, g.value(v).dims(), want));
        }
    }
    let rec = g.matmul(h_prev, w.w_hh)?;
    let z = g.add(x_proj, rec)?;
    let z = g.add_row(z, w.bias)?;
    let zi = g.slice_cols(z, 0, hidden)?;
    let zf = g.slice_cols(z, hidden, hidden)?;
    let zg = g.slice_cols(z, 2 * hidden, hidden)?;
    let zo = g.slice_cols(z, 3 * hidden, hidden)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn zero_weights(g: &mut Graph<'_, f64>, d_in: usize, hidden: usize) -> LstmWeights {
        LstmWeights {
            w_ih: g.param(Tensor::zeros(&[d_in, 4 * hidden])),
            w_hh: g.param(Tensor::zeros(&[hidden, 4 * hidden])),
            bias: g.param(Tensor::zeros(&[1, 4 * hidden])),
        }
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let mut g = Graph::<f64>::new();
        let w = zero_weights(&mut g, 2, 3);
        let x = g.constant(Tensor::zeros(&[1, 2]));
        let h0 = g.constant(Tensor::zeros(&[1, 3]));
        let c0 = g.constant(Tensor::zeros(&[1, 3]));
        let (h, c) = lstm_cell(&mut g, x, h0, c0, &w).unwrap();
        assert!(g.value(h).values().iter().all(|&v| v == 0.0));
        assert!(g.value(c).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_cell_state_halves() {
        let mut g = Graph::<f64>::new();
        let w = zero_weights(&mut g, 2, 3);
        let x = g.constant(Tensor::zeros(&[1, 2]));
        let h0 = g.constant(Tensor::zeros(&[1, 3]));
        let c0 = g.constant(Tensor::filled(&[1, 3], 1.0));
        let (h, c) = lstm_cell(&mut g, x, h0, c0, &w).unwrap();
        for &v in g.value(c).values() {
            assert_eq!(v, 0.5);
        }
        for &v in g.value(h).values() {
            assert!((v - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_mismatched_state() {
        let mut g = Graph::<f64>::new();
        let w = zero_weights(&mut g, 2, 3);
        let x = g.constant(Tensor::zeros(&[1, 2]));
        let h0 = g.constant(Tensor::zeros(&[1, 4]));
        let c0 = g.constant(Tensor::zeros(&[1, 3]));
        assert!(lstm_cell(&mut g, x, h0, c0, &w).is_err());
    }
}
