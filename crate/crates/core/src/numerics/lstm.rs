use rand::Rng;

use super::{Graph, NumericsError, Tensor, Var};
use crate::scalar::Scalar;

/// Weights of one LSTM direction.
///
/// `weight` is `[(input_dim + hidden) x 4*hidden]` acting on the row vector
/// `[x ; h]`; `bias` is `[1 x 4*hidden]`. Gate blocks along the columns are
/// ordered input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[input_dim + hidden, 4 * hidden]),
            bias: Tensor::zeros(&[1, 4 * hidden]),
        }
    }

    pub fn uniform<R: Rng>(input_dim: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        for v in p.weight.data_mut().iter_mut().chain(p.bias.data_mut()) {
            *v = T::of(rng.gen_range(-scale..=scale));
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0] - self.hidden()
    }

    pub fn bind<'a>(&'a self, g: &mut Graph<'a, T>) -> LstmVars {
        LstmVars {
            weight: g.param(&self.weight),
            bias: g.param(&self.bias),
            hidden: self.hidden(),
        }
    }
}

/// [`LstmParams`] registered on a graph.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub weight: Var,
    pub bias: Var,
    pub hidden: usize,
}

/// One LSTM step on row vectors `x [1 x d_in]`, `h`, `c [1 x hidden]`.
///
/// Returns `(h', c')` with `c' = f*c + i*g` and `h' = o*tanh(c')`.
pub fn lstm_cell<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: Var,
    h: Var,
    c: Var,
    params: &LstmVars,
) -> Result<(Var, Var), NumericsError> {
    let hs = params.hidden;
    let (_, h_cols) = g.value(h).dims()?;
    if h_cols != hs || g.value(c).shape() != g.value(h).shape() {
        return Err(NumericsError::ShapeMismatch {
            op: "lstm_cell",
            left: g.value(h).shape().to_vec(),
            right: g.value(c).shape().to_vec(),
        });
    }
    let xh = g.concat_cols(&[x, h])?;
    let z = g.matmul(xh, params.weight)?;
    let z = g.add_bias(z, params.bias)?;

    let i = g.slice_cols(z, 0, hs)?;
    let i = g.sigmoid(i)?;
    let f = g.slice_cols(z, hs, hs)?;
    let f = g.sigmoid(f)?;
    let cand = g.slice_cols(z, 2 * hs, hs)?;
    let cand = g.tanh(cand)?;
    let o = g.slice_cols(z, 3 * hs, hs)?;
    let o = g.sigmoid(o)?;

    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next)?;
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}
