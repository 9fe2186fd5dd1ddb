use rand::Rng;

use super::PolicyError;
use crate::numerics::{grad_check, lstm_cell, GradCheckReport, Graph, LstmParams, LstmVars, Tensor, Var};
use crate::scalar::Scalar;
use crate::span::Span;

/// Sizes of the span-extraction network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyDims {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    /// Per direction; layer outputs are `2 * hidden_dim` wide.
    pub hidden_dim: usize,
    pub num_layers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmLayer<T> {
    pub forward: LstmParams<T>,
    pub backward: LstmParams<T>,
}

/// Every learned weight of the policy: token embeddings, the stacked
/// bidirectional LSTM, and the start/end scoring heads.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams<T> {
    /// `[vocab_size x embedding_dim]`
    pub embedding: Tensor<T>,
    pub layers: Vec<BiLstmLayer<T>>,
    /// `[2*hidden x 1]`
    pub start_weight: Tensor<T>,
    /// `[1 x 1]`
    pub start_bias: Tensor<T>,
    pub end_weight: Tensor<T>,
    pub end_bias: Tensor<T>,
}

impl<T: Scalar> PolicyParams<T> {
    pub fn zeros(dims: PolicyDims) -> Self {
        let h = dims.hidden_dim;
        let layers = (0..dims.num_layers)
            .map(|l| {
                let input = if l == 0 { dims.embedding_dim } else { 2 * h };
                BiLstmLayer {
                    forward: LstmParams::zeros(input, h),
                    backward: LstmParams::zeros(input, h),
                }
            })
            .collect();
        Self {
            embedding: Tensor::zeros(&[dims.vocab_size, dims.embedding_dim]),
            layers,
            start_weight: Tensor::zeros(&[2 * h, 1]),
            start_bias: Tensor::zeros(&[1, 1]),
            end_weight: Tensor::zeros(&[2 * h, 1]),
            end_bias: Tensor::zeros(&[1, 1]),
        }
    }

    /// Embeddings uniform in `±embedding_scale`; LSTM weights and biases
    /// uniform in `±1/sqrt(hidden)`; head weights uniform in `±1/sqrt(2*hidden)`
    /// with zero head biases.
    pub fn random<R: Rng>(dims: PolicyDims, embedding_scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        let h = dims.hidden_dim;
        for v in p.embedding.data_mut() {
            *v = T::of(rng.gen_range(-embedding_scale..=embedding_scale));
        }
        let lstm_scale = 1.0 / (h as f64).sqrt();
        for (l, layer) in p.layers.iter_mut().enumerate() {
            let input = if l == 0 { dims.embedding_dim } else { 2 * h };
            layer.forward = LstmParams::uniform(input, h, lstm_scale, rng);
            layer.backward = LstmParams::uniform(input, h, lstm_scale, rng);
        }
        let head_scale = 1.0 / ((2 * h) as f64).sqrt();
        for v in p.start_weight.data_mut().iter_mut().chain(p.end_weight.data_mut()) {
            *v = T::of(rng.gen_range(-head_scale..=head_scale));
        }
        p
    }

    pub fn dims(&self) -> PolicyDims {
        let shape = self.embedding.shape();
        PolicyDims {
            vocab_size: shape[0],
            embedding_dim: shape[1],
            hidden_dim: self.start_weight.shape()[0] / 2,
            num_layers: self.layers.len(),
        }
    }

    /// Parameter tensors in canonical order (see [`Self::names`]).
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.embedding];
        for layer in &self.layers {
            out.extend([
                &layer.forward.weight,
                &layer.forward.bias,
                &layer.backward.weight,
                &layer.backward.bias,
            ]);
        }
        out.extend([&self.start_weight, &self.start_bias, &self.end_weight, &self.end_bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embedding];
        for layer in &mut self.layers {
            out.extend([
                &mut layer.forward.weight,
                &mut layer.forward.bias,
                &mut layer.backward.weight,
                &mut layer.backward.bias,
            ]);
        }
        out.extend([
            &mut self.start_weight,
            &mut self.start_bias,
            &mut self.end_weight,
            &mut self.end_bias,
        ]);
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["embedding".to_string()];
        for l in 0..self.layers.len() {
            for dir in ["forward", "backward"] {
                out.push(format!("lstm.{l}.{dir}.weight"));
                out.push(format!("lstm.{l}.{dir}.bias"));
            }
        }
        out.extend(["start.weight", "start.bias", "end.weight", "end.bias"].map(String::from));
        out
    }

    /// Copy of `self` with tensors replaced, in canonical order.
    pub fn with_tensors(&self, tensors: Vec<Tensor<T>>) -> Result<Self, PolicyError> {
        let mut out = self.clone();
        let slots = out.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(PolicyError::Checkpoint(format!(
                "expected {} tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(PolicyError::Checkpoint(format!(
                    "tensor shape {:?} does not match {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> PolicyParams<U> {
        PolicyParams {
            embedding: self.embedding.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| BiLstmLayer {
                    forward: LstmParams {
                        weight: l.forward.weight.cast(),
                        bias: l.forward.bias.cast(),
                    },
                    backward: LstmParams {
                        weight: l.backward.weight.cast(),
                        bias: l.backward.bias.cast(),
                    },
                })
                .collect(),
            start_weight: self.start_weight.cast(),
            start_bias: self.start_bias.cast(),
            end_weight: self.end_weight.cast(),
            end_bias: self.end_bias.cast(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn bind<'a>(&'a self, g: &mut Graph<'a, T>) -> BoundPolicy {
        BoundPolicy {
            embedding: g.param(&self.embedding),
            layers: self
                .layers
                .iter()
                .map(|l| [l.forward.bind(g), l.backward.bind(g)])
                .collect(),
            start_weight: g.param(&self.start_weight),
            start_bias: g.param(&self.start_bias),
            end_weight: g.param(&self.end_weight),
            end_bias: g.param(&self.end_bias),
        }
    }
}

/// [`PolicyParams`] registered as leaves of one graph.
pub struct BoundPolicy {
    pub embedding: Var,
    pub layers: Vec<[LstmVars; 2]>,
    pub start_weight: Var,
    pub start_bias: Var,
    pub end_weight: Var,
    pub end_bias: Var,
}

impl BoundPolicy {
    /// Leaves in the same order as [`PolicyParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        for [f, b] in &self.layers {
            out.extend([f.weight, f.bias, b.weight, b.bias]);
        }
        out.extend([self.start_weight, self.start_bias, self.end_weight, self.end_bias]);
        out
    }
}

fn check_input(ids: &[u32], vocab_size: usize, max_input_len: usize) -> Result<(), PolicyError> {
    if ids.is_empty() {
        return Err(PolicyError::EmptySequence);
    }
    if ids.len() > max_input_len {
        return Err(PolicyError::SequenceTooLong {
            len: ids.len(),
            max: max_input_len,
        });
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vocab_size) {
        return Err(PolicyError::UnknownTokenId { id: bad, vocab_size });
    }
    Ok(())
}

fn run_direction<T: Scalar>(
    g: &mut Graph<'_, T>,
    inputs: &[Var],
    cell: &LstmVars,
    reverse: bool,
) -> Result<Vec<Var>, PolicyError> {
    let zeros = g.constant(Tensor::zeros(&[1, cell.hidden]));
    let (mut h, mut c) = (zeros, zeros);
    let mut out = vec![zeros; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for t in order {
        (h, c) = lstm_cell(g, inputs[t], h, c, cell)?;
        out[t] = h;
    }
    Ok(out)
}

/// Records the forward pass on `g`; returns `[n x 1]` start and end logits.
pub fn forward_on_graph<T: Scalar>(
    g: &mut Graph<'_, T>,
    bound: &BoundPolicy,
    ids: &[u32],
) -> Result<(Var, Var), PolicyError> {
    let rows: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let embedded = g.gather_rows(bound.embedding, &rows)?;
    let mut inputs = Vec::with_capacity(ids.len());
    for t in 0..ids.len() {
        inputs.push(g.row(embedded, t)?);
    }
    for [fwd, bwd] in &bound.layers {
        let forward = run_direction(g, &inputs, fwd, false)?;
        let backward = run_direction(g, &inputs, bwd, true)?;
        inputs = forward
            .into_iter()
            .zip(backward)
            .map(|(f, b)| g.concat_cols(&[f, b]))
            .collect::<Result<_, _>>()?;
    }
    let hidden = g.concat_rows(&inputs)?;
    let start = g.matmul(hidden, bound.start_weight)?;
    let start = g.add_bias(start, bound.start_bias)?;
    let end = g.matmul(hidden, bound.end_weight)?;
    let end = g.add_bias(end, bound.end_bias)?;
    Ok((start, end))
}

/// Start and end logits, one per token.
pub fn forward<T: Scalar>(
    params: &PolicyParams<T>,
    ids: &[u32],
    max_input_len: usize,
) -> Result<(Vec<T>, Vec<T>), PolicyError> {
    check_input(ids, params.dims().vocab_size, max_input_len)?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let (start, end) = forward_on_graph(&mut g, &bound, ids)?;
    Ok((g.value(start).data().to_vec(), g.value(end).data().to_vec()))
}

fn check_gold(gold: Span, n: usize) -> Result<(), PolicyError> {
    if !gold.fits(n) {
        return Err(PolicyError::SpanOutOfBounds { span: gold, len: n });
    }
    Ok(())
}

/// `-log_softmax(start)[gold.start] - log_softmax(end)[gold.end]` on the graph.
pub fn span_loss_on_graph<T: Scalar>(
    g: &mut Graph<'_, T>,
    start_logits: Var,
    end_logits: Var,
    gold: Span,
) -> Result<Var, PolicyError> {
    check_gold(gold, g.value(start_logits).len())?;
    let ls = g.log_softmax(start_logits)?;
    let le = g.log_softmax(end_logits)?;
    let s = g.pick(ls, gold.start)?;
    let e = g.pick(le, gold.end)?;
    let total = g.add(s, e)?;
    Ok(g.scale(total, -T::one())?)
}

/// Sum of the start and end cross-entropies against `gold`.
pub fn span_loss<T: Scalar>(start_logits: &[T], end_logits: &[T], gold: Span) -> Result<T, PolicyError> {
    if start_logits.len() != end_logits.len() {
        return Err(PolicyError::LengthMismatch {
            start: start_logits.len(),
            end: end_logits.len(),
        });
    }
    check_gold(gold, start_logits.len())?;
    let ls = crate::numerics::log_softmax(start_logits);
    let le = crate::numerics::log_softmax(end_logits);
    Ok(-(ls[gold.start] + le[gold.end]))
}

/// Mean span loss over `batch` and its gradient for every parameter tensor,
/// in [`PolicyParams::tensors`] order.
pub fn batch_loss_and_grads<T: Scalar>(
    params: &PolicyParams<T>,
    batch: &[(&[u32], Span)],
    max_input_len: usize,
) -> Result<(T, Vec<Tensor<T>>), PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let vocab_size = params.dims().vocab_size;
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let mut losses = Vec::with_capacity(batch.len());
    for (ids, gold) in batch {
        check_input(ids, vocab_size, max_input_len)?;
        let (s, e) = forward_on_graph(&mut g, &bound, ids)?;
        losses.push(span_loss_on_graph(&mut g, s, e, *gold)?);
    }
    let stacked = g.concat_rows(&losses)?;
    let total = g.sum(stacked)?;
    let mean = g.scale(total, T::one() / T::of(batch.len() as f64))?;
    let loss = g.value(mean).data()[0];
    let mut grads = g.backward(mean)?;
    let shapes: Vec<Vec<usize>> = params.tensors().iter().map(|t| t.shape().to_vec()).collect();
    let out = bound
        .vars()
        .into_iter()
        .zip(shapes)
        .map(|(v, shape)| grads.take_or_zeros(v, &shape))
        .collect();
    Ok((loss, out))
}

/// Compares [`batch_loss_and_grads`] with central differences of
/// [`mean_loss`] over every parameter element.
pub fn check_policy_gradients<T: Scalar>(
    params: &PolicyParams<T>,
    batch: &[(&[u32], Span)],
    eps: T,
) -> Result<GradCheckReport<T>, PolicyError> {
    let (_, analytic) = batch_loss_and_grads(params, batch, usize::MAX)?;
    let mut flat: Vec<Tensor<T>> = params.tensors().into_iter().cloned().collect();
    grad_check(&mut flat, &analytic, eps, |ts| {
        let perturbed = params.with_tensors(ts.to_vec())?;
        mean_loss(&perturbed, batch, usize::MAX)
    })
}

/// Mean span loss without gradients.
pub fn mean_loss<T: Scalar>(
    params: &PolicyParams<T>,
    batch: &[(&[u32], Span)],
    max_input_len: usize,
) -> Result<T, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut total = T::zero();
    for (ids, gold) in batch {
        let (s, e) = forward(params, ids, max_input_len)?;
        total += span_loss(&s, &e, *gold)?;
    }
    Ok(total / T::of(batch.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> PolicyDims {
        PolicyDims {
            vocab_size: 12,
            embedding_dim: 3,
            hidden_dim: 2,
            num_layers: 2,
        }
    }

    #[test]
    fn zero_params_give_bias_logits() {
        let mut p = PolicyParams::<f64>::zeros(dims());
        p.start_bias.data_mut()[0] = 0.7;
        p.end_bias.data_mut()[0] = -1.25;
        let (s, e) = forward(&p, &[3, 4, 5, 11], 128).unwrap();
        assert_eq!(s, vec![0.7; 4]);
        assert_eq!(e, vec![-1.25; 4]);
    }

    #[test]
    fn single_token_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PolicyParams::<f64>::random(dims(), 0.1, &mut rng);
        let (s, e) = forward(&p, &[7], 128).unwrap();
        assert_eq!((s.len(), e.len()), (1, 1));
    }

    #[test]
    fn input_validation() {
        let p = PolicyParams::<f64>::zeros(dims());
        assert!(matches!(forward(&p, &[], 8), Err(PolicyError::EmptySequence)));
        assert!(matches!(forward(&p, &[3; 9], 8), Err(PolicyError::SequenceTooLong { .. })));
        assert!(matches!(forward(&p, &[12], 8), Err(PolicyError::UnknownTokenId { .. })));
    }

    #[test]
    fn uniform_logits_loss_is_two_log_n() {
        let z = vec![0.3; 5];
        let l = span_loss(&z, &z, Span::new(1, 3)).unwrap();
        assert!((l - 2.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_vanishes_as_gold_logit_grows() {
        let mut last = f64::INFINITY;
        for big in [1.0, 5.0, 20.0, 50.0] {
            let l = span_loss(&[big, 0.0, 0.0], &[0.0, 0.0, big], Span::new(0, 2)).unwrap();
            assert!(l < last);
            last = l;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn two_position_loss() {
        let l = span_loss(&[2.0, 0.0], &[0.0, 2.0], Span::new(0, 1)).unwrap();
        let e2 = 2f64.exp();
        let expected = 2.0 * -(e2 / (e2 + 1.0)).ln();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn gold_out_of_bounds() {
        assert!(matches!(
            span_loss(&[0.0; 3], &[0.0; 3], Span::new(1, 3)),
            Err(PolicyError::SpanOutOfBounds { .. })
        ));
    }

    #[test]
    fn graph_and_plain_losses_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = PolicyParams::<f64>::random(dims(), 0.5, &mut rng);
        let ids = [3u32, 9, 4, 4, 10];
        let gold = Span::new(1, 3);
        let (loss, grads) = batch_loss_and_grads(&p, &[(&ids, gold)], 128).unwrap();
        let plain = mean_loss(&p, &[(&ids, gold)], 128).unwrap();
        assert!((loss - plain).abs() < 1e-12);
        assert_eq!(grads.len(), p.tensors().len());
        // rows of unused tokens get no embedding gradient
        let e = &grads[0];
        assert!(e.data()[0..3].iter().all(|&v| v == 0.0));
        assert!(e.data()[9 * 3..10 * 3].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn names_match_tensor_order() {
        let p = PolicyParams::<f64>::zeros(dims());
        assert_eq!(p.names().len(), p.tensors().len());
        assert_eq!(p.names()[1], "lstm.0.forward.weight");
        assert_eq!(p.tensors()[5].shape(), &[2 * 2 + 2, 8]);
        assert_eq!(p.dims(), dims());
    }

    #[test]
    fn f32_forward_tracks_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PolicyParams::<f64>::random(dims(), 0.5, &mut rng);
        let p32: PolicyParams<f32> = p.cast();
        let ids = [3u32, 5, 7];
        let (s64, _) = forward(&p, &ids, 16).unwrap();
        let (s32, _) = forward(&p32, &ids, 16).unwrap();
        for (a, b) in s64.iter().zip(&s32) {
            assert!((a - *b as f64).abs() < 1e-5);
        }
    }
}
