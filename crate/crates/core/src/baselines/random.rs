use rand::Rng;

use super::{BaselineError, MaskDecisions};
use crate::corpus::Chunk;
use crate::span::{count_valid_spans, nth_valid_span, Span};

pub const DEFAULT_MASK_RATE: f64 = 0.15;
pub const DEFAULT_MAX_SPAN_LEN: usize = 10;

/// Masks each position independently with probability `rate`.
pub fn random_token_mask<R: Rng + ?Sized>(chunk: &Chunk, rate: f64, rng: &mut R) -> Result<MaskDecisions, BaselineError> {
    random_token_decisions(chunk.len(), rate, rng)
}

pub fn random_token_decisions<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    rng: &mut R,
) -> Result<MaskDecisions, BaselineError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(BaselineError::InvalidRate(rate));
    }
    let d = (0..len).map(|_| rng.gen::<f64>() < rate).collect();
    Ok(MaskDecisions {
        d,
        produced_by: "random15".to_string(),
    })
}

/// Uniform draw over all spans of length at most `max_span_len` in a
/// sequence of `len` tokens.
pub fn random_span<R: Rng + ?Sized>(len: usize, max_span_len: usize, rng: &mut R) -> Result<Span, BaselineError> {
    if len == 0 {
        return Err(BaselineError::EmptyChunk);
    }
    let max = max_span_len.max(1);
    let total = count_valid_spans(len, max);
    let idx = rng.gen_range(0..total);
    Ok(nth_valid_span(len, max, idx).expect("index below span count"))
}

pub fn random_span_mask<R: Rng + ?Sized>(chunk: &Chunk, rng: &mut R, max_span_len: usize) -> Result<Span, BaselineError> {
    random_span(chunk.len(), max_span_len, rng)
}
