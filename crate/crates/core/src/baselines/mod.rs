//! Heuristic masking policies used as comparison points.

mod random;
mod salient;

pub use random::{
    random_span, random_span_mask, random_token_decisions, random_token_mask, DEFAULT_MASK_RATE,
    DEFAULT_MAX_SPAN_LEN,
};
pub use salient::{
    eligible_tags, load_tag_fixtures, salient_span_mask, salient_spans, tag_text, tag_tokens, FixtureTag,
    SalientKind, SalientTag, TagFixture,
};

use crate::span::Span;

/// Per-position mask decisions `d_i` for one chunk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskDecisions {
    pub d: Vec<bool>,
    pub produced_by: String,
}

impl MaskDecisions {
    pub fn from_span(len: usize, span: Span, produced_by: &str) -> Self {
        Self {
            d: (0..len).map(|i| span.contains(i)).collect(),
            produced_by: produced_by.to_string(),
        }
    }

    pub fn masked_count(&self) -> usize {
        self.d.iter().filter(|&&x| x).count()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("mask rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("chunk has no tokens")]
    EmptyChunk,
    #[error("tag fixtures: {0}")]
    Fixture(String),
}
