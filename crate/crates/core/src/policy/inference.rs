use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::scalar::Scalar;
use crate::span::Span;

/// Candidate span with score `start_logits[start] + end_logits[end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredSpan<T> {
    pub span: Span,
    pub score: T,
}

/// Ranking order: higher score first, then smaller start, then smaller end.
pub fn rank_order<T: Scalar>(a: &ScoredSpan<T>, b: &ScoredSpan<T>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.span.cmp(&b.span))
}

/// Heap entry whose greatest element is the worst-ranked span.
struct Worst<T>(ScoredSpan<T>);

impl<T: Scalar> PartialEq for Worst<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Worst<T> {}
impl<T: Scalar> PartialOrd for Worst<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Worst<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.0, &other.0)
    }
}

/// The `k` best spans `(i, j)` with `i <= j` and `j - i + 1 <= max_span_len`.
///
/// Fewer than `k` are returned only when fewer valid spans exist.
pub fn top_k_spans<T: Scalar>(
    start_logits: &[T],
    end_logits: &[T],
    k: usize,
    max_span_len: usize,
) -> Result<Vec<ScoredSpan<T>>, PolicyError> {
    let n = start_logits.len();
    if n == 0 {
        return Err(PolicyError::EmptySequence);
    }
    if end_logits.len() != n {
        return Err(PolicyError::LengthMismatch {
            start: n,
            end: end_logits.len(),
        });
    }
    if k == 0 || max_span_len == 0 {
        return Err(PolicyError::InvalidConfig("k and max_span_len must be at least 1".into()));
    }
    if start_logits.iter().chain(end_logits).any(|v| !v.is_finite()) {
        return Err(PolicyError::NonFiniteLogits);
    }
    let mut heap: BinaryHeap<Worst<T>> = BinaryHeap::with_capacity(k + 1);
    for i in 0..n {
        let last = (i + max_span_len).min(n);
        for j in i..last {
            let cand = ScoredSpan {
                span: Span::new(i, j),
                score: start_logits[i] + end_logits[j],
            };
            if heap.len() < k {
                heap.push(Worst(cand));
            } else if let Some(worst) = heap.peek() {
                if rank_order(&cand, &worst.0) == Ordering::Less {
                    heap.pop();
                    heap.push(Worst(cand));
                }
            }
        }
    }
    // ascending by Worst ordering is best-first
    Ok(heap.into_sorted_vec().into_iter().map(|w| w.0).collect())
}

/// How a deployed policy turns ranked candidates into one span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeploymentMode {
    /// Always the highest-ranked span.
    Top1,
    /// Uniformly one of the five highest-ranked spans.
    #[serde(rename = "top5")]
    SampleTop5,
}

impl DeploymentMode {
    pub fn tag(self) -> &'static str {
        match self {
            DeploymentMode::Top1 => "top1",
            DeploymentMode::SampleTop5 => "top5",
        }
    }

    /// Candidates needed from [`top_k_spans`].
    pub fn pool_size(self) -> usize {
        match self {
            DeploymentMode::Top1 => 1,
            DeploymentMode::SampleTop5 => 5,
        }
    }
}

/// Picks one span from best-first `candidates`.
pub fn select_span<T: Scalar, R: Rng + ?Sized>(
    candidates: &[ScoredSpan<T>],
    mode: DeploymentMode,
    rng: &mut R,
) -> Result<Span, PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::NoCandidates);
    }
    let idx = match mode {
        DeploymentMode::Top1 => 0,
        DeploymentMode::SampleTop5 => rng.gen_range(0..candidates.len().min(5)),
    };
    Ok(candidates[idx].span)
}
