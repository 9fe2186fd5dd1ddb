//! Policy quality without a language model: answer-span hit rates on held-out
//! anchor data and answer coverage of a masked corpus.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{eligible_tags, random_span, BaselineError};
use crate::corpus::{split_words, AnchorExample, Chunk, Vocab};
use crate::corruption::MaskedExample;
use crate::policy::{forward, top_k_spans, PolicyError, PolicyParams};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_from_seed, ChunkRng};
use crate::span::{count_valid_spans, Span};

/// Anything that can rank candidate spans for an anchor context.
pub trait SpanProposer: Sync {
    fn tag(&self) -> String;

    /// Up to `k` distinct spans, best first.
    fn propose(&self, example: &AnchorExample, k: usize, max_span_len: usize) -> Result<Vec<Span>, EvaluationError>;

    /// Longest context the proposer accepts; longer contexts are windowed
    /// around the answer first.
    fn max_input_len(&self) -> Option<usize> {
        None
    }
}

pub struct LearnedProposer<'a, T: Scalar> {
    pub params: &'a PolicyParams<T>,
    pub max_input_len: usize,
    pub tag: String,
}

impl<'a, T: Scalar> LearnedProposer<'a, T> {
    pub fn new(params: &'a PolicyParams<T>, max_input_len: usize) -> Self {
        Self {
            params,
            max_input_len,
            tag: "learned".into(),
        }
    }
}

impl<T: Scalar> SpanProposer for LearnedProposer<'_, T> {
    fn tag(&self) -> String {
        self.tag.clone()
    }

    fn propose(&self, example: &AnchorExample, k: usize, max_span_len: usize) -> Result<Vec<Span>, EvaluationError> {
        let (s, e) = forward(self.params, example.context_tokens.ids(), self.max_input_len)?;
        let ranked = top_k_spans(&s, &e, k, max_span_len)?;
        Ok(ranked.into_iter().map(|c| c.span).collect())
    }

    fn max_input_len(&self) -> Option<usize> {
        Some(self.max_input_len)
    }
}

/// Uniform spans, drawn without replacement from a generator keyed by the
/// context text.
pub struct RandomSpanProposer {
    pub seed: u64,
}

impl SpanProposer for RandomSpanProposer {
    fn tag(&self) -> String {
        "randomspan".into()
    }

    fn propose(&self, example: &AnchorExample, k: usize, max_span_len: usize) -> Result<Vec<Span>, EvaluationError> {
        let mut rng = context_rng(self.seed, example);
        let mut out = Vec::with_capacity(k);
        fill_random(&mut out, example.context_tokens.len(), k, max_span_len, &mut rng)?;
        Ok(out)
    }
}

/// Salient tags in random order, topped up with uniform spans when the
/// context has fewer than `k` of them.
pub struct SalientProposer {
    pub seed: u64,
}

impl SpanProposer for SalientProposer {
    fn tag(&self) -> String {
        "salient".into()
    }

    fn propose(&self, example: &AnchorExample, k: usize, max_span_len: usize) -> Result<Vec<Span>, EvaluationError> {
        let mut rng = context_rng(self.seed, example);
        let chunk = Chunk {
            doc_id: "".into(),
            chunk_index: 0,
            tokens: example.context_tokens.clone(),
            source: example.context.as_str().into(),
        };
        let mut spans: Vec<Span> = eligible_tags(&chunk, max_span_len).into_iter().map(|t| t.span).collect();
        spans.shuffle(&mut rng);
        spans.truncate(k);
        fill_random(&mut spans, chunk.len(), k, max_span_len, &mut rng)?;
        Ok(spans)
    }
}

fn context_rng(seed: u64, example: &AnchorExample) -> ChunkRng {
    rng_from_seed(derive_seed(seed, &example.context, 0))
}

fn fill_random(
    out: &mut Vec<Span>,
    len: usize,
    k: usize,
    max_span_len: usize,
    rng: &mut ChunkRng,
) -> Result<(), EvaluationError> {
    let target = k.min(count_valid_spans(len, max_span_len.max(1)));
    while out.len() < target {
        let s = random_span(len, max_span_len, rng)?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: String,
    pub em_at_1: f64,
    pub em_at_5: f64,
    pub token_f1_at_1: f64,
    pub answer_coverage: Option<f64>,
    pub n: usize,
}

/// Harmonic mean of precision and recall over token positions.
pub fn token_f1(predicted: Span, gold: Span) -> f64 {
    let lo = predicted.start.max(gold.start);
    let hi = predicted.end.min(gold.end);
    if lo > hi {
        return 0.0;
    }
    let overlap = (hi - lo + 1) as f64;
    let p = overlap / predicted.len() as f64;
    let r = overlap / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Top-1 / top-5 exact match and top-1 token F1 against the gold answer span.
pub fn span_hit_metrics<P: SpanProposer + ?Sized>(
    proposer: &P,
    dev: &[AnchorExample],
    max_span_len: usize,
) -> Result<PolicyReport, EvaluationError> {
    if dev.is_empty() {
        return Err(EvaluationError::EmptyDataset);
    }
    let per_example: Vec<(bool, bool, f64)> = dev
        .par_iter()
        .map(|ex| {
            let windowed;
            let ex = match proposer.max_input_len() {
                Some(max) if ex.context_tokens.len() > max => {
                    windowed = ex.truncate_around_answer(max).map_err(PolicyError::from)?;
                    &windowed
                }
                _ => ex,
            };
            let spans = proposer.propose(ex, 5, max_span_len)?;
            let gold = ex.answer_span;
            let top1 = spans.first().copied();
            Ok((
                top1 == Some(gold),
                spans.iter().take(5).any(|&s| s == gold),
                top1.map_or(0.0, |s| token_f1(s, gold)),
            ))
        })
        .collect::<Result<_, EvaluationError>>()?;

    let n = per_example.len();
    let hits1 = per_example.iter().filter(|x| x.0).count();
    let hits5 = per_example.iter().filter(|x| x.1).count();
    // sorted so the sum does not depend on dev-set order
    let mut f1s: Vec<f64> = per_example.iter().map(|x| x.2).collect();
    f1s.sort_by(f64::total_cmp);
    Ok(PolicyReport {
        policy: proposer.tag(),
        em_at_1: hits1 as f64 / n as f64,
        em_at_5: hits5 as f64 / n as f64,
        token_f1_at_1: f1s.iter().sum::<f64>() / n as f64,
        answer_coverage: None,
        n,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// `covered / present`, or 0 when no answer occurs in the corpus.
    pub coverage: f64,
    pub covered: Vec<String>,
    pub uncovered: Vec<String>,
    pub absent: Vec<String>,
}

/// Fraction of answers occurring in the corpus that some masked run spells
/// out exactly, ignoring case.
pub fn answer_coverage(
    examples: &[MaskedExample],
    answers: &[String],
    vocab: &Vocab,
) -> Result<CoverageReport, EvaluationError> {
    let vocab_size = vocab.len();
    for ex in examples {
        if let Some(&id) = ex.input_ids.iter().chain(&ex.target_ids).find(|&&id| id as usize >= vocab_size) {
            return Err(EvaluationError::VocabMismatch { id, vocab_size });
        }
    }
    let fold_ids = |ids: &[u32]| -> Vec<String> {
        ids.iter().map(|&id| vocab.token(id).unwrap_or_default().to_lowercase()).collect()
    };
    let chunks: Vec<Vec<String>> = examples.iter().map(|ex| fold_ids(&ex.reconstruct())).collect();
    let runs: HashSet<Vec<String>> = examples
        .iter()
        .flat_map(|ex| ex.masked_runs().into_iter().map(|r| fold_ids(&ex.run_targets(r))))
        .collect();

    let mut report = CoverageReport::default();
    for answer in answers {
        let words: Vec<String> = split_words(answer)
            .iter()
            .map(|t| answer[t.byte_start..t.byte_end].to_lowercase())
            .collect();
        let present = !words.is_empty()
            && chunks.iter().any(|c| c.windows(words.len()).any(|w| w == words.as_slice()));
        if !present {
            report.absent.push(answer.clone());
        } else if runs.contains(&words) {
            report.covered.push(answer.clone());
        } else {
            report.uncovered.push(answer.clone());
        }
    }
    let present = report.covered.len() + report.uncovered.len();
    report.coverage = if present == 0 {
        0.0
    } else {
        report.covered.len() as f64 / present as f64
    };
    Ok(report)
}

pub struct Comparison {
    /// Reports ordered best first.
    pub reports: Vec<PolicyReport>,
    pub table: String,
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.reports).expect("reports serialize")
    }
}

/// Orders reports by `em_at_5` descending, ties by policy tag, and renders
/// them as an aligned table.
pub fn compare_policies(reports: &[PolicyReport]) -> Result<Comparison, EvaluationError> {
    if reports.len() < 2 {
        return Err(EvaluationError::TooFewReports(reports.len()));
    }
    let mut sorted = reports.to_vec();
    sorted.sort_by(|a, b| match b.em_at_5.total_cmp(&a.em_at_5) {
        Ordering::Equal => a.policy.cmp(&b.policy),
        o => o,
    });
    let width = sorted.iter().map(|r| r.policy.len()).max().unwrap_or(0).max("policy".len());
    let mut table = String::new();
    writeln!(
        table,
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>6}",
        "policy", "em@1", "em@5", "f1@1", "coverage", "n"
    )
    .unwrap();
    for r in &sorted {
        let cov = r.answer_coverage.map_or_else(|| "-".to_string(), |c| format!("{c:.4}"));
        writeln!(
            table,
            "{:<width$}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8}  {:>6}",
            r.policy, r.em_at_1, r.em_at_5, r.token_f1_at_1, cov, r.n
        )
        .unwrap();
    }
    Ok(Comparison { reports: sorted, table })
}

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("evaluation set is empty")]
    EmptyDataset,
    #[error("need at least two reports to compare, got {0}")]
    TooFewReports(usize),
    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    VocabMismatch { id: u32, vocab_size: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}
