//! Applies a masking policy to every chunk of a corpus and emits denoising
//! examples.

use std::collections::BTreeMap;
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    random_span, random_token_decisions, salient_span_mask, BaselineError, MaskDecisions, DEFAULT_MASK_RATE,
};
use crate::corpus::{chunk_corpus, Chunk, CorpusError, Document, Vocab, MASK_ID};
use crate::policy::{
    forward, select_span, top_k_spans, Checkpoint, DeploymentMode, PolicyError, PolicyParams,
};
use crate::scalar::Scalar;
use crate::seeding::{chunk_rng, derive_seed, ChunkRng};
use crate::span::Span;

/// A corrupted chunk together with what was removed from it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedExample {
    pub doc_id: String,
    pub chunk_index: usize,
    pub input_ids: Vec<u32>,
    pub masked_positions: Vec<usize>,
    pub target_ids: Vec<u32>,
    #[serde(rename = "policy")]
    pub policy_tag: String,
    #[serde(rename = "seed")]
    pub seed_used: u64,
}

impl MaskedExample {
    /// Original token ids, with targets written back over the masks.
    pub fn reconstruct(&self) -> Vec<u32> {
        let mut ids = self.input_ids.clone();
        for (&p, &t) in self.masked_positions.iter().zip(&self.target_ids) {
            ids[p] = t;
        }
        ids
    }

    /// Maximal runs of consecutive masked positions.
    pub fn masked_runs(&self) -> Vec<Span> {
        let mut runs: Vec<Span> = Vec::new();
        for &p in &self.masked_positions {
            match runs.last_mut() {
                Some(last) if last.end + 1 == p => last.end = p,
                _ => runs.push(Span::new(p, p)),
            }
        }
        runs
    }

    /// Target ids of one masked run.
    pub fn run_targets(&self, run: Span) -> Vec<u32> {
        self.masked_positions
            .iter()
            .zip(&self.target_ids)
            .filter(|(p, _)| run.contains(**p))
            .map(|(_, &t)| t)
            .collect()
    }
}

/// What to mask in one chunk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Masking {
    Decisions(MaskDecisions),
    Span { span: Span, produced_by: String },
}

/// Replaces every selected token with `<mask>`.
pub fn corrupt(chunk: &Chunk, masking: &Masking, seed_used: u64) -> Result<MaskedExample, CorruptionError> {
    let n = chunk.len();
    let (d, tag) = match masking {
        Masking::Decisions(dec) => {
            if dec.d.len() != n {
                return Err(CorruptionError::DecisionLength {
                    expected: n,
                    found: dec.d.len(),
                });
            }
            (dec.d.clone(), dec.produced_by.clone())
        }
        Masking::Span { span, produced_by } => {
            if !span.fits(n) {
                return Err(CorruptionError::SpanOutOfBounds { span: *span, len: n });
            }
            (MaskDecisions::from_span(n, *span, produced_by).d, produced_by.clone())
        }
    };
    if n > 0 && d.iter().all(|&x| x) {
        return Err(CorruptionError::AllMasked);
    }
    let ids = chunk.ids();
    let masked_positions: Vec<usize> = (0..n).filter(|&i| d[i]).collect();
    let target_ids = masked_positions.iter().map(|&p| ids[p]).collect();
    let input_ids = ids
        .iter()
        .zip(&d)
        .map(|(&id, &m)| if m { MASK_ID } else { id })
        .collect();
    Ok(MaskedExample {
        doc_id: chunk.doc_id.to_string(),
        chunk_index: chunk.chunk_index,
        input_ids,
        masked_positions,
        target_ids,
        policy_tag: tag,
        seed_used,
    })
}

/// Masking policy applied by [`mask_corpus`].
#[derive(Clone, Debug)]
pub enum PolicySpec<'a, T: Scalar> {
    /// Independent per-token masking at `rate`.
    Random15 { rate: f64 },
    RandomSpan { max_span_len: usize },
    Salient { max_span_len: usize },
    Learned {
        params: &'a PolicyParams<T>,
        mode: DeploymentMode,
        max_span_len: usize,
    },
}

impl<'a, T: Scalar> PolicySpec<'a, T> {
    pub fn random15() -> Self {
        PolicySpec::Random15 {
            rate: DEFAULT_MASK_RATE,
        }
    }

    /// Learned policy from a checkpoint already converted to `params`; checks
    /// the checkpoint was trained with `vocab`.
    pub fn learned(
        checkpoint: &Checkpoint,
        params: &'a PolicyParams<T>,
        vocab: &Vocab,
        mode: DeploymentMode,
        max_span_len: usize,
    ) -> Result<Self, CorruptionError> {
        checkpoint.verify_vocab(vocab)?;
        Ok(PolicySpec::Learned {
            params,
            mode,
            max_span_len,
        })
    }

    pub fn tag(&self) -> String {
        match self {
            PolicySpec::Random15 { .. } => "random15".into(),
            PolicySpec::RandomSpan { .. } => "randomspan".into(),
            PolicySpec::Salient { .. } => "salient".into(),
            PolicySpec::Learned { mode, .. } => format!("learned-{}", mode.tag()),
        }
    }

    /// Mask for one chunk, or `None` when the policy cannot leave any token
    /// unmasked.
    pub fn choose(&self, chunk: &Chunk, rng: &mut ChunkRng) -> Result<Option<Masking>, CorruptionError> {
        let n = chunk.len();
        let tag = self.tag();
        // single-span policies must leave at least one token as context
        let cap = |max: usize| max.min(n.saturating_sub(1));
        let span = match self {
            PolicySpec::Random15 { rate } => {
                let dec = random_token_decisions(n, *rate, rng)?;
                if n == 0 || dec.d.iter().all(|&x| x) {
                    return Ok(None);
                }
                return Ok(Some(Masking::Decisions(dec)));
            }
            _ if n < 2 => return Ok(None),
            PolicySpec::RandomSpan { max_span_len } => random_span(n, cap(*max_span_len), rng)?,
            PolicySpec::Salient { max_span_len } => salient_span_mask(chunk, rng, cap(*max_span_len))?,
            PolicySpec::Learned {
                params,
                mode,
                max_span_len,
            } => {
                let (s, e) = forward(*params, chunk.ids(), usize::MAX)?;
                let cands = top_k_spans(&s, &e, mode.pool_size(), cap(*max_span_len))?;
                select_span(&cands, *mode, rng)?
            }
        };
        Ok(Some(Masking::Span { span, produced_by: tag }))
    }
}

/// Corpus-level statistics of one masking run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub chunks: usize,
    pub masked_token_rate: f64,
    pub span_length_hist: BTreeMap<usize, usize>,
}

impl MaskSummary {
    pub fn from_examples(examples: &[MaskedExample]) -> Self {
        let mut hist = BTreeMap::new();
        let (mut masked, mut total) = (0usize, 0usize);
        for ex in examples {
            masked += ex.masked_positions.len();
            total += ex.input_ids.len();
            for run in ex.masked_runs() {
                *hist.entry(run.len()).or_insert(0) += 1;
            }
        }
        Self {
            chunks: examples.len(),
            masked_token_rate: if total == 0 { 0.0 } else { masked as f64 / total as f64 },
            span_length_hist: hist,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub struct MaskRun {
    pub examples: Vec<MaskedExample>,
    pub summary: MaskSummary,
    /// Chunks where the policy could not leave any context unmasked.
    pub skipped: usize,
}

/// Masks pre-chunked text. Output is ordered by `(doc_id, chunk_index)` and
/// identical for any `workers` count.
pub fn mask_chunks<T: Scalar>(
    chunks: &[Chunk],
    policy: &PolicySpec<'_, T>,
    global_seed: u64,
    workers: usize,
) -> Result<MaskRun, CorruptionError> {
    if let PolicySpec::Learned { params, .. } = policy {
        let vocab_size = params.dims().vocab_size;
        if let Some(bad) = chunks.iter().flat_map(|c| c.ids()).find(|&&id| id as usize >= vocab_size) {
            return Err(CorruptionError::Policy(PolicyError::UnknownTokenId {
                id: *bad,
                vocab_size,
            }));
        }
    }
    let work = |chunk: &Chunk| -> Result<Option<MaskedExample>, CorruptionError> {
        let seed = derive_seed(global_seed, &chunk.doc_id, chunk.chunk_index);
        let mut rng = chunk_rng(global_seed, &chunk.doc_id, chunk.chunk_index);
        match policy.choose(chunk, &mut rng)? {
            Some(m) => corrupt(chunk, &m, seed).map(Some),
            None => Ok(None),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CorruptionError::Workers(e.to_string()))?;
    let results: Vec<Result<Option<MaskedExample>, CorruptionError>> =
        pool.install(|| chunks.par_iter().map(work).collect());

    let mut examples = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(ex) => examples.push(ex),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{skipped} chunks skipped: no unmasked context would remain");
    }
    examples.sort_by(|a, b| (a.doc_id.as_str(), a.chunk_index).cmp(&(b.doc_id.as_str(), b.chunk_index)));
    let summary = MaskSummary::from_examples(&examples);
    Ok(MaskRun {
        examples,
        summary,
        skipped,
    })
}

/// Tokenizes, chunks and masks a corpus.
pub fn mask_corpus<T: Scalar>(
    docs: &[Document],
    vocab: &Vocab,
    policy: &PolicySpec<'_, T>,
    chunk_len: usize,
    global_seed: u64,
    workers: usize,
) -> Result<MaskRun, CorruptionError> {
    if let PolicySpec::Learned { params, .. } = policy {
        if params.dims().vocab_size != vocab.len() {
            return Err(CorruptionError::Policy(PolicyError::VocabMismatch {
                expected: format!("{} entries", params.dims().vocab_size),
                found: format!("{} entries", vocab.len()),
            }));
        }
    }
    let chunks = chunk_corpus(docs, vocab, chunk_len)?;
    mask_chunks(&chunks, policy, global_seed, workers)
}

/// One JSON object per line.
pub fn write_examples_jsonl<W: Write>(examples: &[MaskedExample], mut out: W) -> std::io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_examples_jsonl(text: &str) -> Result<Vec<MaskedExample>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum CorruptionError {
    #[error("span {span:?} out of bounds for chunk of {len} tokens")]
    SpanOutOfBounds { span: Span, len: usize },
    #[error("{found} decisions for a chunk of {expected} tokens")]
    DecisionLength { expected: usize, found: usize },
    #[error("every token would be masked")]
    AllMasked,
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("worker pool: {0}")]
    Workers(String),
}
