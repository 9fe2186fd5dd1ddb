use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::{split_words, tokenize, TokenSequence};
use super::vocab::Vocab;
use super::CorpusError;
use crate::span::Span;

/// A (context, question, answer) record with the answer located in the context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchorExample {
    pub context: String,
    /// Carried through but never used by the policy.
    pub question: String,
    pub answer: String,
    pub context_tokens: TokenSequence,
    pub answer_span: Span,
}

impl AnchorExample {
    pub fn new(context: &str, question: &str, answer: &str, vocab: &Vocab) -> Result<Self, CorpusError> {
        let context_tokens = tokenize(context, vocab);
        let answer_span = align_answer(&context_tokens, context, answer)?;
        Ok(Self {
            context: context.to_string(),
            question: question.to_string(),
            answer: answer.to_string(),
            context_tokens,
            answer_span,
        })
    }

    /// Window of at most `max_len` tokens centred on the answer. Examples
    /// already short enough are returned unchanged.
    pub fn truncate_around_answer(&self, max_len: usize) -> Result<AnchorExample, CorpusError> {
        let n = self.context_tokens.len();
        if n <= max_len {
            return Ok(self.clone());
        }
        let span = self.answer_span;
        if span.len() > max_len {
            return Err(CorpusError::AnswerTooLong {
                len: span.len(),
                max: max_len,
            });
        }
        let centre = (span.start + span.end) / 2;
        let start = centre.saturating_sub(max_len / 2).min(n - max_len);
        // keep the whole answer inside the window
        let start = start.min(span.start).max((span.end + 1).saturating_sub(max_len));
        Ok(AnchorExample {
            context: self.context.clone(),
            question: self.question.clone(),
            answer: self.answer.clone(),
            context_tokens: self.context_tokens.slice(start, start + max_len),
            answer_span: span.shifted_left(start),
        })
    }
}

fn is_outer_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Lower-cases and collapses internal whitespace to single spaces.
pub fn fold_text(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Answer form used for matching: outer punctuation stripped (unless nothing
/// would be left), then folded.
pub fn normalize_answer(answer: &str) -> String {
    let stripped = answer.trim().trim_matches(|c: char| is_outer_punct(c) || c.is_whitespace());
    if stripped.is_empty() {
        fold_text(answer)
    } else {
        fold_text(stripped)
    }
}

/// Earliest token span of `context` whose text matches `answer` after
/// case-folding and outer-punctuation stripping.
pub fn align_answer(context_tokens: &TokenSequence, context: &str, answer: &str) -> Result<Span, CorpusError> {
    let target = normalize_answer(answer);
    if target.is_empty() {
        return Err(CorpusError::EmptyAnswer);
    }
    // a matching span tokenizes exactly like the target, so only windows of
    // that many tokens can match
    let width = split_words(&target).len();
    let n = context_tokens.len();
    if width == 0 || width > n {
        return Err(CorpusError::AnswerNotFound(answer.to_string()));
    }
    (0..=n - width)
        .find(|&i| fold_text(context_tokens.span_text(context, i, i + width - 1)) == target)
        .map(|i| Span::new(i, i + width - 1))
        .ok_or_else(|| CorpusError::AnswerNotFound(answer.to_string()))
}

/// One raw line of an anchor dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub context: String,
    pub question: String,
    pub answer: String,
}

/// Raw records of an anchor JSONL file, without answer alignment.
pub fn read_anchor_records(path: &Path) -> Result<Vec<AnchorRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Outcome counts of [`load_anchor_dataset`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
    /// 1-based line numbers of records whose answer could not be aligned.
    pub skipped_lines: Vec<usize>,
}

pub fn parse_anchor_lines<R: BufRead>(
    reader: R,
    vocab: &Vocab,
) -> Result<(Vec<AnchorExample>, LoadReport), CorpusError> {
    let mut examples = Vec::new();
    let mut report = LoadReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnchorRecord = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        match AnchorExample::new(&rec.context, &rec.question, &rec.answer, vocab) {
            Ok(ex) => {
                examples.push(ex);
                report.loaded += 1;
            }
            Err(CorpusError::AnswerNotFound(_) | CorpusError::EmptyAnswer) => {
                report.skipped += 1;
                report.skipped_lines.push(line_no);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((examples, report))
}

/// Loads a JSONL file of `{"context", "question", "answer"}` records.
pub fn load_anchor_dataset(path: &Path, vocab: &Vocab) -> Result<(Vec<AnchorExample>, LoadReport), CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    parse_anchor_lines(BufReader::new(file), vocab)
}
