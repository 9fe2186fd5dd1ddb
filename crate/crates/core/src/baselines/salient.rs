//! Rule-based salient span tagger: dates, multi-digit numbers and runs of
//! capitalized words.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::random::random_span;
use super::BaselineError;
use crate::corpus::{split_words, Chunk, TokenSequence, UNK_ID};
use crate::span::Span;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SalientKind {
    Date,
    Number,
    CapSequence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SalientTag {
    pub span: Span,
    pub kind: SalientKind,
}

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

fn is_month(w: &str) -> bool {
    MONTHS.contains(&w)
}

fn is_digits(w: &str) -> bool {
    !w.is_empty() && w.bytes().all(|b| b.is_ascii_digit())
}

fn is_day(w: &str) -> bool {
    is_digits(w) && w.len() <= 2 && matches!(w.parse::<u32>(), Ok(1..=31))
}

/// Four-digit year in 1000..=2999, optionally as a decade ("1950s").
fn is_year(w: &str) -> bool {
    let digits = w.strip_suffix('s').unwrap_or(w);
    digits.len() == 4 && is_digits(digits) && matches!(digits.parse::<u32>(), Ok(1000..=2999))
}

fn is_capitalized(w: &str) -> bool {
    w.chars().next().is_some_and(char::is_uppercase)
}

fn is_sentence_end(w: &str) -> bool {
    matches!(w, "." | "!" | "?")
}

fn is_opening(w: &str) -> bool {
    matches!(w, "\"" | "'" | "(" | "[" | "“" | "‘" | "`")
}

struct Words<'s> {
    text: Vec<&'s str>,
    /// `adjacent[i]`: token `i` directly follows token `i-1` with no whitespace.
    adjacent: Vec<bool>,
}

impl<'s> Words<'s> {
    fn new(source: &'s str, tokens: &TokenSequence) -> Self {
        let bo = tokens.byte_offsets();
        Words {
            text: (0..tokens.len()).map(|i| tokens.token_text(source, i)).collect(),
            adjacent: (0..bo.len()).map(|i| i > 0 && bo[i - 1].1 == bo[i].0).collect(),
        }
    }

    fn get(&self, i: usize) -> Option<&'s str> {
        self.text.get(i).copied()
    }

    fn sentence_initial(&self, i: usize) -> bool {
        let mut j = i;
        while j > 0 && is_opening(self.text[j - 1]) {
            j -= 1;
        }
        j == 0 || is_sentence_end(self.text[j - 1])
    }
}

/// Longest date pattern starting at `i`, as an inclusive end index.
fn date_at(w: &Words, i: usize) -> Option<usize> {
    let at = |k: usize| w.get(i + k).unwrap_or("");
    let first = at(0);
    if is_month(first) {
        if is_day(at(1)) {
            if at(2) == "," && is_year(at(3)) {
                return Some(i + 3);
            }
            if is_year(at(2)) {
                return Some(i + 2);
            }
            return Some(i + 1);
        }
        if is_year(at(1)) {
            return Some(i + 1);
        }
        return None;
    }
    if is_day(first) && is_month(at(1)) {
        if is_year(at(2)) {
            return Some(i + 2);
        }
        return Some(i + 1);
    }
    if is_year(first) {
        return Some(i);
    }
    None
}

/// Numeric literal starting at `i`: digit groups joined by directly adjacent
/// `,` (three-digit groups) or `.`. Returns the inclusive end and digit count.
fn number_at(w: &Words, i: usize, claimed: &[bool]) -> Option<(usize, usize)> {
    let first = w.get(i)?;
    if !is_digits(first) || claimed[i] {
        return None;
    }
    let mut end = i;
    let mut digits = first.len();
    loop {
        let (sep, next) = (end + 1, end + 2);
        let (Some(s), Some(d)) = (w.get(sep), w.get(next)) else {
            break;
        };
        let joined = w.adjacent[sep] && w.adjacent[next] && !claimed[sep] && !claimed[next] && is_digits(d);
        let ok = joined && (s == "." || (s == "," && d.len() == 3));
        if !ok {
            break;
        }
        digits += d.len();
        end = next;
    }
    Some((end, digits))
}

/// Tags salient spans of a token sequence over `source`.
///
/// Dates are claimed first, then numbers on the remaining tokens, then
/// capitalized runs on what is left; within a kind, matching is
/// leftmost-longest. Output is sorted by start and non-overlapping.
pub fn tag_tokens(source: &str, tokens: &TokenSequence) -> Vec<SalientTag> {
    let w = Words::new(source, tokens);
    let n = tokens.len();
    let mut claimed = vec![false; n];
    let mut tags = Vec::new();

    let mut i = 0;
    while i < n {
        if let Some(end) = date_at(&w, i) {
            tags.push(SalientTag {
                span: Span::new(i, end),
                kind: SalientKind::Date,
            });
            claimed[i..=end].fill(true);
            i = end + 1;
        } else {
            i += 1;
        }
    }

    let mut i = 0;
    while i < n {
        match number_at(&w, i, &claimed) {
            Some((end, digits)) => {
                if digits >= 2 {
                    tags.push(SalientTag {
                        span: Span::new(i, end),
                        kind: SalientKind::Number,
                    });
                    claimed[i..=end].fill(true);
                }
                i = end + 1;
            }
            None => i += 1,
        }
    }

    let mid_sentence_caps: HashSet<&str> = (0..n)
        .filter(|&k| !claimed[k] && is_capitalized(w.text[k]) && !w.sentence_initial(k))
        .map(|k| w.text[k])
        .collect();
    let mut i = 0;
    while i < n {
        if claimed[i] || !is_capitalized(w.text[i]) {
            i += 1;
            continue;
        }
        let mut end = i;
        while end + 1 < n && !claimed[end + 1] && is_capitalized(w.text[end + 1]) {
            end += 1;
        }
        let keep = end > i || !w.sentence_initial(i) || mid_sentence_caps.contains(w.text[i]);
        if keep {
            tags.push(SalientTag {
                span: Span::new(i, end),
                kind: SalientKind::CapSequence,
            });
        }
        i = end + 1;
    }

    tags.sort_by_key(|t| t.span);
    tags
}

pub fn salient_spans(chunk: &Chunk) -> Vec<SalientTag> {
    tag_tokens(&chunk.source, &chunk.tokens)
}

/// Tags raw text without a vocabulary. Returns the tags with their text.
pub fn tag_text(text: &str) -> Vec<(SalientTag, String)> {
    let raw = split_words(text);
    let tokens = TokenSequence::from_parts(
        vec![UNK_ID; raw.len()],
        raw.iter().map(|t| (t.char_start, t.char_end)).collect(),
        raw.iter().map(|t| (t.byte_start, t.byte_end)).collect(),
    )
    .expect("tokenizer offsets are ordered");
    tag_tokens(text, &tokens)
        .into_iter()
        .map(|t| (t, tokens.span_text(text, t.span.start, t.span.end).to_string()))
        .collect()
}

/// Salient tags no longer than `max_span_len`.
pub fn eligible_tags(chunk: &Chunk, max_span_len: usize) -> Vec<SalientTag> {
    salient_spans(chunk)
        .into_iter()
        .filter(|t| t.span.len() <= max_span_len)
        .collect()
}

/// One salient span chosen uniformly, or a random span when the chunk has
/// none of at most `max_span_len` tokens.
pub fn salient_span_mask<R: Rng + ?Sized>(chunk: &Chunk, rng: &mut R, max_span_len: usize) -> Result<Span, BaselineError> {
    let tags = eligible_tags(chunk, max_span_len);
    if tags.is_empty() {
        return random_span(chunk.len(), max_span_len, rng);
    }
    Ok(tags[rng.gen_range(0..tags.len())].span)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureTag {
    pub kind: SalientKind,
    pub start_char: usize,
    pub end_char: usize,
}

/// One line of a tagger fixtures file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagFixture {
    pub text: String,
    pub tags: Vec<FixtureTag>,
}

impl TagFixture {
    /// Tags produced for `text`, expressed in character offsets.
    pub fn tag(text: &str) -> Vec<FixtureTag> {
        let raw = split_words(text);
        let tokens = TokenSequence::from_parts(
            vec![UNK_ID; raw.len()],
            raw.iter().map(|t| (t.char_start, t.char_end)).collect(),
            raw.iter().map(|t| (t.byte_start, t.byte_end)).collect(),
        )
        .expect("tokenizer offsets are ordered");
        tag_tokens(text, &tokens)
            .into_iter()
            .map(|t| FixtureTag {
                kind: t.kind,
                start_char: tokens.offsets()[t.span.start].0,
                end_char: tokens.offsets()[t.span.end].1,
            })
            .collect()
    }
}

pub fn load_tag_fixtures(path: &Path) -> Result<Vec<TagFixture>, BaselineError> {
    let file = File::open(path).map_err(|e| BaselineError::Fixture(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BaselineError::Fixture(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| BaselineError::Fixture(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}
