use serde::{Deserialize, Serialize};

/// Inclusive token interval `[start, end]` within one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    /// Panics if `start > end`.
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "span start {start} after end {end}");
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    /// Never true; a span always covers at least one token.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fits(&self, seq_len: usize) -> bool {
        self.end < seq_len
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn positions(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn shifted_left(&self, by: usize) -> Span {
        Span::new(self.start - by, self.end - by)
    }
}

/// Number of spans `(i, j)`, `i <= j`, with length at most `max_len` in a
/// sequence of `seq_len` tokens.
pub fn count_valid_spans(seq_len: usize, max_len: usize) -> usize {
    let cap = max_len.min(seq_len);
    (1..=cap).map(|l| seq_len - l + 1).sum()
}

/// The `index`-th valid span in (start, end) lexicographic order, for
/// `index < count_valid_spans(seq_len, max_len)`.
pub fn nth_valid_span(seq_len: usize, max_len: usize, mut index: usize) -> Option<Span> {
    for start in 0..seq_len {
        let n_here = max_len.min(seq_len - start);
        if index < n_here {
            return Some(Span::new(start, start + index));
        }
        index -= n_here;
    }
    None
}
