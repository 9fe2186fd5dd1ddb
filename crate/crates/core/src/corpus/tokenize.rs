use super::vocab::Vocab;
use super::CorpusError;

/// Position of one word token in its source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawToken {
    pub byte_start: usize,
    pub byte_end: usize,
    pub char_start: usize,
    pub char_end: usize,
}

/// Splits on whitespace; runs of alphanumeric characters form one token and
/// every other non-space character is a token of its own.
pub fn split_words(text: &str) -> Vec<RawToken> {
    let mut out = Vec::new();
    let mut current: Option<RawToken> = None;
    for (char_idx, (byte_idx, ch)) in text.char_indices().enumerate() {
        let byte_end = byte_idx + ch.len_utf8();
        if ch.is_alphanumeric() {
            match current.as_mut() {
                Some(tok) => {
                    tok.byte_end = byte_end;
                    tok.char_end = char_idx + 1;
                }
                None => {
                    current = Some(RawToken {
                        byte_start: byte_idx,
                        byte_end,
                        char_start: char_idx,
                        char_end: char_idx + 1,
                    })
                }
            }
            continue;
        }
        if let Some(tok) = current.take() {
            out.push(tok);
        }
        if !ch.is_whitespace() {
            out.push(RawToken {
                byte_start: byte_idx,
                byte_end,
                char_start: char_idx,
                char_end: char_idx + 1,
            });
        }
    }
    out.extend(current);
    out
}

/// Token ids with their positions in the source text.
///
/// `offsets` are character (Unicode scalar) offsets; byte offsets are kept
/// alongside for slicing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<u32>,
    offsets: Vec<(usize, usize)>,
    byte_offsets: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn from_parts(
        ids: Vec<u32>,
        offsets: Vec<(usize, usize)>,
        byte_offsets: Vec<(usize, usize)>,
    ) -> Result<Self, CorpusError> {
        if ids.len() != offsets.len() || ids.len() != byte_offsets.len() {
            return Err(CorpusError::InvalidOffsets("length mismatch".into()));
        }
        for w in offsets.windows(2).chain(byte_offsets.windows(2)) {
            if w[0].1 > w[1].0 {
                return Err(CorpusError::InvalidOffsets(format!("{:?} overlaps {:?}", w[0], w[1])));
            }
        }
        if offsets.iter().chain(&byte_offsets).any(|(s, e)| s >= e) {
            return Err(CorpusError::InvalidOffsets("empty token".into()));
        }
        Ok(Self {
            ids,
            offsets,
            byte_offsets,
        })
    }

    /// Sequence of bare ids with no source text; offsets are synthetic
    /// (token `i` occupies characters `[2i, 2i+1)`).
    pub fn from_ids(ids: Vec<u32>) -> Self {
        let offsets: Vec<(usize, usize)> = (0..ids.len()).map(|i| (2 * i, 2 * i + 1)).collect();
        Self {
            byte_offsets: offsets.clone(),
            offsets,
            ids,
        }
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    pub fn byte_offsets(&self) -> &[(usize, usize)] {
        &self.byte_offsets
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Sub-sequence `[start, end)`. Offsets keep pointing into the original text.
    pub fn slice(&self, start: usize, end: usize) -> TokenSequence {
        TokenSequence {
            ids: self.ids[start..end].to_vec(),
            offsets: self.offsets[start..end].to_vec(),
            byte_offsets: self.byte_offsets[start..end].to_vec(),
        }
    }

    /// Surface text of token `i` in `source`.
    pub fn token_text<'s>(&self, source: &'s str, i: usize) -> &'s str {
        let (s, e) = self.byte_offsets[i];
        &source[s..e]
    }

    /// Source text from the start of token `start` to the end of token `end`.
    pub fn span_text<'s>(&self, source: &'s str, start: usize, end: usize) -> &'s str {
        &source[self.byte_offsets[start].0..self.byte_offsets[end].1]
    }
}

/// Word-tokenizes `text`; words missing from `vocab` become `<unk>` but keep
/// their offsets.
pub fn tokenize(text: &str, vocab: &Vocab) -> TokenSequence {
    let raw = split_words(text);
    TokenSequence {
        ids: raw.iter().map(|t| vocab.id(&text[t.byte_start..t.byte_end])).collect(),
        offsets: raw.iter().map(|t| (t.char_start, t.char_end)).collect(),
        byte_offsets: raw.iter().map(|t| (t.byte_start, t.byte_end)).collect(),
    }
}
