use std::fs;
use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

use super::tokenize::{tokenize, TokenSequence};
use super::vocab::Vocab;
use super::CorpusError;

pub const DEFAULT_CHUNK_LEN: usize = 128;

/// One document of a raw corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// A fixed-length window of a document's token stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub doc_id: Arc<str>,
    pub chunk_index: usize,
    pub tokens: TokenSequence,
    /// Full document text; `tokens` offsets point into it.
    pub source: Arc<str>,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        self.tokens.ids()
    }

    pub fn token_text(&self, i: usize) -> &str {
        self.tokens.token_text(&self.source, i)
    }

    /// Builds a standalone chunk over a whole text. Handy for tagging and tests.
    pub fn from_text(doc_id: &str, text: &str, vocab: &Vocab) -> Chunk {
        Chunk {
            doc_id: Arc::from(doc_id),
            chunk_index: 0,
            tokens: tokenize(text, vocab),
            source: Arc::from(text),
        }
    }
}

/// Window boundaries for a stream of `n_tokens`: consecutive windows of
/// `chunk_len`, the tail kept only when it has at least `chunk_len / 4` tokens.
pub fn chunk_ranges(n_tokens: usize, chunk_len: usize) -> Result<Vec<Range<usize>>, CorpusError> {
    if chunk_len < 2 {
        return Err(CorpusError::InvalidChunkLength(chunk_len));
    }
    let min_tail = chunk_len / 4;
    let mut out = Vec::with_capacity(n_tokens / chunk_len + 1);
    let mut start = 0;
    while start < n_tokens {
        let end = (start + chunk_len).min(n_tokens);
        let len = end - start;
        if len == chunk_len || (len >= min_tail && len >= 1) {
            out.push(start..end);
        }
        start = end;
    }
    Ok(out)
}

pub fn chunk_document(
    doc_id: &str,
    source: &str,
    tokens: &TokenSequence,
    chunk_len: usize,
) -> Result<Vec<Chunk>, CorpusError> {
    let doc_id: Arc<str> = Arc::from(doc_id);
    let source: Arc<str> = Arc::from(source);
    Ok(chunk_ranges(tokens.len(), chunk_len)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| Chunk {
            doc_id: doc_id.clone(),
            chunk_index: i,
            tokens: tokens.slice(r.start, r.end),
            source: source.clone(),
        })
        .collect())
}

/// Reads corpus files as documents, one per non-blank line.
///
/// Document ids are `<path>:<line>` with the line number zero-padded, so
/// sorting ids lexicographically keeps file order.
pub fn read_documents(paths: &[PathBuf]) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).map_err(|e| CorpusError::io(p, e))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            docs.push(Document {
                id: format!("{}:{:08}", p.display(), i + 1),
                text: line.to_string(),
            });
        }
    }
    Ok(docs)
}

/// Tokenizes and chunks every document.
pub fn chunk_corpus(docs: &[Document], vocab: &Vocab, chunk_len: usize) -> Result<Vec<Chunk>, CorpusError> {
    let mut out = Vec::new();
    for d in docs {
        let tokens = tokenize(&d.text, vocab);
        out.extend(chunk_document(&d.id, &d.text, &tokens, chunk_len)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lens(n: usize, l: usize) -> Vec<usize> {
        chunk_ranges(n, l).unwrap().iter().map(|r| r.len()).collect()
    }

    #[test]
    fn keeps_long_tail() {
        assert_eq!(lens(300, 128), vec![128, 128, 44]);
    }

    #[test]
    fn drops_short_tail() {
        assert_eq!(lens(260, 128), vec![128, 128]);
    }

    #[test]
    fn short_document_is_one_chunk() {
        assert_eq!(lens(100, 128), vec![100]);
        assert_eq!(lens(0, 128), Vec::<usize>::new());
    }

    #[test]
    fn rejects_tiny_chunk_length() {
        assert!(matches!(chunk_ranges(10, 1), Err(CorpusError::InvalidChunkLength(1))));
        assert_eq!(lens(5, 2), vec![2, 2, 1]);
    }

    #[test]
    fn chunk_indices_are_contiguous() {
        let v = Vocab::from_tokens(["w"]).unwrap();
        let text = vec!["w"; 10].join(" ");
        let toks = tokenize(&text, &v);
        let chunks = chunk_document("d", &text, &toks, 4).unwrap();
        let idx: Vec<usize> = chunks.iter().map(|c| c.chunk_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(chunks[2].len(), 2);
    }
}
