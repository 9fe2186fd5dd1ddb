//! Text ingestion: vocabulary, word tokenization with offsets, chunking and
//! alignment of anchor answers to token spans.

mod anchor;
mod chunk;
mod tokenize;
mod vocab;

use std::io;
use std::path::{Path, PathBuf};

pub use anchor::{
    align_answer, fold_text, load_anchor_dataset, normalize_answer, parse_anchor_lines, read_anchor_records, AnchorExample, AnchorRecord,
    LoadReport,
};
pub use chunk::{chunk_corpus, chunk_document, chunk_ranges, read_documents, Chunk, Document, DEFAULT_CHUNK_LEN};
pub use tokenize::{split_words, tokenize, RawToken, TokenSequence};
pub use vocab::{
    build_vocab, Vocab, MASK_ID, MASK_TOKEN, NUM_SPECIAL, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN,
};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("vocabulary max size {0} leaves no room after the reserved tokens")]
    InvalidMaxSize(usize),
    #[error("vocabulary line {line}: {reason}")]
    MalformedVocab { line: usize, reason: String },
    #[error("chunk length must be at least 2, got {0}")]
    InvalidChunkLength(usize),
    #[error("invalid token offsets: {0}")]
    InvalidOffsets(String),
    #[error("answer {0:?} not found in context")]
    AnswerNotFound(String),
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("answer spans {len} tokens, more than the {max}-token window")]
    AnswerTooLong { len: usize, max: usize },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
