use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::tokenize::split_words;
use super::CorpusError;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_ID: u32 = 2;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const MASK_TOKEN: &str = "<mask>";
pub const NUM_SPECIAL: usize = 3;

const SPECIALS: [&str; NUM_SPECIAL] = [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN];

/// Word vocabulary with `<pad>`, `<unk>` and `<mask>` reserved at ids 0..3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    /// Vocabulary whose regular entries are `tokens`, in order, starting at id 3.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut id_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut token_to_id = HashMap::new();
        for (i, tok) in tokens.into_iter().enumerate() {
            let tok = tok.into();
            let line = i + NUM_SPECIAL + 1;
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(CorpusError::MalformedVocab {
                    line,
                    reason: format!("invalid token {tok:?}"),
                });
            }
            if SPECIALS.contains(&tok.as_str()) || token_to_id.contains_key(&tok) {
                return Err(CorpusError::MalformedVocab {
                    line,
                    reason: format!("duplicate token {tok:?}"),
                });
            }
            token_to_id.insert(tok.clone(), id_to_token.len() as u32);
            id_to_token.push(tok);
        }
        Ok(Self {
            token_to_id,
            id_to_token,
        })
    }

    /// Frequency-ranked vocabulary over `texts`. At most `max_size` entries in
    /// total including the specials; ties go to the lexicographically smaller
    /// token; tokens seen fewer than `min_freq` times are dropped.
    pub fn from_texts<'t>(
        texts: impl IntoIterator<Item = &'t str>,
        max_size: usize,
        min_freq: usize,
    ) -> Result<Self, CorpusError> {
        if max_size <= NUM_SPECIAL {
            return Err(CorpusError::InvalidMaxSize(max_size));
        }
        let mut counts: HashMap<&'t str, usize> = HashMap::new();
        for text in texts {
            for t in split_words(text) {
                *counts.entry(&text[t.byte_start..t.byte_end]).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_freq.max(1))
            .collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - NUM_SPECIAL);
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    /// Always false: the specials are present.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// File form: one token per line, the three specials first.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.id_to_token {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn parse(contents: &str) -> Result<Self, CorpusError> {
        let lines: Vec<&str> = contents.lines().collect();
        for (i, special) in SPECIALS.iter().enumerate() {
            if lines.get(i) != Some(special) {
                return Err(CorpusError::MalformedVocab {
                    line: i + 1,
                    reason: format!("expected reserved token {special}"),
                });
            }
        }
        Self::from_tokens(lines[NUM_SPECIAL..].iter().copied())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_file_string()).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let contents = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::parse(&contents)
    }

    /// SHA-256 of the file form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

/// Builds a vocabulary from UTF-8 text files.
pub fn build_vocab(paths: &[PathBuf], max_size: usize, min_freq: usize) -> Result<Vocab, CorpusError> {
    let mut texts = Vec::with_capacity(paths.len());
    for p in paths {
        texts.push(fs::read_to_string(p).map_err(|e| CorpusError::io(p, e))?);
    }
    Vocab::from_texts(texts.iter().map(String::as_str), max_size, min_freq)
}
