use std::collections::HashMap;
use std::io::{Read, Write};

use crate::binio::{BinReader, BinWriter};
use crate::corpus::{CHEMICAL_TOKEN, GENE_TOKEN};
use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;

const SPECIALS: [&str; 5] = [PAD, UNK, CLS, CHEMICAL_TOKEN, GENE_TOKEN];

const VOCAB_MAGIC: &[u8; 8] = b"CCVOCAB\0";
const VOCAB_VERSION: u32 = 1;

/// Splits text into word tokens.
///
/// Placeholders stay atomic, runs of alphanumeric characters form one token
/// and every other non-whitespace character is a token of its own.
pub fn word_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if let Some(p) = [CHEMICAL_TOKEN, GENE_TOKEN].into_iter().find(|p| rest.starts_with(p)) {
            out.push(&rest[..p.len()]);
            rest = &rest[p.len()..];
        } else if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
        } else if c.is_alphanumeric() {
            let end = rest
                .char_indices()
                .find(|(_, ch)| !ch.is_alphanumeric())
                .map_or(rest.len(), |(i, _)| i);
            out.push(&rest[..end]);
            rest = &rest[end..];
        } else {
            out.push(&rest[..c.len_utf8()]);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

/// Token to index map. Indices are dense; the five special tokens always
/// occupy indices 0..5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if index.len() != tokens.len() {
            return Err(Error::ModelFormat("duplicate vocabulary entry".into()));
        }
        if tokens.len() < SPECIALS.len() || SPECIALS.iter().zip(&tokens).any(|(s, t)| s != t) {
            return Err(Error::ModelFormat("special tokens missing from vocabulary".into()));
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Keeps tokens seen at least `min_freq` times, ordered by descending
    /// frequency and then lexicographically.
    pub fn build<'a, I>(texts: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for tok in word_tokens(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq.max(1) && !SPECIALS.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Self::from_tokens(tokens).expect("specials are unique")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn write_to<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.bytes(VOCAB_MAGIC)?;
        w.u32(VOCAB_VERSION)?;
        w.len(self.tokens.len())?;
        for t in &self.tokens {
            w.str(t)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut BinReader<R>) -> Result<Self> {
        r.expect_magic(VOCAB_MAGIC)?;
        let version = r.u32()?;
        if version != VOCAB_VERSION {
            return Err(Error::ModelFormat(format!("unsupported vocabulary version {version}")));
        }
        let n = r.len()?;
        let tokens = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        Self::from_tokens(tokens)
    }
}

/// Token indices of one sentence, `[CLS]` first. Entries past `true_length`
/// are padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub indices: Vec<u32>,
    pub true_length: usize,
}

impl TokenSequence {
    pub fn new(indices: Vec<u32>) -> Self {
        let true_length = indices.len();
        TokenSequence {
            indices,
            true_length,
        }
    }

    pub fn tokens(&self) -> &[u32] {
        &self.indices[..self.true_length]
    }

    /// Pads with `[PAD]` up to `len` entries.
    pub fn padded(mut self, len: usize) -> Self {
        if self.indices.len() < len {
            self.indices.resize(len, PAD_ID);
        }
        self
    }
}

/// `[CLS]` followed by the word tokens of `text`, truncated to `max_len`
/// entries in total.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let indices: Vec<u32> = std::iter::once(CLS_ID)
        .chain(word_tokens(text).into_iter().map(|t| vocab.id(t)))
        .take(max_len.max(1))
        .collect();
    TokenSequence::new(indices)
}
