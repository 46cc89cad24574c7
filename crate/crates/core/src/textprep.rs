//! Text normalization, tokenization and sentence splitting.
//!
//! Both the document text classifier and attack detection consume the output
//! of these functions. All of them are pure.

use std::collections::BTreeSet;
use std::fmt;

use sha2::{Digest, Sha256};

/// The shipped stopword list, one lowercase word per line, sorted.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// A set of words removed by [`clean_tokens`].
#[derive(Clone, PartialEq, Eq)]
pub struct Stopwords {
    words: BTreeSet<String>,
}

impl Stopwords {
    /// Parses the stopword file format: one word per line; blank lines ignored.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        Stopwords { words }
    }

    pub fn empty() -> Self {
        Stopwords {
            words: BTreeSet::new(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Canonical file rendering: sorted, one per line, trailing newline.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        out
    }

    /// SHA-256 (hex) of the canonical file rendering.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::parse(DEFAULT_STOPWORDS)
    }
}

impl fmt::Debug for Stopwords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stopwords")
            .field("len", &self.words.len())
            .finish()
    }
}

/// Lowercases and maps every character outside `a-z` and ASCII whitespace to
/// a single space. Newlines survive so sentence splitting still works.
pub fn normalize(text: &str) -> String {
    text.chars().map(normalize_char).collect()
}

fn normalize_char(c: char) -> char {
    if c.is_ascii_whitespace() {
        return c;
    }
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) if l.is_ascii_lowercase() => l,
        _ => ' ',
    }
}

/// Splits on whitespace. Expects normalized text.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

pub fn clean_tokens(tokens: &[String], stopwords: &Stopwords) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !stopwords.contains(t))
        .cloned()
        .collect()
}

/// Normalizes, then splits on runs of newlines and cleans each block.
/// Blocks that clean to nothing are dropped.
pub fn split_sentences(text: &str, stopwords: &Stopwords) -> Vec<Vec<String>> {
    normalize(text)
        .split('\n')
        .map(|block| clean_tokens(&tokenize(block), stopwords))
        .filter(|s| !s.is_empty())
        .collect()
}
