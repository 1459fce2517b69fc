use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::text::{fold_char, is_word_char};

pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;
pub const RESERVED: [&str; 5] = ["[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"];

/// A word or punctuation token with its char range in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Lowercased words (alphanumeric runs) and single punctuation chars.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word: Option<(usize, String)> = None;
    for (i, c) in text.chars().enumerate() {
        if is_word_char(c) {
            word.get_or_insert_with(|| (i, String::new())).1.push(fold_char(c));
            continue;
        }
        if let Some((s, w)) = word.take() {
            out.push(Token { end: s + w.chars().count(), text: w, start: s });
        }
        if !c.is_whitespace() {
            out.push(Token {
                text: c.to_string(),
                start: i,
                end: i + 1,
            });
        }
    }
    if let Some((s, w)) = word {
        out.push(Token { end: s + w.chars().count(), text: w, start: s });
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabLine {
    token: String,
    id: u32,
}

/// Bijective token ↔ id map with fixed reserved ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    /// Word-level vocabulary by descending frequency (ties lexicographic),
    /// capped at `max_size` entries including the reserved ones.
    pub fn build<S: AsRef<str>>(texts: &[S], max_size: usize) -> Result<Self> {
        if max_size <= RESERVED.len() {
            return Err(Error::invalid(format!("vocab max_size must exceed {}", RESERVED.len())));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for tok in tokenize(t.as_ref()) {
                *counts.entry(tok.text).or_default() += 1;
            }
        }
        for r in RESERVED {
            counts.remove(r);
        }
        if counts.is_empty() {
            return Err(Error::invalid("cannot build vocabulary from an empty corpus"));
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - RESERVED.len());
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of a token, `[UNK]` when absent.
    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let lines: Vec<VocabLine> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| VocabLine {
                token: t.clone(),
                id: i as u32,
            })
            .collect();
        io::to_jsonl(&lines)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_jsonl()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut lines: Vec<VocabLine> = io::read_jsonl(path)?.into_iter().map(|(_, l)| l).collect();
        lines.sort_by_key(|l| l.id);
        for (i, l) in lines.iter().enumerate() {
            if l.id as usize != i {
                return Err(Error::Format(format!("vocab ids not contiguous at {i}")));
            }
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if lines.get(i).map(|l| l.token.as_str()) != Some(r) {
                return Err(Error::Format(format!("reserved token {r} missing at id {i}")));
            }
        }
        let v = Self::from_tokens(lines.into_iter().map(|l| l.token).collect());
        if v.ids.len() != v.tokens.len() {
            return Err(Error::Format("duplicate vocab token".into()));
        }
        Ok(v)
    }
}
