use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{fold_char, is_word_char};

/// A matched name occurrence, in char offsets `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<String>,
    /// Every gazetteer id carrying this name, gazetteer order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, Default)]
struct Node {
    children: BTreeMap<char, u32>,
    terminal: Option<u32>,
}

/// Case-folded character trie over a set of names.
#[derive(Debug, Clone)]
pub struct PhraseTrie {
    nodes: Vec<Node>,
    phrases: Vec<String>,
}

impl Default for PhraseTrie {
    fn default() -> Self {
        PhraseTrie {
            nodes: vec![Node::default()],
            phrases: Vec::new(),
        }
    }
}

impl PhraseTrie {
    pub fn build<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut trie = PhraseTrie::default();
        for n in names {
            trie.insert(n.as_ref())?;
        }
        Ok(trie)
    }

    /// Inserts a name; returns its phrase index (existing index when the
    /// folded form is already present).
    pub fn insert(&mut self, name: &str) -> Result<usize> {
        if name.is_empty() {
            return Err(Error::invalid("empty name cannot be inserted into trie"));
        }
        let mut cur = 0usize;
        for c in name.chars().map(fold_char) {
            let next = match self.nodes[cur].children.get(&c) {
                Some(&n) => n as usize,
                None => {
                    let n = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[cur].children.insert(c, n as u32);
                    n
                }
            };
            cur = next;
        }
        if let Some(t) = self.nodes[cur].terminal {
            return Ok(t as usize);
        }
        let idx = self.phrases.len();
        self.nodes[cur].terminal = Some(idx as u32);
        self.phrases.push(name.to_string());
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Phrase in the form it was first inserted.
    pub fn phrase(&self, idx: usize) -> &str {
        &self.phrases[idx]
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        let mut cur = 0usize;
        for c in name.chars().map(fold_char) {
            cur = *self.nodes[cur].children.get(&c)? as usize;
        }
        self.nodes[cur].terminal.map(|t| t as usize)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.lookup(name).is_some()
    }

    /// Leftmost-longest, non-overlapping matches at word boundaries as
    /// `(start, end, phrase index)`.
    pub fn find_all(&self, text: &str) -> Vec<(usize, usize, usize)> {
        let chars: Vec<char> = text.chars().collect();
        let folded: Vec<char> = chars.iter().copied().map(fold_char).collect();
        let n = chars.len();
        let inside_word = |p: usize| p > 0 && p < n && is_word_char(chars[p - 1]) && is_word_char(chars[p]);
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            if inside_word(i) {
                i += 1;
                continue;
            }
            let mut cur = 0usize;
            let mut best = None;
            for (j, c) in folded[i..].iter().enumerate() {
                match self.nodes[cur].children.get(c) {
                    Some(&next) => cur = next as usize,
                    None => break,
                }
                let end = i + j + 1;
                if let Some(t) = self.nodes[cur].terminal {
                    if !inside_word(end) {
                        best = Some((end, t as usize));
                    }
                }
            }
            match best {
                Some((end, t)) => {
                    out.push((i, end, t));
                    i = end;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Builds a trie from a name list; empty names are rejected.
pub fn build_trie<S: AsRef<str>>(names: &[S]) -> Result<PhraseTrie> {
    PhraseTrie::build(names)
}

/// Matches trie names in `text`, filling each span's surface form.
pub fn match_phrases(trie: &PhraseTrie, text: &str) -> Vec<MentionSpan> {
    let chars: Vec<char> = text.chars().collect();
    trie.find_all(text)
        .into_iter()
        .map(|(start, end, _)| MentionSpan {
            start,
            end,
            surface: chars[start..end].iter().collect(),
            entity_id: None,
            candidates: Vec::new(),
        })
        .collect()
}
