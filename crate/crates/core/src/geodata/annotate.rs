use std::path::Path;

use log::debug;
use serde::{Deserialize, Serialize};

use super::trie::{MentionSpan, PhraseTrie};
use super::Gazetteer;
use crate::error::{Error, Result};
use crate::io;
use crate::text::char_slice;

/// A pre-annotated mention in document char offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMention {
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<String>,
}

/// One corpus line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mentions: Option<Vec<RawMention>>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            mentions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedParagraph {
    pub doc_id: String,
    /// Index of the paragraph within its document.
    pub paragraph: usize,
    pub text: String,
    pub mentions: Vec<MentionSpan>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotation {
    pub paragraphs: Vec<AnnotatedParagraph>,
    /// Paragraphs dropped for having no mention.
    pub dropped: usize,
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, d)| d).collect())
}

/// Blank-line-delimited blocks as char ranges `[start, end)` of `text`.
pub(crate) fn paragraph_ranges(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut ranges = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut line_start = 0;
    for i in 0..=chars.len() {
        if i < chars.len() && chars[i] != '\n' {
            continue;
        }
        let blank = chars[line_start..i].iter().all(|c| c.is_whitespace());
        if blank {
            if let Some(r) = current.take() {
                ranges.push(r);
            }
        } else {
            current = Some(match current {
                Some((s, _)) => (s, i),
                None => (line_start, i),
            });
        }
        line_start = i + 1;
    }
    if let Some(r) = current {
        ranges.push(r);
    }
    ranges
}

/// Splits documents into paragraphs and tags gazetteer names in each.
///
/// Paragraphs without any mention are dropped. Homonymous names record all
/// candidate ids and resolve to the first in gazetteer order.
pub fn annotate_corpus(docs: &[Document], gazetteer: &Gazetteer) -> Result<Annotation> {
    let mut trie = PhraseTrie::default();
    let mut candidates: Vec<Vec<String>> = Vec::new();
    for e in gazetteer.entities() {
        let idx = trie.insert(&e.name)?;
        if idx == candidates.len() {
            candidates.push(Vec::new());
        }
        candidates[idx].push(e.id.clone());
    }

    let mut out = Annotation::default();
    for doc in docs {
        for (p_idx, (ps, pe)) in paragraph_ranges(&doc.text).into_iter().enumerate() {
            let text = char_slice(&doc.text, ps, pe).unwrap_or_default().to_string();
            let chars: Vec<char> = text.chars().collect();
            let mut mentions = match &doc.mentions {
                None => trie
                    .find_all(&text)
                    .into_iter()
                    .map(|(start, end, t)| MentionSpan {
                        start,
                        end,
                        surface: chars[start..end].iter().collect(),
                        entity_id: candidates[t].first().cloned(),
                        candidates: candidates[t].clone(),
                    })
                    .collect::<Vec<_>>(),
                Some(raw) => pre_annotated(doc, raw, ps, pe, &chars, &trie, &candidates)?,
            };
            mentions.sort_by_key(|m| (m.start, m.end));
            if mentions.is_empty() {
                out.dropped += 1;
                continue;
            }
            out.paragraphs.push(AnnotatedParagraph {
                doc_id: doc.doc_id.clone(),
                paragraph: p_idx,
                text,
                mentions,
            });
        }
    }
    debug!(
        "annotated {} paragraphs, dropped {} without mentions",
        out.paragraphs.len(),
        out.dropped
    );
    Ok(out)
}

fn pre_annotated(
    doc: &Document,
    raw: &[RawMention],
    ps: usize,
    pe: usize,
    chars: &[char],
    trie: &PhraseTrie,
    candidates: &[Vec<String>],
) -> Result<Vec<MentionSpan>> {
    let mut spans = Vec::new();
    for m in raw.iter().filter(|m| m.start >= ps && m.end <= pe) {
        if m.start >= m.end {
            return Err(Error::invalid(format!("{}: empty mention [{}, {})", doc.doc_id, m.start, m.end)));
        }
        let (start, end) = (m.start - ps, m.end - ps);
        let surface: String = chars[start..end].iter().collect();
        let cands = trie.lookup(&surface).map(|t| candidates[t].clone()).unwrap_or_default();
        spans.push(MentionSpan {
            start,
            end,
            surface,
            entity_id: m.entity_id.clone(),
            candidates: cands,
        });
    }
    spans.sort_by_key(|m| (m.start, m.end));
    if spans.windows(2).any(|w| w[0].end > w[1].start) {
        return Err(Error::invalid(format!("{}: overlapping mentions", doc.doc_id)));
    }
    Ok(spans)
}
