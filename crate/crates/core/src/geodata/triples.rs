use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTriple {
    pub subject_qid: String,
    pub predicate_label: String,
    pub object_label: String,
}

impl RelationTriple {
    pub fn new(s: &str, p: &str, o: &str) -> Self {
        RelationTriple {
            subject_qid: s.into(),
            predicate_label: p.into(),
            object_label: o.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleSentence {
    pub subject_qid: String,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct Verbalized {
    pub sentences: Vec<TripleSentence>,
    /// Triples skipped for an unknown subject or an empty field.
    pub skipped: usize,
}

pub fn load_triples(path: &Path) -> Result<Vec<RelationTriple>> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, t)| t).collect())
}

/// Renders each triple as "`subject` `predicate` `object`." using `labels`
/// to name the subject.
pub fn triples_to_sentences(triples: &[RelationTriple], labels: &BTreeMap<String, String>) -> Verbalized {
    let mut out = Verbalized::default();
    for t in triples {
        let subject = match labels.get(&t.subject_qid) {
            Some(s) if !t.predicate_label.is_empty() && !t.object_label.is_empty() => s,
            _ => {
                out.skipped += 1;
                continue;
            }
        };
        out.sentences.push(TripleSentence {
            subject_qid: t.subject_qid.clone(),
            text: format!("{subject} {} {}.", t.predicate_label, t.object_label),
        });
    }
    if out.skipped > 0 {
        warn!("skipped {} relation triples with unknown subject or empty fields", out.skipped);
    }
    out
}
