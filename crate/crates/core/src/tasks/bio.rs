use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BioTag {
    #[serde(rename = "B-topo")]
    B,
    #[serde(rename = "I-topo")]
    I,
    #[serde(rename = "O")]
    O,
}

impl BioTag {
    pub const ALL: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];

    pub fn index(self) -> usize {
        match self {
            BioTag::B => 0,
            BioTag::I => 1,
            BioTag::O => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<BioTag> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BioTag::B => "B-topo",
            BioTag::I => "I-topo",
            BioTag::O => "O",
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tags tokens from char-offset spans; a token belongs to a span when it
/// lies entirely inside it.
pub fn spans_to_tags(tokens: &[Token], spans: &[(usize, usize)]) -> Vec<BioTag> {
    let mut tags = vec![BioTag::O; tokens.len()];
    for &(s, e) in spans {
        let mut first = true;
        for (t, tag) in tokens.iter().zip(tags.iter_mut()) {
            if t.start >= s && t.end <= e {
                *tag = if first { BioTag::B } else { BioTag::I };
                first = false;
            }
        }
    }
    tags
}

/// Token-index entity spans `[start, end)`; an `I-topo` run that does not
/// follow `B-topo`/`I-topo` is not an entity.
pub fn tags_to_spans(tags: &[BioTag]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, t) in tags.iter().enumerate() {
        match t {
            BioTag::B => {
                if let Some(s) = open.replace(i) {
                    spans.push((s, i));
                }
            }
            BioTag::I => {}
            BioTag::O => {
                if let Some(s) = open.take() {
                    spans.push((s, i));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push((s, tags.len()));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tokenize;
    use proptest::prelude::*;

    #[test]
    fn gold_conversion() {
        let text = "to San Jose in";
        let tags = spans_to_tags(&tokenize(text), &[(3, 11)]);
        assert_eq!(tags, [BioTag::O, BioTag::B, BioTag::I, BioTag::O]);
        assert_eq!(tags_to_spans(&tags), [(1, 3)]);
    }

    #[test]
    fn malformed_continuations_ignored() {
        use BioTag::*;
        assert_eq!(tags_to_spans(&[I, I, O, B, I, O, I]), [(3, 5)]);
        assert_eq!(tags_to_spans(&[B, B, I]), [(0, 1), (1, 3)]);
        assert!(tags_to_spans(&[]).is_empty());
    }

    fn valid_tags() -> impl Strategy<Value = Vec<BioTag>> {
        prop::collection::vec(0u8..3, 0..40).prop_map(|raw| {
            let mut out: Vec<BioTag> = Vec::with_capacity(raw.len());
            for r in raw {
                let t = match r {
                    0 => BioTag::B,
                    1 if matches!(out.last(), Some(BioTag::B | BioTag::I)) => BioTag::I,
                    _ => BioTag::O,
                };
                out.push(t);
            }
            out
        })
    }

    proptest! {
        #[test]
        fn round_trip(tags in valid_tags()) {
            let tokens: Vec<Token> = (0..tags.len())
                .map(|i| Token { text: "w".into(), start: 2 * i, end: 2 * i + 1 })
                .collect();
            let spans = tags_to_spans(&tags);
            let chars: Vec<(usize, usize)> = spans.iter().map(|&(s, e)| (2 * s, 2 * e - 1)).collect();
            prop_assert_eq!(spans_to_tags(&tokens, &chars), tags);
        }
    }
}
