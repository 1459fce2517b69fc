//! Anchor-level location descriptions built from linguistic sentences and
//! the geospatial neighborhood.

mod remote;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linearizer::PseudoSentence;
use crate::text::{char_slice, find_folded, fold};

pub use remote::{render_prompt, RemoteConfig, RemoteSummarizer, SummaryCache, SummarySource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationDescription {
    pub anchor_id: String,
    pub text: String,
    /// Char offsets of the anchor name in `text`.
    pub anchor_span: (usize, usize),
}

impl LocationDescription {
    /// Builds a description, pointing the span at the first case-folded
    /// occurrence of `anchor_name`.
    pub fn locate(anchor_id: &str, anchor_name: &str, text: String) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::invalid("empty location description"));
        }
        let span = find_folded(&text, anchor_name)
            .ok_or_else(|| Error::invalid(format!("anchor `{anchor_name}` absent from description")))?;
        Ok(LocationDescription {
            anchor_id: anchor_id.to_string(),
            text,
            anchor_span: span,
        })
    }

    pub fn anchor_surface(&self) -> Option<&str> {
        char_slice(&self.text, self.anchor_span.0, self.anchor_span.1)
    }

    pub fn span_matches(&self, anchor_name: &str) -> bool {
        self.anchor_surface().map(fold) == Some(fold(anchor_name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryContext {
    pub linguistic_sentences: Vec<String>,
    pub pseudo: PseudoSentence,
}

impl SummaryContext {
    pub fn validate(&self) -> Result<()> {
        if self.linguistic_sentences.is_empty() && self.pseudo.is_empty() {
            return Err(Error::invalid(format!(
                "no linguistic or geospatial context for {}",
                self.pseudo.anchor_id
            )));
        }
        Ok(())
    }

    fn anchor_sentences(&self, max: usize) -> impl Iterator<Item = &str> {
        let name = &self.pseudo.anchor_name;
        self.linguistic_sentences
            .iter()
            .map(|s| s.trim())
            .filter(move |s| find_folded(s, name).is_some())
            .take(max)
    }
}

/// "A is near B, C, and D." over the three nearest neighbors.
fn near_sentence(pseudo: &PseudoSentence) -> Option<String> {
    let names: Vec<&str> = pseudo.neighbor_names.iter().take(3).map(String::as_str).collect();
    let list = match names.as_slice() {
        [] => return None,
        [a] => a.to_string(),
        [a, b] => format!("{a} and {b}"),
        [a, b, c] => format!("{a}, {b}, and {c}"),
        _ => unreachable!(),
    };
    Some(format!("{} is near {list}.", pseudo.anchor_name))
}

/// Deterministic description: up to `max_sentences` linguistic sentences
/// naming the anchor, then one sentence listing its nearest neighbors.
pub fn summarize_template(ctx: &SummaryContext, max_sentences: usize) -> Result<LocationDescription> {
    ctx.validate()?;
    let mut parts: Vec<String> = ctx.anchor_sentences(max_sentences).map(str::to_string).collect();
    parts.extend(near_sentence(&ctx.pseudo));
    LocationDescription::locate(&ctx.pseudo.anchor_id, &ctx.pseudo.anchor_name, parts.join(" "))
}

/// Raw linguistic context with no summarization step; falls back to the
/// bare anchor name when no sentence mentions it.
pub fn raw_description(ctx: &SummaryContext, max_sentences: usize) -> Result<LocationDescription> {
    let parts: Vec<&str> = ctx.anchor_sentences(max_sentences).collect();
    let text = if parts.is_empty() {
        ctx.pseudo.anchor_name.clone()
    } else {
        parts.join(" ")
    };
    LocationDescription::locate(&ctx.pseudo.anchor_id, &ctx.pseudo.anchor_name, text)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linearizer::NormalizedCoord;

    pub(crate) fn pseudo(neighbors: &[&str]) -> PseudoSentence {
        PseudoSentence {
            anchor_id: "e1".into(),
            anchor_name: "Tech Museum".into(),
            neighbor_ids: neighbors.iter().map(|n| format!("id-{n}")).collect(),
            neighbor_names: neighbors.iter().map(|n| n.to_string()).collect(),
            neighbor_coords: neighbors.iter().map(|_| NormalizedCoord { x: 0.1, y: 0.2 }).collect(),
            distances_km: (0..neighbors.len()).map(|i| i as f64).collect(),
        }
    }

    #[test]
    fn neighbors_only() {
        let ctx = SummaryContext {
            linguistic_sentences: vec![],
            pseudo: pseudo(&["Plaza", "Arena", "Library", "Depot"]),
        };
        let d = summarize_template(&ctx, 3).unwrap();
        assert_eq!(d.text, "Tech Museum is near Plaza, Arena, and Library.");
        assert_eq!(d.anchor_span, (0, 11));
    }

    #[test]
    fn sentence_passes_through() {
        let ctx = SummaryContext {
            linguistic_sentences: vec!["The Tech Museum is in San Jose.".into()],
            pseudo: pseudo(&[]),
        };
        let d = summarize_template(&ctx, 3).unwrap();
        assert_eq!(d.text, "The Tech Museum is in San Jose.");
        assert_eq!(d.anchor_surface(), Some("Tech Museum"));
    }

    #[test]
    fn golden_output() {
        let ctx = SummaryContext {
            linguistic_sentences: vec![
                "Founded in 1998, the Tech Museum anchors downtown.".into(),
                "Unrelated sentence about weather.".into(),
                "Families visit the tech museum on weekends.".into(),
                "The Tech Museum hosts an IMAX dome.".into(),
            ],
            pseudo: pseudo(&["Plaza de Cesar Chavez", "San Jose Museum of Art", "Fairmont"]),
        };
        let golden = "Founded in 1998, the Tech Museum anchors downtown. Families visit the tech museum on \
                      weekends. Tech Museum is near Plaza de Cesar Chavez, San Jose Museum of Art, and Fairmont.";
        for _ in 0..2 {
            let d = summarize_template(&ctx, 2).unwrap();
            assert_eq!(d.text, golden);
            assert_eq!(d.anchor_span, (21, 32));
            assert!(d.span_matches("Tech Museum"));
        }
    }

    #[test]
    fn short_neighbor_lists() {
        let one = near_sentence(&pseudo(&["A"])).unwrap();
        assert_eq!(one, "Tech Museum is near A.");
        let two = near_sentence(&pseudo(&["A", "B"])).unwrap();
        assert_eq!(two, "Tech Museum is near A and B.");
    }

    #[test]
    fn empty_context_rejected() {
        let ctx = SummaryContext {
            linguistic_sentences: vec!["Nothing relevant.".into()],
            pseudo: pseudo(&[]),
        };
        assert!(summarize_template(&ctx, 2).is_err());
        let ctx = SummaryContext {
            linguistic_sentences: vec![],
            pseudo: pseudo(&[]),
        };
        assert!(summarize_template(&ctx, 2).is_err());
    }

    #[test]
    fn raw_falls_back_to_name() {
        let ctx = SummaryContext {
            linguistic_sentences: vec![],
            pseudo: pseudo(&["A"]),
        };
        let d = raw_description(&ctx, 2).unwrap();
        assert_eq!(d.text, "Tech Museum");
    }
}
