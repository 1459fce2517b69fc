use crate::error::{Error, Result};
use crate::linearizer::PseudoSentence;
use crate::summarizer::LocationDescription;

use super::vocab::{tokenize, Token, Vocab, CLS, PAD, SEP};

/// Coordinate lane entry: a normalized value or the distance filler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coord {
    Dsep,
    Value(f64),
}

pub const SEGMENT_ANCHOR: u8 = 0;
pub const SEGMENT_NEIGHBOR: u8 = 1;

/// Token ids with parallel position, segment and coordinate lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub token_ids: Vec<u32>,
    pub position_ids: Vec<usize>,
    pub segment_ids: Vec<u8>,
    pub x_coords: Vec<Coord>,
    pub y_coords: Vec<Coord>,
    /// Token range `[start, end)` of the anchor or mention name.
    pub entity_span: (usize, usize),
    pub attention_mask: Vec<u8>,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Checks that all lanes agree in length and the span is in range.
    pub fn check_lanes(&self) -> Result<()> {
        let n = self.token_ids.len();
        let lens = [
            self.position_ids.len(),
            self.segment_ids.len(),
            self.x_coords.len(),
            self.y_coords.len(),
            self.attention_mask.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Shape(format!("lane lengths {lens:?} vs {n} tokens")));
        }
        let (s, e) = self.entity_span;
        if !(s < e && e <= n) {
            return Err(Error::Shape(format!("entity span ({s}, {e}) outside {n} tokens")));
        }
        Ok(())
    }

    /// Appends `[PAD]` tokens (masked out) up to `len`.
    pub fn pad_to(&mut self, len: usize) {
        let seg = self.segment_ids.last().copied().unwrap_or(SEGMENT_ANCHOR);
        while self.token_ids.len() < len {
            self.token_ids.push(PAD);
            self.position_ids.push(0);
            self.segment_ids.push(seg);
            self.x_coords.push(Coord::Dsep);
            self.y_coords.push(Coord::Dsep);
            self.attention_mask.push(0);
        }
    }

    fn framed(body: Vec<(u32, Coord, Coord)>, segment: u8, span: (usize, usize)) -> Self {
        let n = body.len() + 2;
        let mut token_ids = Vec::with_capacity(n);
        let mut x_coords = Vec::with_capacity(n);
        let mut y_coords = Vec::with_capacity(n);
        token_ids.push(CLS);
        x_coords.push(Coord::Dsep);
        y_coords.push(Coord::Dsep);
        for (id, x, y) in body {
            token_ids.push(id);
            x_coords.push(x);
            y_coords.push(y);
        }
        token_ids.push(SEP);
        x_coords.push(Coord::Dsep);
        y_coords.push(Coord::Dsep);
        EncodedInput {
            position_ids: (0..n).collect(),
            segment_ids: vec![segment; n],
            attention_mask: vec![1; n],
            token_ids,
            x_coords,
            y_coords,
            entity_span: (span.0 + 1, span.1 + 1),
        }
    }
}

/// Token range covering the char span `[start, end)`.
fn token_span(tokens: &[Token], span: (usize, usize)) -> Option<(usize, usize)> {
    let inside: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.start >= span.0 && t.end <= span.1)
        .map(|(i, _)| i)
        .collect();
    Some((*inside.first()?, *inside.last()? + 1))
}

/// Anchor-level encoding of arbitrary text with a char-offset mention span.
pub fn encode_text_span(text: &str, span: (usize, usize), vocab: &Vocab, max_seq_len: usize) -> Result<EncodedInput> {
    if max_seq_len < 3 {
        return Err(Error::invalid("max_seq_len must be at least 3"));
    }
    let mut tokens = tokenize(text);
    let (s, e) =
        token_span(&tokens, span).ok_or_else(|| Error::invalid(format!("span {span:?} covers no token")))?;
    let budget = max_seq_len - 2;
    if e > budget {
        return Err(Error::invalid(format!(
            "entity span ends at token {e}, beyond the {budget}-token budget"
        )));
    }
    tokens.truncate(budget);
    let body = tokens
        .iter()
        .map(|t| (vocab.id(&t.text), Coord::Dsep, Coord::Dsep))
        .collect();
    Ok(EncodedInput::framed(body, SEGMENT_ANCHOR, (s, e)))
}

/// `[CLS] description [SEP]`, segment 0, all coordinates DSEP.
pub fn encode_anchor(desc: &LocationDescription, vocab: &Vocab, max_seq_len: usize) -> Result<EncodedInput> {
    encode_text_span(&desc.text, desc.anchor_span, vocab, max_seq_len)
}

/// `[CLS] anchor neighbors… [SEP]`, segment 1; every token of a name
/// carries that entity's offset, the anchor sits at the origin. Neighbors
/// that do not fit whole are dropped from the tail.
pub fn encode_neighbor(pseudo: &PseudoSentence, vocab: &Vocab, max_seq_len: usize) -> Result<EncodedInput> {
    if max_seq_len < 3 {
        return Err(Error::invalid("max_seq_len must be at least 3"));
    }
    let budget = max_seq_len - 2;
    let anchor: Vec<u32> = tokenize(&pseudo.anchor_name).iter().map(|t| vocab.id(&t.text)).collect();
    if anchor.is_empty() || anchor.len() > budget {
        return Err(Error::invalid(format!(
            "anchor name of {} has {} tokens, budget {budget}",
            pseudo.anchor_id,
            anchor.len()
        )));
    }
    let span = (0, anchor.len());
    let origin = pseudo.anchor_coord();
    let mut body: Vec<(u32, Coord, Coord)> = anchor
        .into_iter()
        .map(|id| (id, Coord::Value(origin.x), Coord::Value(origin.y)))
        .collect();
    for (name, c) in pseudo.neighbor_names.iter().zip(&pseudo.neighbor_coords) {
        let ids: Vec<u32> = tokenize(name).iter().map(|t| vocab.id(&t.text)).collect();
        if body.len() + ids.len() > budget {
            break;
        }
        body.extend(ids.into_iter().map(|id| (id, Coord::Value(c.x), Coord::Value(c.y))));
    }
    Ok(EncodedInput::framed(body, SEGMENT_NEIGHBOR, span))
}

/// Plain text as `[CLS] tokens [SEP]` for tagging; the span covers the body.
/// Returns the tokens that were kept.
pub fn encode_plain(text: &str, vocab: &Vocab, max_seq_len: usize) -> Result<(EncodedInput, Vec<Token>)> {
    if max_seq_len < 3 {
        return Err(Error::invalid("max_seq_len must be at least 3"));
    }
    let mut tokens = tokenize(text);
    tokens.truncate(max_seq_len - 2);
    let body: Vec<_> = tokens
        .iter()
        .map(|t| (vocab.id(&t.text), Coord::Dsep, Coord::Dsep))
        .collect();
    let n = body.len();
    let mut enc = EncodedInput::framed(body, SEGMENT_ANCHOR, (0, n));
    if n == 0 {
        enc.entity_span = (0, 1);
    }
    Ok((enc, tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearizer::NormalizedCoord;

    fn vocab() -> Vocab {
        Vocab::build(
            &["tech museum is here plaza de cesar chavez san jose museum of art"],
            100,
        )
        .unwrap()
    }

    fn desc(text: &str, span: (usize, usize)) -> LocationDescription {
        LocationDescription {
            anchor_id: "e1".into(),
            text: text.into(),
            anchor_span: span,
        }
    }

    #[test]
    fn anchor_span_after_cls() {
        let v = vocab();
        let e = encode_anchor(&desc("Tech Museum is here", (0, 11)), &v, 32).unwrap();
        assert_eq!(e.entity_span, (1, 3));
        assert_eq!(e.len(), 6);
        assert!(e.segment_ids.iter().all(|&s| s == SEGMENT_ANCHOR));
        assert!(e.x_coords.iter().chain(&e.y_coords).all(|c| *c == Coord::Dsep));
        assert_eq!(e.position_ids, (0..6).collect::<Vec<_>>());
        e.check_lanes().unwrap();
    }

    #[test]
    fn anchor_truncation() {
        let v = vocab();
        let long = format!("Tech Museum {}", "is here ".repeat(40));
        let e = encode_anchor(&desc(&long, (0, 11)), &v, 16).unwrap();
        assert_eq!(e.len(), 16);
        assert_eq!(*e.token_ids.last().unwrap(), SEP);
        let tail = format!("{}Tech Museum", "is here ".repeat(40));
        let start = tail.len() - 11;
        assert!(encode_anchor(&desc(&tail, (start, tail.len())), &v, 16).is_err());
    }

    fn pseudo(neighbors: &[(&str, f64, f64)]) -> PseudoSentence {
        PseudoSentence {
            anchor_id: "tm".into(),
            anchor_name: "Tech Museum".into(),
            neighbor_ids: neighbors.iter().map(|n| n.0.to_string()).collect(),
            neighbor_names: neighbors.iter().map(|n| n.0.to_string()).collect(),
            neighbor_coords: neighbors.iter().map(|n| NormalizedCoord { x: n.1, y: n.2 }).collect(),
            distances_km: (0..neighbors.len()).map(|i| i as f64 * 0.1).collect(),
        }
    }

    #[test]
    fn neighbor_anchor_only() {
        let e = encode_neighbor(&pseudo(&[]), &vocab(), 32).unwrap();
        assert_eq!(e.len(), 4);
        assert!(e.segment_ids.iter().all(|&s| s == SEGMENT_NEIGHBOR));
        assert_eq!(e.entity_span, (1, 3));
        assert_eq!(e.x_coords[1], Coord::Value(0.0));
        assert_eq!(e.x_coords[0], Coord::Dsep);
        assert_eq!(e.position_ids[0], 0);
    }

    #[test]
    fn neighbor_lanes_constant_per_name() {
        let p = pseudo(&[("Plaza de Cesar Chavez", 0.0, 0.3), ("San Jose Museum of Art", 0.1, -0.5)]);
        let e = encode_neighbor(&p, &vocab(), 64).unwrap();
        // [CLS] tech museum | plaza de cesar chavez | san jose museum of art [SEP]
        assert_eq!(e.len(), 1 + 2 + 4 + 5 + 1);
        for i in 3..7 {
            assert_eq!((e.x_coords[i], e.y_coords[i]), (Coord::Value(0.0), Coord::Value(0.3)));
        }
        for i in 7..12 {
            assert_eq!((e.x_coords[i], e.y_coords[i]), (Coord::Value(0.1), Coord::Value(-0.5)));
        }
        assert_eq!(e.y_coords[12], Coord::Dsep);
        assert_eq!(e.position_ids, (0..13).collect::<Vec<_>>());
        e.check_lanes().unwrap();
    }

    #[test]
    fn neighbor_truncation_drops_whole_names() {
        let p = pseudo(&[("Plaza de Cesar Chavez", 0.0, 0.3), ("San Jose Museum of Art", 0.1, -0.5)]);
        let e = encode_neighbor(&p, &vocab(), 10).unwrap();
        assert_eq!(e.len(), 8);
    }

    #[test]
    fn padding_masks_tail() {
        let mut e = encode_anchor(&desc("Tech Museum", (0, 11)), &vocab(), 8).unwrap();
        e.pad_to(8);
        assert_eq!(e.attention_mask, [1, 1, 1, 1, 0, 0, 0, 0]);
        assert_eq!(e.token_ids[7], PAD);
        e.check_lanes().unwrap();
    }
}
