use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bio::{spans_to_tags, BioTag};
use super::{restrict_to_head, FinetuneConfig};
use crate::error::{Error, Result};
use crate::geodata::AnnotatedParagraph;
use crate::model::vocab::{CLS, SEP};
use crate::model::{Ablation, Coord, EncodedInput, Graph, Head, Model, Token, Vocab, SEGMENT_ANCHOR};
use crate::model::tokenize;
use crate::pretrain::Adam;

/// One tagging window: `[CLS] tokens [SEP]` with a label per body token.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionExample {
    pub input: EncodedInput,
    pub tokens: Vec<Token>,
    pub tags: Vec<BioTag>,
}

impl RecognitionExample {
    fn targets(&self) -> Vec<Option<usize>> {
        let mut t = vec![None];
        t.extend(self.tags.iter().map(|tag| Some(tag.index())));
        t.push(None);
        t
    }
}

fn window_input(tokens: &[Token], vocab: &Vocab) -> EncodedInput {
    let n = tokens.len() + 2;
    let mut token_ids = Vec::with_capacity(n);
    token_ids.push(CLS);
    token_ids.extend(tokens.iter().map(|t| vocab.id(&t.text)));
    token_ids.push(SEP);
    EncodedInput {
        token_ids,
        position_ids: (0..n).collect(),
        segment_ids: vec![SEGMENT_ANCHOR; n],
        x_coords: vec![Coord::Dsep; n],
        y_coords: vec![Coord::Dsep; n],
        entity_span: (0, n),
        attention_mask: vec![1; n],
    }
}

/// Token windows of at most `max_seq_len - 2` body tokens.
fn windows(tokens: Vec<Token>, max_seq_len: usize) -> Result<Vec<Vec<Token>>> {
    if max_seq_len < 3 {
        return Err(Error::invalid("max_seq_len must be at least 3"));
    }
    let w = max_seq_len - 2;
    Ok(tokens.chunks(w).map(<[Token]>::to_vec).collect())
}

/// BIO-labelled windows for every paragraph.
pub fn recognition_examples(
    paragraphs: &[AnnotatedParagraph],
    vocab: &Vocab,
    max_seq_len: usize,
) -> Result<Vec<RecognitionExample>> {
    let mut out = Vec::new();
    for p in paragraphs {
        let tokens = tokenize(&p.text);
        let spans: Vec<(usize, usize)> = p.mentions.iter().map(|m| (m.start, m.end)).collect();
        let tags = spans_to_tags(&tokens, &spans);
        let mut offset = 0;
        for win in windows(tokens, max_seq_len)? {
            let n = win.len();
            out.push(RecognitionExample {
                input: window_input(&win, vocab),
                tags: tags[offset..offset + n].to_vec(),
                tokens: win,
            });
            offset += n;
        }
    }
    Ok(out)
}

/// Trains the per-token 3-way head with cross-entropy on body tokens.
/// Returns the loss per step.
pub fn finetune_recognition(model: &mut Model, examples: &[RecognitionExample], cfg: &FinetuneConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::invalid("recognition corpus is empty"));
    }
    if !examples.iter().flat_map(|e| &e.tags).any(|t| *t == BioTag::B) {
        log::warn!("recognition corpus has no toponym; the head will learn to emit O only");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.lr);
    let b = cfg.batch_size.min(examples.len());
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let idx = sample(&mut rng, examples.len(), b).into_vec();
        let total: usize = idx.iter().map(|&i| examples[i].tags.len()).sum();
        let mut g = Graph::new(model.params());
        let mut loss = None;
        for &i in &idx {
            let ex = &examples[i];
            if ex.tags.is_empty() {
                continue;
            }
            let h = model.encode_into(&mut g, &ex.input, &cfg.ablation)?;
            let logits = model.head_logits(&mut g, h, Head::Recognition);
            let ce = g.cross_entropy(logits, ex.targets());
            let part = g.scale(ce, ex.tags.len() as f64 / total as f64);
            loss = Some(match loss {
                Some(acc) => g.add(acc, part),
                None => part,
            });
        }
        let Some(loss) = loss else {
            losses.push(0.0);
            continue;
        };
        let value = g.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("recognition loss at step {step}")));
        }
        let mut grads = g.backward(loss).params;
        drop(g);
        if cfg.head_only {
            restrict_to_head(model, &mut grads, "head.recognition.");
        }
        opt.step(model.params_mut(), &grads);
        losses.push(value);
    }
    model.mark_trained(Head::Recognition);
    Ok(losses)
}

/// Argmax tags for the body tokens of one already-framed window.
pub(crate) fn tag_window(model: &Model, input: &EncodedInput, flags: &Ablation) -> Result<Vec<BioTag>> {
    let mut g = Graph::new(model.params());
    let h = model.encode_into(&mut g, input, flags)?;
    let logits = model.head_logits(&mut g, h, Head::Recognition);
    let v = g.value(logits);
    Ok((1..input.len() - 1)
        .map(|r| {
            let row = v.row(r);
            let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            BioTag::from_index(best).expect("3 tag classes")
        })
        .collect())
}

/// Per-token tags for `text`; long texts are tagged window by window.
pub fn predict_tags(model: &Model, vocab: &Vocab, text: &str, flags: &Ablation) -> Result<Vec<(Token, BioTag)>> {
    if !model.is_trained(Head::Recognition) {
        return Err(Error::invalid("recognition head has not been trained"));
    }
    let mut out = Vec::new();
    for win in windows(tokenize(text), model.config().max_seq_len)? {
        let tags = tag_window(model, &window_input(&win, vocab), flags)?;
        out.extend(win.into_iter().zip(tags));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::MentionSpan;
    use crate::model::ModelConfig;

    fn paragraph(text: &str, spans: &[(usize, usize)]) -> AnnotatedParagraph {
        AnnotatedParagraph {
            doc_id: "d".into(),
            paragraph: 0,
            text: text.into(),
            mentions: spans
                .iter()
                .map(|&(s, e)| MentionSpan {
                    start: s,
                    end: e,
                    surface: text.chars().skip(s).take(e - s).collect(),
                    entity_id: None,
                    candidates: Vec::new(),
                })
                .collect(),
        }
    }

    fn small_model(v: &Vocab, max_len: usize) -> Model {
        Model::new(
            ModelConfig {
                vocab_size: v.len(),
                d_model: 16,
                n_heads: 2,
                n_layers: 1,
                d_ff: 32,
                max_seq_len: max_len,
                embed_init_std: 1.0,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn windows_cover_all_tokens() {
        let text = "we went to San Jose and then to Paris again today";
        let v = Vocab::build(&[text], 100).unwrap();
        let ex = recognition_examples(&[paragraph(text, &[(11, 19), (32, 37)])], &v, 6).unwrap();
        assert_eq!(ex.len(), 3);
        let tags: Vec<BioTag> = ex.iter().flat_map(|e| e.tags.clone()).collect();
        assert_eq!(tags.len(), 11);
        assert_eq!(tags[3], BioTag::B);
        assert_eq!(tags[4], BioTag::I);
        assert_eq!(tags[8], BioTag::B);
        for e in &ex {
            e.input.check_lanes().unwrap();
            assert!(e.input.len() <= 6);
        }
    }

    #[test]
    fn untrained_and_empty() {
        let v = Vocab::build(&["a b"], 10).unwrap();
        let mut m = small_model(&v, 16);
        assert!(predict_tags(&m, &v, "a b", &Ablation::default()).is_err());
        assert!(finetune_recognition(&mut m, &[], &FinetuneConfig::default()).is_err());
        m.mark_trained(Head::Recognition);
        assert!(predict_tags(&m, &v, "", &Ablation::default()).unwrap().is_empty());
    }

    #[test]
    fn all_o_corpus_learns_o() {
        let texts = ["nothing to see here", "just words again"];
        let v = Vocab::build(&texts, 50).unwrap();
        let paras: Vec<_> = texts.iter().map(|t| paragraph(t, &[])).collect();
        let ex = recognition_examples(&paras, &v, 16).unwrap();
        let mut m = small_model(&v, 16);
        let cfg = FinetuneConfig {
            steps: 60,
            lr: 1e-2,
            ..FinetuneConfig::default()
        };
        let losses = finetune_recognition(&mut m, &ex, &cfg).unwrap();
        assert!(*losses.last().unwrap() < 0.01, "{losses:?}");
        let tags = predict_tags(&m, &v, texts[0], &Ablation::default()).unwrap();
        assert!(tags.iter().all(|(_, t)| *t == BioTag::O));
        let again = predict_tags(&m, &v, texts[0], &Ablation::default()).unwrap();
        assert_eq!(tags, again);
    }

    #[test]
    fn head_only_freezes_encoder() {
        let text = "to San Jose in";
        let v = Vocab::build(&[text], 50).unwrap();
        let ex = recognition_examples(&[paragraph(text, &[(3, 11)])], &v, 16).unwrap();
        let mut m = small_model(&v, 16);
        let before = m.clone();
        let cfg = FinetuneConfig {
            steps: 3,
            head_only: true,
            ..FinetuneConfig::default()
        };
        finetune_recognition(&mut m, &ex, &cfg).unwrap();
        for (id, name, t) in m.params().iter() {
            let changed = t != before.params().get(id);
            assert_eq!(changed, name.starts_with("head.recognition."), "{name}");
        }
    }
}
