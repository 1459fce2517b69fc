//! End-to-end assembly: corpus → descriptions and pseudo-sentences →
//! training pairs, plus the synthetic demo run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::eval::{entity_prf, micro_f1, recall_at_k, token_prf, PrfReport};
use crate::geodata::{annotate_corpus, triples_to_sentences, AnnotatedParagraph, Annotation, Document, EntityClass, Gazetteer, RelationTriple};
use crate::linearizer::{pseudo_sentence, LinearizerConfig};
use crate::model::{encode_anchor, encode_neighbor, Ablation, Model, Vocab};
use crate::pretrain::{pretrain, LossReport, TrainingConfig, TrainingPair};
use crate::summarizer::{raw_description, summarize_template, LocationDescription, RemoteSummarizer, SummaryContext};
use crate::synth::generate_synthetic_world;
use crate::tasks::{
    build_linking_index, finetune_recognition, finetune_typing, link_description, predict_type, recognition_examples,
    split_train_test, tags_to_spans, typing_samples, BioTag, FinetuneConfig, LinkingIndex,
};
use crate::tasks::recognition::tag_window;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub linearizer: LinearizerConfig,
    pub max_sentences: usize,
    pub vocab_size: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            linearizer: LinearizerConfig::default(),
            max_sentences: 3,
            vocab_size: 5000,
        }
    }
}

/// How anchor-level descriptions are produced.
pub enum Summarizer<'a> {
    Template,
    /// Raw linguistic sentences, no summarization step.
    Raw,
    Remote(&'a mut RemoteSummarizer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub annotation: Annotation,
    pub contexts: Vec<SummaryContext>,
    pub descriptions: Vec<LocationDescription>,
}

/// Files holding a built corpus inside one directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFiles {
    pub paragraphs: PathBuf,
    pub contexts: PathBuf,
    pub descriptions: PathBuf,
}

impl CorpusFiles {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusFiles {
            paragraphs: dir.join("paragraphs.jsonl"),
            contexts: dir.join("contexts.jsonl"),
            descriptions: dir.join("descriptions.jsonl"),
        }
    }

    pub fn all(&self) -> [&Path; 3] {
        [&self.paragraphs, &self.contexts, &self.descriptions]
    }
}

/// Writes the corpus as three JSON Lines files; the dropped-paragraph count
/// is not persisted.
pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<CorpusFiles> {
    let files = CorpusFiles::in_dir(dir);
    io::write_jsonl(&files.paragraphs, &corpus.annotation.paragraphs)?;
    io::write_jsonl(&files.contexts, &corpus.contexts)?;
    io::write_jsonl(&files.descriptions, &corpus.descriptions)?;
    Ok(files)
}

fn records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

pub fn load_corpus_dir(dir: &Path) -> Result<Corpus> {
    let files = CorpusFiles::in_dir(dir);
    let contexts: Vec<SummaryContext> = records(&files.contexts)?;
    let descriptions: Vec<LocationDescription> = records(&files.descriptions)?;
    if contexts.len() != descriptions.len()
        || contexts.iter().zip(&descriptions).any(|(c, d)| c.pseudo.anchor_id != d.anchor_id)
    {
        return Err(Error::Format(format!(
            "{} and {} do not list the same anchors",
            files.contexts.display(),
            files.descriptions.display()
        )));
    }
    Ok(Corpus {
        annotation: Annotation {
            paragraphs: records(&files.paragraphs)?,
            dropped: 0,
        },
        contexts,
        descriptions,
    })
}

/// Char ranges of sentences ending in `.`, `!` or `?` followed by
/// whitespace or end of text.
fn sentence_ranges(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..chars.len() {
        let end_mark = matches!(chars[i], '.' | '!' | '?');
        let boundary = i + 1 == chars.len() || chars[i + 1].is_whitespace();
        if end_mark && boundary {
            out.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < chars.len() {
        out.push((start, chars.len()));
    }
    out.into_iter()
        .filter_map(|(s, e)| {
            let lead = chars[s..e].iter().take_while(|c| c.is_whitespace()).count();
            (s + lead < e).then_some((s + lead, e))
        })
        .collect()
}

/// Sentences mentioning each entity id, in corpus order, deduplicated.
fn sentences_by_entity(paragraphs: &[AnnotatedParagraph]) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in paragraphs {
        let chars: Vec<char> = p.text.chars().collect();
        for (s, e) in sentence_ranges(&p.text) {
            let text: String = chars[s..e].iter().collect();
            let ids: BTreeSet<&str> = p
                .mentions
                .iter()
                .filter(|m| m.start >= s && m.end <= e)
                .filter_map(|m| m.entity_id.as_deref())
                .collect();
            for id in ids {
                let list = out.entry(id.to_string()).or_default();
                if !list.contains(&text) {
                    list.push(text.clone());
                }
            }
        }
    }
    out
}

/// One description per mentioned entity, in gazetteer order.
pub fn build_corpus(
    gazetteer: &Gazetteer,
    docs: &[Document],
    triples: &[RelationTriple],
    cfg: &CorpusConfig,
    mut summarizer: Summarizer<'_>,
) -> Result<Corpus> {
    let annotation = annotate_corpus(docs, gazetteer)?;
    let by_entity = sentences_by_entity(&annotation.paragraphs);
    let labels: BTreeMap<String, String> = gazetteer
        .entities()
        .iter()
        .filter_map(|e| Some((e.wikidata_qid.clone()?, e.name.clone())))
        .collect();
    let verbal = triples_to_sentences(triples, &labels);
    if verbal.skipped > 0 {
        log::warn!("{} relation triples skipped for missing labels", verbal.skipped);
    }
    let mut by_qid: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in &verbal.sentences {
        by_qid.entry(s.subject_qid.as_str()).or_default().push(s.text.as_str());
    }
    let mut contexts = Vec::new();
    let mut descriptions = Vec::new();
    for e in gazetteer.entities() {
        let Some(sentences) = by_entity.get(&e.id) else { continue };
        let mut linguistic = sentences.clone();
        if let Some(extra) = e.wikidata_qid.as_deref().and_then(|q| by_qid.get(q)) {
            linguistic.extend(extra.iter().map(|s| s.to_string()));
        }
        let ctx = SummaryContext {
            linguistic_sentences: linguistic,
            pseudo: pseudo_sentence(gazetteer, &e.id, &cfg.linearizer)?,
        };
        let desc = match &mut summarizer {
            Summarizer::Template => summarize_template(&ctx, cfg.max_sentences)?,
            Summarizer::Raw => raw_description(&ctx, cfg.max_sentences)?,
            Summarizer::Remote(r) => r.summarize(&ctx)?.0,
        };
        contexts.push(ctx);
        descriptions.push(desc);
    }
    Ok(Corpus {
        annotation,
        contexts,
        descriptions,
    })
}

pub fn corpus_vocab(corpus: &Corpus, gazetteer: &Gazetteer, max_size: usize) -> Result<Vocab> {
    let texts: Vec<&str> = corpus
        .annotation
        .paragraphs
        .iter()
        .map(|p| p.text.as_str())
        .chain(corpus.descriptions.iter().map(|d| d.text.as_str()))
        .chain(gazetteer.entities().iter().map(|e| e.name.as_str()))
        .collect();
    Vocab::build(&texts, max_size)
}

/// Encoded (description, pseudo-sentence) pairs; samples that cannot be
/// encoded are skipped with a warning.
pub fn training_pairs(corpus: &Corpus, vocab: &Vocab, max_seq_len: usize) -> Vec<TrainingPair> {
    let mut out = Vec::new();
    for (ctx, desc) in corpus.contexts.iter().zip(&corpus.descriptions) {
        let pair = encode_anchor(desc, vocab, max_seq_len).and_then(|loc| {
            Ok(TrainingPair {
                loc,
                geo: encode_neighbor(&ctx.pseudo, vocab, max_seq_len)?,
                entity_id: desc.anchor_id.clone(),
            })
        });
        match pair {
            Ok(p) => out.push(p),
            Err(e) => log::warn!("skipping {}: {e}", desc.anchor_id),
        }
    }
    out
}

/// Ranked link candidates for every description; returns R@k per `ks`.
pub fn linking_recall(
    model: &Model,
    vocab: &Vocab,
    descriptions: &[LocationDescription],
    index: &LinkingIndex,
    ks: &[usize],
    flags: &Ablation,
) -> Result<BTreeMap<usize, f64>> {
    let max_k = ks.iter().copied().max().unwrap_or(1);
    let mut ranked = Vec::with_capacity(descriptions.len());
    let mut gold = Vec::with_capacity(descriptions.len());
    for d in descriptions {
        let c = link_description(model, vocab, d, index, max_k, flags)?;
        ranked.push(c.into_iter().map(|c| c.entity_id).collect::<Vec<_>>());
        gold.push(d.anchor_id.clone());
    }
    ks.iter().map(|&k| Ok((k, recall_at_k(&ranked, &gold, k)?))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub entity: PrfReport,
    pub token_b: PrfReport,
    pub token_i: PrfReport,
}

/// Scores predicted tags on labelled paragraphs.
pub fn evaluate_recognition(
    model: &Model,
    vocab: &Vocab,
    paragraphs: &[AnnotatedParagraph],
    flags: &Ablation,
) -> Result<RecognitionReport> {
    let examples = recognition_examples(paragraphs, vocab, model.config().max_seq_len)?;
    let mut pred_all = Vec::new();
    let mut gold_all = Vec::new();
    let mut pred_spans = Vec::new();
    let mut gold_spans = Vec::new();
    for ex in &examples {
        let pred = tag_window(model, &ex.input, flags)?;
        pred_spans.push(tags_to_spans(&pred));
        gold_spans.push(tags_to_spans(&ex.tags));
        pred_all.extend(pred);
        gold_all.extend(ex.tags.iter().copied());
    }
    Ok(RecognitionReport {
        entity: entity_prf(&pred_spans, &gold_spans)?,
        token_b: token_prf(&pred_all, &gold_all, &BioTag::B)?,
        token_i: token_prf(&pred_all, &gold_all, &BioTag::I)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub n_entities: usize,
    pub n_docs: usize,
    pub n_heldout_docs: usize,
    pub corpus: CorpusConfig,
    pub training: TrainingConfig,
    pub recognition: FinetuneConfig,
    pub typing: FinetuneConfig,
    pub ks: Vec<usize>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            n_entities: 50,
            n_docs: 20,
            n_heldout_docs: 10,
            corpus: CorpusConfig::default(),
            training: TrainingConfig {
                steps: 200,
                d_model: 32,
                d_ff: 128,
                ..TrainingConfig::default()
            },
            recognition: FinetuneConfig::default(),
            typing: FinetuneConfig::default(),
            ks: vec![1, 5, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypingReport {
    pub train: usize,
    pub test: usize,
    pub micro_f1: f64,
    pub per_class_f1: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub seed: u64,
    pub entities: usize,
    pub training_pairs: usize,
    pub pretrain_first: LossReport,
    pub pretrain_last: LossReport,
    /// R@k keyed by k.
    pub linking: BTreeMap<String, f64>,
    pub recognition_train: RecognitionReport,
    pub recognition_heldout: RecognitionReport,
    pub typing: TypingReport,
}

/// Synthetic world → corpus → pretraining → linking, recognition and
/// typing, all from `seed`.
pub fn run_demo(seed: u64, cfg: &DemoConfig) -> Result<DemoReport> {
    let world = generate_synthetic_world(seed, cfg.n_entities, cfg.n_docs)?;
    let gaz = world.gazetteer()?;
    let summarizer = if cfg.training.ablation.no_summarizer {
        Summarizer::Raw
    } else {
        Summarizer::Template
    };
    let corpus = build_corpus(&gaz, &world.documents, &world.triples, &cfg.corpus, summarizer)?;
    let vocab = corpus_vocab(&corpus, &gaz, cfg.corpus.vocab_size)?;
    let tcfg = TrainingConfig {
        seed,
        ..cfg.training.clone()
    };
    let pairs = training_pairs(&corpus, &vocab, tcfg.max_seq_len);
    let mut model = Model::new(tcfg.model_config(vocab.len()), seed)?;
    let history = pretrain(&mut model, &pairs, &gaz, &tcfg, None)?;
    let (first, last) = match (history.first(), history.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::invalid("demo needs at least one pretraining step")),
    };
    let flags = tcfg.ablation;
    let index = build_linking_index(&model, &gaz, &vocab, &cfg.corpus.linearizer, &flags)?;
    let linking = linking_recall(&model, &vocab, &corpus.descriptions, &index, &cfg.ks, &flags)?
        .into_iter()
        .map(|(k, v)| (format!("R@{k}"), v))
        .collect();

    let mut rec_model = model.clone();
    let rec_cfg = FinetuneConfig {
        seed,
        ablation: flags,
        ..cfg.recognition.clone()
    };
    let examples = recognition_examples(&corpus.annotation.paragraphs, &vocab, tcfg.max_seq_len)?;
    finetune_recognition(&mut rec_model, &examples, &rec_cfg)?;
    let heldout_docs = world.documents(seed.wrapping_add(1), cfg.n_heldout_docs, "heldout");
    let heldout = annotate_corpus(&heldout_docs, &gaz)?;
    let recognition_train = evaluate_recognition(&rec_model, &vocab, &corpus.annotation.paragraphs, &flags)?;
    let recognition_heldout = evaluate_recognition(&rec_model, &vocab, &heldout.paragraphs, &flags)?;

    let mut typ_model = model;
    let samples = typing_samples(&gaz, &world.typing, &cfg.corpus.linearizer)?;
    let (train, test) = split_train_test(&samples, seed);
    let typ_cfg = FinetuneConfig {
        seed,
        ablation: flags,
        ..cfg.typing.clone()
    };
    finetune_typing(&mut typ_model, &vocab, &train, &typ_cfg)?;
    let pred: Vec<EntityClass> = test
        .iter()
        .map(|s| predict_type(&typ_model, &vocab, &s.pseudo, &flags))
        .collect::<Result<_>>()?;
    let gold: Vec<EntityClass> = test.iter().map(|s| s.class).collect();
    let m = micro_f1(&pred, &gold, &EntityClass::AMENITY)?;
    Ok(DemoReport {
        seed,
        entities: gaz.len(),
        training_pairs: pairs.len(),
        pretrain_first: first,
        pretrain_last: last,
        linking,
        recognition_train,
        recognition_heldout,
        typing: TypingReport {
            train: train.len(),
            test: test.len(),
            micro_f1: m.micro.f1,
            per_class_f1: m.per_class.iter().map(|(c, r)| (c.to_string(), r.f1)).collect(),
        },
    })
}
