use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{restrict_to_head, FinetuneConfig};
use crate::error::{Error, Result};
use crate::geodata::{EntityClass, Gazetteer};
use crate::io;
use crate::linearizer::{pseudo_sentence, LinearizerConfig, PseudoSentence};
use crate::model::{encode_neighbor, Ablation, EncodedInput, Graph, Head, Model, Vocab};
use crate::pretrain::Adam;

/// One line of the typing dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypingRecord {
    pub anchor_id: String,
    pub class: EntityClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypingSample {
    pub pseudo: PseudoSentence,
    pub class: EntityClass,
}

pub fn load_typing_records(path: &Path) -> Result<Vec<TypingRecord>> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

/// Joins typing records against the gazetteer; labels must be amenity classes.
pub fn typing_samples(gazetteer: &Gazetteer, records: &[TypingRecord], lin: &LinearizerConfig) -> Result<Vec<TypingSample>> {
    records
        .iter()
        .map(|r| {
            if r.class.amenity_index().is_none() {
                return Err(Error::invalid(format!("typing label for {} is not an amenity class", r.anchor_id)));
            }
            Ok(TypingSample {
                pseudo: pseudo_sentence(gazetteer, &r.anchor_id, lin)?,
                class: r.class,
            })
        })
        .collect()
}

/// Seeded 8:2 split.
pub fn split_train_test<T: Clone>(samples: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (samples.len() as f64 * 0.2).round() as usize;
    let (test, train) = order.split_at(n_test);
    let pick = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect();
    (pick(train), pick(test))
}

fn encode(model: &Model, vocab: &Vocab, s: &PseudoSentence) -> Result<EncodedInput> {
    encode_neighbor(s, vocab, model.config().max_seq_len)
}

/// Trains the 9-way head over the anchor's pooled neighbor-level
/// representation. Returns the loss per step.
pub fn finetune_typing(model: &mut Model, vocab: &Vocab, train: &[TypingSample], cfg: &FinetuneConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("typing training set is empty"));
    }
    let present: BTreeSet<EntityClass> = train.iter().map(|s| s.class).collect();
    for c in EntityClass::AMENITY {
        if !present.contains(&c) {
            log::warn!("typing class {c} absent from the training set");
        }
    }
    let encoded: Vec<(EncodedInput, usize)> = train
        .iter()
        .map(|s| {
            let label = s
                .class
                .amenity_index()
                .ok_or_else(|| Error::invalid(format!("typing label {} is not an amenity class", s.class)))?;
            Ok((encode(model, vocab, &s.pseudo)?, label))
        })
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.lr);
    let b = cfg.batch_size.min(encoded.len());
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let idx = sample(&mut rng, encoded.len(), b).into_vec();
        let mut g = Graph::new(model.params());
        let mut rows = Vec::with_capacity(b);
        for &i in &idx {
            let x = &encoded[i].0;
            let h = model.encode_into(&mut g, x, &cfg.ablation)?;
            rows.push(g.mean_rows(h, x.entity_span.0, x.entity_span.1));
        }
        let pooled = g.stack_rows(rows);
        let logits = model.head_logits(&mut g, pooled, Head::Typing);
        let loss = g.cross_entropy(logits, idx.iter().map(|&i| Some(encoded[i].1)).collect());
        let value = g.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("typing loss at step {step}")));
        }
        let mut grads = g.backward(loss).params;
        drop(g);
        if cfg.head_only {
            restrict_to_head(model, &mut grads, "head.typing.");
        }
        opt.step(model.params_mut(), &grads);
        losses.push(value);
    }
    model.mark_trained(Head::Typing);
    Ok(losses)
}

/// Predicted class from the neighbor-level input alone.
pub fn predict_type(model: &Model, vocab: &Vocab, pseudo: &PseudoSentence, flags: &Ablation) -> Result<EntityClass> {
    if !model.is_trained(Head::Typing) {
        return Err(Error::invalid("typing head has not been trained"));
    }
    let x = encode(model, vocab, pseudo)?;
    let mut g = Graph::new(model.params());
    let h = model.encode_into(&mut g, &x, flags)?;
    let pooled = g.mean_rows(h, x.entity_span.0, x.entity_span.1);
    let logits = model.head_logits(&mut g, pooled, Head::Typing);
    let row = g.value(logits).row(0);
    let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
    Ok(EntityClass::AMENITY[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::GeoEntity;
    use crate::model::ModelConfig;

    #[test]
    fn split_is_eight_two_and_seeded() {
        let xs: Vec<usize> = (0..50).collect();
        let (tr, te) = split_train_test(&xs, 3);
        assert_eq!((tr.len(), te.len()), (40, 10));
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort();
        assert_eq!(all, xs);
        assert_eq!(split_train_test(&xs, 3), (tr, te));
    }

    #[test]
    fn single_class_dataset() {
        let ents: Vec<GeoEntity> = (0..6)
            .map(|i| GeoEntity::new(format!("e{i}"), format!("Place {i}"), 37.0 + 0.001 * i as f64, -122.0, EntityClass::Healthcare))
            .collect();
        let g = Gazetteer::from_entities(ents).unwrap();
        let recs: Vec<TypingRecord> = g
            .entities()
            .iter()
            .map(|e| TypingRecord {
                anchor_id: e.id.clone(),
                class: EntityClass::Healthcare,
            })
            .collect();
        let lin = LinearizerConfig::default();
        let samples = typing_samples(&g, &recs, &lin).unwrap();
        let names: Vec<&str> = g.entities().iter().map(|e| e.name.as_str()).collect();
        let v = Vocab::build(&names, 50).unwrap();
        let cfg = ModelConfig {
            vocab_size: v.len(),
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_ff: 32,
            max_seq_len: 64,
            embed_init_std: 1.0,
        };
        let mut m = Model::new(cfg, 0).unwrap();
        assert!(predict_type(&m, &v, &samples[0].pseudo, &Ablation::default()).is_err());
        let ft = FinetuneConfig {
            steps: 30,
            lr: 1e-2,
            batch_size: 4,
            ..FinetuneConfig::default()
        };
        finetune_typing(&mut m, &v, &samples, &ft).unwrap();
        for s in &samples {
            assert_eq!(predict_type(&m, &v, &s.pseudo, &Ablation::default()).unwrap(), EntityClass::Healthcare);
        }
        let bad = [TypingRecord {
            anchor_id: "e0".into(),
            class: EntityClass::Other,
        }];
        assert!(typing_samples(&g, &bad, &lin).is_err());
    }
}
