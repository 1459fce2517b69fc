use std::collections::{BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contrastive::{contrastive_nodes, validate_inputs, ContrastiveConfig};
use super::mlm::{concat_pair, mlm_mask, MlmConfig};
use super::negatives::mine_hard_negative_among;
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::geodata::{GeoEntity, Gazetteer};
use crate::model::{Ablation, EncodedInput, Grads, Graph, Head, Model, ModelConfig, NodeId};

/// Anchor-level and neighbor-level views of one entity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub loc: EncodedInput,
    pub geo: EncodedInput,
    pub entity_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    Random,
    Hard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub pairs: Vec<TrainingPair>,
    pub tags: Vec<NegativeKind>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pairs.len();
        if n < 2 || self.tags.len() != n {
            return Err(Error::invalid(format!("batch of {n} pairs with {} tags", self.tags.len())));
        }
        let hard = self.tags.iter().filter(|t| **t == NegativeKind::Hard).count();
        if hard.abs_diff(n - hard) > 1 {
            return Err(Error::invalid(format!("{hard} hard of {n}: split is not 50/50")));
        }
        Ok(())
    }
}

/// Pretraining hyperparameters, serialized as the training config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub embed_init_std: f64,
    pub contrastive: ContrastiveConfig,
    pub mlm: MlmConfig,
    /// Weight of the MLM term.
    pub mlm_weight: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub ablation: Ablation,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let m = ModelConfig::new(0);
        TrainingConfig {
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            d_ff: m.d_ff,
            max_seq_len: m.max_seq_len,
            embed_init_std: m.embed_init_std,
            contrastive: ContrastiveConfig::default(),
            mlm: MlmConfig::default(),
            mlm_weight: 1.0,
            lr: 1e-3,
            steps: 200,
            batch_size: 16,
            seed: 0,
            ablation: Ablation::default(),
        }
    }
}

impl TrainingConfig {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            max_seq_len: self.max_seq_len,
            embed_init_std: self.embed_init_std,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.contrastive.validate()?;
        self.mlm.validate()?;
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.mlm_weight >= 0.0 && self.mlm_weight.is_finite()) {
            return Err(Error::invalid("lr must be positive and mlm_weight non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    pub contrastive: f64,
    pub mlm: f64,
    pub total: f64,
}

/// MLM-corrupted concatenation of one pair with its labels.
pub type MaskedPair = (EncodedInput, Vec<Option<u32>>);

pub fn mask_batch<R: Rng>(batch: &PairBatch, cfg: &TrainingConfig, vocab_size: usize, rng: &mut R) -> Result<Vec<MaskedPair>> {
    batch
        .pairs
        .iter()
        .map(|p| {
            let joined = concat_pair(&p.loc, &p.geo, cfg.max_seq_len)?;
            Ok(mlm_mask(&joined, &cfg.mlm, vocab_size, rng))
        })
        .collect()
}

struct LossNodes {
    contrastive: Option<NodeId>,
    mlm: Option<NodeId>,
    total: Option<NodeId>,
}

fn pooled(g: &mut Graph<'_>, model: &Model, x: &EncodedInput, flags: &Ablation) -> Result<NodeId> {
    let h = model.encode_into(g, x, flags)?;
    Ok(g.mean_rows(h, x.entity_span.0, x.entity_span.1))
}

fn build_loss(g: &mut Graph<'_>, model: &Model, batch: &PairBatch, masked: &[MaskedPair], cfg: &TrainingConfig) -> Result<LossNodes> {
    let flags = &cfg.ablation;
    let mut contrastive = None;
    if !flags.no_contrastive {
        let mut loc = Vec::with_capacity(batch.len());
        let mut geo = Vec::with_capacity(batch.len());
        for p in &batch.pairs {
            loc.push(pooled(g, model, &p.loc, flags)?);
            geo.push(pooled(g, model, &p.geo, flags)?);
        }
        let hl = g.stack_rows(loc);
        let hg = g.stack_rows(geo);
        validate_inputs(g.value(hl), g.value(hg))?;
        contrastive = Some(contrastive_nodes(g, hl, hg, &cfg.contrastive).0);
    }
    let mut mlm = None;
    if !flags.no_mlm {
        let total: usize = masked.iter().map(|(_, l)| l.iter().flatten().count()).sum();
        for (x, labels) in masked {
            let count = labels.iter().flatten().count();
            if count == 0 {
                continue;
            }
            let h = model.encode_into(g, x, flags)?;
            let logits = model.head_logits(g, h, Head::Mlm);
            let ce = g.cross_entropy(logits, labels.iter().map(|l| l.map(|v| v as usize)).collect());
            let part = g.scale(ce, count as f64 / total as f64);
            mlm = Some(match mlm {
                Some(acc) => g.add(acc, part),
                None => part,
            });
        }
    }
    let total = match (contrastive, mlm) {
        (Some(c), Some(m)) => {
            let w = g.scale(m, cfg.mlm_weight);
            Some(g.add(c, w))
        }
        (Some(c), None) => Some(c),
        (None, Some(m)) => Some(g.scale(m, cfg.mlm_weight)),
        (None, None) => None,
    };
    Ok(LossNodes { contrastive, mlm, total })
}

/// Loss values and parameter gradients for fixed MLM corruptions.
/// Gradients are `None` when every objective term is disabled.
pub fn loss_and_grads(
    model: &Model,
    batch: &PairBatch,
    masked: &[MaskedPair],
    cfg: &TrainingConfig,
) -> Result<(LossReport, Option<Grads>)> {
    let mut g = Graph::new(model.params());
    let nodes = build_loss(&mut g, model, batch, masked, cfg)?;
    let val = |n: Option<NodeId>| n.map_or(0.0, |n| g.value(n).get(0, 0));
    let report = LossReport {
        step: 0,
        contrastive: val(nodes.contrastive),
        mlm: val(nodes.mlm),
        total: val(nodes.total),
    };
    if ![report.contrastive, report.mlm, report.total].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "loss (contrastive {}, mlm {}, total {})",
            report.contrastive, report.mlm, report.total
        )));
    }
    let grads = nodes.total.map(|t| g.backward(t).params);
    if let Some(gr) = &grads {
        if !gr.all_finite() {
            return Err(Error::NonFinite("gradients".into()));
        }
    }
    Ok((report, grads))
}

/// One optimizer update on `batch`. With both objective terms disabled the
/// parameters are left unchanged.
pub fn pretrain_step<R: Rng>(
    model: &mut Model,
    batch: &PairBatch,
    cfg: &TrainingConfig,
    opt: &mut Adam,
    rng: &mut R,
) -> Result<LossReport> {
    batch.validate()?;
    let masked = if cfg.ablation.no_mlm {
        Vec::new()
    } else {
        mask_batch(batch, cfg, model.config().vocab_size, rng)?
    };
    let (report, grads) = loss_and_grads(model, batch, &masked, cfg)?;
    if let Some(grads) = grads {
        opt.step(model.params_mut(), &grads);
        if !cfg.ablation.no_mlm {
            model.mark_trained(Head::Mlm);
        }
    }
    Ok(report)
}

/// Draws batches: half uniformly random pairs, each followed by a hard
/// negative pair mined among the remaining entities.
#[derive(Debug)]
pub struct BatchSampler<'a> {
    pairs: &'a [TrainingPair],
    entities: Vec<&'a GeoEntity>,
    by_id: HashMap<&'a str, usize>,
}

impl<'a> BatchSampler<'a> {
    pub fn new(pairs: &'a [TrainingPair], gazetteer: &'a Gazetteer) -> Result<Self> {
        let mut entities = Vec::with_capacity(pairs.len());
        let mut by_id = HashMap::new();
        for (i, p) in pairs.iter().enumerate() {
            let e = gazetteer.get(&p.entity_id).ok_or_else(|| Error::UnknownEntity(p.entity_id.clone()))?;
            if by_id.insert(e.id.as_str(), i).is_some() {
                return Err(Error::invalid(format!("two pairs for entity {}", e.id)));
            }
            entities.push(e);
        }
        if pairs.len() < 2 {
            return Err(Error::invalid("need at least 2 training pairs"));
        }
        Ok(BatchSampler { pairs, entities, by_id })
    }

    /// A batch of `min(n, pairs)` pairs.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<PairBatch> {
        let n = n.min(self.pairs.len());
        if n < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        let n_random = n.div_ceil(2);
        let anchors = sample(rng, self.pairs.len(), n_random).into_vec();
        let mut used: BTreeSet<&str> = anchors.iter().map(|&i| self.entities[i].id.as_str()).collect();
        let mut pairs = Vec::with_capacity(n);
        let mut tags = Vec::with_capacity(n);
        for (k, &a) in anchors.iter().enumerate() {
            pairs.push(self.pairs[a].clone());
            tags.push(NegativeKind::Random);
            if n_random + k >= n {
                continue;
            }
            let neg = mine_hard_negative_among(self.entities[a], &self.entities, &used, rng)
                .ok_or_else(|| Error::invalid("ran out of hard-negative candidates"))?;
            used.insert(neg.id.as_str());
            pairs.push(self.pairs[self.by_id[neg.id.as_str()]].clone());
            tags.push(NegativeKind::Hard);
        }
        Ok(PairBatch { pairs, tags })
    }
}

/// Runs `cfg.steps` updates from one seeded generator and appends a metrics
/// line per step to `metrics` when given.
pub fn pretrain(
    model: &mut Model,
    pairs: &[TrainingPair],
    gazetteer: &Gazetteer,
    cfg: &TrainingConfig,
    metrics: Option<&Path>,
) -> Result<Vec<LossReport>> {
    cfg.validate()?;
    let sampler = BatchSampler::new(pairs, gazetteer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.lr);
    let mut log = match metrics {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(p)
                .map_err(|e| Error::io(p, e))?;
            Some((p, f))
        }
        None => None,
    };
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = sampler.sample(cfg.batch_size, &mut rng)?;
        let mut report = pretrain_step(model, &batch, cfg, &mut opt, &mut rng)
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("step {step}: {m}")),
                other => other,
            })?;
        report.step = step;
        if let Some((p, f)) = log.as_mut() {
            let mut line = serde_json::to_vec(&report)?;
            line.push(b'\n');
            f.write_all(&line).map_err(|e| Error::io(*p, e))?;
        }
        if step % 50 == 0 || step + 1 == cfg.steps {
            log::info!(
                "step {step}: contrastive {:.4} mlm {:.4} total {:.4}",
                report.contrastive,
                report.mlm,
                report.total
            );
        }
        history.push(report);
    }
    Ok(history)
}
