use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encode::{Coord, EncodedInput};
use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};
use super::spatial::coordinate_lanes;
use super::tensor::Matrix;
use crate::error::{Error, Result};

pub const N_TAGS: usize = 3;
pub const N_TYPES: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    /// Std of token/dsep embedding init; other embeddings use a tenth.
    pub embed_init_std: f64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            max_seq_len: 128,
            embed_init_std: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Shape(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::Shape("d_model must be even for the spatial embedding".into()));
        }
        if self.vocab_size < 6 || self.max_seq_len < 3 || self.d_ff == 0 {
            return Err(Error::Shape(format!("degenerate model config {self:?}")));
        }
        Ok(())
    }
}

/// Switches that remove parts of the model or objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    #[serde(default)]
    pub no_contrastive: bool,
    #[serde(default)]
    pub no_mlm: bool,
    #[serde(default)]
    pub no_spatial: bool,
    #[serde(default)]
    pub no_summarizer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Mlm,
    Recognition,
    Typing,
}

#[derive(Debug, Clone)]
struct LayerIds {
    ln1: (ParamId, ParamId),
    wq: (ParamId, ParamId),
    wk: (ParamId, ParamId),
    wv: (ParamId, ParamId),
    wo: (ParamId, ParamId),
    ln2: (ParamId, ParamId),
    ff1: (ParamId, ParamId),
    ff2: (ParamId, ParamId),
}

#[derive(Debug, Clone)]
struct ParamIds {
    token: ParamId,
    position: ParamId,
    segment: ParamId,
    dsep: ParamId,
    layers: Vec<LayerIds>,
    final_ln: (ParamId, ParamId),
    mlm: (ParamId, ParamId),
    recognition: (ParamId, ParamId),
    typing: (ParamId, ParamId),
}

impl ParamIds {
    fn resolve(store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let get = |n: &str| store.id(n).ok_or_else(|| Error::Format(format!("missing parameter {n}")));
        let pair = |n: &str, a: &str, b: &str| -> Result<(ParamId, ParamId)> {
            Ok((get(&format!("{n}.{a}"))?, get(&format!("{n}.{b}"))?))
        };
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let p = format!("layer{l}");
                Ok(LayerIds {
                    ln1: pair(&format!("{p}.ln1"), "gamma", "beta")?,
                    wq: pair(&format!("{p}.attn.q"), "weight", "bias")?,
                    wk: pair(&format!("{p}.attn.k"), "weight", "bias")?,
                    wv: pair(&format!("{p}.attn.v"), "weight", "bias")?,
                    wo: pair(&format!("{p}.attn.out"), "weight", "bias")?,
                    ln2: pair(&format!("{p}.ln2"), "gamma", "beta")?,
                    ff1: pair(&format!("{p}.ffn.up"), "weight", "bias")?,
                    ff2: pair(&format!("{p}.ffn.down"), "weight", "bias")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamIds {
            token: get("embed.token")?,
            position: get("embed.position")?,
            segment: get("embed.segment")?,
            dsep: get("embed.dsep")?,
            layers,
            final_ln: pair("final_ln", "gamma", "beta")?,
            mlm: pair("head.mlm", "weight", "bias")?,
            recognition: pair("head.recognition", "weight", "bias")?,
            typing: pair("head.typing", "weight", "bias")?,
        })
    }
}

/// Encoder parameters plus task heads.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    trained_heads: BTreeSet<Head>,
    ids: ParamIds,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.trained_heads == other.trained_heads
    }
}

fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let (d, v, ff) = (cfg.d_model, cfg.vocab_size, cfg.d_ff);
    let mut s = vec![
        ("embed.token".to_string(), (v, d)),
        ("embed.position".to_string(), (cfg.max_seq_len, d)),
        ("embed.segment".to_string(), (2, d)),
        ("embed.dsep".to_string(), (1, d)),
    ];
    for l in 0..cfg.n_layers {
        let p = format!("layer{l}");
        s.push((format!("{p}.ln1.gamma"), (1, d)));
        s.push((format!("{p}.ln1.beta"), (1, d)));
        for m in ["q", "k", "v", "out"] {
            s.push((format!("{p}.attn.{m}.weight"), (d, d)));
            s.push((format!("{p}.attn.{m}.bias"), (1, d)));
        }
        s.push((format!("{p}.ln2.gamma"), (1, d)));
        s.push((format!("{p}.ln2.beta"), (1, d)));
        s.push((format!("{p}.ffn.up.weight"), (d, ff)));
        s.push((format!("{p}.ffn.up.bias"), (1, ff)));
        s.push((format!("{p}.ffn.down.weight"), (ff, d)));
        s.push((format!("{p}.ffn.down.bias"), (1, d)));
    }
    s.push(("final_ln.gamma".into(), (1, d)));
    s.push(("final_ln.beta".into(), (1, d)));
    s.push(("head.mlm.weight".into(), (d, v)));
    s.push(("head.mlm.bias".into(), (1, v)));
    s.push(("head.recognition.weight".into(), (d, N_TAGS)));
    s.push(("head.recognition.bias".into(), (1, N_TAGS)));
    s.push(("head.typing.weight".into(), (d, N_TYPES)));
    s.push(("head.typing.bias".into(), (1, N_TYPES)));
    s
}

impl Model {
    /// Seeded initialization. Values are rounded to `f32`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        for (name, (r, c)) in expected_shapes(&config) {
            let m = if name.ends_with(".gamma") {
                Matrix::from_vec(r, c, vec![1.0; r * c])
            } else if name.ends_with(".bias") || name.ends_with(".beta") {
                Matrix::zeros(r, c)
            } else {
                let std = match name.as_str() {
                    "embed.token" | "embed.dsep" => config.embed_init_std,
                    "embed.position" | "embed.segment" => config.embed_init_std * 0.1,
                    _ => 1.0 / (r as f64).sqrt(),
                };
                let dist = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
                Matrix::from_vec(r, c, (0..r * c).map(|_| dist.sample(&mut rng)).collect())
            };
            store.add(name, m);
        }
        store.round_to_f32();
        Self::from_parts(config, store, BTreeSet::new())
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore, trained_heads: BTreeSet<Head>) -> Result<Self> {
        config.validate()?;
        for (name, shape) in expected_shapes(&config) {
            let id = params.id(&name).ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
            if params.get(id).shape() != shape {
                return Err(Error::Shape(format!(
                    "{name}: expected {shape:?}, found {:?}",
                    params.get(id).shape()
                )));
            }
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        let ids = ParamIds::resolve(&params, &config)?;
        Ok(Model {
            config,
            params,
            trained_heads,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn trained_heads(&self) -> &BTreeSet<Head> {
        &self.trained_heads
    }

    pub fn mark_trained(&mut self, head: Head) {
        self.trained_heads.insert(head);
    }

    pub fn is_trained(&self, head: Head) -> bool {
        self.trained_heads.contains(&head)
    }

    /// Adds the encoder computation for `input` to `g`; returns the
    /// `seq_len × d` final hidden states.
    pub fn encode_into(&self, g: &mut Graph<'_>, input: &EncodedInput, flags: &Ablation) -> Result<NodeId> {
        input.check_lanes()?;
        let cfg = &self.config;
        let n = input.len();
        let d = cfg.d_model;
        if n > cfg.max_seq_len {
            return Err(Error::Shape(format!("sequence of {n} exceeds max_seq_len {}", cfg.max_seq_len)));
        }
        if let Some(&bad) = input.token_ids.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::Shape(format!("token id {bad} outside vocab of {}", cfg.vocab_size)));
        }
        if let Some(&bad) = input.position_ids.iter().find(|&&p| p >= cfg.max_seq_len) {
            return Err(Error::Shape(format!("position id {bad} outside table of {}", cfg.max_seq_len)));
        }
        let ids = &self.ids;
        let tok = g.gather(ids.token, input.token_ids.iter().map(|&t| Some(t as usize)).collect());
        let pos = g.gather(ids.position, input.position_ids.iter().map(|&p| Some(p)).collect());
        let seg = g.gather(ids.segment, input.segment_ids.iter().map(|&s| Some(s as usize)).collect());
        let mut h = g.add(tok, pos);
        h = g.add(h, seg);
        // the ablation removes the coordinate sinusoids only; the DSEP
        // filler carries no geometry and stays
        if !flags.no_spatial {
            let sin = g.input(coordinate_lanes(&input.x_coords, &input.y_coords, d));
            h = g.add(h, sin);
        }
        for lane in [&input.x_coords, &input.y_coords] {
            let idx: Vec<Option<usize>> = lane.iter().map(|c| matches!(c, Coord::Dsep).then_some(0)).collect();
            if idx.iter().any(Option::is_some) {
                let filler = g.gather(ids.dsep, idx);
                h = g.add(h, filler);
            }
        }
        let keep: Vec<bool> = input.attention_mask.iter().map(|&m| m != 0).collect();
        let dh = d / cfg.n_heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        for layer in &ids.layers {
            let a = layer_norm(g, h, layer.ln1);
            let q = linear(g, a, layer.wq);
            let k = linear(g, a, layer.wk);
            let v = linear(g, a, layer.wv);
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for hd in 0..cfg.n_heads {
                let qh = g.slice_cols(q, hd * dh, dh);
                let kh = g.slice_cols(k, hd * dh, dh);
                let vh = g.slice_cols(v, hd * dh, dh);
                let s = g.matmul_t(qh, kh);
                let s = g.scale(s, inv_sqrt);
                let p = g.masked_softmax(s, &keep);
                heads.push(g.matmul(p, vh));
            }
            let cat = if heads.len() == 1 { heads[0] } else { g.concat_cols(heads) };
            let o = linear(g, cat, layer.wo);
            h = g.add(h, o);
            let b = layer_norm(g, h, layer.ln2);
            let f = linear(g, b, layer.ff1);
            let f = g.gelu(f);
            let f = linear(g, f, layer.ff2);
            h = g.add(h, f);
        }
        let out = layer_norm(g, h, ids.final_ln);
        if !g.value(out).is_finite() {
            return Err(Error::NonFinite("encoder activations".into()));
        }
        Ok(out)
    }

    /// `seq_len × d` token representations.
    pub fn forward(&self, input: &EncodedInput, flags: &Ablation) -> Result<Matrix> {
        let mut g = Graph::new(&self.params);
        let out = self.encode_into(&mut g, input, flags)?;
        Ok(g.value(out).clone())
    }

    /// Mean-pooled entity vector of `input.entity_span`.
    pub fn entity_vector(&self, input: &EncodedInput, flags: &Ablation) -> Result<Vec<f64>> {
        entity_representation(&self.forward(input, flags)?, input.entity_span)
    }

    pub fn head_logits(&self, g: &mut Graph<'_>, h: NodeId, head: Head) -> NodeId {
        let ids = match head {
            Head::Mlm => self.ids.mlm,
            Head::Recognition => self.ids.recognition,
            Head::Typing => self.ids.typing,
        };
        linear(g, h, ids)
    }
}

fn linear(g: &mut Graph<'_>, x: NodeId, (w, b): (ParamId, ParamId)) -> NodeId {
    let wn = g.param(w);
    let bn = g.param(b);
    let y = g.matmul(x, wn);
    g.add_row(y, bn)
}

fn layer_norm(g: &mut Graph<'_>, x: NodeId, (gamma, beta): (ParamId, ParamId)) -> NodeId {
    let gn = g.param(gamma);
    let bn = g.param(beta);
    g.layer_norm(x, gn, bn)
}

/// Arithmetic mean of rows `span.0..span.1`.
pub fn entity_representation(token_reps: &Matrix, span: (usize, usize)) -> Result<Vec<f64>> {
    let (s, e) = span;
    if s >= e || e > token_reps.rows() {
        return Err(Error::invalid(format!("span {span:?} invalid for {} rows", token_reps.rows())));
    }
    let mut out = vec![0.0; token_reps.cols()];
    for r in s..e {
        for (o, v) in out.iter_mut().zip(token_reps.row(r)) {
            *o += v;
        }
    }
    let n = (e - s) as f64;
    Ok(out.into_iter().map(|v| v / n).collect())
}
