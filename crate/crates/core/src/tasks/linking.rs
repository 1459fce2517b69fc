use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::geodata::Gazetteer;
use crate::io;
use crate::linearizer::{pseudo_sentence, LinearizerConfig};
use crate::model::{encode_neighbor, encode_text_span, Ablation, Model, Vocab};
use crate::summarizer::LocationDescription;

pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCandidate {
    pub entity_id: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    format_version: u32,
    dim: usize,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct IdLine {
    id: String,
}

/// Entity vectors in gazetteer order.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkingIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f32>,
}

impl LinkingIndex {
    pub fn new(dim: usize, ids: Vec<String>, vectors: Vec<f32>) -> Result<Self> {
        if vectors.len() != dim * ids.len() {
            return Err(Error::Shape(format!("{} floats for {} ids of dim {dim}", vectors.len(), ids.len())));
        }
        Ok(LinkingIndex { dim, ids, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Sidecar holding the ids, next to the vector file.
    pub fn ids_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".ids.jsonl");
        PathBuf::from(s)
    }

    pub fn to_bytes(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let header = IndexHeader {
            format_version: INDEX_FORMAT_VERSION,
            dim: self.dim,
            count: self.ids.len(),
        };
        let lines: Vec<IdLine> = self.ids.iter().map(|id| IdLine { id: id.clone() }).collect();
        Ok((container::encode(&header, &self.vectors)?, io::to_jsonl(&lines)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (vectors, ids) = self.to_bytes()?;
        io::write_atomic(&Self::ids_path(path), &ids)?;
        io::write_atomic(path, &vectors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, vectors): (IndexHeader, Vec<f32>) = container::read(path)?;
        if header.format_version != INDEX_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported index format_version {}", header.format_version)));
        }
        let ids: Vec<String> = io::read_jsonl::<IdLine>(&Self::ids_path(path))?
            .into_iter()
            .map(|(_, l)| l.id)
            .collect();
        if ids.len() != header.count {
            return Err(Error::Format(format!("header count {} but {} ids", header.count, ids.len())));
        }
        Self::new(header.dim, ids, vectors)
    }
}

/// Encodes every gazetteer entity through its neighbor-level pseudo-sentence.
pub fn build_linking_index(
    model: &Model,
    gazetteer: &Gazetteer,
    vocab: &Vocab,
    lin: &LinearizerConfig,
    flags: &Ablation,
) -> Result<LinkingIndex> {
    let dim = model.config().d_model;
    let mut ids = Vec::with_capacity(gazetteer.len());
    let mut vectors = Vec::with_capacity(gazetteer.len() * dim);
    for e in gazetteer.entities() {
        let pseudo = pseudo_sentence(gazetteer, &e.id, lin)?;
        let input = encode_neighbor(&pseudo, vocab, model.config().max_seq_len)?;
        let v = model.entity_vector(&input, flags)?;
        ids.push(e.id.clone());
        vectors.extend(v.iter().map(|&x| x as f32));
    }
    LinkingIndex::new(dim, ids, vectors)
}

fn cosine(q: &[f64], qn: f64, v: &[f32]) -> f64 {
    let dot: f64 = q.iter().zip(v).map(|(a, &b)| a * b as f64).sum();
    let vn: f64 = v.iter().map(|&b| (b as f64) * (b as f64)).sum::<f64>().sqrt();
    if vn == 0.0 {
        return 0.0;
    }
    (dot / (qn * vn)).clamp(-1.0, 1.0)
}

/// Ranks index entries by cosine similarity to the mention at char span
/// `span` of `text`, encoded anchor-level. Ties are broken by id.
pub fn link_toponym(
    model: &Model,
    vocab: &Vocab,
    text: &str,
    span: (usize, usize),
    index: &LinkingIndex,
    k: usize,
    flags: &Ablation,
) -> Result<Vec<LinkCandidate>> {
    if index.is_empty() {
        return Err(Error::invalid("linking index is empty"));
    }
    if index.dim() != model.config().d_model {
        return Err(Error::Shape(format!("index dim {} vs model {}", index.dim(), model.config().d_model)));
    }
    let input = encode_text_span(text, span, vocab, model.config().max_seq_len)?;
    let q = model.entity_vector(&input, flags)?;
    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if qn == 0.0 {
        return Err(Error::invalid("mention representation has zero norm"));
    }
    let mut out: Vec<LinkCandidate> = (0..index.len())
        .map(|i| LinkCandidate {
            entity_id: index.ids()[i].clone(),
            score: cosine(&q, qn, index.vector(i)),
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entity_id.cmp(&b.entity_id)));
    out.truncate(k);
    Ok(out)
}

pub fn link_description(
    model: &Model,
    vocab: &Vocab,
    desc: &LocationDescription,
    index: &LinkingIndex,
    k: usize,
    flags: &Ablation,
) -> Result<Vec<LinkCandidate>> {
    link_toponym(model, vocab, &desc.text, desc.anchor_span, index, k, flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{EntityClass, GeoEntity};
    use crate::model::ModelConfig;

    fn setup(n: usize) -> (Model, Vocab, Gazetteer) {
        let names = ["Cedar School", "Oak Bank", "Pine Clinic", "Maple Cafe", "Birch Hall"];
        let ents: Vec<GeoEntity> = (0..n)
            .map(|i| GeoEntity::new(format!("e{i:02}"), names[i % 5], 37.0 + 0.01 * i as f64, -122.0 + 0.007 * (i % 7) as f64, EntityClass::Other))
            .collect();
        let g = Gazetteer::from_entities(ents).unwrap();
        let v = Vocab::build(&names.iter().chain(&["visit the"]).collect::<Vec<_>>(), 100).unwrap();
        let cfg = ModelConfig {
            vocab_size: v.len(),
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_ff: 32,
            max_seq_len: 64,
            embed_init_std: 1.0,
        };
        (Model::new(cfg, 4).unwrap(), v, g)
    }

    #[test]
    fn single_entry_is_top1() {
        let (m, v, g) = setup(1);
        let idx = build_linking_index(&m, &g, &v, &LinearizerConfig::default(), &Ablation::default()).unwrap();
        assert_eq!(idx.len(), 1);
        let c = link_toponym(&m, &v, "visit the Oak Bank", (10, 18), &idx, 5, &Ablation::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].entity_id, "e00");
    }

    #[test]
    fn fifty_entities_ranked() {
        let (m, v, g) = setup(50);
        let idx = build_linking_index(&m, &g, &v, &LinearizerConfig::default(), &Ablation::default()).unwrap();
        assert_eq!(idx.len(), 50);
        for i in 0..50 {
            assert_eq!(idx.vector(i).len(), 16);
            assert!(idx.vector(i).iter().all(|x| x.is_finite()));
        }
        let c = link_toponym(&m, &v, "visit the Oak Bank", (10, 18), &idx, 100, &Ablation::default()).unwrap();
        assert_eq!(c.len(), 50);
        for w in c.windows(2) {
            assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].entity_id < w[1].entity_id));
        }
        assert!(c.iter().all(|x| (-1.0..=1.0).contains(&x.score)));
        let top = link_toponym(&m, &v, "visit the Oak Bank", (10, 18), &idx, 3, &Ablation::default()).unwrap();
        assert_eq!(top, c[..3]);
    }

    #[test]
    fn empty_index_rejected() {
        let (m, v, _) = setup(1);
        let idx = LinkingIndex::new(16, Vec::new(), Vec::new()).unwrap();
        assert!(link_toponym(&m, &v, "Oak Bank", (0, 8), &idx, 1, &Ablation::default()).is_err());
    }

    #[test]
    fn file_round_trip_is_byte_exact() {
        let (m, v, g) = setup(7);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("index.bin");
        let build = || build_linking_index(&m, &g, &v, &LinearizerConfig::default(), &Ablation::default()).unwrap();
        let idx = build();
        idx.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let ids = std::fs::read(LinkingIndex::ids_path(&p)).unwrap();
        let back = LinkingIndex::load(&p).unwrap();
        assert_eq!(back, idx);
        let q = dir.path().join("again.bin");
        back.save(&q).unwrap();
        assert_eq!(std::fs::read(&q).unwrap(), bytes);
        build().save(&q).unwrap();
        assert_eq!(std::fs::read(&q).unwrap(), bytes);
        assert_eq!(std::fs::read(LinkingIndex::ids_path(&q)).unwrap(), ids);
    }
}
