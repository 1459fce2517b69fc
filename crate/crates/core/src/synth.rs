//! Seeded synthetic gazetteer, corpus, triples and typing data.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{save_gazetteer, Document, EntityClass, GeoEntity, Gazetteer, RawMention, RelationTriple};
use crate::io;
use crate::linearizer::{NormalizedCoord, PseudoSentence};
use crate::tasks::{TypingRecord, TypingSample};

const PREFIXES: [&str; 16] = [
    "Cedar", "Maple", "Oak", "Pine", "Willow", "Birch", "Aspen", "Elm", "Granite", "Silver", "Golden", "Eagle",
    "Falcon", "Sunset", "Harbor", "Meadow",
];
const MIDDLES: [&str; 10] = ["Valley", "Ridge", "Grove", "Point", "Creek", "Heights", "Square", "Bay", "Field", "Hill"];
const TOWNS: [&str; 12] = [
    "Northfield", "Riverton", "Eastport", "Westbrook", "Lakeside", "Fairview", "Brighton", "Kingsley", "Ashford",
    "Milton", "Clayton", "Dunmore",
];
const MARKERS: [&str; 9] = [
    "Amber Beacon", "Cobalt Spire", "Crimson Gate", "Jade Fountain", "Ivory Arch", "Onyx Tower", "Coral Pavilion",
    "Saffron Obelisk", "Indigo Rotunda",
];
const FILLER: [&str; 4] = [
    "The weather was pleasant that week.",
    "Nobody expected the rain to last so long.",
    "Prices went up again this spring.",
    "It was a quiet season overall.",
];

fn suffixes(c: EntityClass) -> &'static [&'static str] {
    match c {
        EntityClass::Education => &["School", "Academy", "College"],
        EntityClass::Entertainment => &["Theater", "Museum", "Cinema"],
        EntityClass::Facility => &["Hall", "Center", "Depot"],
        EntityClass::Financial => &["Bank", "Credit Union", "Exchange"],
        EntityClass::Healthcare => &["Hospital", "Clinic", "Pharmacy"],
        EntityClass::PublicService => &["Library", "Post Office", "Fire Station"],
        EntityClass::Sustenance => &["Cafe", "Restaurant", "Bakery"],
        EntityClass::Transportation => &["Station", "Terminal", "Bus Depot"],
        EntityClass::WasteManagement => &["Recycling Center", "Landfill", "Transfer Yard"],
        EntityClass::Other => &["Place"],
    }
}

fn class_word(c: EntityClass) -> &'static str {
    match c {
        EntityClass::Education => "school",
        EntityClass::Entertainment => "venue",
        EntityClass::Facility => "facility",
        EntityClass::Financial => "bank",
        EntityClass::Healthcare => "clinic",
        EntityClass::PublicService => "public office",
        EntityClass::Sustenance => "eatery",
        EntityClass::Transportation => "transit hub",
        EntityClass::WasteManagement => "recycling site",
        EntityClass::Other => "place",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub bbox: BoundingBox,
    pub entities_per_cluster: usize,
    /// Std of entity offsets around a cluster center, degrees.
    pub cluster_spread_deg: f64,
    /// One entity in this many copies the name of an entity elsewhere.
    pub homonym_every: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            bbox: BoundingBox {
                min_lat: 37.0,
                max_lat: 38.0,
                min_lon: -122.5,
                max_lon: -121.5,
            },
            entities_per_cluster: 10,
            cluster_spread_deg: 0.01,
            homonym_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub entities: Vec<GeoEntity>,
    /// Town of each entity's cluster, parallel to `entities`.
    pub towns: Vec<String>,
    pub documents: Vec<Document>,
    pub typing: Vec<TypingRecord>,
    pub triples: Vec<RelationTriple>,
}

impl SyntheticWorld {
    pub fn gazetteer(&self) -> Result<Gazetteer> {
        Gazetteer::from_entities(self.entities.clone())
    }

    /// Entities whose name is shared with another entity.
    pub fn homonym_ids(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for a in &self.entities {
            if self.entities.iter().any(|b| b.id != a.id && b.name == a.name) {
                out.insert(a.id.clone());
            }
        }
        out
    }

    /// Fresh documents over the same entities and templates.
    pub fn documents(&self, seed: u64, n_docs: usize, id_prefix: &str) -> Vec<Document> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        make_documents(&self.entities, &self.towns, n_docs, id_prefix, &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFiles {
    pub gazetteer: PathBuf,
    pub corpus: PathBuf,
    pub typing: PathBuf,
    pub triples: PathBuf,
}

impl WorldFiles {
    pub fn in_dir(dir: &Path) -> Self {
        WorldFiles {
            gazetteer: dir.join("gazetteer.jsonl"),
            corpus: dir.join("corpus.jsonl"),
            typing: dir.join("typing.jsonl"),
            triples: dir.join("triples.jsonl"),
        }
    }
}

pub fn write_world(dir: &Path, world: &SyntheticWorld) -> Result<WorldFiles> {
    let files = WorldFiles::in_dir(dir);
    save_gazetteer(&files.gazetteer, &world.gazetteer()?)?;
    io::write_jsonl(&files.corpus, &world.documents)?;
    io::write_jsonl(&files.typing, &world.typing)?;
    io::write_jsonl(&files.triples, &world.triples)?;
    Ok(files)
}

pub fn generate_synthetic_world(seed: u64, n_entities: usize, n_docs: usize) -> Result<SyntheticWorld> {
    generate_with(&SynthConfig::default(), seed, n_entities, n_docs)
}

pub fn generate_with(cfg: &SynthConfig, seed: u64, n_entities: usize, n_docs: usize) -> Result<SyntheticWorld> {
    if n_entities < 10 {
        return Err(Error::invalid("synthetic world needs at least 10 entities"));
    }
    let b = cfg.bbox;
    if !(b.min_lat < b.max_lat && b.min_lon < b.max_lon) || cfg.entities_per_cluster == 0 {
        return Err(Error::invalid("degenerate synthetic world config"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_clusters = n_entities.div_ceil(cfg.entities_per_cluster).max(2);
    let (lat_m, lon_m) = ((b.max_lat - b.min_lat) * 0.1, (b.max_lon - b.min_lon) * 0.1);
    let centers: Vec<(f64, f64)> = (0..n_clusters)
        .map(|_| {
            (
                rng.random_range(b.min_lat + lat_m..b.max_lat - lat_m),
                rng.random_range(b.min_lon + lon_m..b.max_lon - lon_m),
            )
        })
        .collect();
    let mut towns: Vec<String> = TOWNS.iter().map(|t| t.to_string()).collect();
    towns.shuffle(&mut rng);
    let spread = Normal::new(0.0, cfg.cluster_spread_deg).map_err(|e| Error::invalid(e.to_string()))?;
    let mut used = BTreeSet::new();
    let mut entities = Vec::with_capacity(n_entities);
    let mut cluster_of = Vec::with_capacity(n_entities);
    for i in 0..n_entities {
        let c = (i / cfg.entities_per_cluster) % n_clusters;
        let class = EntityClass::AMENITY[rng.random_range(0..9)];
        let name = loop {
            let sfx = suffixes(class);
            let n = format!(
                "{} {} {}",
                PREFIXES[rng.random_range(0..PREFIXES.len())],
                MIDDLES[rng.random_range(0..MIDDLES.len())],
                sfx[rng.random_range(0..sfx.len())]
            );
            if used.insert(n.clone()) {
                break n;
            }
        };
        let lat = (centers[c].0 + spread.sample(&mut rng)).clamp(b.min_lat, b.max_lat);
        let lon = (centers[c].1 + spread.sample(&mut rng)).clamp(b.min_lon, b.max_lon);
        let mut e = GeoEntity::new(format!("syn{i:04}"), name, lat, lon, class);
        e.wikidata_qid = Some(format!("Q{}", 1000 + i));
        entities.push(e);
        cluster_of.push(c);
    }
    if cfg.homonym_every > 0 {
        for t in (0..n_entities).filter(|t| t % cfg.homonym_every == cfg.homonym_every - 1) {
            let sources: Vec<usize> = (0..n_entities)
                .filter(|&s| cluster_of[s] != cluster_of[t] && s % cfg.homonym_every != cfg.homonym_every - 1)
                .collect();
            if let Some(&s) = sources.get(rng.random_range(0..sources.len().max(1))) {
                entities[t].name = entities[s].name.clone();
                entities[t].class = entities[s].class;
            }
        }
    }
    let towns: Vec<String> = cluster_of.iter().map(|&c| towns[c % towns.len()].clone()).collect();
    let triples = entities
        .iter()
        .zip(&towns)
        .flat_map(|(e, t)| {
            let q = e.wikidata_qid.clone().expect("qid assigned");
            [
                RelationTriple::new(&q, "is located in", t),
                RelationTriple::new(&q, "is a", class_word(e.class)),
            ]
        })
        .collect();
    let typing = entities
        .iter()
        .map(|e| TypingRecord {
            anchor_id: e.id.clone(),
            class: e.class,
        })
        .collect();
    let documents = make_documents(&entities, &towns, n_docs, "doc", &mut rng);
    Ok(SyntheticWorld {
        entities,
        towns,
        documents,
        typing,
        triples,
    })
}

struct DocBuilder {
    text: String,
    chars: usize,
    mentions: Vec<RawMention>,
}

impl DocBuilder {
    fn push(&mut self, s: &str) {
        self.text.push_str(s);
        self.chars += s.chars().count();
    }

    fn mention(&mut self, e: &GeoEntity) {
        let start = self.chars;
        self.push(&e.name);
        self.mentions.push(RawMention {
            start,
            end: self.chars,
            entity_id: Some(e.id.clone()),
        });
    }
}

/// One sentence with one or two mentions; the second entity comes from
/// the same town when possible.
fn sentence(d: &mut DocBuilder, a: &GeoEntity, b: &GeoEntity, town: &str, form: usize) {
    match form {
        0 => {
            d.mention(a);
            d.push(&format!(" is a popular {} in {town}.", class_word(a.class)));
        }
        1 => {
            d.push("Residents often visit ");
            d.mention(a);
            d.push(" on weekends.");
        }
        2 => {
            d.push("We walked from ");
            d.mention(a);
            d.push(" to ");
            d.mention(b);
            d.push(" in the afternoon.");
        }
        3 => {
            d.mention(a);
            d.push(" sits close to ");
            d.mention(b);
            d.push(".");
        }
        4 => {
            d.push("The new road connects ");
            d.mention(a);
            d.push(" with ");
            d.mention(b);
            d.push(".");
        }
        5 => {
            d.push(&format!("Many people in {town} know "));
            d.mention(a);
            d.push(" well.");
        }
        _ => {
            d.push("Last year ");
            d.mention(a);
            d.push(" hosted a small festival.");
        }
    }
}

fn make_documents<R: Rng>(entities: &[GeoEntity], towns: &[String], n_docs: usize, prefix: &str, rng: &mut R) -> Vec<Document> {
    let mut queue: Vec<usize> = Vec::new();
    let mut docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let mut b = DocBuilder {
            text: String::new(),
            chars: 0,
            mentions: Vec::new(),
        };
        let n_par = rng.random_range(1..=3);
        for p in 0..n_par {
            if p > 0 {
                b.push("\n\n");
            }
            if rng.random_bool(0.15) {
                b.push(FILLER[rng.random_range(0..FILLER.len())]);
                continue;
            }
            let n_sent = rng.random_range(1..=2);
            for s in 0..n_sent {
                if s > 0 {
                    b.push(" ");
                }
                if queue.is_empty() {
                    queue = (0..entities.len()).collect();
                    queue.shuffle(rng);
                }
                let a = queue.pop().expect("refilled");
                let same_town: Vec<usize> = (0..entities.len()).filter(|&j| j != a && towns[j] == towns[a]).collect();
                let other = if same_town.is_empty() {
                    (a + 1) % entities.len()
                } else {
                    same_town[rng.random_range(0..same_town.len())]
                };
                let form = rng.random_range(0..7);
                sentence(&mut b, &entities[a], &entities[other], &towns[a], form);
            }
        }
        docs.push(Document {
            doc_id: format!("{prefix}{d:04}"),
            text: b.text,
            mentions: Some(b.mentions),
        });
    }
    docs
}

/// Typing samples whose class is signalled only by one marker neighbor
/// name; anchor names and other neighbors carry no class information.
pub fn separable_typing_fixture(seed: u64, per_class: usize) -> Vec<TypingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * 9);
    let mut next = 0usize;
    for (ci, class) in EntityClass::AMENITY.iter().enumerate() {
        for _ in 0..per_class {
            let anchor_name = format!(
                "{} {} Site",
                PREFIXES[rng.random_range(0..PREFIXES.len())],
                MIDDLES[rng.random_range(0..MIDDLES.len())]
            );
            let n_nb = rng.random_range(3..=6);
            let marker_at = rng.random_range(0..n_nb);
            let mut nbs: Vec<(String, NormalizedCoord, f64)> = (0..n_nb)
                .map(|j| {
                    let name = if j == marker_at {
                        MARKERS[ci].to_string()
                    } else {
                        let c = EntityClass::AMENITY[rng.random_range(0..9)];
                        let sfx = suffixes(c);
                        format!(
                            "{} {} {}",
                            PREFIXES[rng.random_range(0..PREFIXES.len())],
                            MIDDLES[rng.random_range(0..MIDDLES.len())],
                            sfx[rng.random_range(0..sfx.len())]
                        )
                    };
                    let c = NormalizedCoord {
                        x: rng.random_range(-3.0..3.0),
                        y: rng.random_range(-3.0..3.0),
                    };
                    let dist = (c.x * c.x + c.y * c.y).sqrt();
                    (name, c, dist)
                })
                .collect();
            nbs.sort_by(|a, b| a.2.total_cmp(&b.2));
            let id = format!("typ{next:04}");
            next += 1;
            out.push(TypingSample {
                pseudo: PseudoSentence {
                    anchor_id: id.clone(),
                    anchor_name,
                    neighbor_ids: (0..nbs.len()).map(|j| format!("{id}-n{j}")).collect(),
                    neighbor_names: nbs.iter().map(|n| n.0.clone()).collect(),
                    neighbor_coords: nbs.iter().map(|n| n.1).collect(),
                    distances_km: nbs.iter().map(|n| n.2).collect(),
                },
                class: *class,
            });
        }
    }
    out
}
