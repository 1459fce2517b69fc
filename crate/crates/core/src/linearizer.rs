//! Neighbor-level pseudo-sentences: distance-sorted spatial context with
//! anchor-relative coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{check_coords, Gazetteer, GeoEntity};

/// Mean Earth radius (WGS84), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Bound applied to normalized offsets.
pub const COORD_CLAMP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizerConfig {
    /// Neighbors per pseudo-sentence.
    pub k: usize,
    /// km per coordinate unit.
    pub coord_scale: f64,
}

impl Default for LinearizerConfig {
    fn default() -> Self {
        LinearizerConfig { k: 20, coord_scale: 1.0 }
    }
}

/// Anchor-relative offset fed to the spatial embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCoord {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSentence {
    pub anchor_id: String,
    pub anchor_name: String,
    pub neighbor_ids: Vec<String>,
    pub neighbor_names: Vec<String>,
    pub neighbor_coords: Vec<NormalizedCoord>,
    pub distances_km: Vec<f64>,
}

impl PseudoSentence {
    pub fn anchor_only(anchor: &GeoEntity) -> Self {
        PseudoSentence {
            anchor_id: anchor.id.clone(),
            anchor_name: anchor.name.clone(),
            neighbor_ids: Vec::new(),
            neighbor_names: Vec::new(),
            neighbor_coords: Vec::new(),
            distances_km: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.neighbor_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbor_names.is_empty()
    }

    /// Anchor coordinate, always the origin of its own frame.
    pub fn anchor_coord(&self) -> NormalizedCoord {
        NormalizedCoord { x: 0.0, y: 0.0 }
    }
}

fn haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Great-circle distance in km between two `(lat, lon)` points in degrees.
pub fn geodesic_distance(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    check_coords(a.0, a.1)?;
    check_coords(b.0, b.1)?;
    Ok(haversine(a, b))
}

/// A nearby entity with its distance from the anchor.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'g> {
    pub entity: &'g GeoEntity,
    pub distance_km: f64,
}

/// The `k` entities nearest to `anchor_id`, excluding the anchor. Equal
/// distances are ordered by id.
pub fn neighbors_of<'g>(gazetteer: &'g Gazetteer, anchor_id: &str, k: usize) -> Result<Vec<Neighbor<'g>>> {
    let anchor = gazetteer
        .get(anchor_id)
        .ok_or_else(|| Error::UnknownEntity(anchor_id.to_string()))?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut all: Vec<Neighbor<'g>> = gazetteer
        .entities()
        .iter()
        .filter(|e| e.id != anchor.id)
        .map(|e| Neighbor {
            entity: e,
            distance_km: haversine(anchor.coords(), e.coords()),
        })
        .collect();
    all.sort_by(neighbor_order);
    all.truncate(k);
    Ok(all)
}

fn neighbor_order(a: &Neighbor<'_>, b: &Neighbor<'_>) -> std::cmp::Ordering {
    a.distance_km
        .total_cmp(&b.distance_km)
        .then_with(|| a.entity.id.cmp(&b.entity.id))
}

/// East/north offset of `other` from `anchor` in km, divided by
/// `coord_scale` and clamped to `[-100, 100]`.
pub fn normalize_coords(anchor: &GeoEntity, other: &GeoEntity, coord_scale: f64) -> NormalizedCoord {
    let north = haversine((anchor.lat, anchor.lon), (other.lat, anchor.lon));
    let east = haversine((anchor.lat, anchor.lon), (anchor.lat, other.lon));
    let mut dlon = other.lon - anchor.lon;
    if dlon > 180.0 {
        dlon -= 360.0;
    } else if dlon < -180.0 {
        dlon += 360.0;
    }
    let x = east.copysign(dlon) / coord_scale;
    let y = north.copysign(other.lat - anchor.lat) / coord_scale;
    NormalizedCoord {
        x: if dlon == 0.0 { 0.0 } else { x.clamp(-COORD_CLAMP, COORD_CLAMP) },
        y: if other.lat == anchor.lat { 0.0 } else { y.clamp(-COORD_CLAMP, COORD_CLAMP) },
    }
}

/// Sorts candidate neighbors into canonical (distance, id) order.
pub fn sort_neighbors<'g>(anchor: &GeoEntity, neighbors: &[&'g GeoEntity]) -> Vec<&'g GeoEntity> {
    let mut n: Vec<Neighbor<'g>> = neighbors
        .iter()
        .map(|e| Neighbor {
            entity: e,
            distance_km: haversine(anchor.coords(), e.coords()),
        })
        .collect();
    n.sort_by(neighbor_order);
    n.into_iter().map(|n| n.entity).collect()
}

/// Builds the pseudo-sentence for `anchor` from already-sorted neighbors.
pub fn linearize(anchor: &GeoEntity, neighbors: &[&GeoEntity], coord_scale: f64) -> Result<PseudoSentence> {
    if !(coord_scale > 0.0) {
        return Err(Error::invalid("coord_scale must be positive"));
    }
    let mut p = PseudoSentence::anchor_only(anchor);
    for (i, n) in neighbors.iter().enumerate() {
        let d = haversine(anchor.coords(), n.coords());
        if let Some(&prev) = p.distances_km.last() {
            let prev_id = &neighbors[i - 1].id;
            if d < prev || (d == prev && n.id < *prev_id) {
                return Err(Error::invalid(format!(
                    "neighbors of {} are not distance-sorted at position {i}",
                    anchor.id
                )));
            }
        }
        p.neighbor_ids.push(n.id.clone());
        p.neighbor_names.push(n.name.clone());
        p.neighbor_coords.push(normalize_coords(anchor, n, coord_scale));
        p.distances_km.push(d);
    }
    Ok(p)
}

/// Looks up neighbors in the gazetteer and linearizes them.
pub fn pseudo_sentence(gazetteer: &Gazetteer, anchor_id: &str, cfg: &LinearizerConfig) -> Result<PseudoSentence> {
    let anchor = gazetteer
        .get(anchor_id)
        .ok_or_else(|| Error::UnknownEntity(anchor_id.to_string()))?;
    let neighbors: Vec<&GeoEntity> = neighbors_of(gazetteer, anchor_id, cfg.k)?
        .into_iter()
        .map(|n| n.entity)
        .collect();
    linearize(anchor, &neighbors, cfg.coord_scale)
}
