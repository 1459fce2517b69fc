use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geodata::{GeoEntity, Gazetteer};
use crate::linearizer::geodesic_distance;
use crate::model::tokenize;

pub const HARD_RADIUS_KM: f64 = 10.0;

fn name_tokens(name: &str) -> BTreeSet<String> {
    tokenize(name)
        .into_iter()
        .filter(|t| t.text.chars().any(char::is_alphanumeric))
        .map(|t| t.text)
        .collect()
}

fn is_hard(anchor: &GeoEntity, anchor_tokens: &BTreeSet<String>, other: &GeoEntity) -> bool {
    if name_tokens(&other.name).intersection(anchor_tokens).next().is_some() {
        return true;
    }
    geodesic_distance(anchor.coords(), other.coords()).is_ok_and(|d| d <= HARD_RADIUS_KM)
}

/// Uniform choice among `candidates` that share a name token with `anchor`
/// or lie within 10 km; uniform over all candidates when none qualifies.
/// Entities whose id is in `exclude` or equals the anchor's are skipped.
pub fn mine_hard_negative_among<'g, R: Rng>(
    anchor: &GeoEntity,
    candidates: &[&'g GeoEntity],
    exclude: &BTreeSet<&str>,
    rng: &mut R,
) -> Option<&'g GeoEntity> {
    let pool: Vec<&GeoEntity> = candidates
        .iter()
        .copied()
        .filter(|e| e.id != anchor.id && !exclude.contains(e.id.as_str()))
        .collect();
    if pool.is_empty() {
        return None;
    }
    let tokens = name_tokens(&anchor.name);
    let hard: Vec<&GeoEntity> = pool.iter().copied().filter(|e| is_hard(anchor, &tokens, e)).collect();
    let from = if hard.is_empty() { &pool } else { &hard };
    Some(from[rng.random_range(0..from.len())])
}

pub fn mine_hard_negative<'g, R: Rng>(anchor: &GeoEntity, gazetteer: &'g Gazetteer, rng: &mut R) -> Result<&'g GeoEntity> {
    if gazetteer.len() < 2 {
        return Err(Error::invalid("hard-negative mining needs at least 2 entities"));
    }
    let all: Vec<&GeoEntity> = gazetteer.entities().iter().collect();
    mine_hard_negative_among(anchor, &all, &BTreeSet::new(), rng)
        .ok_or_else(|| Error::invalid(format!("no entity other than {} to sample", anchor.id)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::EntityClass;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ent(id: &str, name: &str, lat: f64, lon: f64) -> GeoEntity {
        GeoEntity::new(id, name, lat, lon, EntityClass::Other)
    }

    #[test]
    fn shared_name() {
        let g = Gazetteer::from_entities(vec![
            ent("ca", "San Jose", 37.33, -121.89),
            ent("cr", "San Jose", 9.93, -84.08),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mine_hard_negative(&g.entities()[0], &g, &mut rng).unwrap().id, "cr");
    }

    #[test]
    fn nearby() {
        // 0.045 degrees of latitude is about 5 km
        let g = Gazetteer::from_entities(vec![
            ent("a", "Alpha", 10.0, 10.0),
            ent("b", "Beta", 10.045, 10.0),
            ent("c", "Gamma", 14.5, 10.0),
            ent("d", "Delta", 5.5, 10.0),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(mine_hard_negative(&g.entities()[0], &g, &mut rng).unwrap().id, "b");
        }
    }

    #[test]
    fn fallback_is_seeded_uniform() {
        let g = Gazetteer::from_entities(vec![
            ent("a", "Alpha", 0.0, 0.0),
            ent("b", "Beta", 20.0, 0.0),
            ent("c", "Gamma", 40.0, 0.0),
            ent("d", "Delta", -20.0, 0.0),
        ])
        .unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..30)
                .map(|_| mine_hard_negative(&g.entities()[0], &g, &mut rng).unwrap().id.clone())
                .collect::<Vec<_>>()
        };
        let a = draw(11);
        assert_eq!(a, draw(11));
        assert!(a.iter().all(|id| id != "a"));
        for id in ["b", "c", "d"] {
            assert!(a.iter().any(|x| x == id), "{id} never drawn");
        }
    }

    #[test]
    fn singleton_rejected() {
        let g = Gazetteer::from_entities(vec![ent("a", "Alpha", 0.0, 0.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mine_hard_negative(&g.entities()[0], &g, &mut rng).is_err());
    }

    #[test]
    fn exclusion() {
        let es = [ent("a", "San Jose", 0.0, 0.0), ent("b", "San Jose", 1.0, 0.0), ent("c", "Other", 50.0, 0.0)];
        let refs: Vec<&GeoEntity> = es.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex: BTreeSet<&str> = ["b"].into_iter().collect();
        assert_eq!(mine_hard_negative_among(&es[0], &refs, &ex, &mut rng).unwrap().id, "c");
        let ex: BTreeSet<&str> = ["b", "c"].into_iter().collect();
        assert!(mine_hard_negative_among(&es[0], &refs, &ex, &mut rng).is_none());
    }
}
