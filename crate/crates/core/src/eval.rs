//! Precision/recall/F1 at token and entity level, R@k and micro F1.

use std::collections::BTreeSet;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl PrfReport {
    pub fn from_counts(tp: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        // 2tp / (predicted + gold): the harmonic mean of P and R without the
        // extra rounding of the ratio form
        let f1 = ratio(2 * tp, predicted + gold);
        PrfReport {
            precision,
            recall,
            f1,
            tp,
            predicted,
            gold,
        }
    }
}

/// Per-position scores for one target label.
pub fn token_prf<T: PartialEq>(pred: &[T], gold: &[T], target: &T) -> Result<PrfReport> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!("{} predicted vs {} gold tags", pred.len(), gold.len())));
    }
    let mut tp = 0;
    let mut np = 0;
    let mut ng = 0;
    for (p, g) in pred.iter().zip(gold) {
        let (ip, ig) = (p == target, g == target);
        np += ip as usize;
        ng += ig as usize;
        tp += (ip && ig) as usize;
    }
    Ok(PrfReport::from_counts(tp, np, ng))
}

/// Exact-match span scores pooled over documents; duplicates within a
/// document count once.
pub fn entity_prf(pred: &[Vec<(usize, usize)>], gold: &[Vec<(usize, usize)>]) -> Result<PrfReport> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!("{} predicted vs {} gold documents", pred.len(), gold.len())));
    }
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let p: BTreeSet<_> = p.iter().collect();
        let g: BTreeSet<_> = g.iter().collect();
        tp += p.intersection(&g).count();
        np += p.len();
        ng += g.len();
    }
    Ok(PrfReport::from_counts(tp, np, ng))
}

/// Fraction of queries whose gold id is among the first `k` candidates.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[Vec<S>], gold: &[S], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if ranked.is_empty() || ranked.len() != gold.len() {
        return Err(Error::invalid(format!("{} rankings for {} gold ids", ranked.len(), gold.len())));
    }
    let hits = ranked
        .iter()
        .zip(gold)
        .filter(|(r, g)| r.iter().take(k).any(|c| c.as_ref() == g.as_ref()))
        .count();
    Ok(hits as f64 / ranked.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroF1<T> {
    pub per_class: Vec<(T, PrfReport)>,
    pub micro: PrfReport,
}

/// One-vs-rest scores for each class and pooled micro scores.
pub fn micro_f1<T: PartialEq + Clone + Debug>(pred: &[T], gold: &[T], classes: &[T]) -> Result<MicroF1<T>> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!("{} predicted vs {} gold labels", pred.len(), gold.len())));
    }
    let index = |l: &T| {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::invalid(format!("unknown label {l:?}")))
    };
    let k = classes.len();
    let mut tp = vec![0; k];
    let mut np = vec![0; k];
    let mut ng = vec![0; k];
    for (p, g) in pred.iter().zip(gold) {
        let (ip, ig) = (index(p)?, index(g)?);
        np[ip] += 1;
        ng[ig] += 1;
        if ip == ig {
            tp[ip] += 1;
        }
    }
    let per_class = (0..k)
        .map(|c| (classes[c].clone(), PrfReport::from_counts(tp[c], np[c], ng[c])))
        .collect();
    let micro = PrfReport::from_counts(tp.iter().sum(), np.iter().sum(), ng.iter().sum());
    Ok(MicroF1 { per_class, micro })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::BioTag::{self, B, I, O};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn token_fixture() {
        let gold = [B, B, B, B, O, I];
        let pred = [B, B, O, O, B, I];
        let r = token_prf(&pred, &gold, &B).unwrap();
        assert_eq!((r.tp, r.predicted, r.gold), (2, 3, 4));
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall - 0.5).abs() < 1e-15);
        assert!((r.f1 - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(token_prf(&gold, &gold, &B).unwrap().f1, 1.0);
        assert!(token_prf(&pred[..2], &gold, &B).is_err());
    }

    #[test]
    fn entity_fixture() {
        assert_eq!(entity_prf(&[vec![(1, 3)]], &[vec![(1, 3)]]).unwrap().f1, 1.0);
        let r = entity_prf(&[vec![(1, 2)]], &[vec![(1, 3)]]).unwrap();
        assert_eq!((r.tp, r.f1), (0, 0.0));
    }

    #[test]
    fn recall_fixture() {
        let ranked = vec![vec!["a", "b", "g"]];
        let gold = ["g"];
        assert_eq!(recall_at_k(&ranked, &gold, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&ranked, &gold, 5).unwrap(), 1.0);
        assert_eq!(recall_at_k(&ranked, &gold, 10).unwrap(), 1.0);
        assert!(recall_at_k(&ranked, &gold, 0).is_err());
        assert!(recall_at_k::<&str>(&[], &[], 1).is_err());
    }

    #[test]
    fn micro_fixture() {
        // confusion rows are gold, columns predicted
        let conf = [[2, 1, 0], [0, 2, 0], [1, 0, 4]];
        let mut pred = Vec::new();
        let mut gold = Vec::new();
        for (g, row) in conf.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    gold.push(g);
                    pred.push(p);
                }
            }
        }
        let m = micro_f1(&pred, &gold, &[0, 1, 2]).unwrap();
        assert!((m.micro.f1 - 0.8).abs() < 1e-15);
        assert!(micro_f1(&[5], &[0], &[0, 1]).is_err());
        let same = micro_f1(&gold, &gold, &[0, 1, 2]).unwrap();
        assert!(same.per_class.iter().all(|(_, r)| r.f1 == 1.0));
    }

    fn naive_token(pred: &[BioTag], gold: &[BioTag], t: BioTag) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for i in 0..pred.len() {
            if pred[i] == t && gold[i] == t {
                c.0 += 1;
            }
            if pred[i] == t {
                c.1 += 1;
            }
            if gold[i] == t {
                c.2 += 1;
            }
        }
        c
    }

    #[test]
    fn fuzzed_against_counters() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..300 {
            let n = rng.random_range(0..30);
            let tag = |r: &mut ChaCha8Rng| [B, I, O][r.random_range(0..3)];
            let pred: Vec<BioTag> = (0..n).map(|_| tag(&mut rng)).collect();
            let gold: Vec<BioTag> = (0..n).map(|_| tag(&mut rng)).collect();
            for t in [B, I, O] {
                let r = token_prf(&pred, &gold, &t).unwrap();
                assert_eq!((r.tp, r.predicted, r.gold), naive_token(&pred, &gold, t));
            }
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let guess: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            if n > 0 {
                let m = micro_f1(&guess, &labels, &[0, 1, 2, 3]).unwrap();
                let acc = guess.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / n as f64;
                assert!((m.micro.f1 - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recall_monotone_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let q = rng.random_range(1..10);
            let ranked: Vec<Vec<String>> = (0..q)
                .map(|_| (0..rng.random_range(0..8)).map(|_| rng.random_range(0..10).to_string()).collect())
                .collect();
            let gold: Vec<String> = (0..q).map(|_| rng.random_range(0..10).to_string()).collect();
            let mut prev = 0.0;
            for k in 1..10 {
                let r = recall_at_k(&ranked, &gold, k).unwrap();
                assert!(r >= prev && (0.0..=1.0).contains(&r));
                prev = r;
            }
        }
    }
}
