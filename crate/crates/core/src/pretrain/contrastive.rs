use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Graph, Matrix, NodeId, ParamStore};

/// Which entries of the `[S_geo | S_loc]` row enter the denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// All 2N candidates except the positive `geo_i`.
    PaperExact,
    /// All 2N candidates except the sample itself (`loc_i`).
    #[default]
    Simclr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    #[serde(default)]
    pub candidate_mode: CandidateMode,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.07,
            candidate_mode: CandidateMode::Simclr,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveLoss {
    pub mean: f64,
    pub per_sample: Vec<f64>,
}

fn check_rows(m: &Matrix, what: &str) -> Result<()> {
    for r in 0..m.rows() {
        let row = m.row(r);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} row {r}")));
        }
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid(format!("{what} row {r} has zero norm")));
        }
    }
    Ok(())
}

/// Adds the loss to `g`; returns `(mean, per-sample N×1)` nodes.
/// Caller guarantees shapes match, N ≥ 2 and no zero rows.
pub fn contrastive_nodes(g: &mut Graph<'_>, h_loc: NodeId, h_geo: NodeId, cfg: &ContrastiveConfig) -> (NodeId, NodeId) {
    let n = g.value(h_loc).rows();
    let loc = g.normalize_rows(h_loc);
    let geo = g.normalize_rows(h_geo);
    let s_geo = g.matmul_t(loc, geo);
    let s_loc = g.matmul_t(loc, loc);
    let s = g.concat_cols(vec![s_geo, s_loc]);
    let logits = g.scale(s, 1.0 / cfg.temperature);
    let mut mask = vec![true; n * 2 * n];
    for i in 0..n {
        let drop = match cfg.candidate_mode {
            CandidateMode::PaperExact => i,
            CandidateMode::Simclr => n + i,
        };
        mask[i * 2 * n + drop] = false;
    }
    let lse = g.masked_logsumexp(logits, &mask);
    let pos = g.pick(logits, (0..n).map(|i| (i, i)).collect());
    let per = g.sub(lse, pos);
    (g.mean(per), per)
}

pub(crate) fn validate_inputs(h_loc: &Matrix, h_geo: &Matrix) -> Result<()> {
    if h_loc.shape() != h_geo.shape() {
        return Err(Error::Shape(format!("H_loc {:?} vs H_geo {:?}", h_loc.shape(), h_geo.shape())));
    }
    if h_loc.rows() < 2 {
        return Err(Error::invalid("contrastive loss needs N >= 2"));
    }
    check_rows(h_loc, "H_loc")?;
    check_rows(h_geo, "H_geo")
}

/// Cosine-similarity InfoNCE over in-batch candidates, averaged over rows.
pub fn contrastive_loss(h_loc: &Matrix, h_geo: &Matrix, cfg: &ContrastiveConfig) -> Result<ContrastiveLoss> {
    cfg.validate()?;
    validate_inputs(h_loc, h_geo)?;
    let empty = ParamStore::default();
    let mut g = Graph::new(&empty);
    let l = g.input(h_loc.clone());
    let r = g.input(h_geo.clone());
    let (mean, per) = contrastive_nodes(&mut g, l, r, cfg);
    Ok(ContrastiveLoss {
        mean: g.value(mean).get(0, 0),
        per_sample: g.value(per).data().to_vec(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct scalar evaluation of the loss definition.
    pub(crate) fn oracle(loc: &[Vec<f64>], geo: &[Vec<f64>], tau: f64, mode: CandidateMode) -> Vec<f64> {
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let n = loc.len();
        (0..n)
            .map(|i| {
                let mut denom = 0.0;
                for j in 0..2 * n {
                    let (c, is_geo) = if j < n { (&geo[j], true) } else { (&loc[j - n], false) };
                    let skip = match mode {
                        CandidateMode::PaperExact => is_geo && j == i,
                        CandidateMode::Simclr => !is_geo && j - n == i,
                    };
                    if !skip {
                        denom += (cos(&loc[i], c) / tau).exp();
                    }
                }
                -((cos(&loc[i], &geo[i]) / tau).exp() / denom).ln()
            })
            .collect()
    }

    fn cfg(tau: f64, mode: CandidateMode) -> ContrastiveConfig {
        ContrastiveConfig {
            temperature: tau,
            candidate_mode: mode,
        }
    }

    #[test]
    fn all_equal_paper_exact() {
        for n in [2usize, 4, 8] {
            let h = Matrix::from_vec(n, 3, vec![0.5; n * 3]);
            let l = contrastive_loss(&h, &h, &cfg(0.07, CandidateMode::PaperExact)).unwrap();
            let want = ((2 * n - 1) as f64).ln();
            for v in &l.per_sample {
                assert!((v - want).abs() < 1e-9);
            }
            assert!((l.mean - want).abs() < 1e-9);
        }
        let h = Matrix::from_vec(2, 2, vec![1.0; 4]);
        let l = contrastive_loss(&h, &h, &cfg(0.07, CandidateMode::PaperExact)).unwrap();
        assert!((l.mean - 1.098612).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_pairs_simclr() {
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let l = contrastive_loss(&h, &h, &cfg(1.0, CandidateMode::Simclr)).unwrap();
        let e = 1f64.exp();
        let want = -(e / (e + 2.0)).ln();
        for v in &l.per_sample {
            assert!((v - want).abs() < 1e-12);
        }
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!((l.per_sample[0] - oracle(&rows, &rows, 1.0, CandidateMode::Simclr)[0]).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let ok = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let zero = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let one = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let c = ContrastiveConfig::default();
        assert!(contrastive_loss(&ok, &zero, &c).is_err());
        assert!(contrastive_loss(&one, &one, &c).is_err());
        assert!(contrastive_loss(&ok, &ok, &cfg(0.0, CandidateMode::Simclr)).is_err());
    }

    fn rows_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        (2usize..7, 1usize..6).prop_flat_map(|(n, d)| {
            let row = prop::collection::vec(0.1f64..2.0, d).prop_map(|mut r| {
                r[0] += 0.5;
                r
            });
            let sign = prop::collection::vec(prop::bool::ANY, d);
            let signed = (row, sign).prop_map(|(r, s)| r.into_iter().zip(s).map(|(v, b)| if b { v } else { -v }).collect::<Vec<_>>());
            (prop::collection::vec(signed.clone(), n), prop::collection::vec(signed, n))
        })
    }

    proptest! {
        #[test]
        fn matches_oracle((loc, geo) in rows_strategy(), tau in 0.05f64..2.0, exact in prop::bool::ANY) {
            let mode = if exact { CandidateMode::PaperExact } else { CandidateMode::Simclr };
            let got = contrastive_loss(&Matrix::from_rows(&loc), &Matrix::from_rows(&geo), &cfg(tau, mode)).unwrap();
            for (g, w) in got.per_sample.iter().zip(oracle(&loc, &geo, tau, mode)) {
                prop_assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0));
            }
        }

        #[test]
        fn equal_similarity_identity(n in 2usize..10, tau in 0.01f64..5.0, v in 0.1f64..10.0) {
            let h = Matrix::from_vec(n, 4, vec![v; n * 4]);
            let l = contrastive_loss(&h, &h, &cfg(tau, CandidateMode::PaperExact)).unwrap();
            prop_assert!((l.mean - ((2 * n - 1) as f64).ln()).abs() < 1e-9);
        }

        #[test]
        fn scale_invariant((loc, geo) in rows_strategy()) {
            let c = ContrastiveConfig::default();
            let a = contrastive_loss(&Matrix::from_rows(&loc), &Matrix::from_rows(&geo), &c).unwrap();
            let s = |m: &Vec<Vec<f64>>| Matrix::from_rows(&m.iter().map(|r| r.iter().map(|v| v * 5.0).collect()).collect::<Vec<_>>());
            let b = contrastive_loss(&s(&loc), &s(&geo), &c).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-9);
        }

        #[test]
        fn permutation_invariant((loc, geo) in rows_strategy(), seed in 0u64..1000) {
            let n = loc.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.rotate_left((seed as usize) % n);
            perm.swap(0, n - 1);
            let c = ContrastiveConfig::default();
            let a = contrastive_loss(&Matrix::from_rows(&loc), &Matrix::from_rows(&geo), &c).unwrap();
            let pl: Vec<_> = perm.iter().map(|&i| loc[i].clone()).collect();
            let pg: Vec<_> = perm.iter().map(|&i| geo[i].clone()).collect();
            let b = contrastive_loss(&Matrix::from_rows(&pl), &Matrix::from_rows(&pg), &c).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-9);
        }
    }
}
