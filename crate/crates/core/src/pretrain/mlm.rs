use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::vocab::{CLS, MASK, PAD, RESERVED, SEP};
use crate::model::EncodedInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub mask_rate: f64,
    pub replace_mask: f64,
    pub replace_random: f64,
    pub keep: f64,
}

impl Default for MlmConfig {
    fn default() -> Self {
        MlmConfig {
            mask_rate: 0.15,
            replace_mask: 0.8,
            replace_random: 0.1,
            keep: 0.1,
        }
    }
}

impl MlmConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.mask_rate, self.replace_mask, self.replace_random, self.keep];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!("MLM probabilities out of [0, 1]: {probs:?}")));
        }
        if (self.replace_mask + self.replace_random + self.keep - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("MLM replacement split must sum to 1"));
        }
        Ok(())
    }
}

pub fn is_special(id: u32) -> bool {
    matches!(id, PAD | CLS | SEP | MASK)
}

/// Returns the corrupted input and per-position labels (`None` = ignore).
/// Random replacements are drawn from the non-reserved ids.
pub fn mlm_mask<R: Rng>(
    input: &EncodedInput,
    cfg: &MlmConfig,
    vocab_size: usize,
    rng: &mut R,
) -> (EncodedInput, Vec<Option<u32>>) {
    let mut out = input.clone();
    let mut labels = vec![None; input.len()];
    let first = RESERVED.len() as u32;
    for i in 0..input.len() {
        let id = input.token_ids[i];
        if is_special(id) || input.attention_mask[i] == 0 {
            continue;
        }
        if rng.random::<f64>() >= cfg.mask_rate {
            continue;
        }
        labels[i] = Some(id);
        let u: f64 = rng.random();
        if u < cfg.replace_mask {
            out.token_ids[i] = MASK;
        } else if u < cfg.replace_mask + cfg.replace_random && (vocab_size as u32) > first {
            out.token_ids[i] = rng.random_range(first..vocab_size as u32);
        }
    }
    (out, labels)
}

/// `loc` then `geo` without its leading `[CLS]`. Geo positions restart at 0.
/// Overlong pairs lose body tokens from the tail of the longer part; the
/// pair is rejected when that would cut into an entity span.
pub fn concat_pair(loc: &EncodedInput, geo: &EncodedInput, max_seq_len: usize) -> Result<EncodedInput> {
    loc.check_lanes()?;
    geo.check_lanes()?;
    if loc.len() < 2 || geo.len() < 2 || geo.token_ids[0] != CLS {
        return Err(Error::invalid("concat_pair expects framed inputs"));
    }
    // body lengths, excluding [CLS] and the trailing [SEP]
    let mut lb = loc.len() - 2;
    let mut gb = geo.len() - 2;
    let min_l = loc.entity_span.1 - 1;
    let min_g = geo.entity_span.1 - 1;
    while lb + gb + 3 > max_seq_len {
        let cut_loc = lb >= gb;
        if cut_loc && lb > min_l {
            lb -= 1;
        } else if gb > min_g {
            gb -= 1;
        } else if lb > min_l {
            lb -= 1;
        } else {
            return Err(Error::invalid(format!(
                "pair of {} + {} tokens cannot fit {max_seq_len} with entity spans intact",
                loc.len(),
                geo.len()
            )));
        }
    }
    let loc_idx: Vec<usize> = (0..=lb).chain([loc.len() - 1]).collect();
    let geo_idx: Vec<usize> = (1..=gb).chain([geo.len() - 1]).collect();
    let mut out = EncodedInput {
        token_ids: Vec::new(),
        position_ids: Vec::new(),
        segment_ids: Vec::new(),
        x_coords: Vec::new(),
        y_coords: Vec::new(),
        entity_span: loc.entity_span,
        attention_mask: Vec::new(),
    };
    for (src, idx) in [(loc, &loc_idx), (geo, &geo_idx)] {
        for (p, &i) in idx.iter().enumerate() {
            out.token_ids.push(src.token_ids[i]);
            out.position_ids.push(p);
            out.segment_ids.push(src.segment_ids[i]);
            out.x_coords.push(src.x_coords[i]);
            out.y_coords.push(src.y_coords[i]);
            out.attention_mask.push(src.attention_mask[i]);
        }
    }
    Ok(out)
}
