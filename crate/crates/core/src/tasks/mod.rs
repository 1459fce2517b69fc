//! Downstream adaptation: toponym recognition, toponym linking and
//! geo-entity typing.

pub mod bio;
pub mod linking;
pub mod recognition;
pub mod typing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Ablation, Grads, Model};

pub use bio::{spans_to_tags, tags_to_spans, BioTag};
pub use linking::{build_linking_index, link_description, link_toponym, LinkCandidate, LinkingIndex};
pub use recognition::{finetune_recognition, predict_tags, recognition_examples, RecognitionExample};
pub use typing::{
    finetune_typing, load_typing_records, predict_type, split_train_test, typing_samples, TypingRecord, TypingSample,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Restrict updates to the task head.
    pub head_only: bool,
    pub ablation: Ablation,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            steps: 200,
            lr: 1e-3,
            batch_size: 8,
            seed: 0,
            head_only: false,
            ablation: Ablation::default(),
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("fine-tuning needs batch_size >= 1 and lr > 0"));
        }
        Ok(())
    }
}

pub(crate) fn restrict_to_head(model: &Model, grads: &mut Grads, head_prefix: &str) {
    let params = model.params();
    grads.retain(|id| params.name(id).starts_with(head_prefix));
}
