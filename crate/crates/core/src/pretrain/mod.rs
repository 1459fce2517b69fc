//! Paired-view pretraining: batch assembly, contrastive and masked-token
//! objectives, optimizer and loop.

pub mod contrastive;
pub mod mlm;
pub mod negatives;
pub mod optim;
pub mod trainer;

pub use contrastive::{contrastive_loss, contrastive_nodes, CandidateMode, ContrastiveConfig, ContrastiveLoss};
pub use mlm::{concat_pair, mlm_mask, MlmConfig};
pub use negatives::{mine_hard_negative, mine_hard_negative_among, HARD_RADIUS_KM};
pub use optim::Adam;
pub use trainer::{
    loss_and_grads, mask_batch, pretrain, pretrain_step, BatchSampler, LossReport, MaskedPair, NegativeKind, PairBatch,
    TrainingConfig, TrainingPair,
};
