//! Vocabulary, input encoding, spatial embeddings and the transformer encoder.

pub mod checkpoint;
pub mod encode;
pub mod graph;
pub mod params;
pub mod spatial;
pub mod tensor;
pub mod transformer;
pub mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use encode::{
    encode_anchor, encode_neighbor, encode_plain, encode_text_span, Coord, EncodedInput, SEGMENT_ANCHOR, SEGMENT_NEIGHBOR,
};
pub use graph::{Backward, Graph, NodeId};
pub use params::{Grads, ParamId, ParamStore};
pub use spatial::spatial_embedding;
pub use tensor::Matrix;
pub use transformer::{entity_representation, Ablation, Head, Model, ModelConfig, N_TAGS, N_TYPES};
pub use vocab::{tokenize, Token, Vocab};
