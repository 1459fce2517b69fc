//! Geospatially grounded text/geo encoder: data pipeline, pretraining,
//! downstream tasks and metrics.

pub mod container;
pub mod error;
pub mod eval;
pub mod geodata;
pub mod io;
pub mod linearizer;
pub mod model;
pub mod pipeline;
pub mod pretrain;
pub mod summarizer;
pub mod synth;
pub mod tasks;
pub mod text;

pub use error::{Error, Result};
