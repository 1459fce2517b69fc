use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Matrix;
use super::transformer::{Head, Model, ModelConfig};
use crate::container;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Offset into the payload, in `f32` elements.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    trained_heads: BTreeSet<Head>,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut data = Vec::with_capacity(model.params().num_scalars());
    for (_, name, t) in model.params().iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: [t.rows(), t.cols()],
            offset: data.len(),
        });
        data.extend(t.data().iter().map(|&v| v as f32));
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        trained_heads: model.trained_heads().clone(),
        tensors,
    };
    container::encode(&header, &data)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let (header, data): (Header, Vec<f32>) = container::decode(bytes)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format_version {}", header.format_version)));
    }
    let mut store = ParamStore::default();
    for t in &header.tensors {
        let n = t.shape[0] * t.shape[1];
        let slice = data
            .get(t.offset..t.offset + n)
            .ok_or_else(|| Error::Format(format!("tensor {} exceeds payload", t.name)))?;
        if store.id(&t.name).is_some() {
            return Err(Error::Format(format!("duplicate tensor {}", t.name)));
        }
        store.add(
            t.name.clone(),
            Matrix::from_vec(t.shape[0], t.shape[1], slice.iter().map(|&v| v as f64).collect()),
        );
    }
    if store.num_scalars() != data.len() {
        return Err(Error::Format("payload has unreferenced data".into()));
    }
    Model::from_parts(header.config, store, header.trained_heads)
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    crate::io::write_atomic(path, &to_bytes(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    from_bytes(&crate::io::read_bytes(path)?)
}
