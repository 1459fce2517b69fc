//! Binary container: `u64` LE header length, JSON header, LE `f32` payload.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;

pub fn encode<H: Serialize>(header: &H, data: &[f32]) -> Result<Vec<u8>> {
    let head = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(8 + head.len() + data.len() * 4);
    buf.extend_from_slice(&(head.len() as u64).to_le_bytes());
    buf.extend_from_slice(&head);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f32>)> {
    if bytes.len() < 8 {
        return Err(Error::Format("file shorter than header length field".into()));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(8..8usize.saturating_add(n)).ok_or_else(|| Error::Format("truncated header".into()))?;
    let header = serde_json::from_slice(body).map_err(|e| Error::Format(format!("header: {e}")))?;
    let payload = &bytes[8 + n..];
    if !payload.len().is_multiple_of(4) {
        return Err(Error::Format(format!("payload of {} bytes is not f32-aligned", payload.len())));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((header, data))
}

pub fn write<H: Serialize>(path: &Path, header: &H, data: &[f32]) -> Result<()> {
    io::write_atomic(path, &encode(header, data)?)
}

pub fn read<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f32>)> {
    decode(&io::read_bytes(path)?)
}
