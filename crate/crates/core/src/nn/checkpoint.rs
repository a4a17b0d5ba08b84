//! Single-file model checkpoints.
//!
//! Layout: the magic bytes `CATH1`, a little-endian `u32` length, that many
//! bytes of JSON ([`CheckpointMeta`]), then every stored tensor of the model in
//! declaration order as little-endian `f32` values.

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAGIC: &[u8; 5] = b"CATH1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub epochs_completed: usize,
    /// `(width, height)` of the training inputs, if known.
    pub input_size: Option<(usize, usize)>,
}

pub fn encode_checkpoint(model: &Model, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    if meta.model != *model.config() {
        return Err(Error::Checkpoint("metadata does not describe this model".into()));
    }
    let header = serde_json::to_vec(meta)?;
    let mut out = Vec::with_capacity(9 + header.len() + 4 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in model.state() {
        for &v in t {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, CheckpointMeta)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 9 || &bytes[..5] != MAGIC {
        return Err(bad("missing CATH1 magic"));
    }
    let len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let header = bytes.get(9..9 + len).ok_or_else(|| bad("truncated header"))?;
    let meta: CheckpointMeta = serde_json::from_slice(header)?;
    let mut model = Model::new(meta.model.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut body = bytes[9 + len..].chunks_exact(4);
    let expected = model.parameter_count();
    if body.len() != expected || !body.remainder().is_empty() {
        return Err(bad(&format!("expected {expected} values, found {} bytes", bytes.len() - 9 - len)));
    }
    for t in model.state_mut() {
        for v in t.iter_mut() {
            let c = body.next().expect("length checked");
            *v = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        }
    }
    Ok((model, meta))
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model, meta)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    decode_checkpoint(&std::fs::read(path)?)
}
