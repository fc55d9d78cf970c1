//! Binary checkpoints: magic, JSON manifest, little-endian f32 tensors.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NetError;

const MAGIC: &[u8; 8] = b"TIHDPCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Everything needed to interpret the tensor payload. `meta` is free-form
/// (variant, config, counters, rng positions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub tensors: Vec<TensorEntry>,
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub data: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&[f32]> {
        let k = self.manifest.tensors.iter().position(|t| t.name == name)?;
        Some(&self.data[k])
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NetError> {
    if ckpt.manifest.tensors.len() != ckpt.data.len() {
        return Err(NetError::Checkpoint("manifest and payload tensor counts differ".into()));
    }
    for (entry, data) in ckpt.manifest.tensors.iter().zip(&ckpt.data) {
        if entry.shape.iter().product::<usize>() != data.len() {
            return Err(NetError::Checkpoint(format!("tensor {} does not match its shape", entry.name)));
        }
    }
    let manifest = serde_json::to_vec(&ckpt.manifest).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + manifest.len() + 4 * ckpt.data.iter().map(Vec::len).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    buf.extend_from_slice(&manifest);
    for t in &ckpt.data {
        for x in t {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    // Write-then-rename so an interrupted save never leaves a torn file.
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NetError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(NetError::Checkpoint("not a checkpoint file".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| NetError::Checkpoint("truncated manifest".into()))?;
    let manifest: CheckpointManifest =
        serde_json::from_slice(body).map_err(|e| NetError::Checkpoint(format!("bad manifest: {e}")))?;
    let mut offset = 16 + len;
    let mut data = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let n: usize = entry.shape.iter().product();
        let raw = bytes
            .get(offset..offset + 4 * n)
            .ok_or_else(|| NetError::Checkpoint(format!("truncated tensor {}", entry.name)))?;
        data.push(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect());
        offset += 4 * n;
    }
    if offset != bytes.len() {
        return Err(NetError::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint { manifest, data })
}
