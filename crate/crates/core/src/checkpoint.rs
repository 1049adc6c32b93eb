//! Network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DSPCKPT1"
//! repeated per network:
//!     u32   name length in bytes
//!     [u8]  UTF-8 name
//!     u64   parameter count
//!     [f32] parameters, row-major, in `Network::parameters` order
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::ByteReader;
use crate::error::{Error, Result};
use crate::models::{ModelDims, Models};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSPCKPT1";

/// Optional entry holding the seen-class dynamic prototypes at the end of
/// training, row-major in `seen_ids` order.
pub const STATE_ENTRY: &str = "dynamic_prototypes";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub values: Vec<f32>,
}

pub fn encode_checkpoint(entries: &[CheckpointEntry]) -> Vec<u8> {
    let mut out = Vec::from(&CHECKPOINT_MAGIC[..]);
    for e in entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.values.len() as u64).to_le_bytes());
        for v in &e.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], file: &str) -> Result<Vec<CheckpointEntry>> {
    let mut r = ByteReader::new(bytes, file);
    r.magic(CHECKPOINT_MAGIC, "DSPCKPT1")?;
    let mut entries = Vec::new();
    while !r.at_end() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| r.fail("network name is not UTF-8"))?
            .to_string();
        let count = r.u64()?;
        let values = r.f32s(count)?;
        entries.push(CheckpointEntry { name, values });
    }
    Ok(entries)
}

impl Models {
    pub fn to_checkpoint(&self) -> Vec<CheckpointEntry> {
        self.named()
            .iter()
            .map(|(name, net)| CheckpointEntry {
                name: name.to_string(),
                values: net
                    .parameters()
                    .iter()
                    .flat_map(|p| p.data().iter().copied())
                    .collect(),
            })
            .collect()
    }

    /// Rebuilds networks of shape `dims` from checkpoint entries.
    pub fn from_checkpoint(dims: ModelDims, entries: &[CheckpointEntry]) -> Result<Self> {
        let mut models = Models::new(dims, &mut ChaCha8Rng::seed_from_u64(0));
        for (name, net) in models.named_mut() {
            let entry = entries.iter().find(|e| e.name == name).ok_or_else(|| {
                Error::DimensionMismatch(format!("checkpoint has no `{name}` entry"))
            })?;
            let expected = net.parameter_count();
            if entry.values.len() != expected {
                return Err(Error::DimensionMismatch(format!(
                    "`{name}` holds {} parameters, architecture needs {expected}",
                    entry.values.len()
                )));
            }
            let mut offset = 0;
            for p in net.parameters_mut() {
                let n = p.len();
                *p = Tensor::new(
                    p.rows(),
                    p.cols(),
                    entry.values[offset..offset + n].to_vec(),
                )?;
                offset += n;
            }
        }
        Ok(models)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, encode_checkpoint(&self.to_checkpoint())).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, dims: ModelDims) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let entries = decode_checkpoint(&bytes, &path.display().to_string())?;
        Self::from_checkpoint(dims, &entries)
    }
}

/// Networks plus, optionally, the final training state.
pub fn save_run_checkpoint(path: &Path, models: &Models, state: Option<&Tensor>) -> Result<()> {
    let mut entries = models.to_checkpoint();
    if let Some(z) = state {
        entries.push(CheckpointEntry {
            name: STATE_ENTRY.to_string(),
            values: z.data().to_vec(),
        });
    }
    fs::write(path, encode_checkpoint(&entries)).map_err(|e| Error::io(path, e))
}

/// Inverse of [`save_run_checkpoint`]. The state, when present, must have
/// `seen_classes` rows.
pub fn load_run_checkpoint(
    path: &Path,
    dims: ModelDims,
    seen_classes: usize,
) -> Result<(Models, Option<Tensor>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let entries = decode_checkpoint(&bytes, &path.display().to_string())?;
    let models = Models::from_checkpoint(dims, &entries)?;
    let state = match entries.iter().find(|e| e.name == STATE_ENTRY) {
        None => None,
        Some(e) => {
            if e.values.len() != seen_classes * dims.attr_dim {
                return Err(Error::DimensionMismatch(format!(
                    "`{STATE_ENTRY}` holds {} values, expected {seen_classes}x{}",
                    e.values.len(),
                    dims.attr_dim
                )));
            }
            Some(Tensor::new(seen_classes, dims.attr_dim, e.values.clone())?)
        }
    };
    Ok((models, state))
}
