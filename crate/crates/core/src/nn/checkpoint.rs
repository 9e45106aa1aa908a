//! Parameter checkpoints.
//!
//! A checkpoint is a JSON document:
//!
//! ```text
//! {
//!   "format": "scratchnet-checkpoint",
//!   "version": 1,
//!   "tensors": [ { "name": "0.weight", "shape": [300, 784], "data": [ ... ] }, ... ]
//! }
//! ```
//!
//! Tensors appear in the module's parameter order; names follow the `index.param`
//! convention of [`Sequential`](crate::nn::Sequential). Values are written with the
//! shortest representation that parses back to the identical `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Module;

pub const CHECKPOINT_FORMAT: &str = "scratchnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<CheckpointTensor>,
}

impl Checkpoint {
    pub fn capture(m: &dyn Module) -> Self {
        let tensors = m
            .parameters()
            .into_iter()
            .map(|p| CheckpointTensor {
                name: p.name,
                shape: p.value.shape().to_vec(),
                data: p.value.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            tensors,
        }
    }

    /// Copies the stored values into `m`, checking names and shapes.
    pub fn restore(&self, m: &mut dyn Module) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut params = m.parameters_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::invalid(format!(
                "checkpoint holds {} tensors, module has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (p, t) in params.iter_mut().zip(&self.tensors) {
            if p.name != t.name || p.value.shape() != t.shape.as_slice() || t.data.len() != p.value.len() {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {} {:?} does not match parameter {} {:?}",
                    t.name,
                    t.shape,
                    p.name,
                    p.value.shape()
                )));
            }
        }
        for (p, t) in params.iter_mut().zip(&self.tensors) {
            p.value.data_mut().copy_from_slice(&t.data);
        }
        Ok(())
    }
}

pub fn save_checkpoint(m: &dyn Module, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::capture(m))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(m: &mut dyn Module, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.restore(m)
}
