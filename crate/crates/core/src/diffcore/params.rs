use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let params: Vec<ParamRecord> = self
            .names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| ParamRecord { name: n.clone(), shape: t.shape.clone(), data: t.data.clone() })
            .collect();
        let hash = Checkpoint::digest(&params);
        Checkpoint { hash, params }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if Checkpoint::digest(&ck.params) != ck.hash {
            return Err(Error::Checkpoint("hash mismatch".into()));
        }
        let mut s = ParamStore::new();
        for p in &ck.params {
            let t = Tensor::new(&p.shape, p.data.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
            s.add(p.name.clone(), t);
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serialized parameters with a SHA-256 over names, shapes and exact bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hash: String,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn digest(params: &[ParamRecord]) -> String {
        let mut h = Sha256::new();
        for p in params {
            h.update((p.name.len() as u64).to_le_bytes());
            h.update(p.name.as_bytes());
            h.update((p.shape.len() as u64).to_le_bytes());
            for &s in &p.shape {
                h.update((s as u64).to_le_bytes());
            }
            for v in &p.data {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if Checkpoint::digest(&ck.params) != ck.hash {
            return Err(Error::Checkpoint(format!("hash mismatch in {}", path.display())));
        }
        Ok(ck)
    }
}
