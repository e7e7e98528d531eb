use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    /// False for buffers such as batch-norm running statistics.
    pub trainable: bool,
}

/// Every tensor of a model keyed by a stable path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name, Param { value, trainable });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    /// Replaces a value keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.shape() != value.shape() {
            return Err(Error::dim(format!(
                "`{name}` has shape {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.values().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in &self.params {
            h.update(name.as_bytes());
            for &d in p.value.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct StoredParam {
    shape: Vec<usize>,
    /// Base64 of the little-endian f64 values.
    data: String,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct StoredCheckpoint {
    config: ModelConfig,
    params: BTreeMap<String, StoredParam>,
}

/// Model configuration plus parameters, serialized as JSON.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let params = self
            .params
            .iter()
            .map(|(name, p)| {
                let bytes: Vec<u8> = p.value.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                let stored = StoredParam {
                    shape: p.value.shape().to_vec(),
                    data: B64.encode(bytes),
                    trainable: p.trainable,
                };
                (name.to_string(), stored)
            })
            .collect();
        let stored = StoredCheckpoint {
            config: self.config.clone(),
            params,
        };
        Ok(serde_json::to_string(&stored)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stored: StoredCheckpoint = serde_json::from_str(text)?;
        stored.config.validate()?;
        let mut params = ParamStore::new();
        for (name, sp) in stored.params {
            let bytes = B64
                .decode(sp.data.as_bytes())
                .map_err(|e| Error::Config(format!("parameter `{name}`: {e}")))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::Config(format!("parameter `{name}`: truncated data")));
            }
            let values = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.insert(name, Tensor::new(&sp.shape, values)?, sp.trainable)?;
        }
        Ok(Checkpoint {
            config: stored.config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_and_missing_names() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::zeros(&[2]), true).unwrap();
        assert!(s.insert("a", Tensor::zeros(&[2]), true).is_err());
        assert!(s.get("b").is_err());
        assert!(s.set("a", Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::from_vec(vec![0.1, -1e-300, f64::MIN_POSITIVE, 1.0 / 3.0]), true)
            .unwrap();
        s.insert("stats", Tensor::from_vec(vec![2.5]), false).unwrap();
        let ck = Checkpoint {
            config: ModelConfig::reduced(),
            params: s,
        };
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.params.get("w").unwrap().data().iter().zip(ck.params.get("w").unwrap().data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.params.digest(), ck.params.digest());
    }
}
