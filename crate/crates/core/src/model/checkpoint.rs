use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::infer::Model;
use super::params::Parameters;
use super::train::TrainingMeta;
use crate::error::{Error, Result};
use crate::preprocess::NormStats;
use crate::tensor::Array;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CTGVAECK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained model plus the settings and metadata needed to reproduce it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub train_config: TrainConfig,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    train_config: TrainConfig,
    norm: NormStats,
    meta: TrainingMeta,
    parameters: Vec<BlockInfo>,
}

impl ModelCheckpoint {
    /// Layout: magic, `u32` version, `u64` header length, JSON header, then
    /// every parameter as little-endian `f64` in header order.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            config: self.model.config.clone(),
            train_config: self.train_config.clone(),
            norm: self.model.norm,
            meta: self.meta.clone(),
            parameters: self
                .model
                .params
                .iter()
                .map(|(n, a)| BlockInfo {
                    name: n.to_string(),
                    rows: a.rows(),
                    cols: a.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.model.params.size());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, a) in self.model.params.iter() {
            for v in a.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a model checkpoint".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if r.len() < len {
            return Err(Error::Format("truncated checkpoint header".into()));
        }
        let header: Header = serde_json::from_slice(&r[..len])?;
        r = &r[len..];
        if header.format_version != version {
            return Err(Error::Format("checkpoint header version disagrees with preamble".into()));
        }
        let mut params = Parameters::new();
        for b in &header.parameters {
            let n = b.rows * b.cols;
            if r.len() < 8 * n {
                return Err(Error::Format(format!("checkpoint truncated in parameter {}", b.name)));
            }
            let data = r[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            r = &r[8 * n..];
            params.insert(b.name.clone(), Array::new(b.rows, b.cols, data)?)?;
        }
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after checkpoint parameters".into()));
        }
        Ok(Self {
            model: Model::new(header.config, header.norm, params)?,
            train_config: header.train_config,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
