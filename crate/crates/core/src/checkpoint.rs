//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "SCAPCKPT"
//! version      u32
//! header_len   u64
//! header       JSON      {"config": ModelConfig, "vocab": [token, ...]}
//! n_params     u32
//! n_params ×   name_len u32, name (UTF-8), rank u32, dims u64 × rank,
//!              values f64 × Π dims
//! trailer      4 bytes   "END."
//! ```
//!
//! Parameters are written in name order, so saving the same model twice
//! yields identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{CaptionModel, ModelConfig, Params};

pub const MAGIC: &[u8; 8] = b"SCAPCKPT";
pub const TRAILER: &[u8; 4] = b"END.";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: CaptionModel,
    pub vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocabulary,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header { config: self.model.config.clone(), vocab: self.vocab.clone() })?;
        let mut out = Vec::with_capacity(64 + header.len() + self.model.params.num_values() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.model.params.len() as u32).to_le_bytes());
        for (name, t) in self.model.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(TRAILER);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::CheckpointVersion { found: version, expected: VERSION });
        }
        let header_len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
        let n = r.u32()?;
        let mut params = Params::default();
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::CorruptCheckpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&c| c.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::CorruptCheckpoint(format!("parameter `{name}` overruns the file")))?;
            let data = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            params.insert(&name, Tensor::new(shape, data)?);
        }
        if r.take(4)? != TRAILER {
            return Err(Error::CorruptCheckpoint("missing trailer".into()));
        }
        if r.remaining() != 0 {
            return Err(Error::CorruptCheckpoint("trailing bytes after trailer".into()));
        }
        let model = CaptionModel::from_params(header.config, params)
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        if model.config.vocab_size != header.vocab.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "vocabulary has {} tokens, model expects {}",
                header.vocab.len(),
                model.config.vocab_size
            )));
        }
        Ok(Checkpoint { model, vocab: header.vocab })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::CorruptCheckpoint(format!("truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
