//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "DRAASEQC"
//! version    u32
//! metadata   u64 length + UTF-8 JSON
//! tensors    u32 count, then per tensor:
//!              u32 name length + name, u32 rank, u64 dims[rank], f64 data
//! crc32      u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::TrainConfig;
use super::trainer::EpochRecord;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;
use crate::text::{EmbeddingTable, Vocabulary};

pub const MAGIC: &[u8; 8] = b"DRAASEQC";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to resume inference, evaluation or inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
    pub adam: Option<AdamState>,
    pub history: Vec<EpochRecord>,
    pub corpus_fingerprint: u64,
    /// Epoch whose parameters these are; `None` when untrained.
    pub best_epoch: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: TrainConfig,
    vocab: Vocabulary,
    history: Vec<EpochRecord>,
    corpus_fingerprint: u64,
    best_epoch: Option<usize>,
    embedding_dim: usize,
    embedding_trainable: bool,
    embedding_coverage: f64,
    adam_t: Option<u64>,
}

fn put_tensor(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in t.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = Metadata {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            history: self.history.clone(),
            corpus_fingerprint: self.corpus_fingerprint,
            best_epoch: self.best_epoch,
            embedding_dim: self.params.embedding.dim,
            embedding_trainable: self.params.embedding.trainable,
            embedding_coverage: self.params.embedding.coverage,
            adam_t: self.adam.as_ref().map(|a| a.t),
        };
        let json = serde_json::to_vec(&meta)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);

        let names = ModelParams::tensor_names();
        let tensors = self.params.tensors();
        let count = if self.adam.is_some() {
            3 * names.len()
        } else {
            names.len()
        };
        buf.extend_from_slice(&(count as u32).to_le_bytes());
        for (name, t) in names.iter().zip(tensors) {
            put_tensor(&mut buf, name, t);
        }
        if let Some(adam) = &self.adam {
            for (name, t) in names.iter().zip(&adam.m) {
                put_tensor(&mut buf, &format!("adam.m/{name}"), t);
            }
            for (name, t) in names.iter().zip(&adam.v) {
                put_tensor(&mut buf, &format!("adam.v/{name}"), t);
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let raw = RawCheckpoint::parse(bytes)?;
        let meta: Metadata = serde_json::from_slice(raw.metadata)
            .map_err(|e| Error::Format(format!("metadata: {e}")))?;

        let names = ModelParams::tensor_names();
        let expected = match meta.adam_t {
            Some(_) => 3 * names.len(),
            None => names.len(),
        };
        if raw.tensors.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} tensors, found {}",
                raw.tensors.len()
            )));
        }
        let mut it = raw.tensors.into_iter();
        let mut take = |want: &str| -> Result<Tensor> {
            let (name, t) = it.next().expect("count checked above");
            if name != want {
                return Err(Error::Format(format!(
                    "expected tensor {want:?}, found {name:?}"
                )));
            }
            Ok(t)
        };

        let embedding = take(names[0])?;
        if embedding.shape() != [meta.vocab.len(), meta.embedding_dim] {
            return Err(Error::Format(format!(
                "embedding shape {:?} does not match vocabulary {} x {}",
                embedding.shape(),
                meta.vocab.len(),
                meta.embedding_dim
            )));
        }
        let mut params = ModelParams::from_tensors(
            EmbeddingTable {
                dim: meta.embedding_dim,
                vectors: embedding,
                trainable: meta.embedding_trainable,
                coverage: meta.embedding_coverage,
            },
            names[1..]
                .iter()
                .map(|n| take(n))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let adam = match meta.adam_t {
            Some(t) => {
                let m = names
                    .iter()
                    .map(|n| take(&format!("adam.m/{n}")))
                    .collect::<Result<Vec<_>>>()?;
                let v = names
                    .iter()
                    .map(|n| take(&format!("adam.v/{n}")))
                    .collect::<Result<Vec<_>>>()?;
                for (a, p) in m.iter().chain(&v).zip(params.tensors().into_iter().cycle()) {
                    if a.shape() != p.shape() {
                        return Err(Error::Format(
                            "optimizer state shape does not match parameters".into(),
                        ));
                    }
                }
                Some(AdamState { m, v, t })
            }
            None => None,
        };
        params.embedding.trainable = meta.embedding_trainable;
        Ok(Checkpoint {
            config: meta.config,
            vocab: meta.vocab,
            params,
            adam,
            history: meta.history,
            corpus_fingerprint: meta.corpus_fingerprint,
            best_epoch: meta.best_epoch,
        })
    }

    /// `"<config>-<crc32 of the serialized checkpoint>"`.
    pub fn model_id(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        Ok(format!("{}-{crc:08x}", self.config.config_name))
    }
}

/// Structural view over a checkpoint file before any JSON decoding.
struct RawCheckpoint<'a> {
    metadata: &'a [u8],
    tensors: Vec<(String, Tensor)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn len(&mut self, n: u64) -> Result<usize> {
        usize::try_from(n).map_err(|_| Error::Truncated)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

impl<'a> RawCheckpoint<'a> {
    fn parse(bytes: &'a [u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let meta_len = r.u64().and_then(|n| r.len(n))?;
        let metadata = r.take(meta_len)?;
        let count = r.u32()?;
        let mut slices = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = r.take(name_len)?;
            let rank = r.u32()? as usize;
            if rank.saturating_mul(8) > r.remaining() {
                return Err(Error::Truncated);
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = r.u64().and_then(|n| r.len(n))?;
                shape.push(d);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or(Error::Truncated)?;
            let data = r.take(numel.checked_mul(8).ok_or(Error::Truncated)?)?;
            slices.push((name, shape, data));
        }
        let body_end = r.pos;
        let stored = r.u32()?;
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
        }
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut tensors = Vec::with_capacity(slices.len());
        for (name, shape, data) in slices {
            let name = std::str::from_utf8(name)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_owned();
            let values = data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor::new(shape, values)?));
        }
        Ok(RawCheckpoint { metadata, tensors })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
