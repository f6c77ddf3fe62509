//! Checkpoint container and its on-disk format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"MRPH"  u32 version
//! u32 metadata length, metadata as UTF-8 JSON
//! u32 record count, then per record:
//!   u32 name length, name (UTF-8)
//!   u32 rank, rank × u64 extents
//!   product(extents) × f32 values
//! ```

use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Task, TrainConfig};
use crate::annc::{Annc, AnncConfig};
use crate::annr::Annr;
use crate::corpus::{CharIndex, Quadruple};
use crate::embedder::{Embedder, EmbedderConfig, FilterBank};
use crate::numkit::{NumError, Parameter, Tensor};

pub const MAGIC: &[u8; 4] = b"MRPH";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint is truncated or corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("checkpoint tensor {name}: {detail}")]
    Tensor { name: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub language: String,
    pub task: Task,
    pub config: TrainConfig,
    pub seed: u64,
    /// Corpus characters in id order; reserved ids precede them.
    pub charset: Vec<char>,
    pub embedder: EmbedderConfig,
    pub classifier: Option<AnncConfig>,
    pub init_scheme: String,
    pub conv2_stride_note: String,
    pub batch_reduction: String,
    /// Invalid candidates removed because they collided with a valid form.
    pub invalid_forms_dropped: u64,
    pub epochs_completed: usize,
    /// Seed of the classifier the embedder was initialized from.
    pub init_from_seed: Option<u64>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Classifier(Annc<f32>),
    Regressor(Annr<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub meta: CheckpointMeta,
    pub embedder: Embedder<f32>,
    pub head: Head,
}

impl ModelCheckpoint {
    pub fn task(&self) -> Task {
        match self.head {
            Head::Classifier(_) => Task::Classification,
            Head::Regressor(_) => Task::Regression,
        }
    }

    pub fn charset(&self) -> CharIndex {
        CharIndex::from_chars(self.meta.charset.iter().copied())
    }

    pub fn classifier(&self) -> Option<&Annc<f32>> {
        match &self.head {
            Head::Classifier(h) => Some(h),
            Head::Regressor(_) => None,
        }
    }

    pub fn regressor(&self) -> Option<&Annr<f32>> {
        match &self.head {
            Head::Regressor(h) => Some(h),
            Head::Classifier(_) => None,
        }
    }

    pub fn embed(&self, word: &str, charset: &CharIndex) -> Result<Tensor<f32>, NumError> {
        self.embedder.embed_word(word, charset)
    }

    /// Validity score of `quad`; `None` for a regression checkpoint.
    pub fn classify(&self, quad: &Quadruple) -> Option<Result<f32, NumError>> {
        let head = self.classifier()?;
        Some(crate::annc::classify(&self.embedder, head, &self.charset(), quad))
    }

    fn named_tensors(&self) -> Vec<(String, &Tensor<f32>)> {
        let mut out = vec![("embedder.chars".to_string(), &self.embedder.chars.value)];
        for bank in &self.embedder.banks {
            out.push((format!("embedder.width{}.weight", bank.width), &bank.weight.value));
            out.push((format!("embedder.width{}.bias", bank.width), &bank.bias.value));
        }
        match &self.head {
            Head::Classifier(h) => {
                let names = [
                    "conv1.weight",
                    "conv1.bias",
                    "conv2.weight",
                    "conv2.bias",
                    "dense.weight",
                    "dense.bias",
                ];
                for (n, p) in names.iter().zip(h.parameters()) {
                    out.push((format!("annc.{n}"), &p.value));
                }
            }
            Head::Regressor(h) => {
                let names = ["ab.weight", "ab.bias", "ac.weight", "ac.bias", "out.weight", "out.bias"];
                for (n, p) in names.iter().zip(h.parameters()) {
                    out.push((format!("annr.{n}"), &p.value));
                }
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta)?;
        buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(&meta);
        let tensors = self.named_tensors();
        buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let meta_len = read_u32(&mut r)? as usize;
        let meta_bytes = read_vec(&mut r, meta_len)?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)?;
        let count = read_u32(&mut r)? as usize;
        let mut records: Vec<(String, Tensor<f32>)> = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let name = String::from_utf8(read_vec(&mut r, name_len)?)
                .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            if rank > 8 {
                return Err(CheckpointError::Corrupt(format!("tensor {name} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut r)? as usize);
            }
            let len: usize = shape.iter().product();
            let raw = read_vec(
                &mut r,
                len.checked_mul(4)
                    .ok_or_else(|| CheckpointError::Corrupt("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Tensor {
                name: name.clone(),
                detail: e.to_string(),
            })?;
            records.push((name, t));
        }
        if (r.position() as usize) != bytes.len() {
            return Err(CheckpointError::Corrupt("trailing bytes after last tensor".into()));
        }
        assemble(meta, records)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint, CheckpointError> {
    ModelCheckpoint::load(path)
}

struct Records(Vec<(String, Tensor<f32>)>);

impl Records {
    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Parameter<f32>, CheckpointError> {
        let pos = self
            .0
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| CheckpointError::Tensor {
                name: name.into(),
                detail: "missing".into(),
            })?;
        let (_, t) = self.0.remove(pos);
        if t.shape() != shape {
            return Err(CheckpointError::Tensor {
                name: name.into(),
                detail: format!("shape {:?}, expected {shape:?}", t.shape()),
            });
        }
        Ok(Parameter::new(t))
    }
}

fn assemble(meta: CheckpointMeta, records: Vec<(String, Tensor<f32>)>) -> Result<ModelCheckpoint, CheckpointError> {
    let mut rec = Records(records);
    let cfg = meta.embedder.clone();
    let m = cfg.char_dim;
    let n = cfg.output_dim();
    let vocab = meta.charset.len() + CharIndex::RESERVED;
    let chars = rec.take("embedder.chars", &[vocab, m])?;
    let mut banks = Vec::new();
    for &w in &cfg.filter_widths {
        let weight = rec.take(&format!("embedder.width{w}.weight"), &[cfg.filters_per_width, 1, w, m])?;
        let bias = rec.take(&format!("embedder.width{w}.bias"), &[cfg.filters_per_width])?;
        banks.push(FilterBank { width: w, weight, bias });
    }
    let embedder = Embedder {
        config: cfg,
        chars,
        banks,
    };
    let head = match meta.task {
        Task::Classification => {
            let hc = meta
                .classifier
                .clone()
                .ok_or_else(|| CheckpointError::Corrupt("classifier checkpoint without classifier config".into()))?;
            let (c1, c2) = (hc.conv1_filters, hc.conv2_filters);
            Head::Classifier(Annc {
                embedding_dim: n,
                conv1_weight: rec.take("annc.conv1.weight", &[c1, 1, 2, 1])?,
                conv1_bias: rec.take("annc.conv1.bias", &[c1])?,
                conv2_weight: rec.take("annc.conv2.weight", &[c2, c1, 2, 2])?,
                conv2_bias: rec.take("annc.conv2.bias", &[c2])?,
                dense_weight: rec.take("annc.dense.weight", &[1, c2 * n / 2])?,
                dense_bias: rec.take("annc.dense.bias", &[1])?,
            })
        }
        Task::Regression => Head::Regressor(Annr {
            embedding_dim: n,
            ab_weight: rec.take("annr.ab.weight", &[n, 2 * n])?,
            ab_bias: rec.take("annr.ab.bias", &[n])?,
            ac_weight: rec.take("annr.ac.weight", &[n, 2 * n])?,
            ac_bias: rec.take("annr.ac.bias", &[n])?,
            out_weight: rec.take("annr.out.weight", &[n, 2 * n])?,
            out_bias: rec.take("annr.out.bias", &[n])?,
        }),
    };
    if let Some((name, _)) = rec.0.first() {
        return Err(CheckpointError::Tensor {
            name: name.clone(),
            detail: "unexpected tensor".into(),
        });
    }
    Ok(ModelCheckpoint { meta, embedder, head })
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf)
        .map_err(|_| CheckpointError::Corrupt(format!("unexpected end of data at byte {}", r.position())))
}

fn read_vec(r: &mut Cursor<&[u8]>, len: usize) -> Result<Vec<u8>, CheckpointError> {
    let remaining = r.get_ref().len() - r.position() as usize;
    if len > remaining {
        return Err(CheckpointError::Corrupt(format!(
            "need {len} bytes at offset {}, only {remaining} left",
            r.position()
        )));
    }
    let mut v = vec![0u8; len];
    read_exact(r, &mut v)?;
    Ok(v)
}

fn read_u32(r: &mut Cursor<&[u8]>) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut Cursor<&[u8]>) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
