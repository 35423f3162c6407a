//! Binary model checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        8 bytes  "RESPENC\0"
//! version      u32      1
//! encoder      u32 depth, u32 cross_per_block, u32 self_per_block,
//!              u32 n_latents, u32 model_dim, u32 fourier_bands,
//!              f64 max_freq_hz, u32 ffn_expansion, f64 dropout, u32 out_dim
//! head         u32 n_windows, u32 n_classes, u32 len + UTF-8 fusion name
//! preprocess   f64 sample_rate_hz, u8 filter, f64 low_hz, f64 high_hz,
//!              u32 pad_length, f64 window_seconds
//! params       u32 count, then per tensor:
//!              u32 len + UTF-8 name, u32 ndim, u32 dims..., f64 values (row-major)
//! ```
//!
//! Values are stored at the model's native `f64` precision so a round trip
//! is bit-exact.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::encoder::EncoderConfig;
use crate::model::{ModelConfig, ModelError, Preprocess, RespModel};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"RESPENC\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything needed to rebuild a model and its input pipeline.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: RespModel,
    pub preprocess: Preprocess,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Malformed("invalid UTF-8".into()))
    }
}

pub fn encode(model: &RespModel, preprocess: &Preprocess) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    let c = &model.config().encoder;
    for v in [c.depth, c.cross_per_block, c.self_per_block, c.n_latents, c.model_dim, c.fourier_bands] {
        w.u32(v);
    }
    w.f64(c.max_freq_hz);
    w.u32(c.ffn_expansion);
    w.f64(c.dropout);
    w.u32(c.out_dim);

    let m = model.config();
    w.u32(m.n_windows);
    w.u32(m.n_classes);
    w.str(&m.fusion);

    w.f64(preprocess.sample_rate_hz);
    w.0.push(preprocess.filter as u8);
    w.f64(preprocess.low_hz);
    w.f64(preprocess.high_hz);
    w.u32(preprocess.pad_length);
    w.f64(preprocess.window_seconds);

    w.u32(model.store.len());
    for (_, name, t) in model.store.iter() {
        w.str(name);
        w.u32(t.shape().len());
        for d in t.shape() {
            w.u32(*d);
        }
        for v in t.data() {
            w.f64(*v);
        }
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let encoder = EncoderConfig {
        depth: r.u32()?,
        cross_per_block: r.u32()?,
        self_per_block: r.u32()?,
        n_latents: r.u32()?,
        model_dim: r.u32()?,
        fourier_bands: r.u32()?,
        max_freq_hz: r.f64()?,
        ffn_expansion: r.u32()?,
        dropout: r.f64()?,
        out_dim: r.u32()?,
    };
    let n_windows = r.u32()?;
    let n_classes = r.u32()?;
    let fusion = r.str()?;
    let preprocess = Preprocess {
        sample_rate_hz: r.f64()?,
        filter: match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(CheckpointError::Malformed(format!("filter flag {b}"))),
        },
        low_hz: r.f64()?,
        high_hz: r.f64()?,
        pad_length: r.u32()?,
        window_seconds: r.f64()?,
    };
    let config = ModelConfig {
        encoder,
        fusion,
        n_windows,
        n_classes,
    };
    let mut model = RespModel::new(config, 0)?;

    let count = r.u32()?;
    if count != model.store.len() {
        return Err(CheckpointError::Mismatch(format!(
            "{count} tensors stored, model has {}",
            model.store.len()
        )));
    }
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        let name = r.str()?;
        if name != model.store.name(id) {
            return Err(CheckpointError::Mismatch(format!(
                "expected tensor {:?}, found {name:?}",
                model.store.name(id)
            )));
        }
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        if shape != model.store.get(id).shape() {
            return Err(CheckpointError::Mismatch(format!(
                "{name}: stored shape {shape:?}, model shape {:?}",
                model.store.get(id).shape()
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated(r.pos))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| CheckpointError::Malformed(format!("{name}: {e}")))?;
        model
            .store
            .set(id, tensor)
            .map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint { model, preprocess })
}

pub fn save(path: &Path, model: &RespModel, preprocess: &Preprocess) -> Result<(), CheckpointError> {
    fs::write(path, encode(model, preprocess)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}
