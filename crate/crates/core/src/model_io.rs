//! Binary model file.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "VPRM" | u32 version | u32 catalogue version | u32 layer count
//! per layer: u32 rows | u32 cols | rows*cols f32 weights | rows f32 biases
//! input_dim f32 means | input_dim f32 std-devs
//! f64 decision threshold | f64 alpha used
//! u32 CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{ModelError, ModelFileError};
use crate::mlp::{LayerParams, MlpModel};

pub const MODEL_MAGIC: &[u8; 4] = b"VPRM";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&model.catalogue_version().to_le_bytes());
    buf.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        buf.extend_from_slice(&(layer.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.cols as u32).to_le_bytes());
        for w in layer.weights.iter().chain(&layer.biases) {
            buf.extend_from_slice(&w.to_le_bytes());
        }
    }
    for v in model.input_mean().iter().chain(model.input_std()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&model.threshold().to_le_bytes());
    buf.extend_from_slice(&model.alpha_used().to_le_bytes());
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| ModelError::Invariant("model payload ends early".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, ModelError> {
        let bytes = self.take(n.checked_mul(4).ok_or(ModelError::Empty)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decode a model. The checksum is verified before any field is parsed, so
/// corrupted or truncated input never yields a partial model.
pub fn decode_model(bytes: &[u8]) -> Result<MlpModel, ModelFileError> {
    if bytes.len() < 8 {
        return Err(ModelFileError::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ModelFileError::Checksum { stored, computed });
    }
    let mut cur = Cursor { bytes: body, pos: 4 };
    let version = cur.u32()?;
    if version != MODEL_VERSION {
        return Err(ModelFileError::Version {
            expected: MODEL_VERSION,
            found: version,
        });
    }
    let catalogue_version = cur.u32()?;
    let layer_count = cur.u32()? as usize;
    let mut layers = Vec::with_capacity(layer_count.min(64));
    for _ in 0..layer_count {
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let weights = cur.f32s(rows.checked_mul(cols).ok_or(ModelError::Empty)?)?;
        let biases = cur.f32s(rows)?;
        layers.push(LayerParams {
            rows,
            cols,
            weights,
            biases,
        });
    }
    let dim = layers
        .first()
        .map(|l| l.cols)
        .ok_or_else(|| ModelError::Invariant("model has no layers".into()))?;
    let input_mean = cur.f32s(dim)?;
    let input_std = cur.f32s(dim)?;
    let threshold = cur.f64()?;
    let alpha_used = cur.f64()?;
    if cur.pos != body.len() {
        return Err(ModelError::Invariant("trailing bytes after model payload".into()).into());
    }
    Ok(MlpModel::from_parts(
        layers,
        input_mean,
        input_std,
        threshold,
        catalogue_version,
        alpha_used,
    )?)
}

/// Write a model file. Models must have at least one hidden layer.
pub fn save_model(model: &MlpModel, path: &Path) -> Result<(), ModelFileError> {
    if model.layers().len() < 2 {
        return Err(ModelError::Invariant("model without hidden layers".into()).into());
    }
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpModel, ModelFileError> {
    decode_model(&fs::read(path)?)
}
