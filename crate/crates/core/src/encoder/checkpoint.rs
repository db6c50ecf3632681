//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "ADLKCKPT"
//! version      u32      1
//! header_len   u64      byte length of the JSON header
//! header       JSON     CheckpointHeader
//! data         f64 LE   tensors back to back, in header order
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use super::model::EncoderModel;
use super::params::Params;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ADLKCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the data section, in elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolingSpec {
    pub include_special: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: EncoderConfig,
    /// SHA-256 of the vocabulary file the model was trained with.
    pub vocab_sha256: String,
    /// Present for fine-tuned sentence encoders.
    #[serde(default)]
    pub pooling: Option<PoolingSpec>,
    #[serde(default)]
    pub epoch: Option<usize>,
    pub tensors: Vec<TensorEntry>,
}

pub fn to_bytes(
    model: &EncoderModel,
    vocab_sha256: &str,
    pooling: Option<PoolingSpec>,
    epoch: Option<usize>,
) -> Vec<u8> {
    let mut offset = 0;
    let tensors = model
        .params
        .manifest()
        .into_iter()
        .map(|(name, shape)| {
            let e = TensorEntry {
                name,
                offset,
                shape: shape.clone(),
            };
            offset += shape.iter().product::<usize>();
            e
        })
        .collect();
    let header = CheckpointHeader {
        config: model.config.clone(),
        vocab_sha256: vocab_sha256.to_owned(),
        pooling,
        epoch,
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for s in model.params.slices() {
        for x in s {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<(EncoderModel, CheckpointHeader)> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[20..header_end]).map_err(|e| bad(&e.to_string()))?;
    header.config.validate()?;
    let mut params = Params::zeros(&header.config);
    let expected = params.manifest();
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((n, s), t)| *n != t.name || *s != t.shape)
    {
        return Err(bad("tensor manifest does not match config"));
    }
    let data = &bytes[header_end..];
    if data.len() != params.len() * 8 {
        return Err(bad("data section has the wrong length"));
    }
    let mut chunks = data.chunks_exact(8);
    for s in params.slices_mut() {
        for x in s.iter_mut() {
            *x = f64::from_le_bytes(chunks.next().unwrap().try_into().unwrap());
        }
    }
    if !params.all_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok((
        EncoderModel {
            config: header.config.clone(),
            params,
        },
        header,
    ))
}

pub fn save(
    path: &Path,
    model: &EncoderModel,
    vocab_sha256: &str,
    pooling: Option<PoolingSpec>,
    epoch: Option<usize>,
) -> Result<()> {
    std::fs::write(path, to_bytes(model, vocab_sha256, pooling, epoch)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(EncoderModel, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::model::init_encoder;

    fn small() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 30,
            hidden: 8,
            heads: 2,
            layers: 1,
            max_len: 8,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip() {
        let m = init_encoder(&small()).unwrap();
        let bytes = to_bytes(&m, "abc", Some(PoolingSpec { include_special: true }), Some(3));
        let (back, header) = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.vocab_sha256, "abc");
        assert_eq!(header.epoch, Some(3));
    }

    #[test]
    fn corrupt_input_rejected() {
        let m = init_encoder(&small()).unwrap();
        let mut bytes = to_bytes(&m, "abc", None, None);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(from_bytes(&bytes).is_err());
    }
}
