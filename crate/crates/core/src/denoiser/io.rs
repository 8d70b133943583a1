//! Weights container:
//!
//! ```text
//! "CDNWGT01"                     8-byte magic
//! u32 LE                         metadata length in bytes
//! metadata                       UTF-8 `key=value` lines
//! f32 LE ...                     kernel then bias of every layer, in order
//! u32 LE                         CRC-32 of all preceding bytes
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::conv::ConvLayer;
use super::network::{DenoiserConfig, DenoiserWeights};
use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 8] = b"CDNWGT01";

fn metadata(w: &DenoiserWeights) -> String {
    let c = &w.config;
    format!(
        "input_size={}\nnum_blocks={}\nnum_filters={}\nkernel={}\nlearning_rate={:?}\nbatch_size={}\nepochs={}\nvalidation_fraction={:?}\nseed={}\nmode={}\nnormalizer={:?}\n",
        c.input_size,
        c.num_blocks,
        c.num_filters,
        c.kernel,
        c.learning_rate,
        c.batch_size,
        c.epochs,
        c.validation_fraction,
        c.seed,
        c.mode,
        w.normalizer
    )
}

pub fn encode_weights(w: &DenoiserWeights) -> Vec<u8> {
    let meta = metadata(w);
    let mut out = Vec::with_capacity(16 + meta.len() + 4 * w.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    for layer in &w.layers {
        for v in layer.kernel.data().iter().chain(&layer.bias) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn field<T: std::str::FromStr>(meta: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
    let raw = meta
        .get(key)
        .ok_or_else(|| Error::InvalidInput(format!("weights metadata lacks `{key}`")))?;
    raw.parse().map_err(|_| {
        Error::InvalidInput(format!(
            "weights metadata `{key}` has invalid value `{raw}`"
        ))
    })
}

pub fn decode_weights(bytes: &[u8]) -> Result<DenoiserWeights> {
    if bytes.len() >= 8 && &bytes[..8] != MAGIC {
        return Err(Error::Version {
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        });
    }
    if bytes.len() < 16 {
        return Err(Error::Checksum);
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Checksum);
    }
    let meta_len = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
    let meta_end = 12 + meta_len;
    if meta_end > body.len() {
        return Err(Error::InvalidInput(
            "weights metadata overruns the file".into(),
        ));
    }
    let text = std::str::from_utf8(&body[12..meta_end])
        .map_err(|_| Error::InvalidInput("weights metadata is not UTF-8".into()))?;
    let meta: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    let config = DenoiserConfig {
        input_size: field(&meta, "input_size")?,
        num_blocks: field(&meta, "num_blocks")?,
        num_filters: field(&meta, "num_filters")?,
        kernel: field(&meta, "kernel")?,
        learning_rate: field(&meta, "learning_rate")?,
        batch_size: field(&meta, "batch_size")?,
        epochs: field(&meta, "epochs")?,
        validation_fraction: field(&meta, "validation_fraction")?,
        seed: field(&meta, "seed")?,
        mode: field(&meta, "mode")?,
    };
    let normalizer: f64 = field(&meta, "normalizer")?;
    let mut weights = DenoiserWeights::zeros(&config)?;
    weights.normalizer = normalizer;

    let mut floats = body[meta_end..].chunks_exact(4);
    let expected = weights.param_count();
    if body.len() - meta_end != 4 * expected {
        return Err(Error::InvalidInput(format!(
            "weights payload holds {} values, architecture needs {expected}",
            (body.len() - meta_end) / 4
        )));
    }
    for layer in &mut weights.layers {
        let ConvLayer { kernel, bias } = layer;
        for v in kernel.data_mut().iter_mut().chain(bias.iter_mut()) {
            let chunk = floats.next().expect("length checked above");
            let x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !x.is_finite() {
                return Err(Error::NumericDomain(
                    "non-finite value in weights file".into(),
                ));
            }
            *v = x as f64;
        }
    }
    Ok(weights)
}

pub fn save_weights(w: &DenoiserWeights, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &encode_weights(w))
}

pub fn load_weights(path: &Path) -> Result<DenoiserWeights> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}
