//! Binary descriptor-set files.
//!
//! Layout: magic `ODSC`, `u32` record count, then per record `x`, `y`,
//! `angle` as little-endian `f32` followed by the 32 descriptor bytes. All
//! integers little-endian. Responses are not stored and read back as 0.

use std::path::Path;

use super::{Descriptor, Feature, FeatureError, Keypoint};

const MAGIC: &[u8; 4] = b"ODSC";
const RECORD: usize = 12 + 32;

pub fn encode_descriptor_set(features: &[Feature]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + RECORD * features.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(features.len() as u32).to_le_bytes());
    for f in features {
        for v in [f.keypoint.x, f.keypoint.y, f.keypoint.angle] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&f.descriptor.to_bytes());
    }
    out
}

pub fn decode_descriptor_set(bytes: &[u8]) -> Result<Vec<Feature>, FeatureError> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(FeatureError::Format("missing ODSC magic".into()));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != count * RECORD {
        return Err(FeatureError::Format(format!("{count} records need {} bytes, found {}", count * RECORD, body.len())));
    }
    let f32_at = |r: &[u8], k: usize| f32::from_le_bytes(r[4 * k..4 * k + 4].try_into().unwrap());
    Ok(body
        .chunks_exact(RECORD)
        .map(|r| Feature {
            keypoint: Keypoint { x: f32_at(r, 0), y: f32_at(r, 1), response: 0.0, angle: f32_at(r, 2) },
            descriptor: Descriptor::from_bytes(r[12..].try_into().unwrap()),
        })
        .collect())
}

pub fn save_descriptor_set(features: &[Feature], path: impl AsRef<Path>) -> Result<(), FeatureError> {
    std::fs::write(path, encode_descriptor_set(features))?;
    Ok(())
}

pub fn load_descriptor_set(path: impl AsRef<Path>) -> Result<Vec<Feature>, FeatureError> {
    decode_descriptor_set(&std::fs::read(path)?)
}
