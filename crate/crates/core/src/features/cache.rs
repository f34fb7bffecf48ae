//! Binary feature cache: `"SFFT"`, version `u16`, frames `u32`, width `u32`,
//! then little-endian `f32` values in row-major order.

use std::fs;
use std::path::Path;

use super::FeatureStack;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"SFFT";
pub const CACHE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub fn write_feature_cache(path: impl AsRef<Path>, fs: &FeatureStack) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN + fs.data.len() * 4);
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(fs.n_frames as u32).to_le_bytes());
    buf.extend_from_slice(&(fs.width as u32).to_le_bytes());
    for v in &fs.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a cached stack. The source duration is not stored and is
/// reported as `frames * 0.5 s`.
pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<FeatureStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != CACHE_MAGIC {
        return Err(Error::format(path, "missing SFFT header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CACHE_VERSION {
        return Err(Error::format(path, format!("unknown cache version {version}")));
    }
    let frames = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != frames * width * 4 {
        return Err(Error::format(
            path,
            format!("expected {} data bytes, found {}", frames * width * 4, body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FeatureStack {
        n_frames: frames,
        width,
        data,
        source_duration: frames as f64 * super::FRAME_SECONDS,
    })
}
