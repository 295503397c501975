//! Native `.vvol` volume files.
//!
//! Layout: 8-byte magic `VVOL0001`, a little-endian `u32` header length `L`,
//! `L` bytes of UTF-8 JSON (`dims`, `spacing`, `dtype`, `provenance`), then
//! `nx * ny * nz` little-endian IEEE-754 `f32` values, x fastest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Volume;
use crate::error::{Error, Result};

pub const VVOL_MAGIC: &[u8; 8] = b"VVOL0001";
pub const VVOL_DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: String,
    #[serde(default)]
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_range: Option<[f32; 2]>,
}

impl VolumeHeader {
    fn validate(&self) -> Result<()> {
        if self.dtype != VVOL_DTYPE {
            return Err(Error::UnsupportedEncoding(self.dtype.clone()));
        }
        if self.dims.contains(&0) {
            return Err(Error::HeaderValidation(format!(
                "dims must be positive, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::HeaderValidation(format!(
                "spacing must be positive and finite, got {:?}",
                self.spacing
            )));
        }
        Ok(())
    }
}

pub(crate) fn encode_volume(v: &Volume) -> Result<Vec<u8>> {
    let header = VolumeHeader {
        dims: v.dims(),
        spacing: v.spacing(),
        dtype: VVOL_DTYPE.to_string(),
        provenance: v.provenance().to_string(),
        intensity_range: v.intensity_range().map(|(lo, hi)| [lo, hi]),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * v.len());
    out.extend_from_slice(VVOL_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub(crate) fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < 12 || &bytes[..8] != VVOL_MAGIC {
        return Err(Error::MalformedHeader("missing VVOL0001 magic".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let json = bytes
        .get(12..12 + len)
        .ok_or_else(|| Error::MalformedHeader(format!("header length {len} exceeds file")))?;
    let header: VolumeHeader = serde_json::from_slice(json)
        .map_err(|e| Error::MalformedHeader(format!("header json: {e}")))?;
    header.validate()?;
    let n = header.dims[0] * header.dims[1] * header.dims[2];
    let payload = &bytes[12 + len..];
    if payload.len() < 4 * n {
        return Err(Error::Truncated {
            expected: 4 * n,
            found: payload.len(),
        });
    }
    if payload.len() > 4 * n {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after payload",
            payload.len() - 4 * n
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut v = Volume::new(header.dims, header.spacing, data)?.with_provenance(header.provenance);
    v.set_intensity_range(header.intensity_range.map(|[lo, hi]| (lo, hi)));
    Ok(v)
}

pub fn write_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(v)?).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes)
}
