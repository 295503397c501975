//! Import of single-file NIfTI-1 (`n+1`) volumes.
//!
//! Only what the pipeline needs: 3D float32 or int16 data, voxel spacing from
//! `pixdim[1..=3]`, and the `scl_slope` / `scl_inter` intensity rescale.
//! Orientation matrices are ignored.

use std::fs;
use std::path::Path;

use super::Volume;
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

struct Reader<'a> {
    bytes: &'a [u8],
    little: bool,
}

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        if self.little {
            i16::from_le_bytes(b)
        } else {
            i16::from_be_bytes(b)
        }
    }

    fn i32(&self, off: usize) -> i32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        if self.little {
            i32::from_le_bytes(b)
        } else {
            i32::from_be_bytes(b)
        }
    }

    fn f32(&self, off: usize) -> f32 {
        f32::from_bits(self.i32(off) as u32)
    }
}

pub fn import_nifti1(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_nifti1(&bytes).map(|v| v.with_provenance(format!("nifti1:{}", path.display())))
}

pub(crate) fn decode_nifti1(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Truncated {
            expected: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::NiftiMagic);
    }
    let little = i32::from_le_bytes(bytes[0..4].try_into().unwrap()) == HEADER_SIZE as i32;
    if !little && i32::from_be_bytes(bytes[0..4].try_into().unwrap()) != HEADER_SIZE as i32 {
        return Err(Error::MalformedHeader("sizeof_hdr is not 348".into()));
    }
    let r = Reader { bytes, little };

    let ndim = r.i16(40);
    if ndim != 3 {
        return Err(Error::NiftiDims(ndim));
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let n = r.i16(42 + 2 * a);
        if n <= 0 {
            return Err(Error::HeaderValidation(format!("dim[{}] = {n}", a + 1)));
        }
        *d = n as usize;
    }
    let datatype = r.i16(70);
    let bytes_per_voxel = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => return Err(Error::NiftiDatatype(other)),
    };
    let mut spacing = [0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let p = r.f32(80 + 4 * a).abs() as f64;
        *s = if p.is_finite() && p > 0.0 { p } else { 1.0 };
    }
    let vox_offset = r.f32(108);
    let offset = if vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32 {
        vox_offset as usize
    } else {
        352
    };
    let slope = r.f32(112);
    let inter = r.f32(116);
    let rescale = slope.is_finite() && slope != 0.0;
    let inter = if inter.is_finite() { inter } else { 0.0 };

    let n = dims[0] * dims[1] * dims[2];
    let need = offset + n * bytes_per_voxel;
    if bytes.len() < need {
        return Err(Error::Truncated {
            expected: need,
            found: bytes.len(),
        });
    }
    let data: Vec<f32> = (0..n)
        .map(|i| {
            let off = offset + i * bytes_per_voxel;
            let raw = if datatype == DT_INT16 {
                r.i16(off) as f32
            } else {
                r.f32(off)
            };
            if rescale {
                slope * raw + inter
            } else {
                raw
            }
        })
        .collect();
    Volume::new(dims, spacing, data)
}
