use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::{RigidMotion, SliceStack, StackGeometry};
use crate::error::{Error, Result};
use crate::volume::{read_volume, write_volume, Axis, Volume};

pub const STACK_MANIFEST: &str = "stack.json";

/// `stack.json` of a stack archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackManifest {
    pub axis: Axis,
    /// Slice thickness in millimeters.
    pub thickness: f64,
    pub thickness_factor: usize,
    pub inplane_factor: usize,
    pub reference_dims: [usize; 3],
    pub reference_spacing: [f64; 3],
    /// Pixel spacing and slice spacing of the stack images.
    pub spacing: [f64; 3],
    pub poses: Vec<RigidMotion>,
    pub provenance: String,
}

pub fn slice_file_name(s: usize) -> String {
    format!("slice_{s:04}.vvol")
}

/// Write one `(nu, nv, 1)` volume per slice plus `stack.json` into `dir`.
pub fn write_stack_archive(dir: &Path, stack: &SliceStack) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in 0..stack.len() {
        let slice = stack.slice(s).with_provenance(stack.images.provenance());
        write_volume(&slice, dir.join(slice_file_name(s)))?;
    }
    let g = &stack.geometry;
    let manifest = StackManifest {
        axis: g.axis,
        thickness: g.slice_thickness_mm(),
        thickness_factor: g.thickness_factor,
        inplane_factor: g.inplane_factor,
        reference_dims: g.reference_dims,
        reference_spacing: g.reference_spacing,
        spacing: stack.images.spacing(),
        poses: stack.poses.clone(),
        provenance: stack.images.provenance().to_string(),
    };
    let path = dir.join(STACK_MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn read_stack_archive(dir: &Path) -> Result<SliceStack> {
    let path = dir.join(STACK_MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: StackManifest = serde_json::from_str(&text)?;
    let geometry = StackGeometry {
        axis: m.axis,
        reference_dims: m.reference_dims,
        reference_spacing: m.reference_spacing,
        thickness_factor: m.thickness_factor,
        inplane_factor: m.inplane_factor,
    };
    geometry.validate()?;
    let [nu, nv, n] = geometry.image_dims();
    if m.poses.len() != n {
        return Err(Error::HeaderValidation(format!(
            "{} poses listed for {n} slices",
            m.poses.len()
        )));
    }
    let mut data = Vec::with_capacity(nu * nv * n);
    for s in 0..n {
        let v = read_volume(dir.join(slice_file_name(s)))?;
        if v.dims() != [nu, nv, 1] {
            return Err(Error::HeaderValidation(format!(
                "slice {s} has dims {:?}, expected ({nu}, {nv}, 1)",
                v.dims()
            )));
        }
        data.extend_from_slice(v.data());
    }
    let images = Volume::new([nu, nv, n], m.spacing, data)?.with_provenance(m.provenance);
    SliceStack::new(geometry, images, m.poses)
}
