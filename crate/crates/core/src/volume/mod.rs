//! Volume data model.
//!
//! A [`Volume`] is a dense 3D grid of `f32` intensities with physical voxel
//! spacing in millimeters. Storage is row-major with x fastest:
//! `index = (z * ny + y) * nx + x`. Every operator in the crate states its
//! axis conventions against this layout.

mod io;
mod nifti;
mod normalize;
mod phantom;

pub use io::{read_volume, write_volume, VolumeHeader, VVOL_DTYPE, VVOL_MAGIC};
pub use nifti::import_nifti1;
pub use normalize::{normalize_intensity, percentile_nearest_rank};
pub use phantom::{generate_phantom, PhantomKind, PhantomSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the three grid axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::param(format!("unknown axis {other:?}"))),
        }
    }
}

/// Reflect an out-of-range index back into `[0, n)` without repeating the
/// edge sample (`-1 -> 1`, `n -> n - 2`). Periodic in `2(n - 1)`, so any
/// offset is valid; a length-1 axis always maps to 0.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f32>,
    intensity_range: Option<(f32, f32)>,
    provenance: String,
}

fn validate_geometry(dims: [usize; 3], spacing: [f64; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::param(format!(
            "volume dims must be positive, got {dims:?}"
        )));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::param(format!(
            "volume spacing must be positive and finite, got {spacing:?}"
        )));
    }
    Ok(())
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        validate_geometry(dims, spacing)?;
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::shape(format!(
                "data length {} does not match dims {dims:?} ({n} voxels)",
                data.len()
            )));
        }
        Ok(Volume {
            dims,
            spacing,
            data,
            intensity_range: None,
            provenance: String::new(),
        })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: f32) -> Result<Self> {
        validate_geometry(dims, spacing)?;
        Volume::new(dims, spacing, vec![value; dims[0] * dims[1] * dims[2]])
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Volume::filled(dims, spacing, 0.0)
    }

    /// Build a volume by evaluating `f(x, y, z)` at every voxel in storage order.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        validate_geometry(dims, spacing)?;
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Volume::new(dims, spacing, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn intensity_range(&self) -> Option<(f32, f32)> {
        self.intensity_range
    }

    pub fn set_intensity_range(&mut self, range: Option<(f32, f32)>) {
        self.intensity_range = range;
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        validate_geometry(self.dims, spacing)?;
        self.spacing = spacing;
        Ok(self)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f32) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    /// Same geometry, new data.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        let mut v = Volume::new(self.dims, self.spacing, data)?;
        v.provenance = self.provenance.clone();
        Ok(v)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Volume {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out.intensity_range = None;
        out
    }

    pub fn same_dims(&self, other: &Volume) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "volume dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Reorder axes so that output axis `i` is input axis `order[i]`.
    pub fn permute(&self, order: [usize; 3]) -> Result<Volume> {
        let mut seen = [false; 3];
        for &o in &order {
            if o > 2 || seen[o] {
                return Err(Error::param(format!("invalid axis permutation {order:?}")));
            }
            seen[o] = true;
        }
        let dims = [
            self.dims[order[0]],
            self.dims[order[1]],
            self.dims[order[2]],
        ];
        let spacing = [
            self.spacing[order[0]],
            self.spacing[order[1]],
            self.spacing[order[2]],
        ];
        let mut src = [0usize; 3];
        let out = Volume::from_fn(dims, spacing, |a, b, c| {
            src[order[0]] = a;
            src[order[1]] = b;
            src[order[2]] = c;
            self.get(src[0], src[1], src[2])
        })?;
        Ok(out.with_provenance(self.provenance.clone()))
    }
}

/// Extract the sub-grid starting at `origin` with size `extent`.
pub fn crop(v: &Volume, origin: [usize; 3], extent: [usize; 3]) -> Result<Volume> {
    for a in 0..3 {
        if extent[a] == 0 || origin[a] + extent[a] > v.dims[a] {
            return Err(Error::param(format!(
                "crop window origin {origin:?} extent {extent:?} outside dims {:?}",
                v.dims
            )));
        }
    }
    let out = Volume::from_fn(extent, v.spacing, |x, y, z| {
        v.get(origin[0] + x, origin[1] + y, origin[2] + z)
    })?;
    Ok(out.with_provenance(v.provenance.clone()))
}

/// Extend every axis by `margins[a]` voxels on both sides, filled with `fill`.
pub fn pad(v: &Volume, margins: [usize; 3], fill: f32) -> Result<Volume> {
    let dims = [
        v.dims[0] + 2 * margins[0],
        v.dims[1] + 2 * margins[1],
        v.dims[2] + 2 * margins[2],
    ];
    let mut out = Volume::filled(dims, v.spacing, fill)?;
    for z in 0..v.dims[2] {
        for y in 0..v.dims[1] {
            let src = v.index(0, y, z);
            let dst = out.index(margins[0], y + margins[1], z + margins[2]);
            out.data[dst..dst + v.dims[0]].copy_from_slice(&v.data[src..src + v.dims[0]]);
        }
    }
    Ok(out.with_provenance(v.provenance.clone()))
}
