use serde::{Deserialize, Serialize};

use super::RigidMotion;
use crate::error::{Error, Result};
use crate::volume::{crop, Axis, Volume};

/// How a stack's slices sit on its high-resolution reference grid.
///
/// Slice `s` is centered on reference plane `s * thickness_factor` along
/// `axis`; in-plane pixel `(i, j)` sits on reference position
/// `(i, j) * inplane_factor` along the stack-local `(u, v)` axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackGeometry {
    pub axis: Axis,
    pub reference_dims: [usize; 3],
    pub reference_spacing: [f64; 3],
    pub thickness_factor: usize,
    pub inplane_factor: usize,
}

impl StackGeometry {
    /// Reference-grid dims in stack-local `(u, v, w)` order.
    pub fn local_reference_dims(&self) -> [usize; 3] {
        let o = self.axis.stack_order();
        [
            self.reference_dims[o[0]],
            self.reference_dims[o[1]],
            self.reference_dims[o[2]],
        ]
    }

    pub fn local_reference_spacing(&self) -> [f64; 3] {
        let o = self.axis.stack_order();
        [
            self.reference_spacing[o[0]],
            self.reference_spacing[o[1]],
            self.reference_spacing[o[2]],
        ]
    }

    /// Expected stack image dims `(nu, nv, slices)`.
    pub fn image_dims(&self) -> [usize; 3] {
        let l = self.local_reference_dims();
        [
            l[0] / self.inplane_factor,
            l[1] / self.inplane_factor,
            l[2] / self.thickness_factor,
        ]
    }

    pub fn slice_thickness_mm(&self) -> f64 {
        self.reference_spacing[self.axis.index()] * self.thickness_factor as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.thickness_factor == 0 || self.inplane_factor == 0 {
            return Err(Error::param("stack factors must be >= 1"));
        }
        let l = self.local_reference_dims();
        if !l[0].is_multiple_of(self.inplane_factor) || !l[1].is_multiple_of(self.inplane_factor) {
            return Err(Error::param(format!(
                "in-plane factor {} does not divide reference dims {:?}",
                self.inplane_factor, l
            )));
        }
        if !l[2].is_multiple_of(self.thickness_factor) {
            return Err(Error::param(format!(
                "thickness factor {} does not divide through-plane length {}",
                self.thickness_factor, l[2]
            )));
        }
        Ok(())
    }
}

/// An ordered set of parallel 2D slices with one rigid pose per slice.
///
/// The images are stored as one stack-local volume `(u, v, slice)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    pub geometry: StackGeometry,
    pub images: Volume,
    pub poses: Vec<RigidMotion>,
}

impl SliceStack {
    pub fn new(geometry: StackGeometry, images: Volume, poses: Vec<RigidMotion>) -> Result<Self> {
        geometry.validate()?;
        if images.dims() != geometry.image_dims() {
            return Err(Error::shape(format!(
                "stack images {:?} do not match geometry {:?}",
                images.dims(),
                geometry.image_dims()
            )));
        }
        if poses.len() != images.dims()[2] {
            return Err(Error::shape(format!(
                "{} poses for {} slices",
                poses.len(),
                images.dims()[2]
            )));
        }
        Ok(SliceStack {
            geometry,
            images,
            poses,
        })
    }

    pub fn len(&self) -> usize {
        self.images.dims()[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self) -> Axis {
        self.geometry.axis
    }

    /// Slice `s` as a `(nu, nv, 1)` volume.
    pub fn slice(&self, s: usize) -> Volume {
        let d = self.images.dims();
        crop(&self.images, [0, 0, s], [d[0], d[1], 1]).expect("slice index in range")
    }

    pub fn slice_data(&self, s: usize) -> &[f32] {
        let d = self.images.dims();
        let n = d[0] * d[1];
        &self.images.data()[s * n..(s + 1) * n]
    }

    pub fn slice_data_mut(&mut self, s: usize) -> &mut [f32] {
        let d = self.images.dims();
        let n = d[0] * d[1];
        &mut self.images.data_mut()[s * n..(s + 1) * n]
    }
}
