use serde::{Deserialize, Serialize};

use crate::acquisition::{
    cws_kernel, grid_center_mm, PsfKernel, RigidMotion, SliceStack, StackGeometry,
};
use crate::error::{Error, Result};
use crate::volume::Volume;

/// Point-spread function of one slice: a through-plane profile across the
/// slice thickness and a separable in-plane profile ahead of in-plane
/// decimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePsf {
    pub through_plane: PsfKernel,
    pub in_plane: PsfKernel,
}

impl SlicePsf {
    /// Cosine-windowed sinc profiles matched to the stack's thickness and
    /// in-plane factors (delta when a factor is 1).
    pub fn for_geometry(g: &StackGeometry) -> Result<Self> {
        Ok(SlicePsf {
            through_plane: cws_kernel(g.thickness_factor)?,
            in_plane: cws_kernel(g.inplane_factor)?,
        })
    }
}

/// Voxel grid a reconstruction lives on. Grids share their physical center
/// with every stack's reference grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl ReconGrid {
    pub fn of_volume(v: &Volume) -> Self {
        ReconGrid {
            dims: v.dims(),
            spacing: v.spacing(),
        }
    }

    pub fn of_geometry(g: &StackGeometry) -> Self {
        ReconGrid {
            dims: g.reference_dims,
            spacing: g.reference_spacing,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::param(format!(
                "grid dims must be positive, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::param(format!(
                "grid spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        Ok(())
    }
}

/// Affine walk from slab indices `(a, b, k)` to continuous voxel positions
/// on the target grid, plus the separable weights of one slice.
#[derive(Debug, Clone)]
pub(crate) struct SliceOp {
    origin: [f64; 3],
    du: [f64; 3],
    dv: [f64; 3],
    dw: [f64; 3],
    /// Slab extent along u and v, including the in-plane PSF margin.
    wa: usize,
    wb: usize,
    nu: usize,
    nv: usize,
    factor: usize,
    in_taps: Vec<f64>,
    /// Non-zero through-plane taps as `(offset, weight)`.
    w_taps: Vec<(isize, f64)>,
    dims: [usize; 3],
}

impl SliceOp {
    pub fn new(
        g: &StackGeometry,
        psf: &SlicePsf,
        s: usize,
        pose: &RigidMotion,
        grid: &ReconGrid,
    ) -> Self {
        let [ua, va, wa_axis] = g.axis.stack_order();
        let sp = g.reference_spacing;
        let c_ref = grid_center_mm(g.reference_dims, sp);
        let c_tgt = grid_center_mm(grid.dims, grid.spacing);
        let r = pose.rotation_matrix();
        let t = pose.translation_mm();
        let hi = psf.in_plane.halfwidth();
        let f = g.inplane_factor;
        let [nu, nv, _] = g.image_dims();
        // Reference mm position of slab index (0, 0, 0).
        let mut p0 = [0f64; 3];
        p0[ua] = -(hi as f64) * sp[ua];
        p0[va] = -(hi as f64) * sp[va];
        p0[wa_axis] = (s * g.thickness_factor) as f64 * sp[wa_axis];
        let to_vox = |q: [f64; 3]| -> [f64; 3] { std::array::from_fn(|i| q[i] / grid.spacing[i]) };
        let rot = |d: [f64; 3]| -> [f64; 3] {
            std::array::from_fn(|i| r[i][0] * d[0] + r[i][1] * d[1] + r[i][2] * d[2])
        };
        let moved = rot(std::array::from_fn(|i| p0[i] - c_ref[i]));
        let origin = to_vox(std::array::from_fn(|i| moved[i] + c_tgt[i] + t[i]));
        let step = |axis: usize| {
            let mut e = [0f64; 3];
            e[axis] = sp[axis];
            to_vox(rot(e))
        };
        let h = psf.through_plane.halfwidth() as isize;
        let w_taps = (-h..=h)
            .map(|k| (k, psf.through_plane.at(k)))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        SliceOp {
            origin,
            du: step(ua),
            dv: step(va),
            dw: step(wa_axis),
            wa: (nu - 1) * f + 2 * hi + 1,
            wb: (nv - 1) * f + 2 * hi + 1,
            nu,
            nv,
            factor: f,
            in_taps: psf.in_plane.taps().to_vec(),
            w_taps,
            dims: grid.dims,
        }
    }

    pub fn pixels(&self) -> usize {
        self.nu * self.nv
    }

    fn walk(&self, mut visit: impl FnMut(usize, f64, [f64; 3])) {
        for &(k, tw) in &self.w_taps {
            for b in 0..self.wb {
                let row: [f64; 3] = std::array::from_fn(|i| {
                    self.origin[i] + b as f64 * self.dv[i] + k as f64 * self.dw[i]
                });
                for a in 0..self.wa {
                    let p = std::array::from_fn(|i| row[i] + a as f64 * self.du[i]);
                    visit(b * self.wa + a, tw, p);
                }
            }
        }
    }

    /// Noise-free slice of `data` (laid out on the target grid), row-major
    /// `(nu, nv)`.
    pub fn forward(&self, data: &[f32]) -> Vec<f64> {
        let mut slab = vec![0f64; self.wa * self.wb];
        self.walk(|i, tw, p| slab[i] += tw * trilinear(data, self.dims, p));
        if self.in_taps.len() == 1 && self.factor == 1 {
            return slab;
        }
        let (f, nt) = (self.factor, self.in_taps.len());
        let mut rows = vec![0f64; self.wb * self.nu];
        for b in 0..self.wb {
            for i in 0..self.nu {
                let src = &slab[b * self.wa + i * f..][..nt];
                rows[b * self.nu + i] = src.iter().zip(&self.in_taps).map(|(s, w)| s * w).sum();
            }
        }
        let mut out = vec![0f64; self.pixels()];
        for j in 0..self.nv {
            for (d, &w) in self.in_taps.iter().enumerate() {
                let r = &rows[(j * f + d) * self.nu..][..self.nu];
                for (o, &x) in out[j * self.nu..][..self.nu].iter_mut().zip(r) {
                    *o += w * x;
                }
            }
        }
        out
    }

    fn slab_adjoint(&self, image: &[f64], abs: bool) -> Vec<f64> {
        if self.in_taps.len() == 1 && self.factor == 1 {
            return image.to_vec();
        }
        let taps: Vec<f64> = if abs {
            self.in_taps.iter().map(|t| t.abs()).collect()
        } else {
            self.in_taps.clone()
        };
        let f = self.factor;
        let mut rows = vec![0f64; self.wb * self.nu];
        for j in 0..self.nv {
            for (d, &w) in taps.iter().enumerate() {
                let r = &mut rows[(j * f + d) * self.nu..][..self.nu];
                for (o, &x) in r.iter_mut().zip(&image[j * self.nu..][..self.nu]) {
                    *o += w * x;
                }
            }
        }
        let mut slab = vec![0f64; self.wa * self.wb];
        for b in 0..self.wb {
            for i in 0..self.nu {
                let g = rows[b * self.nu + i];
                let dst = &mut slab[b * self.wa + i * f..][..taps.len()];
                for (s, w) in dst.iter_mut().zip(&taps) {
                    *s += w * g;
                }
            }
        }
        slab
    }

    /// Accumulate the adjoint of [`SliceOp::forward`] applied to `image`
    /// into `out`.
    pub fn adjoint_into(&self, image: &[f64], out: &mut [f64]) {
        let slab = self.slab_adjoint(image, false);
        self.walk(|i, tw, p| {
            let v = tw * slab[i];
            if v != 0.0 {
                let st = stencil(self.dims, p);
                for c in 0..st.len {
                    out[st.idx[c]] += st.w[c] * v;
                }
            }
        });
    }

    /// Accumulate the adjoint of `image` into `num`, and into `den` the
    /// adjoint of `weight` under the absolute-valued PSF.
    pub fn weighted_adjoint_into(
        &self,
        image: &[f64],
        weight: &[f64],
        num: &mut [f64],
        den: &mut [f64],
    ) {
        let se = self.slab_adjoint(image, false);
        let sw = self.slab_adjoint(weight, true);
        self.walk(|i, tw, p| {
            let (ve, vw) = (tw * se[i], tw.abs() * sw[i]);
            if ve != 0.0 || vw != 0.0 {
                let st = stencil(self.dims, p);
                for c in 0..st.len {
                    num[st.idx[c]] += st.w[c] * ve;
                    den[st.idx[c]] += st.w[c] * vw;
                }
            }
        });
    }
}

struct Stencil64 {
    idx: [usize; 8],
    w: [f64; 8],
    len: usize,
}

#[inline]
fn stencil(dims: [usize; 3], p: [f64; 3]) -> Stencil64 {
    let mut s = Stencil64 {
        idx: [0; 8],
        w: [0.0; 8],
        len: 0,
    };
    let fl = [p[0].floor(), p[1].floor(), p[2].floor()];
    let [nx, ny, nz] = dims;
    if fl[0] >= 0.0
        && fl[1] >= 0.0
        && fl[2] >= 0.0
        && fl[0] < (nx - 1) as f64
        && fl[1] < (ny - 1) as f64
        && fl[2] < (nz - 1) as f64
    {
        let i = (fl[2] as usize * ny + fl[1] as usize) * nx + fl[0] as usize;
        let (tx, ty, tz) = (p[0] - fl[0], p[1] - fl[1], p[2] - fl[2]);
        let plane = nx * ny;
        s.idx = [
            i,
            i + 1,
            i + nx,
            i + nx + 1,
            i + plane,
            i + plane + 1,
            i + plane + nx,
            i + plane + nx + 1,
        ];
        let (ux, uy, uz) = (1.0 - tx, 1.0 - ty, 1.0 - tz);
        s.w = [
            ux * uy * uz,
            tx * uy * uz,
            ux * ty * uz,
            tx * ty * uz,
            ux * uy * tz,
            tx * uy * tz,
            ux * ty * tz,
            tx * ty * tz,
        ];
        s.len = 8;
        return s;
    }
    for a in 0..3 {
        if !(fl[a] >= -1.0 && fl[a] <= dims[a] as f64 - 1.0) {
            return s;
        }
    }
    let base = [fl[0] as isize, fl[1] as isize, fl[2] as isize];
    let fr = [p[0] - fl[0], p[1] - fl[1], p[2] - fl[2]];
    for c in 0..8 {
        let o = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        let q: [isize; 3] = std::array::from_fn(|a| base[a] + o[a] as isize);
        if (0..3).any(|a| q[a] < 0 || q[a] >= dims[a] as isize) {
            continue;
        }
        let w = (0..3)
            .map(|a| if o[a] == 1 { fr[a] } else { 1.0 - fr[a] })
            .product::<f64>();
        if w == 0.0 {
            continue;
        }
        s.idx[s.len] = (q[2] as usize * dims[1] + q[1] as usize) * dims[0] + q[0] as usize;
        s.w[s.len] = w;
        s.len += 1;
    }
    s
}

#[inline]
fn trilinear(data: &[f32], dims: [usize; 3], p: [f64; 3]) -> f64 {
    let [nx, ny, nz] = dims;
    let (fx, fy, fz) = (p[0].floor(), p[1].floor(), p[2].floor());
    if fx >= 0.0
        && fy >= 0.0
        && fz >= 0.0
        && fx < (nx - 1) as f64
        && fy < (ny - 1) as f64
        && fz < (nz - 1) as f64
    {
        let (x, y, z) = (fx as usize, fy as usize, fz as usize);
        let (tx, ty, tz) = (p[0] - fx, p[1] - fy, p[2] - fz);
        let i = (z * ny + y) * nx + x;
        let plane = nx * ny;
        let at = |j: usize| data[j] as f64;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(at(i), at(i + 1), tx);
        let c10 = lerp(at(i + nx), at(i + nx + 1), tx);
        let c01 = lerp(at(i + plane), at(i + plane + 1), tx);
        let c11 = lerp(at(i + plane + nx), at(i + plane + nx + 1), tx);
        return lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz);
    }
    let st = stencil(dims, p);
    (0..st.len).map(|c| st.w[c] * data[st.idx[c]] as f64).sum()
}

fn check_slice(stack_geom: &StackGeometry, s: usize) -> Result<()> {
    stack_geom.validate()?;
    let n = stack_geom.image_dims()[2];
    if s >= n {
        return Err(Error::param(format!(
            "slice index {s} out of range for {n} slices"
        )));
    }
    Ok(())
}

fn slice_volume(g: &StackGeometry, data: Vec<f32>) -> Result<Volume> {
    let [ua, va, wa] = g.axis.stack_order();
    let sp = g.reference_spacing;
    let [nu, nv, _] = g.image_dims();
    Volume::new(
        [nu, nv, 1],
        [
            sp[ua] * g.inplane_factor as f64,
            sp[va] * g.inplane_factor as f64,
            sp[wa] * g.thickness_factor as f64,
        ],
        data,
    )
}

/// Noise-free forward model of slice `s`: rigid motion, through-plane PSF,
/// slice selection and in-plane blur plus decimation, applied to `vol`.
/// The result is a `(nu, nv, 1)` volume.
pub fn simulate_slice(
    vol: &Volume,
    pose: &RigidMotion,
    psf: &SlicePsf,
    geometry: &StackGeometry,
    s: usize,
) -> Result<Volume> {
    check_slice(geometry, s)?;
    pose.validate()?;
    let op = SliceOp::new(geometry, psf, s, pose, &ReconGrid::of_volume(vol));
    let out = op.forward(vol.data());
    slice_volume(geometry, out.into_iter().map(|x| x as f32).collect())
}

/// Adjoint of [`simulate_slice`]: spreads a slice image back onto `grid`
/// with the same trilinear and PSF weights.
pub fn slice_adjoint(
    image: &Volume,
    pose: &RigidMotion,
    psf: &SlicePsf,
    geometry: &StackGeometry,
    s: usize,
    grid: &ReconGrid,
) -> Result<Volume> {
    check_slice(geometry, s)?;
    pose.validate()?;
    grid.validate()?;
    let [nu, nv, _] = geometry.image_dims();
    if image.dims() != [nu, nv, 1] {
        return Err(Error::shape(format!(
            "slice image {:?} does not match geometry ({nu}, {nv}, 1)",
            image.dims()
        )));
    }
    let op = SliceOp::new(geometry, psf, s, pose, grid);
    let e: Vec<f64> = image.data().iter().map(|&x| x as f64).collect();
    let mut out = vec![0f64; grid.len()];
    op.adjoint_into(&e, &mut out);
    Volume::new(
        grid.dims,
        grid.spacing,
        out.into_iter().map(|x| x as f32).collect(),
    )
}

/// Forward model of every slice of `stack` at the given poses.
pub fn simulate_stack_images(
    vol: &Volume,
    stack: &SliceStack,
    poses: &[RigidMotion],
    psf: &SlicePsf,
) -> Result<Volume> {
    if poses.len() != stack.len() {
        return Err(Error::shape(format!(
            "{} poses for {} slices",
            poses.len(),
            stack.len()
        )));
    }
    let grid = ReconGrid::of_volume(vol);
    let mut data = Vec::with_capacity(stack.images.len());
    for (s, pose) in poses.iter().enumerate() {
        pose.validate()?;
        let op = SliceOp::new(&stack.geometry, psf, s, pose, &grid);
        data.extend(op.forward(vol.data()).into_iter().map(|x| x as f32));
    }
    stack.images.with_data(data)
}
