//! Convolution and transposed-convolution layers with mirror padding.
//!
//! Both directions go through im2col + GEMM, processed a few z-planes at a
//! time so the column buffer stays bounded.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::num::{gemm, Real};
use crate::volume::{reflect, Axis};

/// Upper bound on im2col buffer elements per chunk (at least one grid row is
/// always processed).
const COLUMN_BUDGET: usize = 1 << 19;

/// Dense 3D convolution: `y_j = b_j + sum_k x_k * w_kj`.
///
/// Weights are laid out `[out][in][kz][ky][kx]`; kernel extents are
/// `[kx, ky, kz]` and must be odd.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> ConvSpec<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        weights: Vec<T>,
        biases: Vec<T>,
    ) -> Result<Self> {
        let spec = ConvSpec {
            in_channels,
            out_channels,
            kernel,
            weights,
            biases,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zeros(in_channels: usize, out_channels: usize, kernel: [usize; 3]) -> Result<Self> {
        let taps: usize = kernel.iter().product();
        Self::new(
            in_channels,
            out_channels,
            kernel,
            vec![T::ZERO; out_channels * in_channels * taps],
            vec![T::ZERO; out_channels],
        )
    }

    pub fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Column count of the weight matrix: `in_channels * taps`.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.taps()
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::shape("conv channel counts must be >= 1"));
        }
        if self.kernel.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::shape(format!(
                "conv kernel extents must be odd, got {:?}",
                self.kernel
            )));
        }
        if self.weights.len() != self.out_channels * self.fan_in() {
            return Err(Error::shape(format!(
                "conv {}->{} {:?} needs {} weights, got {}",
                self.in_channels,
                self.out_channels,
                self.kernel,
                self.out_channels * self.fan_in(),
                self.weights.len()
            )));
        }
        if self.biases.len() != self.out_channels {
            return Err(Error::shape(format!(
                "conv needs {} biases, got {}",
                self.out_channels,
                self.biases.len()
            )));
        }
        if !self
            .weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.is_finite())
        {
            return Err(Error::param("conv parameters must be finite"));
        }
        Ok(())
    }

    /// Weight offset of tap `(ox, oy, oz)` linking input `k` to output `j`.
    pub fn weight_index(&self, j: usize, k: usize, ox: usize, oy: usize, oz: usize) -> usize {
        let [kx, ky, kz] = self.kernel;
        (((j * self.in_channels + k) * kz + oz) * ky + oy) * kx + ox
    }

    pub fn zeros_like(&self) -> Self {
        ConvSpec {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            weights: vec![T::ZERO; self.weights.len()],
            biases: vec![T::ZERO; self.biases.len()],
        }
    }

    pub fn cast<U: Real>(&self) -> ConvSpec<U> {
        ConvSpec {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            weights: self
                .weights
                .iter()
                .map(|w| U::from_f64(w.to_f64()))
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| U::from_f64(b.to_f64()))
                .collect(),
        }
    }
}

/// Transposed convolution along one in-plane axis: zero-insertion by
/// `stride`, then a mirror-padded convolution whose kernel spans
/// `2 * stride + 1` taps along `axis` and 3 along the others.
#[derive(Debug, Clone, PartialEq)]
pub struct TConvSpec<T> {
    pub axis: Axis,
    pub stride: usize,
    pub conv: ConvSpec<T>,
}

impl<T: Real> TConvSpec<T> {
    pub fn kernel_for(axis: Axis, stride: usize) -> [usize; 3] {
        let mut k = [3; 3];
        k[axis.index()] = 2 * stride + 1;
        k
    }

    pub fn new(axis: Axis, stride: usize, conv: ConvSpec<T>) -> Result<Self> {
        let t = TConvSpec { axis, stride, conv };
        t.validate()?;
        Ok(t)
    }

    pub fn zeros(
        axis: Axis,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        let conv = ConvSpec::zeros(in_channels, out_channels, Self::kernel_for(axis, stride))?;
        Self::new(axis, stride, conv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axis == Axis::Z {
            return Err(Error::param("transposed conv upsamples in-plane axes only"));
        }
        if !matches!(self.stride, 2 | 4) {
            return Err(Error::param(format!(
                "transposed conv stride must be 2 or 4, got {}",
                self.stride
            )));
        }
        if self.conv.kernel != Self::kernel_for(self.axis, self.stride) {
            return Err(Error::shape(format!(
                "transposed conv kernel {:?} does not match axis {} stride {}",
                self.conv.kernel, self.axis, self.stride
            )));
        }
        self.conv.validate()
    }

    pub fn zeros_like(&self) -> Self {
        TConvSpec {
            axis: self.axis,
            stride: self.stride,
            conv: self.conv.zeros_like(),
        }
    }

    pub fn cast<U: Real>(&self) -> TConvSpec<U> {
        TConvSpec {
            axis: self.axis,
            stride: self.stride,
            conv: self.conv.cast(),
        }
    }
}

/// Layer kind tag used in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Tconv,
}

/// Per-axis reflected index tables, one row per kernel offset.
struct AxisMaps {
    maps: [Vec<Vec<usize>>; 3],
}

fn reflect_map(n: usize, k: usize) -> Vec<Vec<usize>> {
    let h = (k / 2) as isize;
    (0..k)
        .map(|o| {
            (0..n)
                .map(|i| reflect(i as isize + o as isize - h, n))
                .collect()
        })
        .collect()
}

impl AxisMaps {
    fn new(dims: [usize; 3], kernel: [usize; 3]) -> Self {
        AxisMaps {
            maps: [
                reflect_map(dims[0], kernel[0]),
                reflect_map(dims[1], kernel[1]),
                reflect_map(dims[2], kernel[2]),
            ],
        }
    }
}

/// Grid rows (`(z, y)` pairs) per chunk so the column buffer stays within
/// budget; at least one row.
fn chunk_rows(fan_in: usize, row_len: usize, rows: usize) -> usize {
    (COLUMN_BUDGET / (fan_in * row_len).max(1)).clamp(1, rows.max(1))
}

/// Interior x-range where offset `d` stays in bounds, so rows can be copied
/// contiguously.
#[inline]
fn interior(nx: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (nx as isize - d.max(0)).max(lo as isize) as usize;
    (lo.min(nx), hi.min(nx))
}

/// Column matrix for grid rows `r0..r0 + nr` (row `rho = z * ny + y`):
/// matrix row `(k, oz, oy, ox)`, column `(rho - r0, x)`.
fn im2col<T: Real>(
    x: &Tensor4<T>,
    kernel: [usize; 3],
    maps: &AxisMaps,
    r0: usize,
    nr: usize,
    cols: &mut [T],
) {
    let [c, nx, ny, _] = x.shape();
    let [kx, ky, kz] = kernel;
    let hx = (kx / 2) as isize;
    let ncols = nx * nr;
    let mut r = 0;
    for k in 0..c {
        let ch = x.channel(k);
        for oz in 0..kz {
            let zmap = &maps.maps[2][oz];
            for oy in 0..ky {
                let ymap = &maps.maps[1][oy];
                for ox in 0..kx {
                    let xmap = &maps.maps[0][ox];
                    let d = ox as isize - hx;
                    let (lo, hi) = interior(nx, d);
                    let row = &mut cols[r * ncols..(r + 1) * ncols];
                    for i in 0..nr {
                        let rho = r0 + i;
                        let (z, y) = (rho / ny, rho % ny);
                        let src = &ch[(zmap[z] * ny + ymap[y]) * nx..][..nx];
                        let dst = &mut row[i * nx..][..nx];
                        for xi in (0..lo).chain(hi..nx) {
                            dst[xi] = src[xmap[xi]];
                        }
                        if hi > lo {
                            let s0 = (lo as isize + d) as usize;
                            dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the input grid.
fn col2im_add<T: Real>(
    dx: &mut Tensor4<T>,
    kernel: [usize; 3],
    maps: &AxisMaps,
    r0: usize,
    nr: usize,
    cols: &[T],
) {
    let [c, nx, ny, _] = dx.shape();
    let [kx, ky, kz] = kernel;
    let hx = (kx / 2) as isize;
    let ncols = nx * nr;
    let per = dx.voxels();
    let data = dx.data_mut();
    let mut r = 0;
    for k in 0..c {
        let ch = &mut data[k * per..(k + 1) * per];
        for oz in 0..kz {
            let zmap = &maps.maps[2][oz];
            for oy in 0..ky {
                let ymap = &maps.maps[1][oy];
                for ox in 0..kx {
                    let xmap = &maps.maps[0][ox];
                    let d = ox as isize - hx;
                    let (lo, hi) = interior(nx, d);
                    let row = &cols[r * ncols..(r + 1) * ncols];
                    for i in 0..nr {
                        let rho = r0 + i;
                        let (z, y) = (rho / ny, rho % ny);
                        let dst = &mut ch[(zmap[z] * ny + ymap[y]) * nx..][..nx];
                        let src = &row[i * nx..][..nx];
                        for xi in (0..lo).chain(hi..nx) {
                            dst[xmap[xi]] += src[xi];
                        }
                        if hi > lo {
                            let s0 = (lo as isize + d) as usize;
                            for (o, &v) in dst[s0..s0 + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                                *o += v;
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

fn check_input<T: Real>(x: &Tensor4<T>, spec: &ConvSpec<T>) -> Result<()> {
    if x.channels() != spec.in_channels {
        return Err(Error::shape(format!(
            "conv expects {} input channels, got {}",
            spec.in_channels,
            x.channels()
        )));
    }
    Ok(())
}

/// Mirror-padded convolution; output keeps the input's spatial shape.
pub fn conv3d_forward<T: Real>(x: &Tensor4<T>, spec: &ConvSpec<T>) -> Result<Tensor4<T>> {
    check_input(x, spec)?;
    let [_, nx, ny, nz] = x.shape();
    let rows = ny * nz;
    let total = nx * rows;
    let fan_in = spec.fan_in();
    let cout = spec.out_channels;
    let maps = AxisMaps::new(x.spatial(), spec.kernel);
    let step = chunk_rows(fan_in, nx, rows);
    let mut cols = vec![T::ZERO; fan_in * nx * step];
    let mut y = vec![T::ZERO; cout * total];
    let mut r0 = 0;
    while r0 < rows {
        let nr = step.min(rows - r0);
        let ncols = nx * nr;
        let cols = &mut cols[..fan_in * ncols];
        im2col(x, spec.kernel, &maps, r0, nr, cols);
        gemm(
            cout,
            fan_in,
            ncols,
            T::ONE,
            &spec.weights,
            (fan_in, 1),
            cols,
            (ncols, 1),
            T::ZERO,
            &mut y[r0 * nx..],
            (total, 1),
        );
        r0 += nr;
    }
    add_bias(&mut y, &spec.biases, total);
    Tensor4::new([cout, nx, ny, nz], y)
}

fn add_bias<T: Real>(y: &mut [T], biases: &[T], total: usize) {
    for (j, &b) in biases.iter().enumerate() {
        for v in &mut y[j * total..(j + 1) * total] {
            *v += b;
        }
    }
}

fn bias_grad<T: Real>(g: &[T], grad: &mut [T], total: usize) {
    for (j, gb) in grad.iter_mut().enumerate() {
        let s: T = g[j * total..(j + 1) * total].iter().copied().sum();
        *gb += s;
    }
}

/// Gradients of a convolution. Parameter gradients are accumulated into
/// `grad`; the input gradient is returned when `need_dx` is set.
pub fn conv3d_backward<T: Real>(
    x: &Tensor4<T>,
    spec: &ConvSpec<T>,
    dy: &Tensor4<T>,
    grad: &mut ConvSpec<T>,
    need_dx: bool,
) -> Result<Option<Tensor4<T>>> {
    check_input(x, spec)?;
    let [_, nx, ny, nz] = x.shape();
    if dy.shape() != [spec.out_channels, nx, ny, nz] {
        return Err(Error::shape(format!(
            "conv output gradient {:?} does not match output shape",
            dy.shape()
        )));
    }
    check_grad(spec, grad)?;
    let rows = ny * nz;
    let total = nx * rows;
    let fan_in = spec.fan_in();
    let cout = spec.out_channels;
    let maps = AxisMaps::new(x.spatial(), spec.kernel);
    let step = chunk_rows(fan_in, nx, rows);
    let mut cols = vec![T::ZERO; fan_in * nx * step];
    let mut dcols = if need_dx {
        vec![T::ZERO; fan_in * nx * step]
    } else {
        Vec::new()
    };
    let mut dx = if need_dx {
        Some(Tensor4::zeros(x.shape())?)
    } else {
        None
    };
    let g = dy.data();
    let mut r0 = 0;
    while r0 < rows {
        let nr = step.min(rows - r0);
        let ncols = nx * nr;
        let cols = &mut cols[..fan_in * ncols];
        im2col(x, spec.kernel, &maps, r0, nr, cols);
        // dW += dY_chunk * cols^T
        gemm(
            cout,
            ncols,
            fan_in,
            T::ONE,
            &g[r0 * nx..],
            (total, 1),
            cols,
            (1, ncols),
            T::ONE,
            &mut grad.weights,
            (fan_in, 1),
        );
        if let Some(dx) = dx.as_mut() {
            let dcols = &mut dcols[..fan_in * ncols];
            // dcols = W^T * dY_chunk
            gemm(
                fan_in,
                cout,
                ncols,
                T::ONE,
                &spec.weights,
                (1, fan_in),
                &g[r0 * nx..],
                (total, 1),
                T::ZERO,
                dcols,
                (ncols, 1),
            );
            col2im_add(dx, spec.kernel, &maps, r0, nr, dcols);
        }
        r0 += nr;
    }
    bias_grad(g, &mut grad.biases, total);
    Ok(dx)
}

fn check_grad<T: Real>(spec: &ConvSpec<T>, grad: &ConvSpec<T>) -> Result<()> {
    if grad.weights.len() != spec.weights.len() || grad.biases.len() != spec.biases.len() {
        return Err(Error::shape(
            "conv gradient accumulator has the wrong shape",
        ));
    }
    Ok(())
}

/// Output coordinates along the upsampled axis that receive nonzero input
/// through the same set of kernel taps.
struct PhaseGroup {
    taps: Vec<usize>,
    coords: Vec<usize>,
    /// `src[t][i]`: input index reached by tap `taps[t]` from `coords[i]`.
    src: Vec<Vec<usize>>,
}

/// Group upsampled-axis outputs by which taps land on stuffed samples
/// (every `stride`-th position of the mirror-extended zero-stuffed signal).
fn phase_groups(n_in: usize, stride: usize, ktaps: usize) -> Vec<PhaseGroup> {
    let len = n_in * stride;
    let h = (ktaps / 2) as isize;
    let mut groups: Vec<PhaseGroup> = Vec::new();
    for o in 0..len {
        let mut taps = Vec::new();
        let mut srcs = Vec::new();
        for t in 0..ktaps {
            let s = reflect(o as isize + t as isize - h, len);
            if s.is_multiple_of(stride) {
                taps.push(t);
                srcs.push(s / stride);
            }
        }
        let g = match groups.iter().position(|g| g.taps == taps) {
            Some(i) => i,
            None => {
                groups.push(PhaseGroup {
                    src: vec![Vec::new(); taps.len()],
                    taps,
                    coords: Vec::new(),
                });
                groups.len() - 1
            }
        };
        groups[g].coords.push(o);
        for (t, s) in srcs.into_iter().enumerate() {
            groups[g].src[t].push(s);
        }
    }
    groups
}

/// One phase group of a transposed convolution lowered to a dense GEMM over
/// only the contributing taps.
struct TconvGroup {
    /// Output x and y coordinates covered, in column order (y outer).
    xs: Vec<usize>,
    ys: Vec<usize>,
    /// One entry per lowered tap `(ox, oy, oz)` with its input x and y
    /// source lists (aligned with `xs` and `ys`).
    taps: Vec<([usize; 3], Vec<usize>, Vec<usize>)>,
}

struct TconvPlan {
    groups: Vec<TconvGroup>,
    zmaps: Vec<Vec<usize>>,
    in_dims: [usize; 3],
    out_dims: [usize; 3],
}

impl TconvPlan {
    fn new<T: Real>(spec: &TConvSpec<T>, in_dims: [usize; 3]) -> Self {
        let [nx, ny, nz] = in_dims;
        let a = spec.axis.index();
        let mut out_dims = in_dims;
        out_dims[a] *= spec.stride;
        let kernel = spec.conv.kernel;
        let plain = [reflect_map(nx, kernel[0]), reflect_map(ny, kernel[1])];
        let other = 1 - a;
        let n_other = in_dims[other];
        let groups = phase_groups(in_dims[a], spec.stride, kernel[a])
            .into_iter()
            .map(|pg| {
                let all: Vec<usize> = (0..n_other).collect();
                let (xs, ys) = if a == 0 {
                    (pg.coords.clone(), all)
                } else {
                    (all, pg.coords.clone())
                };
                let mut taps = Vec::new();
                for oz in 0..kernel[2] {
                    for oy in 0..kernel[1] {
                        for ox in 0..kernel[0] {
                            let along = if a == 0 { ox } else { oy };
                            let Some(ti) = pg.taps.iter().position(|&t| t == along) else {
                                continue;
                            };
                            let xsrc = if a == 0 {
                                pg.src[ti].clone()
                            } else {
                                plain[0][ox].clone()
                            };
                            let ysrc = if a == 1 {
                                pg.src[ti].clone()
                            } else {
                                plain[1][oy].clone()
                            };
                            taps.push(([ox, oy, oz], xsrc, ysrc));
                        }
                    }
                }
                TconvGroup { xs, ys, taps }
            })
            .collect();
        TconvPlan {
            groups,
            zmaps: reflect_map(nz, kernel[2]),
            in_dims,
            out_dims,
        }
    }

    fn out_index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.out_dims[1] + y) * self.out_dims[0] + x
    }
}

impl TconvGroup {
    fn plane_cols(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    /// Compact weight matrix `cout x (cin * taps)` for this group.
    fn weights<T: Real>(&self, spec: &ConvSpec<T>) -> Vec<T> {
        let mut w = Vec::with_capacity(spec.out_channels * spec.in_channels * self.taps.len());
        for j in 0..spec.out_channels {
            for k in 0..spec.in_channels {
                for (t, _, _) in &self.taps {
                    w.push(spec.weights[spec.weight_index(j, k, t[0], t[1], t[2])]);
                }
            }
        }
        w
    }

    fn im2col<T: Real>(
        &self,
        plan: &TconvPlan,
        x: &Tensor4<T>,
        z0: usize,
        zc: usize,
        cols: &mut [T],
    ) {
        let [nx, ny, _] = plan.in_dims;
        let ncols = self.plane_cols() * zc;
        let mut r = 0;
        for k in 0..x.channels() {
            let ch = x.channel(k);
            for (t, xsrc, ysrc) in &self.taps {
                let zmap = &plan.zmaps[t[2]];
                let row = &mut cols[r * ncols..(r + 1) * ncols];
                let mut c = 0;
                for z in z0..z0 + zc {
                    let zoff = zmap[z] * ny;
                    for &sy in ysrc {
                        let src = &ch[(zoff + sy) * nx..][..nx];
                        for &sx in xsrc {
                            row[c] = src[sx];
                            c += 1;
                        }
                    }
                }
                r += 1;
            }
        }
    }

    fn col2im_add<T: Real>(
        &self,
        plan: &TconvPlan,
        dx: &mut Tensor4<T>,
        z0: usize,
        zc: usize,
        cols: &[T],
    ) {
        let [nx, ny, _] = plan.in_dims;
        let ncols = self.plane_cols() * zc;
        let per = dx.voxels();
        let c_in = dx.channels();
        let data = dx.data_mut();
        let mut r = 0;
        for k in 0..c_in {
            let ch = &mut data[k * per..(k + 1) * per];
            for (t, xsrc, ysrc) in &self.taps {
                let zmap = &plan.zmaps[t[2]];
                let row = &cols[r * ncols..(r + 1) * ncols];
                let mut c = 0;
                for z in z0..z0 + zc {
                    let zoff = zmap[z] * ny;
                    for &sy in ysrc {
                        let dst = &mut ch[(zoff + sy) * nx..][..nx];
                        for &sx in xsrc {
                            dst[sx] += row[c];
                            c += 1;
                        }
                    }
                }
                r += 1;
            }
        }
    }

    /// Visit output linear indices in column order.
    fn for_each_out(
        &self,
        plan: &TconvPlan,
        z0: usize,
        zc: usize,
        mut f: impl FnMut(usize, usize),
    ) {
        let mut c = 0;
        for z in z0..z0 + zc {
            for &y in &self.ys {
                for &x in &self.xs {
                    f(c, plan.out_index(z, y, x));
                    c += 1;
                }
            }
        }
    }
}
/// Insert `stride - 1` zeros after every sample along `axis`.
pub fn zero_stuff<T: Real>(x: &Tensor4<T>, axis: Axis, stride: usize) -> Result<Tensor4<T>> {
    let [c, nx, ny, nz] = x.shape();
    let mut shape = [c, nx, ny, nz];
    shape[axis.index() + 1] *= stride;
    let mut out = Tensor4::zeros(shape)?;
    let [_, ox, oy, oz] = shape;
    let src = x.data();
    let dst = out.data_mut();
    let mut i = 0;
    for k in 0..c {
        for z in 0..nz {
            for y in 0..ny {
                for xx in 0..nx {
                    let (tx, ty, tz) = match axis {
                        Axis::X => (xx * stride, y, z),
                        Axis::Y => (xx, y * stride, z),
                        Axis::Z => (xx, y, z * stride),
                    };
                    dst[((k * oz + tz) * oy + ty) * ox + tx] = src[i];
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`zero_stuff`]: keep every `stride`-th sample along `axis`.
pub fn zero_unstuff<T: Real>(xs: &Tensor4<T>, axis: Axis, stride: usize) -> Result<Tensor4<T>> {
    let [c, sx, sy, sz] = xs.shape();
    let mut shape = [c, sx, sy, sz];
    let a = axis.index() + 1;
    if shape[a] % stride != 0 {
        return Err(Error::shape(format!(
            "axis length {} not divisible by stride {stride}",
            shape[a]
        )));
    }
    shape[a] /= stride;
    let [_, nx, ny, nz] = shape;
    let src = xs.data();
    let mut data = Vec::with_capacity(c * nx * ny * nz);
    for k in 0..c {
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let (tx, ty, tz) = match axis {
                        Axis::X => (x * stride, y, z),
                        Axis::Y => (x, y * stride, z),
                        Axis::Z => (x, y, z * stride),
                    };
                    data.push(src[((k * sz + tz) * sy + ty) * sx + tx]);
                }
            }
        }
    }
    Tensor4::new(shape, data)
}

fn tconv_check<T: Real>(x: &Tensor4<T>, spec: &TConvSpec<T>) -> Result<()> {
    spec.validate()?;
    check_input(x, &spec.conv)
}

/// `(x stuffed by stride along axis) * w`, mirror padded. Evaluated per
/// output phase using only the taps that meet stuffed samples, which is
/// exactly the convolution of the zero-stuffed signal.
pub fn tconv3d_forward<T: Real>(x: &Tensor4<T>, spec: &TConvSpec<T>) -> Result<Tensor4<T>> {
    tconv_check(x, spec)?;
    let plan = TconvPlan::new(spec, x.spatial());
    let [ox, oy, nz] = plan.out_dims;
    let total = ox * oy * nz;
    let cout = spec.conv.out_channels;
    let mut y = vec![T::ZERO; cout * total];
    for g in &plan.groups {
        let fan_in = spec.conv.in_channels * g.taps.len();
        let w = g.weights(&spec.conv);
        let step = chunk_rows(fan_in, g.plane_cols(), nz);
        let mut cols = vec![T::ZERO; fan_in * g.plane_cols() * step];
        let mut out = vec![T::ZERO; cout * g.plane_cols() * step];
        let mut z0 = 0;
        while z0 < nz {
            let zc = step.min(nz - z0);
            let ncols = g.plane_cols() * zc;
            let cols = &mut cols[..fan_in * ncols];
            g.im2col(&plan, x, z0, zc, cols);
            gemm(
                cout,
                fan_in,
                ncols,
                T::ONE,
                &w,
                (fan_in, 1),
                cols,
                (ncols, 1),
                T::ZERO,
                &mut out,
                (ncols, 1),
            );
            g.for_each_out(&plan, z0, zc, |c, o| {
                for j in 0..cout {
                    y[j * total + o] = out[j * ncols + c];
                }
            });
            z0 += zc;
        }
    }
    add_bias(&mut y, &spec.conv.biases, total);
    Tensor4::new([cout, ox, oy, nz], y)
}

/// Gradients of [`tconv3d_forward`], accumulating parameter gradients into
/// `grad`.
pub fn tconv3d_backward<T: Real>(
    x: &Tensor4<T>,
    spec: &TConvSpec<T>,
    dy: &Tensor4<T>,
    grad: &mut TConvSpec<T>,
    need_dx: bool,
) -> Result<Option<Tensor4<T>>> {
    tconv_check(x, spec)?;
    check_grad(&spec.conv, &grad.conv)?;
    let plan = TconvPlan::new(spec, x.spatial());
    let [ox, oy, nz] = plan.out_dims;
    let cout = spec.conv.out_channels;
    let cin = spec.conv.in_channels;
    if dy.shape() != [cout, ox, oy, nz] {
        return Err(Error::shape(format!(
            "transposed conv output gradient {:?} does not match output shape",
            dy.shape()
        )));
    }
    let total = ox * oy * nz;
    let g_all = dy.data();
    let mut dx = if need_dx {
        Some(Tensor4::zeros(x.shape())?)
    } else {
        None
    };
    for g in &plan.groups {
        let nt = g.taps.len();
        let fan_in = cin * nt;
        let w = g.weights(&spec.conv);
        let mut dw = vec![T::ZERO; cout * fan_in];
        let step = chunk_rows(fan_in, g.plane_cols(), nz);
        let mut cols = vec![T::ZERO; fan_in * g.plane_cols() * step];
        let mut dcols = if need_dx { cols.clone() } else { Vec::new() };
        let mut gy = vec![T::ZERO; cout * g.plane_cols() * step];
        let mut z0 = 0;
        while z0 < nz {
            let zc = step.min(nz - z0);
            let ncols = g.plane_cols() * zc;
            g.for_each_out(&plan, z0, zc, |c, o| {
                for j in 0..cout {
                    gy[j * ncols + c] = g_all[j * total + o];
                }
            });
            let cols = &mut cols[..fan_in * ncols];
            g.im2col(&plan, x, z0, zc, cols);
            gemm(
                cout,
                ncols,
                fan_in,
                T::ONE,
                &gy,
                (ncols, 1),
                cols,
                (1, ncols),
                T::ONE,
                &mut dw,
                (fan_in, 1),
            );
            if let Some(dx) = dx.as_mut() {
                let dcols = &mut dcols[..fan_in * ncols];
                gemm(
                    fan_in,
                    cout,
                    ncols,
                    T::ONE,
                    &w,
                    (1, fan_in),
                    &gy,
                    (ncols, 1),
                    T::ZERO,
                    dcols,
                    (ncols, 1),
                );
                g.col2im_add(&plan, dx, z0, zc, dcols);
            }
            z0 += zc;
        }
        for j in 0..cout {
            for k in 0..cin {
                for (ti, (t, _, _)) in g.taps.iter().enumerate() {
                    let idx = spec.conv.weight_index(j, k, t[0], t[1], t[2]);
                    grad.conv.weights[idx] += dw[j * fan_in + k * nt + ti];
                }
            }
        }
    }
    bias_grad(g_all, &mut grad.conv.biases, total);
    Ok(dx)
}
