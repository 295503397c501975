//! Classical interpolation upsamplers used as baselines.
//!
//! Output index `i` along an upsampled axis samples input coordinate `i / f`,
//! matching the decimation phase anchored at index 0.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::volume::{reflect, Volume};

fn check_factors(factors: [usize; 3]) -> Result<()> {
    if factors.contains(&0) {
        return Err(Error::param(format!(
            "upsampling factors must be >= 1, got {factors:?}"
        )));
    }
    Ok(())
}

fn scaled_spacing(v: &Volume, factors: [usize; 3]) -> [f64; 3] {
    let s = v.spacing();
    [
        s[0] / factors[0] as f64,
        s[1] / factors[1] as f64,
        s[2] / factors[2] as f64,
    ]
}

/// Apply a 1D resampling routine along `axis` of a `dims`-shaped grid.
/// `line(src, dst)` maps `n` input samples to `n * f` outputs.
fn along_axis<T: Copy + Default>(
    data: &[T],
    dims: [usize; 3],
    axis: usize,
    f: usize,
    mut line: impl FnMut(&[T], &mut [T]),
) -> (Vec<T>, [usize; 3]) {
    let mut od = dims;
    od[axis] *= f;
    let n = dims[axis];
    let m = od[axis];
    let mut out = vec![T::default(); od.iter().product()];
    let mut src = vec![T::default(); n];
    let mut dst = vec![T::default(); m];
    let [nx, ny, nz] = dims;
    let (ox, oy) = (od[0], od[1]);
    match axis {
        0 => {
            for z in 0..nz {
                for y in 0..ny {
                    let r = (z * ny + y) * nx;
                    line(&data[r..r + nx], &mut out[(z * oy + y) * ox..][..ox]);
                }
            }
        }
        1 => {
            for z in 0..nz {
                for x in 0..nx {
                    for (j, s) in src.iter_mut().enumerate() {
                        *s = data[(z * ny + j) * nx + x];
                    }
                    line(&src, &mut dst);
                    for (j, &d) in dst.iter().enumerate() {
                        out[(z * oy + j) * ox + x] = d;
                    }
                }
            }
        }
        _ => {
            for y in 0..ny {
                for x in 0..nx {
                    for (j, s) in src.iter_mut().enumerate() {
                        *s = data[(j * ny + y) * nx + x];
                    }
                    line(&src, &mut dst);
                    for (j, &d) in dst.iter().enumerate() {
                        out[(j * oy + y) * ox + x] = d;
                    }
                }
            }
        }
    }
    (out, od)
}

fn linear_line<T: Real>(src: &[T], dst: &mut [T], f: usize) {
    let n = src.len();
    let inv = T::from_f64(1.0 / f as f64);
    for (i, d) in dst.iter_mut().enumerate() {
        let i0 = i / f;
        let r = i % f;
        *d = if i0 + 1 >= n || r == 0 {
            src[i0.min(n - 1)]
        } else {
            let t = T::from_f64(r as f64) * inv;
            src[i0] + t * (src[i0 + 1] - src[i0])
        };
    }
}

/// Separable linear upsampling of a dense grid; positions past the last
/// sample clamp to it. Shared by the trilinear baseline and the network's
/// global residual path.
pub(crate) fn linear_upsample<T: Real>(
    data: &[T],
    dims: [usize; 3],
    factors: [usize; 3],
) -> (Vec<T>, [usize; 3]) {
    let mut cur = data.to_vec();
    let mut d = dims;
    for axis in 0..3 {
        let f = factors[axis];
        if f > 1 {
            let (o, od) = along_axis(&cur, d, axis, f, |s, t| linear_line(s, t, f));
            cur = o;
            d = od;
        }
    }
    (cur, d)
}

/// Grid-aligned trilinear interpolation; output dims are input dims times
/// `factors`.
pub fn upsample_trilinear(v: &Volume, factors: [usize; 3]) -> Result<Volume> {
    check_factors(factors)?;
    let (data, dims) = linear_upsample(v.data(), v.dims(), factors);
    Ok(Volume::new(dims, scaled_spacing(v, factors), data)?.with_provenance(v.provenance()))
}

/// Sample replication: output `i` copies input `i / f`. Stands in for "no
/// upsampling" when results must live on the high-resolution grid.
pub fn upsample_nearest(v: &Volume, factors: [usize; 3]) -> Result<Volume> {
    check_factors(factors)?;
    let mut cur = v.data().to_vec();
    let mut d = v.dims();
    for axis in 0..3 {
        let f = factors[axis];
        if f > 1 {
            let (o, od) = along_axis(&cur, d, axis, f, |s, t| {
                for (i, x) in t.iter_mut().enumerate() {
                    *x = s[i / f];
                }
            });
            cur = o;
            d = od;
        }
    }
    Ok(Volume::new(d, scaled_spacing(v, factors), cur)?.with_provenance(v.provenance()))
}

const BSPLINE_POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2

/// In-place conversion of samples to cubic B-spline coefficients under
/// whole-sample mirror extension.
fn bspline_prefilter(c: &mut [f64]) {
    let n = c.len();
    if n == 1 {
        return;
    }
    let z = BSPLINE_POLE;
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    for v in c.iter_mut() {
        *v *= gain;
    }
    // Exact causal initialization over one mirror period.
    let zn = z.powi(n as i32 - 1);
    let z2n = zn * zn;
    let mut sum = c[0] + zn * c[n - 1];
    let mut zk = z;
    let mut z2k = zn * zn / z;
    for v in c.iter().take(n - 1).skip(1) {
        sum += (zk + z2k) * v;
        zk *= z;
        z2k /= z;
    }
    c[0] = sum / (1.0 - z2n);
    for k in 1..n {
        c[k] += z * c[k - 1];
    }
    c[n - 1] = (z / (z * z - 1.0)) * (c[n - 1] + z * c[n - 2]);
    for k in (0..n - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
}

#[inline]
fn cubic_bspline(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

fn bspline_line(src: &[f32], dst: &mut [f32], f: usize, coeffs: &mut Vec<f64>) {
    let n = src.len();
    coeffs.clear();
    coeffs.extend(src.iter().map(|&s| s as f64));
    bspline_prefilter(coeffs);
    for (i, d) in dst.iter_mut().enumerate() {
        let t = i as f64 / f as f64;
        let j0 = t.floor() as isize;
        let mut acc = 0.0;
        for j in j0 - 1..=j0 + 2 {
            let w = cubic_bspline(t - j as f64);
            if w != 0.0 {
                acc += w * coeffs[reflect(j, n)];
            }
        }
        *d = acc as f32;
    }
}

/// Cubic B-spline interpolation with exact recursive prefiltering and mirror
/// boundaries. Every upsampled axis needs at least 4 samples.
pub fn upsample_bspline(v: &Volume, factors: [usize; 3]) -> Result<Volume> {
    check_factors(factors)?;
    let dims = v.dims();
    for a in 0..3 {
        if factors[a] > 1 && dims[a] < 4 {
            return Err(Error::param(format!(
                "B-spline upsampling needs >= 4 samples along axis {a}, got {}",
                dims[a]
            )));
        }
    }
    let mut cur = v.data().to_vec();
    let mut d = dims;
    let mut coeffs = Vec::new();
    let mut any = false;
    for axis in 0..3 {
        let f = factors[axis];
        if f > 1 {
            let (o, od) = along_axis(&cur, d, axis, f, |s, t| bspline_line(s, t, f, &mut coeffs));
            cur = o;
            d = od;
            any = true;
        }
    }
    if !any {
        return Ok(v.clone());
    }
    Ok(Volume::new(d, scaled_spacing(v, factors), cur)?.with_provenance(v.provenance()))
}
