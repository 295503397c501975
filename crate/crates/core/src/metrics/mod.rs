//! Volumetric quality metrics: PSNR, 3D SSIM with its DSSIM map, and
//! zero-mean normalized cross-correlation.

mod heatmap;

pub use heatmap::{dssim_color, write_dssim_pngs, DSSIM_RAMP_MAX};

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::volume::{reflect, Volume};

pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_TAPS: usize = 11;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `10 log10(peak^2 / MSE)`; `+inf` when the volumes are identical.
pub fn psnr(a: &Volume, b: &Volume, peak: f64) -> Result<f64> {
    a.same_dims(b)?;
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::param(format!("PSNR peak must be > 0, got {peak}")));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_taps() -> Vec<f64> {
    let h = (SSIM_TAPS / 2) as isize;
    let mut t: Vec<f64> = (-h..=h)
        .map(|k| (-(k * k) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= s);
    t
}

/// Separable mirror-boundary filtering of an f64 grid.
fn smooth(data: &[f64], dims: [usize; 3], taps: &[f64]) -> Vec<f64> {
    let h = (taps.len() / 2) as isize;
    let [nx, ny, nz] = dims;
    let mut cur = data.to_vec();
    let mut next = vec![0.0; cur.len()];
    let strides = [1, nx, nx * ny];
    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let st = strides[axis];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let p = [x, y, z];
                    let base = (z * ny + y) * nx + x - p[axis] * st;
                    let i = p[axis] as isize;
                    let mut acc = 0.0;
                    for (k, &w) in taps.iter().enumerate() {
                        acc += w * cur[base + reflect(i + k as isize - h, n) * st];
                    }
                    next[(z * ny + y) * nx + x] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Voxelwise SSIM with an isotropic Gaussian window, dynamic range 1.
pub fn ssim_map(a: &Volume, b: &Volume) -> Result<Volume> {
    a.same_dims(b)?;
    let dims = a.dims();
    let taps = gaussian_taps();
    let fa: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let fb: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let sq = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(x, y)| x * y).collect() };
    let mu_a = smooth(&fa, dims, &taps);
    let mu_b = smooth(&fb, dims, &taps);
    let e_aa = smooth(&sq(&fa, &fa), dims, &taps);
    let e_bb = smooth(&sq(&fb, &fb), dims, &taps);
    let e_ab = smooth(&sq(&fa, &fb), dims, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let map = (0..fa.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            s.clamp(-1.0, 1.0) as f32
        })
        .collect();
    Volume::new(dims, a.spacing(), map)
}

fn mean(v: &Volume) -> f64 {
    v.data().iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
}

pub fn ssim(a: &Volume, b: &Volume) -> Result<f64> {
    Ok(mean(&ssim_map(a, b)?))
}

/// `(1 - ssim) / 2`, voxelwise in `[0, 1]`.
pub fn dssim_from_ssim(map: &Volume) -> Volume {
    map.map(|s| ((1.0 - s) / 2.0).clamp(0.0, 1.0))
}

pub fn dssim_map(a: &Volume, b: &Volume) -> Result<Volume> {
    Ok(dssim_from_ssim(&ssim_map(a, b)?))
}

/// Pearson correlation of voxel intensities. A constant volume correlates
/// as 0 with anything non-constant; two constant volumes are undefined.
pub fn ncc(a: &Volume, b: &Volume) -> Result<f64> {
    a.same_dims(b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let dx = x as f64 - ma;
        let dy = y as f64 - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 && sbb == 0.0 {
        return Err(Error::UndefinedMetric(
            "cross-correlation of two constant volumes".into(),
        ));
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn ser_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Quality of a prediction against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `+inf` (serialized as `null`) when prediction equals truth.
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub ncc: f64,
    /// Path of the saved DSSIM map, when one was written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dssim_map: Option<String>,
    #[serde(skip)]
    pub dssim: Option<Volume>,
}

/// PSNR (peak 1), SSIM, NCC and the DSSIM map of `pred` against `truth`.
pub fn evaluate(pred: &Volume, truth: &Volume) -> Result<MetricsReport> {
    let map = ssim_map(pred, truth)?;
    Ok(MetricsReport {
        psnr_db: psnr(pred, truth, 1.0)?,
        ssim: mean(&map),
        ncc: ncc(pred, truth)?,
        dssim_map: None,
        dssim: Some(dssim_from_ssim(&map)),
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}
