use super::PsfKernel;
use crate::error::{Error, Result};
use crate::volume::{reflect, Axis, Volume};

/// How samples beyond the ends of an axis are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Reflect without repeating the edge sample.
    #[default]
    Mirror,
    /// Treat the volume as zero outside its extent.
    Zero,
}

/// Convolve along each listed axis with mirror boundaries.
pub fn blur_separable(v: &Volume, k: &PsfKernel, axes: &[Axis]) -> Result<Volume> {
    blur_separable_with(v, k, axes, Boundary::Mirror)
}

pub fn blur_separable_with(
    v: &Volume,
    k: &PsfKernel,
    axes: &[Axis],
    boundary: Boundary,
) -> Result<Volume> {
    for &axis in axes {
        let n = v.dims()[axis.index()];
        if k.taps().len() > n {
            return Err(Error::param(format!(
                "kernel of width {} is wider than axis {axis} (length {n})",
                k.taps().len()
            )));
        }
    }
    let mut out = v.clone();
    for &axis in axes {
        out = blur_axis(&out, k, axis, boundary);
    }
    out.set_intensity_range(None);
    Ok(out)
}

fn blur_axis(v: &Volume, k: &PsfKernel, axis: Axis, boundary: Boundary) -> Volume {
    if k.taps().len() == 1 {
        let s = k.taps()[0] as f32;
        return v.map(|x| x * s);
    }
    let dims = v.dims();
    let n = dims[axis.index()];
    let stride = match axis {
        Axis::X => 1,
        Axis::Y => dims[0],
        Axis::Z => dims[0] * dims[1],
    };
    let h = k.halfwidth() as isize;
    let taps = k.taps();
    let src = v.data();
    let mut dst = vec![0f32; src.len()];
    let mut line = vec![0f64; n];
    // Every line along `axis` starts at an index whose coordinate on `axis` is 0.
    for start in 0..src.len() {
        let coord = (start / stride) % n;
        if coord != 0 {
            continue;
        }
        for (i, l) in line.iter_mut().enumerate() {
            *l = src[start + i * stride] as f64;
        }
        for i in 0..n as isize {
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let j = i + t as isize - h;
                let sample = if (0..n as isize).contains(&j) {
                    line[j as usize]
                } else {
                    match boundary {
                        Boundary::Mirror => line[reflect(j, n)],
                        Boundary::Zero => 0.0,
                    }
                };
                acc += w * sample;
            }
            dst[start + i as usize * stride] = acc as f32;
        }
    }
    v.with_data(dst).expect("same geometry")
}
