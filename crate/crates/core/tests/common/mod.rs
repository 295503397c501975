//! Brute-force references shared by the oracle and acceptance suites.
#![allow(dead_code)]

use volsr::acquisition::Boundary;
use volsr::srnet::ConvSpec;
use volsr::{Axis, Volume};

pub fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

pub fn sample(v: &Volume, p: [isize; 3], boundary: Boundary) -> f64 {
    let d = v.dims();
    let mut q = [0usize; 3];
    for a in 0..3 {
        if (0..d[a] as isize).contains(&p[a]) {
            q[a] = p[a] as usize;
        } else {
            match boundary {
                Boundary::Mirror => q[a] = mirror(p[a], d[a]),
                Boundary::Zero => return 0.0,
            }
        }
    }
    v.get(q[0], q[1], q[2]) as f64
}

/// Full 3D sum over the outer product of the per-axis kernels.
pub fn naive_blur(v: &Volume, taps: &[f64], axes: &[Axis], boundary: Boundary) -> Vec<f64> {
    let d = v.dims();
    let h = (taps.len() / 2) as isize;
    let range = |a: usize| -> Vec<isize> {
        if axes.iter().any(|x| x.index() == a) {
            (-h..=h).collect()
        } else {
            vec![0]
        }
    };
    let w = |a: usize, o: isize| -> f64 {
        if axes.iter().any(|x| x.index() == a) {
            taps[(o + h) as usize]
        } else {
            1.0
        }
    };
    let mut out = Vec::with_capacity(v.len());
    for z in 0..d[2] as isize {
        for y in 0..d[1] as isize {
            for x in 0..d[0] as isize {
                let mut acc = 0.0;
                for &oz in &range(2) {
                    for &oy in &range(1) {
                        for &ox in &range(0) {
                            let wt = w(0, ox) * w(1, oy) * w(2, oz);
                            acc += wt * sample(v, [x + ox, y + oy, z + oz], boundary);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

pub fn naive_conv(x: &[f64], cin: usize, dims: [usize; 3], s: &ConvSpec<f64>) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let [kx, ky, kz] = s.kernel;
    let n = nx * ny * nz;
    let mut out = vec![0.0; s.out_channels * n];
    for j in 0..s.out_channels {
        for z in 0..nz {
            for y in 0..ny {
                for xx in 0..nx {
                    let mut acc = s.biases[j];
                    for k in 0..cin {
                        for oz in 0..kz {
                            for oy in 0..ky {
                                for ox in 0..kx {
                                    let sx =
                                        mirror(xx as isize + ox as isize - (kx / 2) as isize, nx);
                                    let sy =
                                        mirror(y as isize + oy as isize - (ky / 2) as isize, ny);
                                    let sz =
                                        mirror(z as isize + oz as isize - (kz / 2) as isize, nz);
                                    let wi = (((j * cin + k) * kz + oz) * ky + oy) * kx + ox;
                                    acc += s.weights[wi] * x[k * n + (sz * ny + sy) * nx + sx];
                                }
                            }
                        }
                    }
                    out[j * n + (z * ny + y) * nx + xx] = acc;
                }
            }
        }
    }
    out
}

/// Zero-stuff `x` by `stride` along `axis`: sample i lands at i * stride.
pub fn stuff(
    x: &[f64],
    cin: usize,
    dims: [usize; 3],
    axis: Axis,
    stride: usize,
) -> (Vec<f64>, [usize; 3]) {
    let mut sd = dims;
    sd[axis.index()] *= stride;
    let (n, sn) = (dims.iter().product::<usize>(), sd.iter().product::<usize>());
    let mut out = vec![0.0; cin * sn];
    for k in 0..cin {
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for xx in 0..dims[0] {
                    let mut p = [xx, y, z];
                    p[axis.index()] *= stride;
                    out[k * sn + (p[2] * sd[1] + p[1]) * sd[0] + p[0]] =
                        x[k * n + (z * dims[1] + y) * dims[0] + xx];
                }
            }
        }
    }
    (out, sd)
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
