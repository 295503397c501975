use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Axis, Volume};

/// Rigid displacement `(tx, ty, tz, rx, ry, rz)`: translations in millimeters,
/// rotations in radians about the volume center. A point `p` (mm) maps to
/// `R (p - c) + c + t` with `R = Rz * Ry * Rx`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidMotion(pub [f64; 6]);

impl RigidMotion {
    pub fn identity() -> Self {
        RigidMotion([0.0; 6])
    }

    pub fn translation(t: [f64; 3]) -> Self {
        RigidMotion([t[0], t[1], t[2], 0.0, 0.0, 0.0])
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&p| p == 0.0)
    }

    pub fn translation_mm(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn rotation_rad(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|p| !p.is_finite()) {
            return Err(Error::param(format!(
                "non-finite rigid motion {:?}",
                self.0
            )));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [rx, ry, rz] = self.rotation_rad();
        let (sx, cx) = rx.sin_cos();
        let (sy, cy) = ry.sin_cos();
        let (sz, cz) = rz.sin_cos();
        [
            [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
            [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
            [-sy, cy * sx, cy * cx],
        ]
    }

    /// Apply to a point in millimeters, rotating about `center_mm`.
    pub fn apply(&self, p: [f64; 3], center_mm: [f64; 3]) -> [f64; 3] {
        let r = self.rotation_matrix();
        let d = [
            p[0] - center_mm[0],
            p[1] - center_mm[1],
            p[2] - center_mm[2],
        ];
        let t = self.translation_mm();
        std::array::from_fn(|i| {
            r[i][0] * d[0] + r[i][1] * d[1] + r[i][2] * d[2] + center_mm[i] + t[i]
        })
    }
}

/// Physical center of a grid in millimeters, with voxel `i` at `i * spacing`.
pub fn grid_center_mm(dims: [usize; 3], spacing: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0 * spacing[a])
}

/// Up to eight voxel indices and weights of a trilinear stencil at a
/// continuous voxel position. Corners outside the grid are dropped, so the
/// grid is treated as zero outside.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub idx: [usize; 8],
    pub w: [f32; 8],
    pub len: usize,
}

impl Stencil {
    #[inline]
    pub fn at(dims: [usize; 3], p: [f64; 3]) -> Stencil {
        let mut s = Stencil {
            idx: [0; 8],
            w: [0.0; 8],
            len: 0,
        };
        let fl = [p[0].floor(), p[1].floor(), p[2].floor()];
        // Quick reject: whole stencil outside.
        for a in 0..3 {
            if fl[a] < -1.0 || fl[a] > dims[a] as f64 - 1.0 {
                return s;
            }
        }
        let base = [fl[0] as isize, fl[1] as isize, fl[2] as isize];
        let f = [p[0] - fl[0], p[1] - fl[1], p[2] - fl[2]];
        for c in 0..8 {
            let o = [
                (c & 1) as isize,
                ((c >> 1) & 1) as isize,
                ((c >> 2) & 1) as isize,
            ];
            let q = [base[0] + o[0], base[1] + o[1], base[2] + o[2]];
            if (0..3).any(|a| q[a] < 0 || q[a] >= dims[a] as isize) {
                continue;
            }
            let w = (0..3)
                .map(|a| if o[a] == 1 { f[a] } else { 1.0 - f[a] })
                .product::<f64>();
            if w == 0.0 {
                continue;
            }
            s.idx[s.len] = (q[2] as usize * dims[1] + q[1] as usize) * dims[0] + q[0] as usize;
            s.w[s.len] = w as f32;
            s.len += 1;
        }
        s
    }

    #[inline]
    pub fn sample(&self, data: &[f32]) -> f32 {
        let mut acc = 0.0f32;
        for i in 0..self.len {
            acc += self.w[i] * data[self.idx[i]];
        }
        acc
    }
}

/// Trilinear sample at a continuous voxel position, zero outside the grid.
pub fn sample_trilinear(v: &Volume, p_vox: [f64; 3]) -> f32 {
    Stencil::at(v.dims(), p_vox).sample(v.data())
}

/// Plane of a volume to resample: the plane normal to `axis` at `index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSpec {
    pub axis: Axis,
    pub index: usize,
}

/// Sample `v` along the plane carried through the rigid motion `m`. Output
/// is `(nu, nv, 1)` in the stack-local order of [`Axis::stack_order`].
pub fn resample_rigid(v: &Volume, m: &RigidMotion, plane: PlaneSpec) -> Result<Volume> {
    m.validate()?;
    let dims = v.dims();
    let n = dims[plane.axis.index()];
    if plane.index >= n {
        return Err(Error::param(format!(
            "plane index {} out of range for axis {} of length {n}",
            plane.index, plane.axis
        )));
    }
    let sp = v.spacing();
    let center = grid_center_mm(dims, sp);
    let [ua, va, wa] = plane.axis.stack_order();
    Volume::from_fn(
        [dims[ua], dims[va], 1],
        [sp[ua], sp[va], sp[wa]],
        |u, w, _| {
            let mut p = [0f64; 3];
            p[ua] = u as f64 * sp[ua];
            p[va] = w as f64 * sp[va];
            p[wa] = plane.index as f64 * sp[wa];
            let q = m.apply(p, center);
            sample_trilinear(v, [q[0] / sp[0], q[1] / sp[1], q[2] / sp[2]])
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::slice_select;

    #[test]
    fn identity_matches_slice_select() {
        let v = Volume::from_fn([9, 8, 7], [1.25, 1.25, 2.5], |x, y, z| {
            ((x * 13 + y * 7 + z * 3) % 11) as f32
        })
        .unwrap();
        for axis in Axis::ALL {
            for index in [0, 3, v.dims()[axis.index()] - 1] {
                let r = resample_rigid(&v, &RigidMotion::identity(), PlaneSpec { axis, index })
                    .unwrap();
                let s = slice_select(&v, axis, index).unwrap();
                assert_eq!(r.dims(), s.dims());
                for (a, b) in r.data().iter().zip(s.data()) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn translation_shifts_ramp_by_one_step() {
        let sp = [1.5, 1.0, 2.0];
        let v = Volume::from_fn([12, 10, 6], sp, |x, y, z| (3 * x + y + 5 * z) as f32).unwrap();
        let m = RigidMotion::translation([sp[0], 0.0, 0.0]);
        let r = resample_rigid(
            &v,
            &m,
            PlaneSpec {
                axis: Axis::Z,
                index: 2,
            },
        )
        .unwrap();
        for y in 0..10 {
            for x in 0..11 {
                let expected = v.get(x + 1, y, 2);
                assert!((r.get(x, y, 0) - expected).abs() < 1e-4, "{x} {y}");
            }
        }
    }

    #[test]
    fn half_turn_of_symmetric_volume() {
        let n = 15;
        let c = (n as f64 - 1.0) / 2.0;
        let v = Volume::from_fn([n, n, 5], [1.0; 3], |x, y, _| {
            let dx = x as f64 - c;
            let dy = y as f64 - c;
            ((dx * dx / 20.0 + dy * dy / 9.0) * 0.3).cos() as f32
        })
        .unwrap();
        let m = RigidMotion([0.0, 0.0, 0.0, 0.0, 0.0, std::f64::consts::PI]);
        let plane = PlaneSpec {
            axis: Axis::Z,
            index: 2,
        };
        let r = resample_rigid(&v, &m, plane).unwrap();
        let s = slice_select(&v, Axis::Z, 2).unwrap();
        for (a, b) in r.data().iter().zip(s.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn rotation_matrix_is_orthonormal() {
        let r = RigidMotion([0.0, 0.0, 0.0, 0.3, -0.2, 0.7]).rotation_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outside_samples_are_zero() {
        let v = Volume::filled([4, 4, 4], [1.0; 3], 1.0).unwrap();
        assert_eq!(sample_trilinear(&v, [-1.5, 1.0, 1.0]), 0.0);
        assert!((sample_trilinear(&v, [-0.5, 1.0, 1.0]) - 0.5).abs() < 1e-7);
        assert_eq!(sample_trilinear(&v, [3.0, 3.0, 3.0]), 1.0);
        assert!(resample_rigid(
            &v,
            &RigidMotion([f64::NAN; 6]),
            PlaneSpec {
                axis: Axis::Z,
                index: 0
            }
        )
        .is_err());
    }
}
