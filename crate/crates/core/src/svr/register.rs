use serde::{Deserialize, Serialize};

use super::operator::{ReconGrid, SliceOp, SlicePsf};
use crate::acquisition::{
    blur_separable_with, Boundary, PsfKernel, RigidMotion, SliceStack, StackGeometry,
};
use crate::error::{Error, Result};
use crate::volume::Volume;

/// Search box and stopping rule of the coordinate-descent registration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegisterConfig {
    /// Half-width of the translation search interval around the initial pose (mm).
    pub translation_bound: f64,
    /// Half-width of the rotation search interval (radians).
    pub rotation_bound: f64,
    pub sweeps: usize,
    pub translation_tolerance: f64,
    pub rotation_tolerance: f64,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        RegisterConfig {
            translation_bound: 4.0,
            rotation_bound: 0.1,
            sweeps: 3,
            translation_tolerance: 0.02,
            rotation_tolerance: 5e-4,
        }
    }
}

impl RegisterConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.translation_bound,
            self.rotation_bound,
            self.translation_tolerance,
            self.rotation_tolerance,
        ];
        if pos.iter().any(|&v| !(v.is_finite() && v > 0.0)) || self.sweeps == 0 {
            return Err(Error::param(format!(
                "invalid registration config {self:?}"
            )));
        }
        Ok(())
    }
}

/// Outcome of registering one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub pose: RigidMotion,
    pub ncc_initial: f64,
    pub ncc: f64,
    /// Set when the observed slice is constant; the initial pose is kept.
    pub skipped: bool,
}

/// Pearson correlation, or `None` when either side is constant.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

fn golden_max(mut a: f64, mut b: f64, tol: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

/// Estimate prepared for registering the slices of one stack.
///
/// When the estimate shares the stack's through-plane spacing, the
/// through-plane profile is applied once along the stack axis and the
/// slices are compared against single samples of the blurred volume. This
/// is exact for unrotated slices and close for the small tilts the search
/// box allows. Otherwise the full slice profile is kept.
#[derive(Debug, Clone)]
pub struct RegistrationTarget {
    volume: Volume,
    psf: SlicePsf,
}

impl RegistrationTarget {
    pub fn new(vol_est: &Volume, g: &StackGeometry, psf: &SlicePsf) -> Result<Self> {
        let d = vol_est.data();
        if d.iter().all(|&x| x == d[0]) {
            return Err(Error::param("registration target volume is constant"));
        }
        let axis = g.axis;
        let same = vol_est.spacing()[axis.index()] == g.reference_spacing[axis.index()];
        let fits = psf.through_plane.taps().len() <= vol_est.dims()[axis.index()];
        if !same || !fits || psf.through_plane.taps().len() == 1 {
            return Ok(RegistrationTarget {
                volume: vol_est.clone(),
                psf: psf.clone(),
            });
        }
        Ok(RegistrationTarget {
            volume: blur_separable_with(vol_est, &psf.through_plane, &[axis], Boundary::Zero)?,
            psf: SlicePsf {
                through_plane: PsfKernel::delta(),
                in_plane: psf.in_plane.clone(),
            },
        })
    }
}

/// Rigidly align slice `s` of `stack` to `vol_est` by maximizing the NCC
/// between the observed slice and the slice simulated from the estimate.
///
/// Cyclic coordinate descent over the six pose parameters, each line search
/// a golden-section search over a fixed box around `pose_init`. A candidate
/// only replaces the current pose when it scores strictly higher, so the
/// returned NCC never falls below the initial one.
pub fn register_slice(
    stack: &SliceStack,
    s: usize,
    psf: &SlicePsf,
    pose_init: &RigidMotion,
    vol_est: &Volume,
    cfg: &RegisterConfig,
) -> Result<Registration> {
    let target = RegistrationTarget::new(vol_est, &stack.geometry, psf)?;
    register_slice_to(stack, s, pose_init, &target, cfg)
}

/// [`register_slice`] against a prepared target, so a stack's slices can
/// share one blurred estimate.
pub fn register_slice_to(
    stack: &SliceStack,
    s: usize,
    pose_init: &RigidMotion,
    target: &RegistrationTarget,
    cfg: &RegisterConfig,
) -> Result<Registration> {
    cfg.validate()?;
    pose_init.validate()?;
    if s >= stack.len() {
        return Err(Error::param(format!(
            "slice index {s} out of range for {} slices",
            stack.len()
        )));
    }
    let d = target.volume.data();
    let observed: Vec<f64> = stack.slice_data(s).iter().map(|&x| x as f64).collect();
    let grid = ReconGrid::of_volume(&target.volume);
    let score = |p: &RigidMotion| -> f64 {
        let sim = SliceOp::new(&stack.geometry, &target.psf, s, p, &grid).forward(d);
        pearson(&observed, &sim).unwrap_or(-1.0)
    };
    if observed.iter().all(|&x| x == observed[0]) {
        return Ok(Registration {
            pose: *pose_init,
            ncc_initial: f64::NAN,
            ncc: f64::NAN,
            skipped: true,
        });
    }
    let initial = score(pose_init);
    let mut pose = *pose_init;
    let mut current = initial;
    for _ in 0..cfg.sweeps {
        for k in 0..6 {
            let (bound, tol) = if k < 3 {
                (cfg.translation_bound, cfg.translation_tolerance)
            } else {
                (cfg.rotation_bound, cfg.rotation_tolerance)
            };
            let center = pose_init.0[k];
            let mut probe = pose;
            let (x, fx) = golden_max(center - bound, center + bound, tol, &mut |x| {
                probe.0[k] = x;
                score(&probe)
            });
            if fx > current {
                pose.0[k] = x;
                current = fx;
            }
        }
    }
    Ok(Registration {
        pose,
        ncc_initial: initial,
        ncc: current,
        skipped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx) = golden_max(-4.0, 4.0, 1e-6, &mut |x| -(x - 1.3) * (x - 1.3));
        assert!((x - 1.3).abs() < 1e-5);
        assert!(fx <= 0.0);
    }

    #[test]
    fn pearson_degenerate() {
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), None);
        assert!((pearson(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
    }
}
