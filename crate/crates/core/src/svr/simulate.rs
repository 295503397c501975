use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::operator::{ReconGrid, SliceOp, SlicePsf};
use crate::acquisition::{
    add_rician_noise, gen_training_pairs, DegradeConfig, RigidMotion, SliceStack, StackGeometry,
    TrainingPair,
};
use crate::error::{Error, Result};
use crate::volume::{Axis, Volume};

/// Slice-normal axes of the simulated stacks, in acquisition order.
pub const STACK_AXES: [Axis; 3] = [Axis::Z, Axis::Y, Axis::X];

/// Orthogonal stack acquisition with per-slice rigid motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// 2 or 3 orthogonal stacks.
    pub n_stacks: usize,
    /// Standard deviation of each translation component (mm).
    pub sigma_translation: f64,
    /// Standard deviation of each rotation component (radians).
    pub sigma_rotation: f64,
    pub noise_sigma: f64,
    /// Slice thickness and spacing in units of the in-plane pixel size.
    pub thickness_ratio: usize,
    /// In-plane decimation relative to `hr`.
    pub inplane_factor: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            n_stacks: 3,
            sigma_translation: 0.0,
            sigma_rotation: 0.0,
            noise_sigma: 0.0,
            thickness_ratio: 2,
            inplane_factor: 2,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n_stacks) {
            return Err(Error::param(format!(
                "n_stacks must be 2 or 3, got {}",
                self.n_stacks
            )));
        }
        for (name, v) in [
            ("sigma_translation", self.sigma_translation),
            ("sigma_rotation", self.sigma_rotation),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.thickness_ratio == 0 || self.inplane_factor == 0 {
            return Err(Error::param("stack factors must be >= 1"));
        }
        Ok(())
    }
}

/// Simulated stacks, whose `poses` are the nominal (identity) acquisition
/// poses, and the motion each slice actually underwent.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedAcquisition {
    pub stacks: Vec<SliceStack>,
    pub true_poses: Vec<Vec<RigidMotion>>,
}

fn draw_poses(n: usize, cfg: &AcquisitionConfig, stream: u64) -> Vec<RigidMotion> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let nt = Normal::new(0.0, cfg.sigma_translation).expect("validated sigma");
    let nr = Normal::new(0.0, cfg.sigma_rotation).expect("validated sigma");
    (0..n)
        .map(|_| {
            let mut p = [0f64; 6];
            for (k, v) in p.iter_mut().enumerate() {
                *v = if k < 3 {
                    nt.sample(&mut rng)
                } else {
                    nr.sample(&mut rng)
                };
            }
            RigidMotion(p)
        })
        .collect()
}

/// Acquire `cfg.n_stacks` orthogonal stacks of `hr`: every slice moves by
/// its own Gaussian rigid perturbation, then passes through the slice PSF,
/// decimation and Rician noise.
pub fn simulate_stacks(hr: &Volume, cfg: &AcquisitionConfig) -> Result<SimulatedAcquisition> {
    cfg.validate()?;
    let grid = ReconGrid::of_volume(hr);
    let mut stacks = Vec::with_capacity(cfg.n_stacks);
    let mut true_poses = Vec::with_capacity(cfg.n_stacks);
    for (i, &axis) in STACK_AXES.iter().take(cfg.n_stacks).enumerate() {
        let geometry = StackGeometry {
            axis,
            reference_dims: hr.dims(),
            reference_spacing: hr.spacing(),
            thickness_factor: cfg.thickness_ratio * cfg.inplane_factor,
            inplane_factor: cfg.inplane_factor,
        };
        geometry.validate()?;
        let psf = SlicePsf::for_geometry(&geometry)?;
        let d = geometry.image_dims();
        let poses = draw_poses(d[2], cfg, i as u64);
        let mut data = Vec::with_capacity(d.iter().product());
        for (s, pose) in poses.iter().enumerate() {
            let op = SliceOp::new(&geometry, &psf, s, pose, &grid);
            data.extend(op.forward(hr.data()).into_iter().map(|x| x as f32));
        }
        let [ua, va, wa] = axis.stack_order();
        let sp = hr.spacing();
        let spacing = [
            sp[ua] * cfg.inplane_factor as f64,
            sp[va] * cfg.inplane_factor as f64,
            sp[wa] * geometry.thickness_factor as f64,
        ];
        let mut images = Volume::new(d, spacing, data)?;
        if cfg.noise_sigma > 0.0 {
            images = add_rician_noise(
                &images,
                cfg.noise_sigma,
                cfg.seed.wrapping_add(0x9e37 * (i as u64 + 1)),
            )?;
        }
        let images = images.with_provenance(format!("{}:stack-{axis}", hr.provenance()));
        let nominal = vec![RigidMotion::identity(); d[2]];
        stacks.push(SliceStack::new(geometry, images, nominal)?);
        true_poses.push(poses);
    }
    Ok(SimulatedAcquisition { stacks, true_poses })
}

/// Training pairs shaped like the stacks `acq` produces: each stack of `hr`
/// is simulated at full in-plane resolution (same slice thickness and
/// motion, no noise) and then cut into pairs by [`gen_training_pairs`].
/// `deg.factor` must equal the acquisition's in-plane factor.
pub fn stack_training_pairs(
    hr: &Volume,
    acq: &AcquisitionConfig,
    deg: &DegradeConfig,
) -> Result<Vec<TrainingPair>> {
    acq.validate()?;
    if deg.factor != acq.inplane_factor {
        return Err(Error::ConfigMismatch(format!(
            "pairs degrade by {} but the stacks are acquired at in-plane factor {}",
            deg.factor, acq.inplane_factor
        )));
    }
    let full = AcquisitionConfig {
        thickness_ratio: acq.thickness_ratio * acq.inplane_factor,
        inplane_factor: 1,
        noise_sigma: 0.0,
        ..acq.clone()
    };
    let mut pairs = Vec::new();
    for (i, st) in simulate_stacks(hr, &full)?.stacks.iter().enumerate() {
        let per = DegradeConfig {
            seed: deg.seed.wrapping_add(i as u64),
            ..deg.clone()
        };
        pairs.extend(gen_training_pairs(&st.images, &per)?);
    }
    Ok(pairs)
}
