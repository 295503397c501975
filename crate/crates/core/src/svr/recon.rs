use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::em::{em_update, EmState};
use super::operator::{ReconGrid, SliceOp, SlicePsf};
use super::register::{register_slice_to, RegisterConfig, Registration, RegistrationTarget};
use crate::acquisition::{blur_separable, cws_kernel, decimate, RigidMotion, SliceStack};
use crate::baselines::{upsample_bspline, upsample_trilinear};
use crate::error::{Error, Result};
use crate::srnet::{infer_volume, NetworkParams, TilePlan};
use crate::volume::{Axis, Volume};

/// In-plane upsampler applied to every stack before reconstruction.
#[derive(Debug, Clone)]
pub enum Upsampler {
    None,
    Linear,
    BSpline,
    Cnn(Box<NetworkParams<f32>>),
}

impl Upsampler {
    pub fn tag(&self) -> &'static str {
        match self {
            Upsampler::None => "none",
            Upsampler::Linear => "linear",
            Upsampler::BSpline => "bspline",
            Upsampler::Cnn(_) => "cnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    /// Rounds of {register, EM, SR steps}.
    pub outer_iterations: usize,
    /// SR steps per round.
    pub sr_steps: usize,
    pub alpha: f64,
    /// EM iterations per round.
    pub em_iterations: usize,
    /// Output grid; defaults to the first stack's reference grid.
    pub grid: Option<ReconGrid>,
    /// Kept for run-config echo; reconstruction draws no random numbers.
    pub seed: u64,
    pub use_em: bool,
    /// Re-run the CNN on the intermediate estimate after every round but
    /// the last.
    pub reapply_cnn: bool,
    /// Register slices each round; off treats the stack poses as known.
    pub register: bool,
    pub registration: RegisterConfig,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            outer_iterations: 3,
            sr_steps: 3,
            alpha: 0.5,
            em_iterations: 5,
            grid: None,
            seed: 0,
            use_em: true,
            reapply_cnn: false,
            register: true,
            registration: RegisterConfig::default(),
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iterations == 0 || self.sr_steps == 0 || self.em_iterations == 0 {
            return Err(Error::param("reconstruction iteration counts must be >= 1"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::param(format!(
                "SR step size must be > 0, got {}",
                self.alpha
            )));
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        self.registration.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Root of the summed squared slice residuals before this round's SR steps.
    pub residual_norm: f64,
    pub em_sigma: Option<f64>,
    pub mean_ncc: Option<f64>,
    pub registration_skipped: usize,
    pub wall_ms: u64,
}

/// Per-round diagnostics written next to a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub upsampler: String,
    pub rounds: Vec<RoundRecord>,
    /// Final slice inlier probabilities, one vector per stack.
    pub slice_inlier_probabilities: Vec<Vec<f64>>,
}

impl ReconReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let p = path.as_ref();
        std::fs::write(p, self.to_json()?).map_err(|e| Error::io(p, e))
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub volume: Volume,
    /// Final pose estimate of every slice.
    pub poses: Vec<Vec<RigidMotion>>,
    pub em: Option<EmState>,
    pub report: ReconReport,
}

/// Upsample each stack in-plane to its reference resolution. Stacks already
/// at reference resolution, and every stack under [`Upsampler::None`], are
/// returned unchanged.
pub fn upsample_stacks(stacks: &[SliceStack], upsampler: &Upsampler) -> Result<Vec<SliceStack>> {
    stacks
        .iter()
        .map(|st| {
            let f = st.geometry.inplane_factor;
            if f == 1 || matches!(upsampler, Upsampler::None) {
                return Ok(st.clone());
            }
            let images = match upsampler {
                Upsampler::None => unreachable!(),
                Upsampler::Linear => upsample_trilinear(&st.images, [f, f, 1])?,
                Upsampler::BSpline => upsample_bspline(&st.images, [f, f, 1])?,
                Upsampler::Cnn(p) => {
                    if p.factor != f {
                        return Err(Error::ConfigMismatch(format!(
                            "checkpoint upsamples by {} but stack along {} needs {f}",
                            p.factor,
                            st.axis()
                        )));
                    }
                    infer_volume(p, &st.images, TilePlan::default())?
                }
            };
            let mut geometry = st.geometry.clone();
            geometry.inplane_factor = 1;
            SliceStack::new(geometry, images, st.poses.clone())
        })
        .collect()
}

fn flat_slices(stacks: &[SliceStack]) -> Vec<(usize, usize)> {
    stacks
        .iter()
        .enumerate()
        .flat_map(|(i, st)| (0..st.len()).map(move |s| (i, s)))
        .collect()
}

fn check_poses(stacks: &[SliceStack], poses: &[Vec<RigidMotion>]) -> Result<()> {
    if poses.len() != stacks.len() || stacks.iter().zip(poses).any(|(st, p)| st.len() != p.len()) {
        return Err(Error::shape("pose lists do not match the stacks"));
    }
    Ok(())
}

/// Observed minus simulated intensities of every slice, stack-major.
pub fn slice_residuals(
    vol: &Volume,
    stacks: &[SliceStack],
    poses: &[Vec<RigidMotion>],
    psfs: &[SlicePsf],
) -> Result<Vec<Vec<f32>>> {
    check_poses(stacks, poses)?;
    let grid = ReconGrid::of_volume(vol);
    Ok(flat_slices(stacks)
        .into_par_iter()
        .map(|(i, s)| {
            let st = &stacks[i];
            let sim =
                SliceOp::new(&st.geometry, &psfs[i], s, &poses[i][s], &grid).forward(vol.data());
            st.slice_data(s)
                .iter()
                .zip(sim)
                .map(|(&o, m)| (o as f64 - m) as f32)
                .collect()
        })
        .collect())
}

/// Accumulate `adjoint(w * image)` and `|adjoint|(w)` over all slices. Each
/// stack owns its buffers and stacks merge in order, so the sums do not
/// depend on the worker count.
fn accumulate(
    grid: &ReconGrid,
    stacks: &[SliceStack],
    poses: &[Vec<RigidMotion>],
    psfs: &[SlicePsf],
    weights: Option<&[Vec<f32>]>,
    image: impl Fn(usize, usize, &SliceOp) -> Vec<f64> + Sync,
) -> (Vec<f64>, Vec<f64>) {
    let offsets: Vec<usize> = stacks
        .iter()
        .scan(0, |acc, st| {
            let o = *acc;
            *acc += st.len();
            Some(o)
        })
        .collect();
    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..stacks.len())
        .into_par_iter()
        .map(|i| {
            let st = &stacks[i];
            let mut num = vec![0f64; grid.len()];
            let mut den = vec![0f64; grid.len()];
            for s in 0..st.len() {
                let op = SliceOp::new(&st.geometry, &psfs[i], s, &poses[i][s], grid);
                let mut e = image(i, s, &op);
                let w: Vec<f64> = match weights {
                    Some(w) => w[offsets[i] + s].iter().map(|&x| x as f64).collect(),
                    None => vec![1.0; e.len()],
                };
                for (x, &wi) in e.iter_mut().zip(&w) {
                    *x *= wi;
                }
                op.weighted_adjoint_into(&e, &w, &mut num, &mut den);
            }
            (num, den)
        })
        .collect();
    let mut it = parts.into_iter();
    let (mut num, mut den) = it
        .next()
        .unwrap_or_else(|| (vec![0.0; grid.len()], vec![0.0; grid.len()]));
    for (n, d) in it {
        for (a, b) in num.iter_mut().zip(n) {
            *a += b;
        }
        for (a, b) in den.iter_mut().zip(d) {
            *a += b;
        }
    }
    (num, den)
}

const MIN_WEIGHT: f64 = 1e-8;

/// Weighted splat average of all observed slices at their current poses.
pub fn splat_average(
    stacks: &[SliceStack],
    poses: &[Vec<RigidMotion>],
    psfs: &[SlicePsf],
    grid: &ReconGrid,
) -> Result<Volume> {
    check_poses(stacks, poses)?;
    grid.validate()?;
    let (num, den) = accumulate(grid, stacks, poses, psfs, None, |i, s, _| {
        stacks[i].slice_data(s).iter().map(|&x| x as f64).collect()
    });
    let data = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d > MIN_WEIGHT { (n / d) as f32 } else { 0.0 })
        .collect();
    Volume::new(grid.dims, grid.spacing, data)
}

/// One super-resolution step: back-project the EM-weighted slice residuals
/// through the adjoint of the forward model and add `alpha` times the
/// accumulated correction, normalized per voxel by the accumulated weight
/// (the adjoint of the weights under the absolute-valued PSF).
/// Voxels no slice reaches are left unchanged.
pub fn sr_update(
    vol: &Volume,
    stacks: &[SliceStack],
    poses: &[Vec<RigidMotion>],
    em: Option<&EmState>,
    alpha: f64,
) -> Result<Volume> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::param(format!(
            "SR step size must be > 0, got {alpha}"
        )));
    }
    check_poses(stacks, poses)?;
    let psfs = stacks
        .iter()
        .map(|st| SlicePsf::for_geometry(&st.geometry))
        .collect::<Result<Vec<_>>>()?;
    let weights = em.map(EmState::weights);
    if let Some(w) = &weights {
        if w.len() != flat_slices(stacks).len() {
            return Err(Error::shape("EM state does not match the slice count"));
        }
    }
    let grid = ReconGrid::of_volume(vol);
    let (num, den) = accumulate(
        &grid,
        stacks,
        poses,
        &psfs,
        weights.as_deref(),
        |i, s, op| {
            let sim = op.forward(vol.data());
            stacks[i]
                .slice_data(s)
                .iter()
                .zip(sim)
                .map(|(&o, m)| o as f64 - m)
                .collect()
        },
    );
    let data = vol
        .data()
        .iter()
        .zip(num.iter().zip(&den))
        .map(|(&v, (&n, &d))| {
            if d > MIN_WEIGHT {
                (v as f64 + alpha * n / d) as f32
            } else {
                v
            }
        })
        .collect();
    vol.with_data(data)
}

/// Degrade the estimate in-plane the way training pairs are made and let
/// the network restore it.
fn cnn_refine(vol: &Volume, params: &NetworkParams<f32>) -> Result<Volume> {
    let f = params.factor;
    let k = cws_kernel(f)?;
    let low = decimate(&blur_separable(vol, &k, &[Axis::X, Axis::Y])?, [f, f, 1])?;
    let out = infer_volume(params, &low, TilePlan::default())?;
    out.with_spacing(vol.spacing())
}

fn check_stacks(stacks: &[SliceStack]) -> Result<()> {
    if stacks.len() < 2 {
        return Err(Error::param(format!(
            "reconstruction needs >= 2 stacks, got {}",
            stacks.len()
        )));
    }
    for (i, a) in stacks.iter().enumerate() {
        if stacks[..i].iter().any(|b| b.axis() == a.axis()) {
            return Err(Error::param(format!(
                "two stacks share slice axis {}",
                a.axis()
            )));
        }
    }
    Ok(())
}

/// Slice-to-volume reconstruction from orthogonal stacks.
///
/// Every stack is upsampled in-plane by `upsampler`, the estimate starts as
/// the splat average at the nominal poses, and each round registers all
/// slices, refits the EM outlier model and takes `cfg.sr_steps` SR steps.
pub fn reconstruct(
    stacks: &[SliceStack],
    cfg: &ReconConfig,
    upsampler: &Upsampler,
) -> Result<Reconstruction> {
    cfg.validate()?;
    check_stacks(stacks)?;
    if cfg.reapply_cnn {
        if let Upsampler::Cnn(p) = upsampler {
            let g = cfg
                .grid
                .unwrap_or_else(|| ReconGrid::of_geometry(&stacks[0].geometry));
            if !g.dims[0].is_multiple_of(p.factor) || !g.dims[1].is_multiple_of(p.factor) {
                return Err(Error::ConfigMismatch(format!(
                    "grid {:?} is not divisible by the network factor {}",
                    g.dims, p.factor
                )));
            }
        }
    }
    let stacks = upsample_stacks(stacks, upsampler)?;
    let psfs = stacks
        .iter()
        .map(|st| SlicePsf::for_geometry(&st.geometry))
        .collect::<Result<Vec<_>>>()?;
    let grid = cfg
        .grid
        .unwrap_or_else(|| ReconGrid::of_geometry(&stacks[0].geometry));
    let mut poses: Vec<Vec<RigidMotion>> = stacks.iter().map(|st| st.poses.clone()).collect();
    let mut vol = splat_average(&stacks, &poses, &psfs, &grid)?;
    let slots = flat_slices(&stacks);
    let mut em: Option<EmState> = None;
    let mut rounds = Vec::with_capacity(cfg.outer_iterations);
    for round in 0..cfg.outer_iterations {
        let t0 = Instant::now();
        let (mut mean_ncc, mut skipped) = (None, 0);
        if cfg.register {
            let targets = stacks
                .iter()
                .zip(&psfs)
                .map(|(st, psf)| RegistrationTarget::new(&vol, &st.geometry, psf))
                .collect::<Result<Vec<_>>>()?;
            let regs: Vec<Registration> = slots
                .par_iter()
                .map(|&(i, s)| {
                    register_slice_to(&stacks[i], s, &poses[i][s], &targets[i], &cfg.registration)
                })
                .collect::<Result<_>>()?;
            let mut acc = (0.0, 0usize);
            for (&(i, s), r) in slots.iter().zip(&regs) {
                poses[i][s] = r.pose;
                if r.skipped {
                    skipped += 1;
                } else {
                    acc = (acc.0 + r.ncc, acc.1 + 1);
                }
            }
            if acc.1 > 0 {
                mean_ncc = Some(acc.0 / acc.1 as f64);
            }
        }
        let residuals = slice_residuals(&vol, &stacks, &poses, &psfs)?;
        let residual_norm = residuals
            .iter()
            .flatten()
            .map(|&e| (e as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        if cfg.use_em {
            let mut state = match em.take() {
                Some(s) => s,
                None => EmState::initial(&residuals),
            };
            for _ in 0..cfg.em_iterations {
                state = em_update(&residuals, &state)?;
            }
            em = Some(state);
        }
        for _ in 0..cfg.sr_steps {
            vol = sr_update(&vol, &stacks, &poses, em.as_ref(), cfg.alpha)?;
        }
        if cfg.reapply_cnn && round + 1 < cfg.outer_iterations {
            if let Upsampler::Cnn(p) = upsampler {
                vol = cnn_refine(&vol, p)?;
            }
        }
        rounds.push(RoundRecord {
            round: round + 1,
            residual_norm,
            em_sigma: em.as_ref().map(|s| s.sigma),
            mean_ncc,
            registration_skipped: skipped,
            wall_ms: t0.elapsed().as_millis() as u64,
        });
    }
    let mut probs = Vec::with_capacity(stacks.len());
    let mut k = 0;
    for st in &stacks {
        let p = match &em {
            Some(s) => s.slice_probabilities[k..k + st.len()].to_vec(),
            None => vec![1.0; st.len()],
        };
        k += st.len();
        probs.push(p);
    }
    Ok(Reconstruction {
        volume: vol,
        poses,
        em,
        report: ReconReport {
            upsampler: upsampler.tag().to_string(),
            rounds,
            slice_inlier_probabilities: probs,
        },
    })
}
