use crate::error::{Error, Result};

/// Lower bound on the inlier standard deviation.
pub const MIN_SIGMA: f64 = 1e-6;

const MIN_FRACTION: f64 = 1e-9;

/// Inlier/outlier mixture over slice-voxel residuals: zero-mean Gaussian
/// inliers against outliers uniform on the observed residual range.
#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    /// Inlier posterior of every voxel, one vector per slice.
    pub voxel_posteriors: Vec<Vec<f32>>,
    /// Mean voxel posterior of each slice.
    pub slice_probabilities: Vec<f64>,
    pub sigma: f64,
    /// Mixing weight of the inlier component.
    pub inlier_fraction: f64,
    pub outlier_density: f64,
}

impl EmState {
    /// Starting point for `residuals`: robust sigma from the median absolute
    /// residual, 90% inliers, posteriors all 1.
    pub fn initial(residuals: &[Vec<f32>]) -> Self {
        let mut abs: Vec<f64> = residuals
            .iter()
            .flatten()
            .map(|&e| (e as f64).abs())
            .collect();
        let sigma = if abs.is_empty() {
            MIN_SIGMA
        } else {
            let mid = abs.len() / 2;
            let (_, m, _) = abs.select_nth_unstable_by(mid, f64::total_cmp);
            (1.4826 * *m).max(MIN_SIGMA)
        };
        let (lo, hi) = range(residuals);
        EmState {
            voxel_posteriors: residuals.iter().map(|r| vec![1.0; r.len()]).collect(),
            slice_probabilities: vec![1.0; residuals.len()],
            sigma,
            inlier_fraction: 0.9,
            outlier_density: density(lo, hi),
        }
    }

    /// Weight each residual carries in the super-resolution update: the
    /// inlier probability of its slice, shared by all of the slice's voxels.
    pub fn weights(&self) -> Vec<Vec<f32>> {
        self.voxel_posteriors
            .iter()
            .zip(&self.slice_probabilities)
            .map(|(p, &s)| vec![s as f32; p.len()])
            .collect()
    }
}

fn range(residuals: &[Vec<f32>]) -> (f64, f64) {
    residuals
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
            (lo.min(e as f64), hi.max(e as f64))
        })
}

fn density(lo: f64, hi: f64) -> f64 {
    if hi > lo {
        1.0 / (hi - lo)
    } else {
        f64::INFINITY
    }
}

fn log_components(e: f64, sigma: f64, fraction: f64, density: f64) -> (f64, f64) {
    let var = sigma * sigma;
    let lg = fraction.ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln() - e * e / (2.0 * var);
    let lu = (1.0 - fraction).ln() + density.ln();
    (lg, lu)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// Log-likelihood of `residuals` under the mixture parameters of `state`.
pub fn mixture_log_likelihood(residuals: &[Vec<f32>], state: &EmState) -> f64 {
    residuals
        .iter()
        .flatten()
        .map(|&e| {
            let (lg, lu) = log_components(
                e as f64,
                state.sigma,
                state.inlier_fraction,
                state.outlier_density,
            );
            log_sum_exp(lg, lu)
        })
        .sum()
}

/// One EM iteration. The E-step scores every residual under the current
/// parameters; the M-step re-estimates sigma and the inlier fraction, and
/// the outlier density follows the observed residual range.
pub fn em_update(residuals: &[Vec<f32>], state: &EmState) -> Result<EmState> {
    if residuals.iter().flatten().any(|e| !e.is_finite()) {
        return Err(Error::param("EM residuals must be finite"));
    }
    let (lo, hi) = range(residuals);
    let dens = density(lo, hi);
    if !dens.is_finite() {
        // All residuals identical: nothing to reject.
        let n = residuals.iter().map(Vec::len).sum::<usize>().max(1);
        let ss: f64 = residuals
            .iter()
            .flatten()
            .map(|&e| (e as f64).powi(2))
            .sum();
        return Ok(EmState {
            voxel_posteriors: residuals.iter().map(|r| vec![1.0; r.len()]).collect(),
            slice_probabilities: vec![1.0; residuals.len()],
            sigma: (ss / n as f64).sqrt().max(MIN_SIGMA),
            inlier_fraction: 1.0 - MIN_FRACTION,
            outlier_density: dens,
        });
    }
    let sigma = state.sigma.max(MIN_SIGMA);
    let fraction = state
        .inlier_fraction
        .clamp(MIN_FRACTION, 1.0 - MIN_FRACTION);
    let (mut sp, mut spe2, mut n) = (0f64, 0f64, 0usize);
    let mut voxel_posteriors = Vec::with_capacity(residuals.len());
    let mut slice_probabilities = Vec::with_capacity(residuals.len());
    for r in residuals {
        let mut post = Vec::with_capacity(r.len());
        let mut acc = 0f64;
        for &e in r {
            let e = e as f64;
            let (lg, lu) = log_components(e, sigma, fraction, dens);
            let p = 1.0 / (1.0 + (lu - lg).exp());
            sp += p;
            spe2 += p * e * e;
            acc += p;
            post.push(p as f32);
        }
        n += r.len();
        slice_probabilities.push(if r.is_empty() {
            1.0
        } else {
            acc / r.len() as f64
        });
        voxel_posteriors.push(post);
    }
    let new_sigma = if sp > 0.0 { (spe2 / sp).sqrt() } else { sigma };
    Ok(EmState {
        voxel_posteriors,
        slice_probabilities,
        sigma: new_sigma.max(MIN_SIGMA),
        inlier_fraction: (sp / n.max(1) as f64).clamp(MIN_FRACTION, 1.0 - MIN_FRACTION),
        outlier_density: dens,
    })
}
