use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::l2_loss;
use super::network::{backward, forward_cached, NetworkParams, LAYER_NAMES};
use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// Settings for a finite-difference check of the full network's gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub width: usize,
    pub factor: usize,
    pub dims: [usize; 3],
    pub step: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            width: 4,
            factor: 2,
            dims: [8, 8, 3],
            step: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub params_checked: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub worst_layer: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Parameters whose `±step` probe flipped a ReLU and was retried with a
    /// smaller step.
    pub kink_refined: usize,
}

/// Relative error `|a - n| / max(|a|, |n|)`, with both below `floor` treated
/// as agreement.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < floor {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

const MAGNITUDE_FLOOR: f64 = 1e-10;

/// Smallest step tried when a probe straddles a ReLU kink.
const MIN_STEP: f64 = 1e-7;

/// Compare analytic gradients of every weight and bias against central
/// differences, in f64.
///
/// A central difference across a ReLU kink measures the average of two
/// one-sided slopes rather than the derivative. When either probe changes
/// the set of active units, the step is divided by 10 (down to 1e-7) until
/// both probes see the unperturbed activation pattern.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if !(cfg.step.is_finite() && cfg.step > 0.0) {
        return Err(Error::param("finite-difference step must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = NetworkParams::<f64>::he_uniform(cfg.factor, cfg.width, cfg.seed)?;
    // Nonzero biases so every bias path is exercised.
    for layer in params.layers_mut() {
        for b in &mut layer.biases {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let [nx, ny, nz] = cfg.dims;
    let n = nx * ny * nz;
    let x = Tensor4::new(
        [1, nx, ny, nz],
        (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
    )?;
    let f = cfg.factor;
    let tn = n * f * f;
    let target = Tensor4::new(
        [1, nx * f, ny * f, nz],
        (0..tn).map(|_| rng.random_range(0.0..1.0)).collect(),
    )?;
    let (_, grads) = backward(&params, &x, &target)?;
    let probe = |p: &NetworkParams<f64>| -> Result<(f64, Vec<u64>)> {
        let c = forward_cached(p, &x)?;
        Ok((l2_loss(&c.output, &target)?.0, c.relu_pattern()))
    };
    let base_pattern = probe(&params)?.1;

    let mut report = GradcheckReport {
        params_checked: 0,
        max_rel_error: 0.0,
        mean_rel_error: 0.0,
        worst_layer: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        kink_refined: 0,
    };
    let mut sum = 0.0;
    let analytic: Vec<Vec<f64>> = grads.param_slices().iter().map(|s| s.to_vec()).collect();
    let counts: Vec<usize> = analytic.iter().map(Vec::len).collect();
    for (slot, &count) in counts.iter().enumerate() {
        for i in 0..count {
            let orig = params.param_slices()[slot][i];
            let mut h = cfg.step;
            let numeric = loop {
                params.param_slices_mut()[slot][i] = orig + h;
                let (hi, phi) = probe(&params)?;
                params.param_slices_mut()[slot][i] = orig - h;
                let (lo, plo) = probe(&params)?;
                params.param_slices_mut()[slot][i] = orig;
                let smooth = phi == base_pattern && plo == base_pattern;
                if smooth || h / 10.0 < MIN_STEP {
                    if h != cfg.step {
                        report.kink_refined += 1;
                    }
                    break (hi - lo) / (2.0 * h);
                }
                h /= 10.0;
            };
            let a = analytic[slot][i];
            let e = relative_error(a, numeric, MAGNITUDE_FLOOR);
            sum += e;
            report.params_checked += 1;
            if e > report.max_rel_error || report.worst_layer.is_empty() {
                report.max_rel_error = e;
                report.worst_layer = format!(
                    "{}.{}",
                    LAYER_NAMES[slot / 2],
                    if slot % 2 == 0 { "weights" } else { "biases" }
                );
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.mean_rel_error = sum / report.params_checked.max(1) as f64;
    Ok(report)
}
