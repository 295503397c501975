use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separable, symmetric, odd-length point-spread function. Tap `i` sits at
/// integer offset `i - halfwidth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfKernel {
    taps: Vec<f64>,
    factor: usize,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

impl PsfKernel {
    /// Normalizes `taps` to unit sum. Rejects even lengths and asymmetric taps.
    pub fn from_taps(taps: Vec<f64>, factor: usize) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::param(format!(
                "kernel length must be odd, got {}",
                taps.len()
            )));
        }
        let n = taps.len();
        for i in 0..n / 2 {
            if (taps[i] - taps[n - 1 - i]).abs() > 1e-12 * taps[i].abs().max(1.0) {
                return Err(Error::param("kernel taps must be symmetric"));
            }
        }
        let sum: f64 = taps.iter().sum();
        if !(sum.is_finite() && sum.abs() > 1e-12) {
            return Err(Error::param("kernel taps must have a non-zero finite sum"));
        }
        Ok(PsfKernel {
            taps: taps.iter().map(|t| t / sum).collect(),
            factor,
        })
    }

    pub fn delta() -> Self {
        PsfKernel {
            taps: vec![1.0],
            factor: 1,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn halfwidth(&self) -> usize {
        self.taps.len() / 2
    }

    /// Tap at signed offset `k`, zero outside the support.
    pub fn at(&self, k: isize) -> f64 {
        let h = self.halfwidth() as isize;
        if k.abs() > h {
            0.0
        } else {
            self.taps[(k + h) as usize]
        }
    }

    /// Evaluate the discrete-time frequency response at `omega` rad/sample.
    pub fn frequency_response(&self, omega: f64) -> f64 {
        let h = self.halfwidth() as isize;
        (-h..=h)
            .map(|k| self.at(k) * (omega * k as f64).cos())
            .sum()
    }
}

/// Cosine-windowed sinc kernel for anti-aliasing before decimation by
/// `factor`. Tap `k` is `sinc(k / factor) * cos(pi k / (2 h + 1))` for
/// `|k| <= h`, normalized to unit sum. `factor == 1` is the delta kernel.
pub fn make_cws_kernel(factor: usize, support_halfwidth: usize) -> Result<PsfKernel> {
    if factor == 0 {
        return Err(Error::param("kernel factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(PsfKernel::delta());
    }
    if support_halfwidth < factor {
        return Err(Error::param(format!(
            "support_halfwidth {support_halfwidth} must be >= factor {factor}"
        )));
    }
    let h = support_halfwidth as isize;
    let width = (2 * support_halfwidth + 1) as f64;
    let taps = (-h..=h)
        .map(|k| {
            let k = k as f64;
            sinc(k / factor as f64) * (std::f64::consts::PI * k / width).cos()
        })
        .collect();
    PsfKernel::from_taps(taps, factor)
}

/// The default acquisition PSF for `factor`: support halfwidth `2 * factor`.
pub fn cws_kernel(factor: usize) -> Result<PsfKernel> {
    make_cws_kernel(factor, 2 * factor)
}

/// Triangle (linear-interpolation) anti-aliasing kernel, used by the
/// linear degradation mode.
pub fn linear_kernel(factor: usize) -> Result<PsfKernel> {
    if factor == 0 {
        return Err(Error::param("kernel factor must be >= 1"));
    }
    let f = factor as isize;
    let taps = (-(f - 1)..=(f - 1)).map(|k| (f - k.abs()) as f64).collect();
    PsfKernel::from_taps(taps, factor)
}
