use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// Magnitude noise: each voxel `x` becomes `sqrt((x + n1)^2 + n2^2)` with
/// `n1, n2 ~ N(0, sigma^2)`.
///
/// Every z-plane draws from its own ChaCha stream keyed by `(seed, z)`, so the
/// output does not depend on how planes are scheduled.
pub fn add_rician_noise(v: &Volume, sigma: f64, seed: u64) -> Result<Volume> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::param(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(v.map(f32::abs));
    }
    let [nx, ny, nz] = v.dims();
    let plane = nx * ny;
    let mut out = v.data().to_vec();
    for z in 0..nz {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(z as u64);
        for x in &mut out[z * plane..(z + 1) * plane] {
            let n1: f64 = StandardNormal.sample(&mut rng);
            let n2: f64 = StandardNormal.sample(&mut rng);
            let re = *x as f64 + sigma * n1;
            let im = sigma * n2;
            *x = (re * re + im * im).sqrt() as f32;
        }
    }
    v.with_data(out)
}
