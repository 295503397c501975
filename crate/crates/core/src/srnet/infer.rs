use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{forward, NetworkParams};
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::volume::Volume;

/// Receptive-field radius along z: nine layers, each with a 3-tap z kernel.
pub const HALO_Z: usize = 9;

/// Tiling of a volume into z-blocks processed independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilePlan {
    /// Output z-planes per tile.
    pub z_block: usize,
    /// Extra planes on each side of a tile; must cover [`HALO_Z`].
    pub overlap: usize,
}

impl Default for TilePlan {
    fn default() -> Self {
        TilePlan {
            z_block: 16,
            overlap: HALO_Z,
        }
    }
}

impl TilePlan {
    pub fn validate(&self) -> Result<()> {
        if self.z_block == 0 {
            return Err(Error::param("tile z_block must be >= 1"));
        }
        if self.overlap < HALO_Z {
            return Err(Error::param(format!(
                "tile overlap {} is below the network halo {HALO_Z}",
                self.overlap
            )));
        }
        Ok(())
    }
}

/// Super-resolve a volume tile by tile along z. Each tile is extended by
/// `overlap` planes on both sides (clipped to the volume), run through the
/// network, and trimmed back, so the result matches a whole-volume pass.
pub fn infer_volume(params: &NetworkParams<f32>, lr: &Volume, plan: TilePlan) -> Result<Volume> {
    plan.validate()?;
    let [nx, ny, nz] = lr.dims();
    let f = params.factor;
    let whole = Tensor4::<f32>::from_volume(lr);
    let tiles: Vec<(usize, usize)> = (0..nz)
        .step_by(plan.z_block)
        .map(|z0| (z0, plan.z_block.min(nz - z0)))
        .collect();
    let outputs: Vec<Result<Vec<f32>>> = tiles
        .par_iter()
        .map(|&(z0, len)| {
            let lo = z0.saturating_sub(plan.overlap);
            let hi = (z0 + len + plan.overlap).min(nz);
            let block = whole.z_range(lo, hi - lo)?;
            let y = forward(params, &block)?;
            let plane = nx * f * ny * f;
            let start = (z0 - lo) * plane;
            Ok(y.data()[start..start + len * plane].to_vec())
        })
        .collect();
    let mut data = Vec::with_capacity(nx * ny * nz * f * f);
    for o in outputs {
        data.extend(o?);
    }
    let s = lr.spacing();
    Ok(Volume::new(
        [nx * f, ny * f, nz],
        [s[0] / f as f64, s[1] / f as f64, s[2]],
        data,
    )?
    .with_provenance(lr.provenance()))
}
