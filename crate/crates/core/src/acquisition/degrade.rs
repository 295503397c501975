use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{add_rician_noise, blur_separable, cws_kernel, decimate, linear_kernel};
use crate::error::{Error, Result};
use crate::volume::{crop, read_volume, write_volume, Axis, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradeMode {
    /// Cosine-windowed sinc blur, then decimation.
    #[default]
    Blur,
    /// Triangle-kernel (linear) anti-aliasing, then decimation.
    Linear,
}

impl std::str::FromStr for DegradeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blur" => Ok(DegradeMode::Blur),
            "linear" => Ok(DegradeMode::Linear),
            other => Err(Error::param(format!("unknown degrade mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradeConfig {
    /// In-plane downsampling factor, 2 or 4.
    pub factor: usize,
    /// Out-of-plane block size of each training sample.
    #[serde(default = "default_z_slices")]
    pub z_slices: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: DegradeMode,
}

fn default_z_slices() -> usize {
    5
}

impl DegradeConfig {
    pub fn new(factor: usize) -> Self {
        DegradeConfig {
            factor,
            z_slices: default_z_slices(),
            noise_sigma: 0.0,
            seed: 0,
            mode: DegradeMode::Blur,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factor != 2 && self.factor != 4 {
            return Err(Error::param(format!(
                "factor must be 2 or 4, got {}",
                self.factor
            )));
        }
        if self.z_slices == 0 {
            return Err(Error::param("z_slices must be >= 1"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::param(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// In-plane acquisition degradation: blur x and y, decimate by the factor in
/// x and y, then add Rician noise. The z axis is untouched.
pub fn degrade(v: &Volume, cfg: &DegradeConfig) -> Result<Volume> {
    cfg.validate()?;
    let dims = v.dims();
    if !dims[0].is_multiple_of(cfg.factor) || !dims[1].is_multiple_of(cfg.factor) {
        return Err(Error::param(format!(
            "factor {} does not divide in-plane dims {:?}",
            cfg.factor,
            &dims[..2]
        )));
    }
    let kernel = match cfg.mode {
        DegradeMode::Blur => cws_kernel(cfg.factor)?,
        DegradeMode::Linear => linear_kernel(cfg.factor)?,
    };
    let blurred = blur_separable(v, &kernel, &[Axis::X, Axis::Y])?;
    let lr = decimate(&blurred, [cfg.factor, cfg.factor, 1])?;
    add_rician_noise(&lr, cfg.noise_sigma, cfg.seed)
        .map(|v| v.with_provenance(format!("degraded:x{}:{}", cfg.factor, lr.provenance())))
}

/// Aligned low/high resolution blocks of `z_slices` out-of-plane slices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub lr: Volume,
    pub hr: Volume,
    pub provenance: String,
}

impl TrainingPair {
    pub fn validate(&self, factor: usize) -> Result<()> {
        let l = self.lr.dims();
        let h = self.hr.dims();
        if h[0] != l[0] * factor || h[1] != l[1] * factor || h[2] != l[2] {
            return Err(Error::shape(format!(
                "pair dims lr {l:?} / hr {h:?} inconsistent with factor {factor}"
            )));
        }
        Ok(())
    }
}

/// Degrade `hr` and cut both volumes into blocks of `cfg.z_slices`
/// consecutive slices (stride `z_slices`, trailing partial block dropped).
pub fn gen_training_pairs(hr: &Volume, cfg: &DegradeConfig) -> Result<Vec<TrainingPair>> {
    cfg.validate()?;
    let nz = hr.dims()[2];
    if nz < cfg.z_slices {
        return Err(Error::param(format!(
            "volume has {nz} slices, fewer than z_slices = {}",
            cfg.z_slices
        )));
    }
    let lr = degrade(hr, cfg)?;
    let (ld, hd) = (lr.dims(), hr.dims());
    (0..nz / cfg.z_slices)
        .map(|i| {
            let z0 = i * cfg.z_slices;
            Ok(TrainingPair {
                lr: crop(&lr, [0, 0, z0], [ld[0], ld[1], cfg.z_slices])?,
                hr: crop(hr, [0, 0, z0], [hd[0], hd[1], cfg.z_slices])?,
                provenance: hr.provenance().to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub config: DegradeConfig,
    pub pair_count: usize,
    /// Source provenance of each pair, by index.
    pub sources: Vec<String>,
}

pub const PAIR_MANIFEST: &str = "manifest.json";

pub fn pair_file_names(index: usize) -> (String, String) {
    (
        format!("pair{index}_lr.vvol"),
        format!("pair{index}_hr.vvol"),
    )
}

/// Write `pair{i}_{lr|hr}.vvol` files and `manifest.json` into `dir`.
pub fn write_pair_archive(dir: &Path, pairs: &[TrainingPair], cfg: &DegradeConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, p) in pairs.iter().enumerate() {
        let (l, h) = pair_file_names(i);
        write_volume(&p.lr, dir.join(l))?;
        write_volume(&p.hr, dir.join(h))?;
    }
    let manifest = PairManifest {
        config: cfg.clone(),
        pair_count: pairs.len(),
        sources: pairs.iter().map(|p| p.provenance.clone()).collect(),
    };
    let path = dir.join(PAIR_MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn read_pair_archive(dir: &Path) -> Result<(Vec<TrainingPair>, PairManifest)> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let path = dir.join(PAIR_MANIFEST);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: PairManifest = serde_json::from_slice(&text)?;
    let pairs = (0..manifest.pair_count)
        .map(|i| {
            let (l, h) = pair_file_names(i);
            let pair = TrainingPair {
                lr: read_volume(dir.join(l))?,
                hr: read_volume(dir.join(h))?,
                provenance: manifest.sources.get(i).cloned().unwrap_or_default(),
            };
            pair.validate(manifest.config.factor)?;
            Ok(pair)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pairs, manifest))
}
