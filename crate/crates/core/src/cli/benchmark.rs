use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::{degrade, DegradeConfig};
use crate::baselines::{upsample_bspline, upsample_nearest, upsample_trilinear};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::srnet::{infer_volume, NetworkParams, TilePlan};
use crate::volume::Volume;

pub const BENCHMARK_CSV_HEADER: &str =
    "method,psnr_db_mean,psnr_db_std,ssim_mean,ssim_std,ncc_mean,ncc_std";

/// Ordering the learned upsampler is expected to reach on the standard corpus.
pub const EXPECTED_ORDERING: &str = "cnn > bspline > linear > none";

/// In-plane upsampling method for `upsample` and `benchmark`. `None` keeps
/// the low-resolution samples, replicated onto the high-resolution grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMethod {
    None,
    Linear,
    BSpline,
    Cnn,
}

impl UpsampleMethod {
    pub fn name(self) -> &'static str {
        match self {
            UpsampleMethod::None => "none",
            UpsampleMethod::Linear => "linear",
            UpsampleMethod::BSpline => "bspline",
            UpsampleMethod::Cnn => "cnn",
        }
    }
}

impl std::str::FromStr for UpsampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "nearest" => Ok(UpsampleMethod::None),
            "linear" | "trilinear" => Ok(UpsampleMethod::Linear),
            "bspline" | "b-spline" => Ok(UpsampleMethod::BSpline),
            "cnn" => Ok(UpsampleMethod::Cnn),
            other => Err(Error::param(format!(
                "unknown method {other:?} (expected none, linear, trilinear, bspline or cnn)"
            ))),
        }
    }
}

/// Upsample `lr` in-plane by `factor` with `method`. `cnn` needs `params`.
pub fn upsample_with(
    method: UpsampleMethod,
    lr: &Volume,
    factor: usize,
    params: Option<&NetworkParams<f32>>,
) -> Result<Volume> {
    let f = [factor, factor, 1];
    match method {
        UpsampleMethod::None => upsample_nearest(lr, f),
        UpsampleMethod::Linear => upsample_trilinear(lr, f),
        UpsampleMethod::BSpline => upsample_bspline(lr, f),
        UpsampleMethod::Cnn => {
            let p = params.ok_or_else(|| Error::param("method cnn needs --checkpoint"))?;
            if p.factor != factor {
                return Err(Error::ConfigMismatch(format!(
                    "checkpoint factor {} differs from requested factor {factor}",
                    p.factor
                )));
            }
            infer_volume(p, lr, TilePlan::default())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub psnr_db_mean: f64,
    pub psnr_db_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub ncc_mean: f64,
    pub ncc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeScore {
    pub volume: String,
    pub method: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub ncc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub factor: usize,
    pub rows: Vec<BenchmarkRow>,
    pub per_volume: Vec<VolumeScore>,
    pub expected_ordering: String,
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Degrade every volume with `dcfg` (seed offset by the volume index), run
/// each method and score it against the original. Rows are in `methods`
/// order; standard deviations are sample deviations.
pub fn benchmark(
    volumes: &[(String, Volume)],
    methods: &[UpsampleMethod],
    dcfg: &DegradeConfig,
    params: Option<&NetworkParams<f32>>,
) -> Result<BenchmarkTable> {
    if volumes.is_empty() {
        return Err(Error::param("benchmark corpus is empty"));
    }
    if methods.is_empty() {
        return Err(Error::param("benchmark needs at least one method"));
    }
    let mut per_volume = Vec::new();
    let mut scores = vec![(Vec::new(), Vec::new(), Vec::new()); methods.len()];
    for (i, (name, hr)) in volumes.iter().enumerate() {
        let cfg = DegradeConfig {
            seed: dcfg.seed.wrapping_add(i as u64),
            ..dcfg.clone()
        };
        let lr = degrade(hr, &cfg)?;
        for (m, &method) in methods.iter().enumerate() {
            let up = upsample_with(method, &lr, dcfg.factor, params)?;
            let r = evaluate(&up, hr)?;
            scores[m].0.push(r.psnr_db);
            scores[m].1.push(r.ssim);
            scores[m].2.push(r.ncc);
            per_volume.push(VolumeScore {
                volume: name.clone(),
                method: method.name().to_string(),
                psnr_db: r.psnr_db,
                ssim: r.ssim,
                ncc: r.ncc,
            });
        }
    }
    let rows = methods
        .iter()
        .zip(&scores)
        .map(|(m, (p, s, c))| {
            let (psnr_db_mean, psnr_db_std) = mean_std(p);
            let (ssim_mean, ssim_std) = mean_std(s);
            let (ncc_mean, ncc_std) = mean_std(c);
            BenchmarkRow {
                method: m.name().to_string(),
                psnr_db_mean,
                psnr_db_std,
                ssim_mean,
                ssim_std,
                ncc_mean,
                ncc_std,
            }
        })
        .collect();
    Ok(BenchmarkTable {
        factor: dcfg.factor,
        rows,
        per_volume,
        expected_ordering: EXPECTED_ORDERING.to_string(),
    })
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(BENCHMARK_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.method,
                r.psnr_db_mean,
                r.psnr_db_std,
                r.ssim_mean,
                r.ssim_std,
                r.ncc_mean,
                r.ncc_std
            ));
        }
        s
    }

    /// Write `benchmark.csv` and `benchmark.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("benchmark.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join("benchmark.json");
        std::fs::write(&json, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(&json, e))
    }
}
