use super::Volume;
use crate::error::{Error, Result};

/// Nearest-rank percentile of an already sorted slice: the order statistic at
/// rank `round(p / 100 * (n - 1))`.
pub fn percentile_nearest_rank(sorted: &[f32], p: f64) -> f32 {
    let n = sorted.len();
    let rank = ((p / 100.0) * (n - 1) as f64).round() as usize;
    sorted[rank.min(n - 1)]
}

/// Clip to the `[p_lo, p_hi]` percentile interval and map affinely onto
/// `[0, 1]`. Constant volumes map to all zeros.
///
/// Percentiles are nearest-rank order statistics, so the clip bounds are
/// data values and a second application with the same percentiles is the
/// identity.
pub fn normalize_intensity(v: &Volume, p_lo: f64, p_hi: f64) -> Result<Volume> {
    if v.is_empty() {
        return Err(Error::param("cannot normalize an empty volume"));
    }
    if !(0.0..100.0).contains(&p_lo) || !(p_lo < p_hi && p_hi <= 100.0) {
        return Err(Error::param(format!(
            "percentiles must satisfy 0 <= p_lo < p_hi <= 100, got ({p_lo}, {p_hi})"
        )));
    }
    if v.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::param("volume contains non-finite intensities"));
    }
    let mut sorted = v.data().to_vec();
    sorted.sort_by(f32::total_cmp);
    let lo = percentile_nearest_rank(&sorted, p_lo);
    let hi = percentile_nearest_rank(&sorted, p_hi);
    let mut out = if hi > lo {
        let scale = hi - lo;
        v.map(|x| ((x.clamp(lo, hi) - lo) / scale).clamp(0.0, 1.0))
    } else {
        v.map(|x| if x > lo { 1.0 } else { 0.0 })
    };
    out.set_intensity_range(Some((lo, hi)));
    Ok(out)
}
