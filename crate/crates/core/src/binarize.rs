//! Confidence map to vessel mask: Otsu thresholding, gamma pre-correction
//! and FAZ-interior cleanup.

use crate::error::{Error, Result};
use crate::morphometry::Region;
use crate::raster::BinaryMask;
use crate::segnet::ConfidenceMap;

pub const BINS: usize = 256;
pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct OtsuResult {
    /// Boundary between bins `level` and `level + 1`, i.e. `(level + 0.5) / 255`.
    pub threshold: f64,
    pub level: usize,
    pub inter_class_variance: f64,
    pub histogram: [u64; BINS],
}

#[inline]
pub fn bin_of(v: f64) -> usize {
    (v.clamp(0.0, 1.0) * 255.0).round() as usize
}

/// Between-class variance `ω₀ω₁(μ₀−μ₁)²` of the split after bin `k`, in
/// bin units, from exact integer class statistics.
#[inline]
pub fn between_class_variance(n0: u64, s0: u64, n1: u64, s1: u64) -> f64 {
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let n = (n0 + n1) as f64;
    let (w0, w1) = (n0 as f64 / n, n1 as f64 / n);
    let d = s0 as f64 / n0 as f64 - s1 as f64 / n1 as f64;
    w0 * w1 * d * d
}

pub fn otsu_histogram(histogram: &[u64; BINS]) -> Result<OtsuResult> {
    let occupied = histogram.iter().filter(|&&c| c > 0).count();
    if occupied < 2 {
        return Err(Error::Degenerate(format!("histogram has {occupied} occupied bin(s); Otsu needs two")));
    }
    let n: u64 = histogram.iter().sum();
    let s: u64 = histogram.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best = (0usize, -1.0f64);
    for (k, &c) in histogram.iter().enumerate().take(BINS - 1) {
        n0 += c;
        s0 += k as u64 * c;
        let var = between_class_variance(n0, s0, n - n0, s - s0);
        if var > best.1 {
            best = (k, var);
        }
    }
    Ok(OtsuResult {
        threshold: (best.0 as f64 + 0.5) / 255.0,
        level: best.0,
        inter_class_variance: best.1,
        histogram: *histogram,
    })
}

pub fn histogram(map: &ConfidenceMap) -> [u64; BINS] {
    let mut h = [0u64; BINS];
    for v in map.roi_values() {
        h[bin_of(v)] += 1;
    }
    h
}

pub fn otsu(map: &ConfidenceMap) -> Result<OtsuResult> {
    otsu_histogram(&histogram(map))
}

/// Vessel where the value strictly exceeds `t`, inside the ROI only.
pub fn threshold_map(map: &ConfidenceMap, t: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::arg(format!("threshold must lie in [0,1], got {t}")));
    }
    let roi = map.roi().clone();
    BinaryMask::new(map.values().iter().map(|&v| v > t).collect(), roi)
}

pub fn gamma_correct(map: &ConfidenceMap, gamma: f64) -> Result<ConfidenceMap> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::arg(format!("gamma must be positive, got {gamma}")));
    }
    map.map_roi(|v| v.powf(gamma))
}

/// Otsu mask used for pixel agreement and FAZ shape.
pub fn metrics_mask(map: &ConfidenceMap) -> Result<(OtsuResult, BinaryMask)> {
    let o = otsu(map)?;
    let m = threshold_map(map, o.threshold)?;
    Ok((o, m))
}

/// Gamma-corrected map re-thresholded by Otsu, used for density.
pub fn density_mask(map: &ConfidenceMap, gamma: f64) -> Result<(OtsuResult, BinaryMask)> {
    metrics_mask(&gamma_correct(map, gamma)?)
}

/// Forces every pixel of `faz` to non-vessel.
pub fn faz_cleanup(mask: &BinaryMask, faz: &Region) -> Result<BinaryMask> {
    if faz.dims() != mask.dims() {
        return Err(Error::Shape("FAZ region and mask differ in size".into()));
    }
    if let Some(&(x, y)) = faz.pixels().iter().find(|&&(x, y)| !mask.roi().contains(x, y)) {
        return Err(Error::arg(format!("FAZ pixel ({x},{y}) lies outside the ROI")));
    }
    let w = mask.width();
    let mut v = mask.as_slice().to_vec();
    for &(x, y) in faz.pixels() {
        v[y * w + x] = false;
    }
    BinaryMask::new(v, mask.roi().clone())
}
