use crate::error::{Error, Result};
use crate::raster::GrayImage;

const BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self { tiles_x: 8, tiles_y: 8, clip_limit: 2.0 }
    }
}

impl ClaheParams {
    pub fn validate(&self) -> Result<()> {
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return Err(Error::arg("tile counts must be positive"));
        }
        if !(self.clip_limit > 1.0) {
            return Err(Error::arg(format!("clip limit must exceed 1, got {}", self.clip_limit)));
        }
        Ok(())
    }
}

/// Start offsets of `tiles` contiguous spans partitioning `0..n`.
pub(crate) fn tile_bounds(n: usize, tiles: usize) -> Vec<usize> {
    (0..=tiles).map(|i| i * n / tiles).collect()
}

#[inline]
pub(crate) fn level(v: f64) -> usize {
    (v.clamp(0.0, 1.0) * 255.0).round() as usize
}

/// Clipped-histogram CDF lookup for one tile, mapping levels into `[0, 1]`.
/// A tile occupying a single level keeps the identity mapping.
fn tile_lut(hist: &[u64; BINS], clip_limit: f64) -> [f64; BINS] {
    let n: u64 = hist.iter().sum();
    let mut lut = [0.0; BINS];
    if hist.iter().filter(|&&c| c > 0).count() <= 1 {
        for (i, l) in lut.iter_mut().enumerate() {
            *l = i as f64 / 255.0;
        }
        return lut;
    }
    let limit = clip_limit * n as f64 / BINS as f64;
    let mut clipped = [0.0; BINS];
    let mut excess = 0.0;
    for (c, &h) in clipped.iter_mut().zip(hist) {
        let h = h as f64;
        if h > limit {
            excess += h - limit;
            *c = limit;
        } else {
            *c = h;
        }
    }
    let bonus = excess / BINS as f64;
    let mut cdf = 0.0;
    for (l, c) in lut.iter_mut().zip(&clipped) {
        cdf += c + bonus;
        *l = (cdf / n as f64).min(1.0);
    }
    lut
}

/// Contrast-limited adaptive histogram equalization with bilinear blending
/// between the four nearest tile mappings.
pub fn clahe(img: &GrayImage, p: &ClaheParams) -> Result<GrayImage> {
    p.validate()?;
    let (w, h) = img.dims();
    if w < p.tiles_x || h < p.tiles_y {
        return Err(Error::arg(format!(
            "{w}x{h} image is smaller than the {}x{} tile grid",
            p.tiles_x, p.tiles_y
        )));
    }
    let xb = tile_bounds(w, p.tiles_x);
    let yb = tile_bounds(h, p.tiles_y);
    let mut luts = Vec::with_capacity(p.tiles_x * p.tiles_y);
    for ty in 0..p.tiles_y {
        for tx in 0..p.tiles_x {
            let mut hist = [0u64; BINS];
            for y in yb[ty]..yb[ty + 1] {
                for x in xb[tx]..xb[tx + 1] {
                    hist[level(img.get(x, y))] += 1;
                }
            }
            luts.push(tile_lut(&hist, p.clip_limit));
        }
    }
    let centers = |b: &[usize]| -> Vec<f64> { b.windows(2).map(|s| (s[0] + s[1] - 1) as f64 / 2.0).collect() };
    let cx = centers(&xb);
    let cy = centers(&yb);
    let neighbours = |c: &[f64], pos: f64| -> (usize, usize, f64) {
        if pos <= c[0] {
            return (0, 0, 0.0);
        }
        let last = c.len() - 1;
        if pos >= c[last] {
            return (last, last, 0.0);
        }
        let i = c.partition_point(|&v| v <= pos) - 1;
        (i, i + 1, (pos - c[i]) / (c[i + 1] - c[i]))
    };

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (ty0, ty1, fy) = neighbours(&cy, y as f64);
        for x in 0..w {
            let (tx0, tx1, fx) = neighbours(&cx, x as f64);
            let l = level(img.get(x, y));
            let m = |tx: usize, ty: usize| luts[ty * p.tiles_x + tx][l];
            let top = m(tx0, ty0) * (1.0 - fx) + m(tx1, ty0) * fx;
            let bottom = m(tx0, ty1) * (1.0 - fx) + m(tx1, ty1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(img.with_data_like(out))
}
