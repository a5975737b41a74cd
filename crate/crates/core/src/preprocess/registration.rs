//! Translational subpixel registration by cross-correlation.
//!
//! The coarse peak comes from the inverse FFT of the cross-power spectrum; it
//! is refined by evaluating the correlation on a `1/upsample` grid in a
//! 1.5-pixel neighbourhood with a matrix-multiply DFT, which avoids
//! zero-padding the whole spectrum.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::fft::{signed_freq, Fft2};
use crate::error::{Error, Result};
use crate::raster::GrayImage;

/// Displacement of a moving image relative to a reference, in pixels.
///
/// `moving(y, x) ≈ reference(y - dy, x - dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Shift2D {
    pub dy: f64,
    pub dx: f64,
}

impl Shift2D {
    pub fn new(dy: f64, dx: f64) -> Self {
        Self { dy, dx }
    }

    pub fn negate(self) -> Self {
        Self { dy: -self.dy, dx: -self.dx }
    }
}

pub const MAX_UPSAMPLE: usize = 100;

/// Estimates the shift that maps `reference` onto `moving`, to `1/upsample` px.
pub fn register_translation(reference: &GrayImage, moving: &GrayImage, upsample: usize) -> Result<Shift2D> {
    if reference.dims() != moving.dims() {
        return Err(Error::Shape(format!(
            "reference is {}x{}, moving is {}x{}",
            reference.width(),
            reference.height(),
            moving.width(),
            moving.height()
        )));
    }
    if !(1..=MAX_UPSAMPLE).contains(&upsample) {
        return Err(Error::arg(format!("upsample must be in 1..={MAX_UPSAMPLE}, got {upsample}")));
    }
    let (w, h) = reference.dims();
    let fft = Fft2::new(w, h);
    let f_ref = fft.forward_real(&centered(reference)?);
    let f_mov = fft.forward_real(&centered(moving)?);
    let product: Vec<Complex64> = f_mov.iter().zip(&f_ref).map(|(g, f)| g * f.conj()).collect();

    let mut corr = product.clone();
    fft.inverse(&mut corr);
    let (mut best, mut peak) = (f64::NEG_INFINITY, 0);
    for (i, c) in corr.iter().enumerate() {
        if c.re > best {
            best = c.re;
            peak = i;
        }
    }
    let coarse_y = signed_freq(peak / w, h) as f64;
    let coarse_x = signed_freq(peak % w, w) as f64;
    if upsample == 1 {
        return Ok(Shift2D::new(coarse_y, coarse_x));
    }

    let up = upsample as f64;
    let span = (1.5 * up).ceil() as usize;
    let offset = (span / 2) as f64 / up;
    let ys: Vec<f64> = (0..span).map(|i| coarse_y - offset + i as f64 / up).collect();
    let xs: Vec<f64> = (0..span).map(|j| coarse_x - offset + j as f64 / up).collect();
    let fine = upsampled_correlation(&product, w, h, &ys, &xs);
    let (mut best, mut at) = (f64::NEG_INFINITY, (0, 0));
    for (i, row) in fine.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > best {
                best = v;
                at = (i, j);
            }
        }
    }
    Ok(Shift2D::new(ys[at.0], xs[at.1]))
}

fn centered(img: &GrayImage) -> Result<Vec<f64>> {
    let mean = img.mean();
    let data: Vec<f64> = img.data().iter().map(|v| v - mean).collect();
    let energy: f64 = data.iter().map(|v| v * v).sum();
    if energy <= f64::EPSILON * data.len() as f64 {
        return Err(Error::Degenerate("constant image has no defined correlation peak".into()));
    }
    Ok(data)
}

/// Real part of the inverse DFT of `spectrum` sampled at arbitrary
/// displacements `ys` × `xs`.
fn upsampled_correlation(spectrum: &[Complex64], w: usize, h: usize, ys: &[f64], xs: &[f64]) -> Vec<Vec<f64>> {
    let kernel = |n: usize, positions: &[f64]| -> Vec<Vec<Complex64>> {
        (0..n)
            .map(|k| {
                let f = signed_freq(k, n) as f64 / n as f64;
                positions.iter().map(|&p| Complex64::from_polar(1.0, 2.0 * PI * f * p)).collect()
            })
            .collect()
    };
    let kx = kernel(w, xs);
    let ky = kernel(h, ys);
    // rows: transform along x for every frequency row
    let mut partial = vec![vec![Complex64::new(0.0, 0.0); xs.len()]; h];
    for (v, row) in partial.iter_mut().enumerate() {
        let spec_row = &spectrum[v * w..(v + 1) * w];
        for (u, s) in spec_row.iter().enumerate() {
            for (acc, e) in row.iter_mut().zip(&kx[u]) {
                *acc += s * e;
            }
        }
    }
    let norm = 1.0 / (w * h) as f64;
    let mut out = vec![vec![0.0; xs.len()]; ys.len()];
    for (i, out_row) in out.iter_mut().enumerate() {
        for (j, cell) in out_row.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for v in 0..h {
                acc += ky[v][i] * partial[v][j];
            }
            *cell = acc.re * norm;
        }
    }
    out
}

/// Resamples `img` displaced by `shift` with bilinear interpolation;
/// coordinates outside the image take the nearest border value.
pub fn apply_shift(img: &GrayImage, shift: Shift2D) -> Result<GrayImage> {
    if !(shift.dx.is_finite() && shift.dy.is_finite()) {
        return Err(Error::arg("shift must be finite"));
    }
    let (w, h) = img.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let sy = (y as f64 - shift.dy).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for x in 0..w {
            let sx = (x as f64 - shift.dx).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(img.with_data_like(out))
}

/// Registers every frame to the first and returns their arithmetic mean.
pub fn average_registered(frames: &[GrayImage], upsample: usize) -> Result<GrayImage> {
    let first = frames.first().ok_or_else(|| Error::arg("no frames to average"))?;
    let mut sum = first.data().to_vec();
    for frame in &frames[1..] {
        let shift = register_translation(first, frame, upsample)?;
        let aligned = apply_shift(frame, shift.negate())?;
        for (s, v) in sum.iter_mut().zip(aligned.data()) {
            *s += v;
        }
    }
    let n = frames.len() as f64;
    Ok(first.with_data_like(sum.into_iter().map(|v| v / n).collect()))
}
