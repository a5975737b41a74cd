use rustfft::num_complex::Complex64;

use super::fft::{signed_freq, Fft2};
use crate::error::{Error, Result};
use crate::raster::GrayImage;

/// Frequency-domain notch targeting horizontal stripe artefacts.
///
/// Coefficients with horizontal frequency `|u| <= band_halfwidth` and
/// vertical frequency `|v| >= min_stripe_freq` are scaled by `attenuation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotchParams {
    pub band_halfwidth: usize,
    pub min_stripe_freq: usize,
    pub attenuation: f64,
}

impl Default for NotchParams {
    fn default() -> Self {
        Self { band_halfwidth: 1, min_stripe_freq: 4, attenuation: 0.0 }
    }
}

impl NotchParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_stripe_freq < 1 {
            return Err(Error::arg("min_stripe_freq must be >= 1 so DC is never touched"));
        }
        if !(0.0..=1.0).contains(&self.attenuation) {
            return Err(Error::arg(format!("attenuation must be in [0,1], got {}", self.attenuation)));
        }
        Ok(())
    }

    #[inline]
    fn in_notch(&self, u: isize, v: isize) -> bool {
        u.unsigned_abs() <= self.band_halfwidth && v.unsigned_abs() >= self.min_stripe_freq
    }
}

/// Filtered intensities before clamping; linear in the input.
pub fn notch_filter_unclamped(img: &GrayImage, p: &NotchParams) -> Result<Vec<f64>> {
    p.validate()?;
    let (w, h) = img.dims();
    let fft = Fft2::new(w, h);
    let mut spec = fft.forward_real(img.data());
    for ky in 0..h {
        let v = signed_freq(ky, h);
        for kx in 0..w {
            if p.in_notch(signed_freq(kx, w), v) {
                spec[ky * w + kx] *= p.attenuation;
            }
        }
    }
    fft.inverse(&mut spec);
    Ok(spec.iter().map(|c: &Complex64| c.re).collect())
}

pub fn notch_filter(img: &GrayImage, p: &NotchParams) -> Result<GrayImage> {
    Ok(img.with_data_like(notch_filter_unclamped(img, p)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::registration::tests::band_limited;
    use std::f64::consts::PI;

    /// Energy in the notch band, measured with an independent direct DFT
    /// restricted to the u = 0 column.
    fn stripe_energy(data: &[f64], w: usize, h: usize, min_v: usize) -> f64 {
        let mut total = 0.0;
        for v in 0..h {
            let sv = if v <= h / 2 { v } else { h - v };
            if sv < min_v {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                let row_sum: f64 = data[y * w..(y + 1) * w].iter().sum();
                acc += row_sum * Complex64::from_polar(1.0, -2.0 * PI * (v * y) as f64 / h as f64);
            }
            total += acc.norm_sqr();
        }
        total
    }

    #[test]
    fn constant_image_unchanged() {
        let img = GrayImage::constant(17, 12, 0.37).unwrap();
        let out = notch_filter(&img, &NotchParams::default()).unwrap();
        for v in out.data() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn removes_horizontal_stripes() {
        let (w, h) = (40, 48);
        let v0 = 6.0;
        let img = GrayImage::from_fn(w, h, |_, y| 0.5 + 0.4 * (2.0 * PI * v0 * y as f64 / h as f64).sin()).unwrap();
        let p = NotchParams { band_halfwidth: 1, min_stripe_freq: 4, attenuation: 0.0 };
        let out = notch_filter_unclamped(&img, &p).unwrap();
        let before = stripe_energy(img.data(), w, h, 4);
        let after = stripe_energy(&out, w, h, 4);
        assert!(before > 1.0);
        assert!(after <= 0.01 * before, "{after} vs {before}");
    }

    #[test]
    fn preserves_mean() {
        let img = band_limited(33, 29, 9);
        let out = notch_filter_unclamped(&img, &NotchParams::default()).unwrap();
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        assert!((mean - img.mean()).abs() < 1e-9);
    }

    #[test]
    fn is_linear_before_clamping() {
        let a = band_limited(24, 20, 10);
        let b = band_limited(24, 20, 11);
        let (alpha, beta) = (0.3, 0.6);
        let mix = GrayImage::from_fn(24, 20, |x, y| alpha * a.get(x, y) + beta * b.get(x, y)).unwrap();
        let p = NotchParams { band_halfwidth: 2, min_stripe_freq: 3, attenuation: 0.25 };
        let fa = notch_filter_unclamped(&a, &p).unwrap();
        let fb = notch_filter_unclamped(&b, &p).unwrap();
        let fm = notch_filter_unclamped(&mix, &p).unwrap();
        for i in 0..fm.len() {
            assert!((fm[i] - (alpha * fa[i] + beta * fb[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_params() {
        let img = GrayImage::constant(4, 4, 0.0).unwrap();
        assert!(notch_filter(&img, &NotchParams { min_stripe_freq: 0, ..Default::default() }).is_err());
        assert!(notch_filter(&img, &NotchParams { attenuation: 1.5, ..Default::default() }).is_err());
    }
}
