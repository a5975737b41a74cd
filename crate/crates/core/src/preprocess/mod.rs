//! En-face conditioning: repeat-frame registration, stripe notch filtering
//! and contrast-limited adaptive histogram equalization.

mod clahe;
pub(crate) mod fft;
mod notch;
mod registration;

pub use clahe::{clahe, ClaheParams};
pub use notch::{notch_filter, notch_filter_unclamped, NotchParams};
pub use registration::{apply_shift, average_registered, register_translation, Shift2D, MAX_UPSAMPLE};

use crate::error::Result;
use crate::raster::GrayImage;

/// Preprocessing applied identically before training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Preprocessing {
    pub notch: Option<NotchParams>,
    pub clahe: Option<ClaheParams>,
}

impl Preprocessing {
    pub fn standard() -> Self {
        Self { notch: Some(NotchParams::default()), clahe: Some(ClaheParams::default()) }
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        let mut out = img.clone();
        if let Some(n) = &self.notch {
            out = notch_filter(&out, n)?;
        }
        if let Some(c) = &self.clahe {
            out = clahe(&out, c)?;
        }
        Ok(out)
    }

    /// Compact text form, e.g. `notch:1:4:0;clahe:8:8:2`; `none` when empty.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(n) = &self.notch {
            parts.push(format!("notch:{}:{}:{}", n.band_halfwidth, n.min_stripe_freq, n.attenuation));
        }
        if let Some(c) = &self.clahe {
            parts.push(format!("clahe:{}:{}:{}", c.tiles_x, c.tiles_y, c.clip_limit));
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join(";")
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        use crate::error::Error;
        let bad = || Error::ModelFormat(format!("invalid preprocessing descriptor `{s}`"));
        let mut out = Preprocessing::default();
        if s == "none" {
            return Ok(out);
        }
        for part in s.split(';') {
            let f: Vec<&str> = part.split(':').collect();
            match f.as_slice() {
                ["notch", a, b, c] => {
                    out.notch = Some(NotchParams {
                        band_halfwidth: a.parse().map_err(|_| bad())?,
                        min_stripe_freq: b.parse().map_err(|_| bad())?,
                        attenuation: c.parse().map_err(|_| bad())?,
                    })
                }
                ["clahe", a, b, c] => {
                    out.clahe = Some(ClaheParams {
                        tiles_x: a.parse().map_err(|_| bad())?,
                        tiles_y: b.parse().map_err(|_| bad())?,
                        clip_limit: c.parse().map_err(|_| bad())?,
                    })
                }
                _ => return Err(bad()),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trip() {
        for p in [Preprocessing::default(), Preprocessing::standard()] {
            assert_eq!(Preprocessing::parse(&p.describe()).unwrap(), p);
        }
        assert!(Preprocessing::parse("blur:3").is_err());
    }

    #[test]
    fn preserves_dimensions() {
        let img = GrayImage::from_fn(37, 29, |x, y| ((x * y) % 7) as f64 / 7.0).unwrap();
        assert_eq!(Preprocessing::standard().apply(&img).unwrap().dims(), (37, 29));
    }
}
