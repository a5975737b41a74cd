//! Annotated overlays: FAZ perimeter yellow, maximum chord green, minimum
//! chord red, pixels outside the ROI (the vendor icon) white.

use octafaz::morphometry::FazMetrics;
use octafaz::raster::{GrayImage, RgbImage, RoiMask};

pub const YELLOW: [u8; 3] = [255, 255, 0];
pub const GREEN: [u8; 3] = [0, 255, 0];
pub const RED: [u8; 3] = [255, 0, 0];
pub const WHITE: [u8; 3] = [255, 255, 255];

/// What was measured for one eye.
pub enum Annotation<'a> {
    Full(&'a FazMetrics),
    /// Centroid fell outside the FAZ: perimeter only.
    PerimeterOnly(&'a [(usize, usize)]),
    None,
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), rgb: [u8; 3]) {
    let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as usize) < img.width && (y0 as usize) < img.height {
            img.put(x0 as usize, y0 as usize, rgb);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

pub fn render(base: &GrayImage, roi: &RoiMask, ann: Annotation) -> RgbImage {
    let mut img = RgbImage::from_gray(base);
    for y in 0..roi.height() {
        for x in 0..roi.width() {
            if !roi.contains(x, y) {
                img.put(x, y, WHITE);
            }
        }
    }
    let perimeter = match &ann {
        Annotation::Full(m) => &m.perimeter[..],
        Annotation::PerimeterOnly(p) => p,
        Annotation::None => &[],
    };
    for &(x, y) in perimeter {
        img.put(x, y, YELLOW);
    }
    if let Annotation::Full(m) = ann {
        line(&mut img, m.max_chord[0], m.max_chord[1], GREEN);
        line(&mut img, m.min_chord[0], m.min_chord[1], RED);
    }
    img
}

#[cfg(test)]
pub fn count_color(img: &RgbImage, rgb: [u8; 3]) -> usize {
    img.data.iter().filter(|&&p| p == rgb).count()
}
