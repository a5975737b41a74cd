//! FAZ extraction and the clinical outcome measures: area, extreme
//! diameters through the centroid, eccentricity and vessel density.

mod chords;
mod csv;
mod region;

pub use chords::{diameters, Diameters};
pub use csv::{parse_metrics_csv, render_metrics_csv, Rater, MetricsRow, METRICS_HEADER};
pub use region::{fill_holes, largest_nonvessel_component, nonvessel_components, perimeter, Region};

use crate::binarize::faz_cleanup;
use crate::error::{Error, Result};
use crate::raster::BinaryMask;

pub const DEFAULT_STEP_DEG: f64 = 1.0;

pub fn centroid(r: &Region) -> (f64, f64) {
    let n = r.len() as f64;
    let (sx, sy) = r.pixels().iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
    (sx / n, sy / n)
}

/// `√(1 − (d_min/d_max)²)`.
pub fn eccentricity(d_min: f64, d_max: f64) -> Result<f64> {
    if !(d_min > 0.0 && d_min <= d_max && d_max.is_finite()) {
        return Err(Error::arg(format!("eccentricity needs 0 < d_min <= d_max, got {d_min} and {d_max}")));
    }
    let q = d_min / d_max;
    Ok((1.0 - q * q).sqrt())
}

pub fn area_mm2(r: &Region, mm_per_px: f64) -> Result<f64> {
    if !(mm_per_px > 0.0 && mm_per_px.is_finite()) {
        return Err(Error::arg(format!("pixel scale must be positive, got {mm_per_px}")));
    }
    Ok(r.len() as f64 * mm_per_px * mm_per_px)
}

/// Vessel pixels over all ROI pixels.
pub fn vessel_density(mask: &BinaryMask) -> f64 {
    mask.vessel_count() as f64 / mask.roi().count() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct FazMetrics {
    pub area_mm2: f64,
    pub d_min_mm: f64,
    pub d_max_mm: f64,
    pub eccentricity: f64,
    pub centroid: (f64, f64),
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    /// Extreme chord end points in pixel coordinates.
    pub min_chord: [(f64, f64); 2],
    pub max_chord: [(f64, f64); 2],
    pub perimeter: Vec<(usize, usize)>,
    pub vessel_density: f64,
    pub region: Region,
}

/// The FAZ of `mask`: its largest non-vessel component with enclosed
/// vessel specks absorbed, plus the mask with those specks cleared.
pub fn extract_faz(mask: &BinaryMask) -> Result<(Region, BinaryMask)> {
    let raw = largest_nonvessel_component(mask)?;
    let roi = mask.roi();
    let faz = fill_holes(&raw, |x, y| roi.contains(x, y));
    let cleaned = faz_cleanup(mask, &faz)?;
    Ok((faz, cleaned))
}

/// All measures from a single mask with a 1° sweep.
pub fn quantify(mask: &BinaryMask, mm_per_px: f64) -> Result<FazMetrics> {
    quantify_paths(mask, mask, mm_per_px, DEFAULT_STEP_DEG)
}

/// Shape measures come from `shape_mask`; density is read from
/// `density_mask` after clearing the FAZ found in `shape_mask`.
pub fn quantify_paths(
    shape_mask: &BinaryMask,
    density_mask: &BinaryMask,
    mm_per_px: f64,
    step_deg: f64,
) -> Result<FazMetrics> {
    if shape_mask.roi() != density_mask.roi() {
        return Err(Error::arg("shape and density masks must share one ROI"));
    }
    let (faz, _) = extract_faz(shape_mask)?;
    let area = area_mm2(&faz, mm_per_px)?;
    let density = vessel_density(&faz_cleanup(density_mask, &faz)?);
    let c = centroid(&faz);
    let d = diameters(&faz, c, step_deg)?;
    Ok(FazMetrics {
        area_mm2: area,
        d_min_mm: d.d_min * mm_per_px,
        d_max_mm: d.d_max * mm_per_px,
        eccentricity: eccentricity(d.d_min, d.d_max)?,
        centroid: c,
        theta_min_deg: d.theta_min_deg,
        theta_max_deg: d.theta_max_deg,
        min_chord: d.min_chord,
        max_chord: d.max_chord,
        perimeter: perimeter(&faz),
        vessel_density: density,
        region: faz,
    })
}

/// Area and density only, for eyes whose centroid leaves the FAZ.
pub fn area_and_density(
    shape_mask: &BinaryMask,
    density_mask: &BinaryMask,
    mm_per_px: f64,
) -> Result<(Region, f64, f64)> {
    let (faz, _) = extract_faz(shape_mask)?;
    let area = area_mm2(&faz, mm_per_px)?;
    let density = vessel_density(&faz_cleanup(density_mask, &faz)?);
    Ok((faz, area, density))
}

#[cfg(test)]
mod tests {
    use super::chords::tests::ellipse;
    use super::*;
    use crate::raster::RoiMask;
    use proptest::prelude::*;

    /// Ellipse hole closed by a 2-px vessel ring inside a lattice.
    fn ringed_hole(w: usize, h: usize, c: (f64, f64), a: f64, b: f64, rot: f64) -> BinaryMask {
        let inner = ellipse(w, h, c, a, b, rot);
        let outer = ellipse(w, h, c, a + 2.5, b + 2.5, rot);
        BinaryMask::from_fn(RoiMask::full(w, h), |x, y| {
            !inner.contains(x, y) && (outer.contains(x, y) || x % 9 < 2 || y % 9 < 2)
        })
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&Region::new(10, 10, [(7, 3)]).unwrap()), (7.0, 3.0));
        assert_eq!(centroid(&Region::new(4, 4, [(0, 0), (1, 0), (0, 1), (1, 1)]).unwrap()), (0.5, 0.5));
        let r = ellipse(120, 90, (60.3, 44.8), 40.0, 25.0, 33.0);
        let (cx, cy) = centroid(&r);
        assert!((cx - 60.3).abs() < 0.5 && (cy - 44.8).abs() < 0.5);
    }

    #[test]
    fn eccentricity_examples() {
        assert_eq!(eccentricity(3.0, 3.0).unwrap(), 0.0);
        assert!((eccentricity(1.0, 2.0).unwrap() - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(eccentricity(2.0, 1.0).is_err());
        assert!(eccentricity(0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn eccentricity_grows_as_d_min_shrinks(d_max in 0.1f64..100.0, f1 in 0.01f64..1.0, f2 in 0.01f64..1.0) {
            let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            let e_lo = eccentricity(lo * d_max, d_max).unwrap();
            let e_hi = eccentricity(hi * d_max, d_max).unwrap();
            prop_assert!(e_lo >= e_hi);
            prop_assert!((0.0..1.0).contains(&e_lo));
        }

        #[test]
        fn density_in_unit_interval(bits in proptest::collection::vec(any::<bool>(), 64)) {
            let m = BinaryMask::from_fn(RoiMask::full(8, 8), |x, y| bits[y * 8 + x]);
            let d = vessel_density(&m);
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn area_examples() {
        let r = Region::new(10, 10, (0..100).map(|i| (i % 10, i / 10))).unwrap();
        assert!((area_mm2(&r, 0.01).unwrap() - 0.01).abs() < 1e-15);
        let e = ellipse(121, 81, (60.0, 40.0), 50.0, 30.0, 0.0);
        let s = 2.0 / 300.0;
        let want = std::f64::consts::PI * 50.0 * 30.0 * s * s;
        assert!((area_mm2(&e, s).unwrap() - want).abs() <= 0.02 * want);
        assert!(area_mm2(&e, 0.0).is_err());
    }

    #[test]
    fn density_examples() {
        let roi = RoiMask::full(6, 4);
        assert_eq!(vessel_density(&BinaryMask::from_fn(roi.clone(), |_, _| true)), 1.0);
        assert_eq!(vessel_density(&BinaryMask::from_fn(roi.clone(), |_, _| false)), 0.0);
        assert_eq!(vessel_density(&BinaryMask::from_fn(roi, |x, y| (x + y) % 2 == 0)), 0.5);
    }

    #[test]
    fn elliptical_hole_in_lattice() {
        let m = ringed_hole(240, 180, (120.0, 90.0), 50.0, 30.0, 0.0);
        let faz = largest_nonvessel_component(&m).unwrap();
        let want = std::f64::consts::PI * 50.0 * 30.0;
        assert!((faz.len() as f64 - want).abs() <= 0.02 * want, "{}", faz.len());
    }

    #[test]
    fn quantifies_an_ellipse() {
        let m = ringed_hole(160, 120, (80.0, 60.0), 50.0, 30.0, 0.0);
        let q = quantify(&m, 0.01).unwrap();
        assert!((q.area_mm2 - 0.4712).abs() <= 0.02 * 0.4712, "{}", q.area_mm2);
        assert!((q.d_max_mm - 1.0).abs() <= 0.02, "{}", q.d_max_mm);
        assert!((q.d_min_mm - 0.6).abs() <= 0.02 * 0.6, "{}", q.d_min_mm);
        assert!((q.eccentricity - 0.8).abs() <= 0.02, "{}", q.eccentricity);
        assert!(q.d_min_mm <= q.d_max_mm);
        assert_eq!(q.perimeter[0], *q.region.pixels().first().unwrap());
    }

    #[test]
    fn disk_eccentricity_floor() {
        // Lattice noise on a disk dominates near r = 30..50 px; from 60 px the
        // floor stays under 0.15 for any subpixel centre.
        for c in [(90.0, 90.0), (90.3, 90.7), (90.5, 90.5)] {
            let m = ringed_hole(180, 180, c, 60.0, 60.0, 0.0);
            let q = quantify(&m, 0.01).unwrap();
            assert!(q.eccentricity <= 0.15, "{c:?}: {}", q.eccentricity);
        }
    }

    #[test]
    fn rotation_changes_e_little() {
        let base = quantify(&ringed_hole(200, 200, (100.0, 100.0), 60.0, 35.0, 0.0), 0.01).unwrap();
        let rot = quantify(&ringed_hole(200, 200, (100.0, 100.0), 60.0, 35.0, 30.0), 0.01).unwrap();
        assert!((base.eccentricity - rot.eccentricity).abs() < 0.05);
        assert!((rot.theta_max_deg - 30.0).abs() <= 3.0, "{}", rot.theta_max_deg);
    }

    #[test]
    fn scale_equivariance() {
        let m = ringed_hole(160, 120, (80.0, 60.0), 45.0, 28.0, 12.0);
        let a = quantify(&m, 0.01).unwrap();
        let b = quantify(&m, 0.03).unwrap();
        assert!((b.area_mm2 / a.area_mm2 - 9.0).abs() < 1e-9);
        assert!((b.d_max_mm / a.d_max_mm - 3.0).abs() < 1e-9);
        assert!((b.d_min_mm / a.d_min_mm - 3.0).abs() < 1e-9);
        assert_eq!(a.eccentricity, b.eccentricity);
        assert_eq!(a.vessel_density, b.vessel_density);
    }

    #[test]
    fn specks_inside_faz_are_cleared_for_density() {
        let mut m = ringed_hole(100, 100, (50.0, 50.0), 30.0, 30.0, 0.0);
        let base = quantify(&m, 0.01).unwrap();
        let mut v: Vec<bool> = m.as_slice().to_vec();
        for (x, y) in [(45, 45), (55, 50), (50, 58)] {
            v[y * 100 + x] = true;
        }
        m = BinaryMask::new(v, m.roi().clone()).unwrap();
        let q = quantify(&m, 0.01).unwrap();
        assert_eq!(q.region, base.region);
        assert_eq!(q.vessel_density, base.vessel_density);
        assert!(q.vessel_density < vessel_density(&m));
    }
}
