//! Synthetic en-face angiograms with exact ground truth.
//!
//! Vessels are branching biased random walks rasterized as anti-aliased
//! capsules. A capillary ring whose inner edge is exactly the FAZ ellipse
//! closes the avascular zone, so the truth FAZ is the set of pixel centres
//! strictly inside the ellipse. Walks are added until the truth vessel
//! fraction reaches its target. Speckle is multiplicative gamma noise of
//! unit mean.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::morphometry::{MetricsRow, Rater};
use crate::raster::{BinaryMask, GrayImage, RoiMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FazEllipse {
    pub cx: f64,
    pub cy: f64,
    /// Semi-major axis, px.
    pub a: f64,
    /// Semi-minor axis, px.
    pub b: f64,
    pub rot_deg: f64,
}

impl FazEllipse {
    /// `(u/a)² + (v/b)²` in the ellipse frame; `< 1` inside.
    pub fn level(&self, x: f64, y: f64) -> f64 {
        self.level_grown(x, y, 0.0)
    }

    fn level_grown(&self, x: f64, y: f64, grow: f64) -> f64 {
        let (s, c) = self.rot_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / (self.a + grow)).powi(2) + (v / (self.b + grow)).powi(2)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.level(x, y) < 1.0
    }

    /// Point on the curve offset outwards by `d` at parameter `t`.
    fn offset_point(&self, t: f64, d: f64) -> (f64, f64) {
        let (st, ct) = t.sin_cos();
        let (u, v) = (self.a * ct, self.b * st);
        let (nu, nv) = (self.b * ct, self.a * st);
        let len = (nu * nu + nv * nv).sqrt();
        let (u, v) = (u + d * nu / len, v + d * nv / len);
        let (s, c) = self.rot_deg.to_radians().sin_cos();
        (self.cx + u * c - v * s, self.cy + u * s + v * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselModel {
    /// Chance per step of spawning a side branch.
    pub branch_prob: f64,
    /// Vessel diameter range, px.
    pub thickness_px: (f64, f64),
    /// Maximum heading change per step, degrees (≤ 15).
    pub tortuosity_deg: f64,
    pub step_px: f64,
    pub max_steps: usize,
    /// Diameter of the capillary ring bounding the FAZ, px.
    pub ring_thickness_px: f64,
    /// Bound on seeded trees before giving up on the target fraction.
    pub max_trees: usize,
}

impl Default for VesselModel {
    fn default() -> Self {
        Self {
            branch_prob: 0.04,
            thickness_px: (1.5, 3.5),
            tortuosity_deg: 12.0,
            step_px: 1.5,
            max_steps: 120,
            ring_thickness_px: 3.0,
            max_trees: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Variance of the unit-mean multiplicative speckle; 0 disables it.
    pub speckle_var: f64,
    pub background: f64,
    pub vessel_level: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { speckle_var: 0.05, background: 0.12, vessel_level: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub mm_per_px: f64,
    pub faz: FazEllipse,
    pub vessels: VesselModel,
    pub target_fraction: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

/// 3 mm field sampled at 245 px.
pub const ZEISS_MM_PER_PX: f64 = 3.0 / 245.0;

impl SynthParams {
    /// 245 px square Zeiss-like field with a centred FAZ.
    pub fn zeiss(a: f64, b: f64, rot_deg: f64, target_fraction: f64, seed: u64) -> Self {
        Self {
            width: 245,
            height: 245,
            mm_per_px: ZEISS_MM_PER_PX,
            faz: FazEllipse { cx: 122.0, cy: 122.0, a, b, rot_deg },
            vessels: VesselModel::default(),
            target_fraction,
            noise: NoiseModel::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::arg(m));
        let v = &self.vessels;
        let n = &self.noise;
        let f = &self.faz;
        if self.width < 16 || self.height < 16 {
            return bad(format!("image must be at least 16×16, got {}×{}", self.width, self.height));
        }
        if !(self.mm_per_px > 0.0 && self.mm_per_px.is_finite()) {
            return bad(format!("mm_per_px must be positive, got {}", self.mm_per_px));
        }
        if !(f.b > 0.0 && f.a >= f.b && f.a.is_finite()) {
            return bad(format!("FAZ semi-axes need a ≥ b > 0, got a={} b={}", f.a, f.b));
        }
        let reach = f.a + v.ring_thickness_px + 2.0;
        if f.cx - reach < 0.0 || f.cy - reach < 0.0 || f.cx + reach > self.width as f64 - 1.0 || f.cy + reach > self.height as f64 - 1.0
        {
            return bad("FAZ ellipse and its ring must lie inside the image".into());
        }
        if !(v.thickness_px.0 >= 1.0 && v.thickness_px.1 >= v.thickness_px.0 && v.ring_thickness_px >= 1.0) {
            return bad(format!("vessel thickness must be ≥ 1 px, got {:?}", v.thickness_px));
        }
        if !(0.0..=15.0).contains(&v.tortuosity_deg) {
            return bad(format!("tortuosity must lie in [0, 15] degrees, got {}", v.tortuosity_deg));
        }
        if !(0.0..1.0).contains(&v.branch_prob) || !(v.step_px > 0.0) || v.max_steps == 0 || v.max_trees == 0 {
            return bad("branch probability must lie in [0,1); step, max_steps and max_trees must be positive".into());
        }
        if !(self.target_fraction > 0.0 && self.target_fraction < 1.0) {
            return bad(format!("target vessel fraction must lie in (0,1), got {}", self.target_fraction));
        }
        if !(n.speckle_var >= 0.0 && (0.0..1.0).contains(&n.background) && n.vessel_level > n.background && n.vessel_level <= 1.0)
        {
            return bad("noise needs speckle variance ≥ 0 and 0 ≤ background < vessel level ≤ 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticFaz {
    pub area_mm2: f64,
    pub d_min_mm: f64,
    pub d_max_mm: f64,
    pub eccentricity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mask: BinaryMask,
    pub faz: FazEllipse,
    /// Vessel pixels over all pixels, exact.
    pub vessel_fraction: f64,
    pub analytic: AnalyticFaz,
}

struct Canvas<'a> {
    w: usize,
    h: usize,
    coverage: Vec<f64>,
    truth: Vec<bool>,
    vessels: usize,
    faz: &'a FazEllipse,
}

impl Canvas<'_> {
    /// Capsule of radius `r` around segment `p`–`q`. Pixels inside the FAZ
    /// are never touched.
    fn capsule(&mut self, p: (f64, f64), q: (f64, f64), r: f64) {
        let pad = r + 1.0;
        let x0 = (p.0.min(q.0) - pad).floor().max(0.0) as usize;
        let y0 = (p.1.min(q.1) - pad).floor().max(0.0) as usize;
        let x1 = ((p.0.max(q.0) + pad).ceil().max(0.0) as usize).min(self.w - 1);
        let y1 = ((p.1.max(q.1) + pad).ceil().max(0.0) as usize).min(self.h - 1);
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        let len2 = dx * dx + dy * dy;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64, y as f64);
                let t = if len2 > 0.0 { (((px - p.0) * dx + (py - p.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (ex, ey) = (p.0 + t * dx - px, p.1 + t * dy - py);
                let d = (ex * ex + ey * ey).sqrt();
                let cov = (r + 0.5 - d).clamp(0.0, 1.0);
                if cov <= 0.0 || self.faz.contains(px, py) {
                    continue;
                }
                let i = y * self.w + x;
                if cov > self.coverage[i] {
                    self.coverage[i] = cov;
                }
                if d <= r && !self.truth[i] {
                    self.truth[i] = true;
                    self.vessels += 1;
                }
            }
        }
    }
}

/// Steps per tree, in units of `max_steps`.
const TREE_BUDGET: usize = 4;

struct Walker {
    pos: (f64, f64),
    heading: f64,
    radius: f64,
}

/// Draws the image and its truth. Deterministic in `p.seed`.
pub fn generate(p: &SynthParams) -> Result<(GrayImage, GroundTruth)> {
    p.validate()?;
    let (w, h) = (p.width, p.height);
    let n_px = w * h;
    let target = (p.target_fraction * n_px as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut canvas = Canvas { w, h, coverage: vec![0.0; n_px], truth: vec![false; n_px], vessels: 0, faz: &p.faz };
    let v = &p.vessels;

    let ring_r = v.ring_thickness_px / 2.0;
    let perimeter = std::f64::consts::PI * (3.0 * (p.faz.a + p.faz.b)) * 1.1;
    let n_seg = (perimeter.ceil() as usize).max(64);
    let pt = |i: usize| p.faz.offset_point(i as f64 * std::f64::consts::TAU / n_seg as f64, ring_r);
    for i in 0..n_seg {
        canvas.capsule(pt(i), pt(i + 1), ring_r);
    }
    if canvas.vessels > target {
        return Err(Error::Generation(format!(
            "the FAZ ring alone covers {:.3} of the image, above the target {}",
            canvas.vessels as f64 / n_px as f64,
            p.target_fraction
        )));
    }

    let guard = v.ring_thickness_px;
    let jitter = v.tortuosity_deg.to_radians();
    let mut trees = 0;
    'fill: while canvas.vessels < target {
        if trees == v.max_trees {
            return Err(Error::Generation(format!(
                "vessel fraction stalled at {:.4} after {trees} trees (target {})",
                canvas.vessels as f64 / n_px as f64,
                p.target_fraction
            )));
        }
        trees += 1;
        let start = (rng.random_range(0.0..w as f64 - 1.0), rng.random_range(0.0..h as f64 - 1.0));
        let radius = rng.random_range(v.thickness_px.0..=v.thickness_px.1) / 2.0;
        if p.faz.level_grown(start.0, start.1, guard + radius) < 1.0 {
            continue;
        }
        let mut stack = vec![Walker { pos: start, heading: rng.random_range(0.0..std::f64::consts::TAU), radius }];
        // Branches share one budget so the tree stays finite.
        let mut budget = TREE_BUDGET * v.max_steps;
        while let Some(mut wk) = stack.pop() {
            for _ in 0..v.max_steps {
                if budget == 0 {
                    break;
                }
                budget -= 1;
                wk.heading += rng.random_range(-jitter..=jitter);
                let next = (wk.pos.0 + v.step_px * wk.heading.cos(), wk.pos.1 + v.step_px * wk.heading.sin());
                if next.0 < -1.0 || next.1 < -1.0 || next.0 > w as f64 || next.1 > h as f64 {
                    break;
                }
                canvas.capsule(wk.pos, next, wk.radius);
                if canvas.vessels >= target {
                    break 'fill;
                }
                wk.pos = next;
                if p.faz.level_grown(next.0, next.1, guard + wk.radius) < 1.0 {
                    break;
                }
                if rng.random_bool(v.branch_prob) {
                    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let turn = rng.random_range(30f64..60.0).to_radians() * side;
                    let radius = (wk.radius * 0.8).max(v.thickness_px.0 / 2.0);
                    stack.push(Walker { pos: next, heading: wk.heading + turn, radius });
                }
            }
        }
    }

    let n = &p.noise;
    let speckle = if n.speckle_var > 0.0 {
        Some(Gamma::new(1.0 / n.speckle_var, n.speckle_var).map_err(|e| Error::Generation(e.to_string()))?)
    } else {
        None
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5eed_5eed_5eed_5eed);
    let pixels: Vec<f64> = canvas
        .coverage
        .iter()
        .map(|&c| {
            let clean = n.background + (n.vessel_level - n.background) * c;
            let m = speckle.as_ref().map_or(1.0, |g| g.sample(&mut noise_rng));
            (clean * m).clamp(0.0, 1.0)
        })
        .collect();
    let image = GrayImage::new(w, h, pixels)?.with_scale(p.mm_per_px)?;
    let mask = BinaryMask::new(canvas.truth, RoiMask::full(w, h))?;
    let f = &p.faz;
    let s = p.mm_per_px;
    let truth = GroundTruth {
        vessel_fraction: canvas.vessels as f64 / n_px as f64,
        mask,
        faz: *f,
        analytic: AnalyticFaz {
            area_mm2: std::f64::consts::PI * f.a * f.b * s * s,
            d_min_mm: 2.0 * f.b * s,
            d_max_mm: 2.0 * f.a * s,
            eccentricity: (1.0 - (f.b / f.a).powi(2)).sqrt(),
        },
    };
    Ok((image, truth))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal {
    pub mean: f64,
    pub sd: f64,
}

/// Per-eye distributions for one cohort, truncated by redrawing.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortPreset {
    pub label: String,
    pub area_mm2: Normal,
    pub eccentricity: Normal,
    pub density: Normal,
    pub area_range: (f64, f64),
    pub eccentricity_range: (f64, f64),
    pub density_range: (f64, f64),
    /// Image geometry, vessel and noise models; the FAZ and target fraction
    /// are replaced per eye.
    pub base: SynthParams,
}

impl CohortPreset {
    fn zeiss(label: &str, area: Normal, e: Normal, density: Normal) -> Self {
        Self {
            label: label.into(),
            area_mm2: area,
            eccentricity: e,
            density,
            area_range: (0.08, 1.6),
            eccentricity_range: (0.3, 0.97),
            density_range: (0.25, 0.65),
            base: SynthParams::zeiss(30.0, 25.0, 0.0, 0.5, 0),
        }
    }

    /// Zeiss healthy automated means: area 0.332 ± 0.154 mm², e 0.730 ±
    /// 0.064, density 0.513 ± 0.034.
    pub fn zeiss_healthy() -> Self {
        Self::zeiss(
            "healthy",
            Normal { mean: 0.332, sd: 0.154 },
            Normal { mean: 0.730, sd: 0.064 },
            Normal { mean: 0.513, sd: 0.034 },
        )
    }

    /// Zeiss diabetic automated means: area 0.736 ± 0.480 mm², e 0.886 ±
    /// 0.047, density 0.418 ± 0.058.
    pub fn zeiss_diabetic() -> Self {
        Self::zeiss(
            "diabetic",
            Normal { mean: 0.736, sd: 0.480 },
            Normal { mean: 0.886, sd: 0.047 },
            Normal { mean: 0.418, sd: 0.058 },
        )
    }

    fn validate(&self) -> Result<()> {
        for (name, d, r) in [
            ("area", self.area_mm2, self.area_range),
            ("eccentricity", self.eccentricity, self.eccentricity_range),
            ("density", self.density, self.density_range),
        ] {
            if !(d.sd >= 0.0 && d.mean.is_finite() && r.0 < r.1) {
                return Err(Error::arg(format!("invalid {name} distribution in preset `{}`", self.label)));
            }
        }
        if self.eccentricity_range.0 < 0.0 || self.eccentricity_range.1 >= 1.0 || self.area_range.0 <= 0.0 {
            return Err(Error::arg(format!("preset `{}` ranges leave the valid domain", self.label)));
        }
        self.base.validate()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<SynthParams> {
        let draw = |rng: &mut ChaCha8Rng, d: Normal, r: (f64, f64)| -> Result<f64> {
            let normal = rand_distr::Normal::new(d.mean, d.sd).map_err(|e| Error::arg(e.to_string()))?;
            for _ in 0..10_000 {
                let x = normal.sample(rng);
                if (r.0..=r.1).contains(&x) {
                    return Ok(x);
                }
            }
            Err(Error::arg(format!("distribution {d:?} almost never falls in {r:?}")))
        };
        for _ in 0..1000 {
            let area = draw(rng, self.area_mm2, self.area_range)?;
            let e = draw(rng, self.eccentricity, self.eccentricity_range)?;
            let density = draw(rng, self.density, self.density_range)?;
            let q = (1.0 - e * e).sqrt();
            let s = self.base.mm_per_px;
            let a = (area / (std::f64::consts::PI * s * s * q)).sqrt();
            let mut p = self.base;
            p.faz = FazEllipse {
                cx: (p.width as f64 - 1.0) / 2.0 + rng.random_range(-3.0..3.0),
                cy: (p.height as f64 - 1.0) / 2.0 + rng.random_range(-3.0..3.0),
                a,
                b: q * a,
                rot_deg: rng.random_range(0.0..180.0),
            };
            p.target_fraction = density;
            p.seed = rng.next_u64();
            if p.validate().is_ok() {
                return Ok(p);
            }
        }
        Err(Error::arg(format!("preset `{}` rarely yields an ellipse that fits the image", self.label)))
    }
}

#[derive(Debug, Clone)]
pub struct SynthEye {
    pub id: String,
    pub cohort: String,
    pub params: SynthParams,
    pub image: GrayImage,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub eyes: Vec<SynthEye>,
}

impl SynthCohort {
    /// Analytic FAZ metrics and exact vessel fraction, one `manual` row per
    /// eye.
    pub fn truth_rows(&self) -> Vec<MetricsRow> {
        self.eyes
            .iter()
            .map(|e| {
                let a = &e.truth.analytic;
                MetricsRow {
                    id: e.id.clone(),
                    cohort: e.cohort.clone(),
                    rater: Rater::Manual,
                    area_mm2: a.area_mm2,
                    d_min_mm: Some(a.d_min_mm),
                    d_max_mm: Some(a.d_max_mm),
                    eccentricity: Some(a.eccentricity),
                    density: e.truth.vessel_fraction,
                }
            })
            .collect()
    }

    pub fn truth_csv(&self) -> Result<String> {
        crate::morphometry::render_metrics_csv(&self.truth_rows())
    }
}

/// `n_each` eyes per preset. Parameters are drawn sequentially from `seed`,
/// then images are generated in parallel.
pub fn generate_cohort(healthy: &CohortPreset, diabetic: &CohortPreset, n_each: usize, seed: u64) -> Result<SynthCohort> {
    if n_each < 2 {
        return Err(Error::arg(format!("each cohort needs at least two eyes, got {n_each}")));
    }
    healthy.validate()?;
    diabetic.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = Vec::with_capacity(2 * n_each);
    for preset in [healthy, diabetic] {
        for i in 0..n_each {
            plan.push((format!("{}-{i:03}", preset.label), preset.label.clone(), preset.draw(&mut rng)?));
        }
    }
    let eyes = plan
        .into_par_iter()
        .map(|(id, cohort, params)| {
            let (image, truth) = generate(&params)?;
            Ok(SynthEye { id, cohort, params, image, truth })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthCohort { eyes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphometry::{quantify, vessel_density};

    fn quiet(mut p: SynthParams) -> SynthParams {
        p.noise.speckle_var = 0.0;
        p
    }

    #[test]
    fn same_seed_same_output() {
        let p = SynthParams::zeiss(30.0, 22.0, 20.0, 0.45, 7);
        let (i1, t1) = generate(&p).unwrap();
        let (i2, t2) = generate(&p).unwrap();
        assert_eq!(i1, i2);
        assert_eq!(t1, t2);
        let (i3, _) = generate(&SynthParams { seed: 8, ..p }).unwrap();
        assert_ne!(i1, i3);
    }

    #[test]
    fn disk_faz_recovers_area_and_roundness() {
        let p = quiet(SynthParams::zeiss(60.0, 60.0, 0.0, 0.45, 3));
        let (_, t) = generate(&p).unwrap();
        let q = quantify(&t.mask, p.mm_per_px).unwrap();
        assert!(q.eccentricity <= 0.15, "{}", q.eccentricity);
        assert!((q.area_mm2 / t.analytic.area_mm2 - 1.0).abs() <= 0.02);
    }

    #[test]
    fn hits_target_fraction() {
        let p = SynthParams::zeiss(28.0, 20.0, 0.0, 0.40, 11);
        let (_, t) = generate(&p).unwrap();
        assert!((t.vessel_fraction - 0.40).abs() < 0.005, "{}", t.vessel_fraction);
        assert_eq!(vessel_density(&t.mask), t.vessel_fraction);
    }

    #[test]
    fn faz_interior_is_vessel_free_and_matches_analytic_metrics() {
        let p = SynthParams::zeiss(45.0, 27.0, 35.0, 0.5, 5);
        let (img, t) = generate(&p).unwrap();
        for y in 0..p.height {
            for x in 0..p.width {
                if t.faz.contains(x as f64, y as f64) {
                    assert!(!t.mask.is_vessel(x, y));
                }
            }
        }
        let q = quantify(&t.mask, p.mm_per_px).unwrap();
        let a = &t.analytic;
        assert!((q.area_mm2 / a.area_mm2 - 1.0).abs() <= 0.02, "{} {}", q.area_mm2, a.area_mm2);
        assert!((q.d_max_mm / a.d_max_mm - 1.0).abs() <= 0.02);
        assert!((q.d_min_mm / a.d_min_mm - 1.0).abs() <= 0.02);
        assert!((q.eccentricity - a.eccentricity).abs() <= 0.02);
        assert!((q.vessel_density - t.vessel_fraction).abs() <= 0.005);
        assert_eq!(img.scale_mm_per_px(), Some(ZEISS_MM_PER_PX));
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn vessels_are_brighter_than_background() {
        let (img, t) = generate(&SynthParams::zeiss(30.0, 25.0, 0.0, 0.45, 2)).unwrap();
        let (mut sv, mut nv, mut sb, mut nb) = (0.0, 0, 0.0, 0);
        for (i, &v) in img.data().iter().enumerate() {
            if t.mask.as_slice()[i] {
                sv += v;
                nv += 1;
            } else {
                sb += v;
                nb += 1;
            }
        }
        assert!(sv / nv as f64 > 3.0 * sb / nb as f64);
    }

    #[test]
    fn rejects_bad_params() {
        let ok = SynthParams::zeiss(30.0, 25.0, 0.0, 0.45, 1);
        assert!(generate(&SynthParams { target_fraction: 1.2, ..ok }).is_err());
        let mut big = ok;
        big.faz.a = 150.0;
        assert!(matches!(generate(&big), Err(Error::Argument(_))));
        let mut thin = ok;
        thin.vessels.thickness_px = (0.5, 1.0);
        assert!(generate(&thin).is_err());
        let mut wild = ok;
        wild.vessels.tortuosity_deg = 30.0;
        assert!(generate(&wild).is_err());
        // The ring alone exceeds a tiny target.
        assert!(matches!(generate(&SynthParams { target_fraction: 0.001, ..ok }), Err(Error::Generation(_))));
    }

    #[test]
    fn unreachable_fraction_is_a_generation_error() {
        let mut p = SynthParams::zeiss(30.0, 25.0, 0.0, 0.95, 1);
        p.vessels.max_trees = 50;
        assert!(matches!(generate(&p), Err(Error::Generation(_))));
    }

    #[test]
    fn minimal_cohort() {
        let mut h = CohortPreset::zeiss_healthy();
        let mut d = CohortPreset::zeiss_diabetic();
        h.base.noise.speckle_var = 0.0;
        d.base.noise.speckle_var = 0.0;
        let c = generate_cohort(&h, &d, 2, 99).unwrap();
        assert_eq!(c.eyes.len(), 4);
        let csv = c.truth_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 4);
        let rows = crate::morphometry::parse_metrics_csv(&csv).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].id, "healthy-000");
        assert_eq!(rows[3].cohort, "diabetic");
        let again = generate_cohort(&h, &d, 2, 99).unwrap();
        assert_eq!(again.truth_csv().unwrap(), csv);
        assert!(generate_cohort(&h, &d, 1, 99).is_err());
    }
}
