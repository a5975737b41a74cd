//! Centroid chord sweep.
//!
//! A ray first leaves the region on the pixel lattice, which quantizes its
//! reach to the staircase. The exit is then refined against the boundary:
//! the midpoints between region pixels and their 4-neighbours outside it
//! that lie ahead of the centroid and near the lattice exit are fitted with
//! a parabola in their own principal frame, and the ray is intersected with
//! that parabola.
//!
//! The fitting window starts at 5 px and widens until its points spread
//! 3 px across the boundary. On a long, nearly flat edge every nearby
//! midpoint sits on the same pixel line and only the positions of the steps
//! farther out say where the true edge lies between two lattice lines, so
//! the window has to reach them. Refinements that move the exit by more
//! than a pixel (a window spanning a concavity, say) are dropped in favour
//! of the lattice exit.

use super::region::Region;
use crate::error::{Error, Result};

const LATTICE_STEP: f64 = 0.05;
const MIN_WINDOW: f64 = 5.0;
const MAX_WINDOW: f64 = 40.0;
const SPREAD: f64 = 3.0;
const MAX_SHIFT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diameters {
    pub d_min: f64,
    pub d_max: f64,
    /// Chord angles in degrees, `[0, 180)`, measured from +x towards +y
    /// (image rows grow downwards).
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    /// Chord end points `(x, y)` in pixel coordinates.
    pub min_chord: [(f64, f64); 2],
    pub max_chord: [(f64, f64); 2],
}

/// Midpoints of the pixel edges between the region and its outside.
fn boundary_midpoints(r: &Region) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(x, y) in r.pixels() {
        for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            if !r.contains_signed(x as isize + dx, y as isize + dy) {
                out.push((x as f64 + 0.5 * dx as f64, y as f64 + 0.5 * dy as f64));
            }
        }
    }
    out
}

/// Distance along `d` to the first sample whose nearest pixel is outside.
fn lattice_reach(r: &Region, c: (f64, f64), d: (f64, f64)) -> f64 {
    let (w, h) = r.dims();
    let limit = 2.0 * (w + h) as f64;
    let mut t = 0.0;
    while t < limit {
        let (x, y) = ((c.0 + t * d.0).round(), (c.1 + t * d.1).round());
        if !r.contains_signed(x as isize, y as isize) {
            return t;
        }
        t += LATTICE_STEP;
    }
    limit
}

/// Least squares `ν = k0 + k1 τ + k2 τ²` by Gaussian elimination on the
/// normal equations.
fn fit_parabola(pts: &[(f64, f64)]) -> Option<[f64; 3]> {
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for &(tau, nu) in pts {
        let row = [1.0, tau, tau * tau];
        for i in 0..3 {
            b[i] += row[i] * nu;
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..3 {
        let p = (i..3).max_by(|&x, &y| a[x][i].abs().total_cmp(&a[y][i].abs()))?;
        a.swap(i, p);
        b.swap(i, p);
        if a[i][i].abs() < 1e-12 {
            return None;
        }
        for k in i + 1..3 {
            let f = a[k][i] / a[i][i];
            for j in i..3 {
                a[k][j] -= f * a[i][j];
            }
            b[k] -= f * b[i];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s = b[i] - (i + 1..3).map(|j| a[i][j] * x[j]).sum::<f64>();
        x[i] = s / a[i][i];
    }
    Some(x)
}

/// Exit distance along unit `d`, refined from the lattice exit `r0`.
fn refine(edge: &[(f64, f64)], c: (f64, f64), d: (f64, f64), r0: f64) -> Option<f64> {
    let p0 = (c.0 + r0 * d.0, c.1 + r0 * d.1);
    let mut near: Vec<(f64, (f64, f64))> = edge
        .iter()
        .filter(|p| (p.0 - c.0) * d.0 + (p.1 - c.1) * d.1 >= 0.5 * r0)
        .map(|&p| ((p.0 - p0.0).hypot(p.1 - p0.1), p))
        .filter(|&(dist, _)| dist <= MAX_WINDOW)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut win = MIN_WINDOW;
    let (mean, t, n) = loop {
        let pts: Vec<(f64, f64)> = near.iter().take_while(|e| e.0 <= win).map(|e| e.1).collect();
        if pts.len() >= 5 {
            let k = pts.len() as f64;
            let m = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0 / k, s.1 + p.1 / k));
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for p in &pts {
                let (dx, dy) = (p.0 - m.0, p.1 - m.1);
                sxx += dx * dx;
                sxy += dx * dy;
                syy += dy * dy;
            }
            let ang = 0.5 * (2.0 * sxy).atan2(sxx - syy);
            let (t, n) = ((ang.cos(), ang.sin()), (-ang.sin(), ang.cos()));
            let nus = pts.iter().map(|p| (p.0 - m.0) * n.0 + (p.1 - m.1) * n.1);
            let (lo, hi) = nus.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi - lo >= SPREAD || win >= MAX_WINDOW {
                break (m, t, n);
            }
        } else if win >= MAX_WINDOW {
            return None;
        }
        win += 1.0;
    };
    let local: Vec<(f64, f64)> = near
        .iter()
        .take_while(|e| e.0 <= win)
        .map(|&(_, p)| {
            let (dx, dy) = (p.0 - mean.0, p.1 - mean.1);
            (dx * t.0 + dy * t.1, dx * n.0 + dy * n.1)
        })
        .collect();
    let k = fit_parabola(&local)?;
    // The ray in the local frame is linear in the distance s.
    let (dx, dy) = (c.0 - mean.0, c.1 - mean.1);
    let (tau0, nu0) = (dx * t.0 + dy * t.1, dx * n.0 + dy * n.1);
    let (tau1, nu1) = (d.0 * t.0 + d.1 * t.1, d.0 * n.0 + d.1 * n.1);
    let qa = k[2] * tau1 * tau1;
    let qb = 2.0 * k[2] * tau0 * tau1 + k[1] * tau1 - nu1;
    let qc = k[0] + k[1] * tau0 + k[2] * tau0 * tau0 - nu0;
    let root = if qa.abs() < 1e-12 {
        -qc / qb
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let (s1, s2) = ((-qb + disc.sqrt()) / (2.0 * qa), (-qb - disc.sqrt()) / (2.0 * qa));
        if (s1 - r0).abs() < (s2 - r0).abs() { s1 } else { s2 }
    };
    (root.is_finite() && (root - r0).abs() <= MAX_SHIFT).then_some(root)
}

fn reach(r: &Region, edge: &[(f64, f64)], c: (f64, f64), d: (f64, f64)) -> f64 {
    let r0 = lattice_reach(r, c, d);
    refine(edge, c, d, r0).unwrap_or(r0)
}

/// Extreme chords through `c` over `[0°, 180°)` in `step_deg` increments.
/// Ties keep the smaller angle.
pub fn diameters(region: &Region, c: (f64, f64), step_deg: f64) -> Result<Diameters> {
    if !(step_deg > 0.0 && step_deg <= 5.0) {
        return Err(Error::arg(format!("diameter step must lie in (0, 5] degrees, got {step_deg}")));
    }
    let (nx, ny) = (c.0.round(), c.1.round());
    if !region.contains_signed(nx as isize, ny as isize) {
        return Err(Error::CentroidOutside { cx: c.0, cy: c.1, region: Box::new(region.clone()) });
    }
    let edge = boundary_midpoints(region);
    let n = (180.0 / step_deg).ceil() as usize;
    let mut best = Diameters {
        d_min: f64::INFINITY,
        d_max: -1.0,
        theta_min_deg: 0.0,
        theta_max_deg: 0.0,
        min_chord: [c; 2],
        max_chord: [c; 2],
    };
    for i in 0..n {
        let theta = i as f64 * step_deg;
        if theta >= 180.0 {
            break;
        }
        let (s, co) = theta.to_radians().sin_cos();
        let (fwd, bwd) = (reach(region, &edge, c, (co, s)), reach(region, &edge, c, (-co, -s)));
        let chord = fwd + bwd;
        let ends = [(c.0 + fwd * co, c.1 + fwd * s), (c.0 - bwd * co, c.1 - bwd * s)];
        if chord > best.d_max {
            best.d_max = chord;
            best.theta_max_deg = theta;
            best.max_chord = ends;
        }
        if chord < best.d_min {
            best.d_min = chord;
            best.theta_min_deg = theta;
            best.min_chord = ends;
        }
    }
    Ok(best)
}
