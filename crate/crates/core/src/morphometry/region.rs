use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

const N4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// A pixel set within a `width`×`height` raster, kept in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    width: usize,
    height: usize,
    pixels: Vec<(usize, usize)>,
    member: Vec<bool>,
    bbox: (usize, usize, usize, usize),
}

impl Region {
    /// Builds a region from member pixels. Duplicates are merged; the set
    /// must be non-empty and 4-connected.
    pub fn new(width: usize, height: usize, pixels: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut member = vec![false; width * height];
        for (x, y) in pixels {
            if x >= width || y >= height {
                return Err(Error::arg(format!("pixel ({x},{y}) outside {width}x{height} raster")));
            }
            member[y * width + x] = true;
        }
        let r = Self::from_member(width, height, member).ok_or_else(|| Error::arg("region must not be empty"))?;
        if flood(&r.member, width, height, r.pixels[0]).len() != r.pixels.len() {
            return Err(Error::arg("region is not 4-connected"));
        }
        Ok(r)
    }

    fn from_member(width: usize, height: usize, member: Vec<bool>) -> Option<Self> {
        let pixels: Vec<_> = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).filter(|&(x, y)| member[y * width + x]).collect();
        if pixels.is_empty() {
            return None;
        }
        let mut bbox = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y) in &pixels {
            bbox = (bbox.0.min(x), bbox.1.min(y), bbox.2.max(x), bbox.3.max(y));
        }
        Some(Self { width, height, pixels, member, bbox })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    /// Inclusive `(x_min, y_min, x_max, y_max)`.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        self.bbox
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.member[y * self.width + x]
    }

    #[inline]
    pub(crate) fn contains_signed(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && self.contains(x as usize, y as usize)
    }
}

fn flood(member: &[bool], w: usize, h: usize, seed: (usize, usize)) -> Vec<(usize, usize)> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::from([seed]);
    seen[seed.1 * w + seed.0] = true;
    while let Some((x, y)) = queue.pop_front() {
        out.push((x, y));
        for (dx, dy) in N4 {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let i = ny as usize * w + nx as usize;
            if member[i] && !seen[i] {
                seen[i] = true;
                queue.push_back((nx as usize, ny as usize));
            }
        }
    }
    out
}

/// 4-connected components of the non-vessel ROI pixels, in row-major order
/// of their first pixel.
pub fn nonvessel_components(mask: &BinaryMask) -> Vec<Region> {
    let (w, h) = mask.dims();
    let free: Vec<bool> =
        mask.as_slice().iter().zip(mask.roi().as_slice()).map(|(&v, &inside)| inside && !v).collect();
    let mut taken = vec![false; w * h];
    let mut out = Vec::new();
    for i in 0..w * h {
        if free[i] && !taken[i] {
            let pixels = flood(&free, w, h, (i % w, i / w));
            let mut member = vec![false; w * h];
            for &(x, y) in &pixels {
                taken[y * w + x] = true;
                member[y * w + x] = true;
            }
            out.push(Region::from_member(w, h, member).expect("flood is non-empty"));
        }
    }
    out
}

/// Largest non-vessel component; equal sizes go to the one whose centroid is
/// nearest the image centre.
pub fn largest_nonvessel_component(mask: &BinaryMask) -> Result<Region> {
    let (w, h) = mask.dims();
    let centre = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let dist = |r: &Region| {
        let (cx, cy) = super::centroid(r);
        (cx - centre.0).powi(2) + (cy - centre.1).powi(2)
    };
    let mut best: Option<(Region, f64)> = None;
    for r in nonvessel_components(mask) {
        let better = match &best {
            None => true,
            Some((b, d)) => r.len() > b.len() || (r.len() == b.len() && dist(&r) < *d),
        };
        if better {
            let d = dist(&r);
            best = Some((r, d));
        }
    }
    best.map(|(r, _)| r).ok_or(Error::EmptyFaz)
}

/// Adds every pixel enclosed by `region` (not 8-connected to the raster
/// border through non-members) for which `allowed` holds.
pub fn fill_holes(region: &Region, allowed: impl Fn(usize, usize) -> bool) -> Region {
    let (w, h) = region.dims();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && !region.contains(x, y) {
                outside[y * w + x] = true;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let i = ny as usize * w + nx as usize;
                if !outside[i] && !region.member[i] {
                    outside[i] = true;
                    queue.push_back((nx as usize, ny as usize));
                }
            }
        }
    }
    let member = (0..w * h).map(|i| region.member[i] || (!outside[i] && allowed(i % w, i / w))).collect();
    Region::from_member(w, h, member).expect("superset of a non-empty region")
}

/// Ordered outer boundary of `region` by Moore-neighbour tracing
/// (8-connected), starting at its first row-major pixel and running
/// clockwise on screen.
pub fn perimeter(region: &Region) -> Vec<(usize, usize)> {
    // Clockwise on screen (y down), starting west.
    const DIRS: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];
    let start = region.pixels[0];
    let mut out = vec![start];
    // The first pixel has no member to its west or above, so backtracking
    // starts from the west neighbour.
    let mut cur = (start.0 as isize, start.1 as isize);
    let mut back = 0usize;
    let mut first_move: Option<((isize, isize), usize)> = None;
    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let cand = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if region.contains_signed(cand.0, cand.1) {
                next = Some((cand, d));
                break;
            }
        }
        let Some((cand, d)) = next else {
            return out;
        };
        // Jacob's criterion: stop when the first move repeats.
        if cur == (start.0 as isize, start.1 as isize) {
            match first_move {
                None => first_move = Some((cand, d)),
                Some(m) if m == (cand, d) => {
                    out.pop();
                    return out;
                }
                Some(_) => {}
            }
        }
        // The pixel examined just before `cand` is background; resume the
        // sweep from it relative to `cand`.
        let prev = (cur.0 + DIRS[(d + 7) % 8].0, cur.1 + DIRS[(d + 7) % 8].1);
        let rel = (prev.0 - cand.0, prev.1 - cand.1);
        back = DIRS.iter().position(|&v| v == rel).expect("prev is a neighbour of cand");
        cur = cand;
        out.push((cur.0 as usize, cur.1 as usize));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RoiMask;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(RoiMask::full(w, h), |x, y| rows[y].as_bytes()[x] == b'#')
    }

    #[test]
    fn all_free_roi_is_one_region() {
        let m = BinaryMask::from_fn(RoiMask::full(7, 5), |_, _| false);
        let r = largest_nonvessel_component(&m).unwrap();
        assert_eq!(r.len(), 35);
    }

    #[test]
    fn picks_larger_blob() {
        let m = BinaryMask::from_fn(RoiMask::full(30, 12), |x, _| !((1..11).contains(&x) || (15..19).contains(&x)));
        // 10×12 = 120 vs 4×12 = 48.
        let r = largest_nonvessel_component(&m).unwrap();
        assert_eq!(r.len(), 120);
        assert_eq!(r.bbox(), (1, 0, 10, 11));
    }

    #[test]
    fn ties_go_to_centre() {
        let m = mask_from(&["..#..#..#..", "..#..#..#.."]);
        let r = largest_nonvessel_component(&m).unwrap();
        assert_eq!(r.bbox(), (3, 0, 4, 1));
    }

    #[test]
    fn diagonal_touch_does_not_connect() {
        let m = mask_from(&[".#", "#."]);
        assert_eq!(nonvessel_components(&m).len(), 2);
    }

    #[test]
    fn no_free_pixels_is_empty_faz() {
        let m = BinaryMask::from_fn(RoiMask::full(3, 3), |_, _| true);
        assert!(matches!(largest_nonvessel_component(&m), Err(Error::EmptyFaz)));
    }

    #[test]
    fn roi_excluded_pixels_are_not_free() {
        let roi = RoiMask::excluding_rect(6, 1, 2, 0, 2, 1).unwrap();
        let m = BinaryMask::from_fn(roi, |_, _| false);
        assert_eq!(nonvessel_components(&m).len(), 2);
    }

    #[test]
    fn fills_enclosed_specks_only() {
        let m = mask_from(&[".......", ".......", "...#...", ".......", "#######", "..#.#..", "..###.."]);
        let r = largest_nonvessel_component(&m).unwrap();
        assert_eq!(r.len(), 27);
        let filled = fill_holes(&r, |_, _| true);
        assert_eq!(filled.len(), 28);
        assert!(filled.contains(3, 2));
        assert!(!filled.contains(3, 5));
    }

    #[test]
    fn rejects_disconnected_pixels() {
        assert!(Region::new(4, 4, [(0, 0), (2, 2)]).is_err());
        assert!(Region::new(4, 4, []).is_err());
    }

    #[test]
    fn traces_a_square_clockwise() {
        let r = Region::new(5, 5, (1..4).flat_map(|y| (1..4).map(move |x| (x, y)))).unwrap();
        assert_eq!(perimeter(&r), vec![(1, 1), (2, 1), (3, 1), (3, 2), (3, 3), (2, 3), (1, 3), (1, 2)]);
    }

    #[test]
    fn traces_single_pixel_and_line() {
        assert_eq!(perimeter(&Region::new(3, 3, [(1, 1)]).unwrap()), vec![(1, 1)]);
        let line = Region::new(5, 1, (0..3).map(|x| (x, 0))).unwrap();
        assert_eq!(perimeter(&line), vec![(0, 0), (1, 0), (2, 0), (1, 0)]);
    }

    #[test]
    fn trace_visits_every_boundary_pixel_of_a_disk() {
        let r = Region::new(41, 41, (0..41).flat_map(|y| (0..41).map(move |x| (x, y))).filter(|&(x, y)| {
            let (dx, dy) = (x as f64 - 20.0, y as f64 - 20.0);
            dx * dx + dy * dy <= 15.0 * 15.0
        }))
        .unwrap();
        let trace = perimeter(&r);
        let boundary: Vec<_> = r
            .pixels()
            .iter()
            .copied()
            .filter(|&(x, y)| N4.iter().any(|&(dx, dy)| !r.contains_signed(x as isize + dx, y as isize + dy)))
            .collect();
        for p in &boundary {
            assert!(trace.contains(p), "{p:?} missing");
        }
        for w in trace.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!((a.0 as isize - b.0 as isize).abs() <= 1 && (a.1 as isize - b.1 as isize).abs() <= 1);
        }
    }
}
