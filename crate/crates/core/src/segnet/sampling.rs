use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{extract_patch, BinaryMask, GrayImage};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub patch: Vec<f64>,
    pub vessel: bool,
    pub image_id: usize,
    pub x: usize,
    pub y: usize,
}

/// Class-balanced training patches.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatchSet {
    patch_side: usize,
    patches: Vec<LabeledPatch>,
}

impl LabeledPatchSet {
    pub fn new(patch_side: usize, patches: Vec<LabeledPatch>) -> Result<Self> {
        if let Some(p) = patches.iter().find(|p| p.patch.len() != patch_side * patch_side) {
            return Err(Error::Shape(format!(
                "patch at ({},{}) has {} values, expected {patch_side}²",
                p.x,
                p.y,
                p.patch.len()
            )));
        }
        let set = Self { patch_side, patches };
        if !set.is_balanced() {
            return Err(Error::arg("patch set is not class balanced"));
        }
        Ok(set)
    }

    pub fn empty(patch_side: usize) -> Self {
        Self { patch_side, patches: Vec::new() }
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn patches(&self) -> &[LabeledPatch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn vessel_count(&self) -> usize {
        self.patches.iter().filter(|p| p.vessel).count()
    }

    pub fn is_balanced(&self) -> bool {
        2 * self.vessel_count() == self.patches.len()
    }

    pub fn extend(&mut self, other: LabeledPatchSet) -> Result<()> {
        if other.patch_side != self.patch_side {
            return Err(Error::Shape(format!(
                "cannot merge {}-px patches into a {}-px set",
                other.patch_side, self.patch_side
            )));
        }
        self.patches.extend(other.patches);
        Ok(())
    }
}

/// Draws `n_per_class` vessel-centred and `n_per_class` background-centred
/// patches uniformly without replacement from the ROI of `gt`.
pub fn sample_balanced(
    img: &GrayImage,
    gt: &BinaryMask,
    n_per_class: usize,
    patch_side: usize,
    image_id: usize,
    seed: u64,
) -> Result<LabeledPatchSet> {
    if gt.dims() != img.dims() {
        return Err(Error::Shape(format!(
            "ground truth is {}x{}, image is {}x{}",
            gt.width(),
            gt.height(),
            img.width(),
            img.height()
        )));
    }
    if n_per_class == 0 {
        return Err(Error::arg("n_per_class must be at least 1"));
    }
    let (w, h) = gt.dims();
    let mut vessel = Vec::new();
    let mut background = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !gt.roi().contains(x, y) {
                continue;
            }
            if gt.is_vessel(x, y) {
                vessel.push((x, y));
            } else {
                background.push((x, y));
            }
        }
    }
    for (class, pool) in [("vessel", &vessel), ("non-vessel", &background)] {
        if pool.len() < n_per_class {
            return Err(Error::InsufficientClassPixels { class, requested: n_per_class, available: pool.len() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = Vec::with_capacity(2 * n_per_class);
    for (is_vessel, pool) in [(true, &vessel), (false, &background)] {
        for i in index::sample(&mut rng, pool.len(), n_per_class) {
            let (x, y) = pool[i];
            patches.push(LabeledPatch { patch: extract_patch(img, x, y, patch_side)?, vessel: is_vessel, image_id, x, y });
        }
    }
    LabeledPatchSet::new(patch_side, patches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RoiMask;
    use std::collections::HashSet;

    fn half_mask(w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(RoiMask::full(w, h), |x, _| x < w / 2)
    }

    #[test]
    fn draws_balanced_classes() {
        let img = GrayImage::from_fn(20, 20, |x, y| ((x + y) % 5) as f64 / 5.0).unwrap();
        let set = sample_balanced(&img, &half_mask(20, 20), 100, 5, 0, 1).unwrap();
        assert_eq!(set.len(), 200);
        assert_eq!(set.vessel_count(), 100);
        let coords: HashSet<_> = set.patches().iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(coords.len(), 200);
        for p in set.patches() {
            assert_eq!(p.vessel, p.x < 10);
        }
    }

    #[test]
    fn refuses_to_oversample() {
        let img = GrayImage::constant(10, 10, 0.5).unwrap();
        let gt = BinaryMask::from_fn(RoiMask::full(10, 10), |x, y| y == 0 && x < 10);
        assert_eq!(gt.vessel_count(), 10);
        let err = sample_balanced(&img, &gt, 11, 3, 0, 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientClassPixels { class: "vessel", requested: 11, available: 10 }));
    }

    #[test]
    fn deterministic_per_seed() {
        let img = GrayImage::constant(16, 16, 0.5).unwrap();
        let gt = half_mask(16, 16);
        let coords = |seed| -> Vec<(usize, usize)> {
            sample_balanced(&img, &gt, 20, 3, 0, seed).unwrap().patches().iter().map(|p| (p.x, p.y)).collect()
        };
        assert_eq!(coords(4), coords(4));
        assert_ne!(coords(4), coords(5));
    }

    #[test]
    fn never_samples_outside_roi() {
        let img = GrayImage::constant(12, 12, 0.5).unwrap();
        let roi = RoiMask::excluding_rect(12, 12, 0, 6, 6, 6).unwrap();
        let gt = BinaryMask::from_fn(roi.clone(), |x, _| x % 2 == 0);
        let set = sample_balanced(&img, &gt, 30, 3, 0, 9).unwrap();
        assert!(set.patches().iter().all(|p| roi.contains(p.x, p.y)));
    }
}
