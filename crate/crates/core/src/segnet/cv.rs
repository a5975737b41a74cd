use super::network::{Architecture, Network};
use super::sampling::{sample_balanced, LabeledPatchSet};
use super::train::{train, TrainConfig};
use super::{CnnModel, ConfidenceMap, ModelMeta};
use crate::error::{Error, Result};
use crate::preprocess::Preprocessing;
use crate::raster::{BinaryMask, GrayImage};

/// One annotated image for cross-validation. `gt` carries the ROI.
#[derive(Debug, Clone)]
pub struct CvSample {
    pub id: String,
    pub image: GrayImage,
    pub gt: BinaryMask,
}

#[derive(Debug, Clone)]
pub struct CvConfig {
    pub arch: Architecture,
    pub train: TrainConfig,
    pub preprocessing: Preprocessing,
    /// Patch budget per class for each fold's training set, shared evenly
    /// over the fold's images and capped by what each image offers.
    pub patches_per_class: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::vessel_default(),
            train: TrainConfig::default(),
            preprocessing: Preprocessing::standard(),
            patches_per_class: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fold {
    pub train_ids: Vec<String>,
    pub infer_ids: Vec<String>,
    pub model: CnnModel,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    /// One map per input sample, in input order.
    pub maps: Vec<ConfidenceMap>,
    /// Fold 0 trains on the first ⌈n/2⌉ samples, fold 1 on the rest.
    pub folds: [Fold; 2],
}

/// Train on the first half, segment the second, then reverse.
pub fn split_half_cv(dataset: &[CvSample], cfg: &CvConfig) -> Result<CvOutcome> {
    if dataset.len() < 2 {
        return Err(Error::arg(format!("split-half validation needs at least 2 images, got {}", dataset.len())));
    }
    let scale = common_scale(dataset)?;
    let prepped: Vec<GrayImage> =
        dataset.iter().map(|s| cfg.preprocessing.apply(&s.image)).collect::<Result<_>>()?;
    let cut = dataset.len().div_ceil(2);
    let halves = [(0..cut).collect::<Vec<_>>(), (cut..dataset.len()).collect::<Vec<_>>()];
    let mut maps: Vec<Option<ConfidenceMap>> = vec![None; dataset.len()];
    let mut folds = Vec::with_capacity(2);
    for (f, (train_idx, infer_idx)) in [(&halves[0], &halves[1]), (&halves[1], &halves[0])].into_iter().enumerate() {
        let fold_seed = cfg.train.seed.wrapping_add(f as u64);
        let set = fold_patches(dataset, &prepped, train_idx, cfg, fold_seed)?;
        let init = Network::init(cfg.arch.clone(), fold_seed);
        let tcfg = TrainConfig { seed: fold_seed, ..cfg.train };
        let out = train(init, &set, &tcfg)?;
        let model = CnnModel {
            network: out.network,
            meta: ModelMeta { preprocessing: cfg.preprocessing, mm_per_px: scale, seed: fold_seed },
        };
        for &i in infer_idx {
            maps[i] = Some(model.infer_preprocessed(&prepped[i], dataset[i].gt.roi())?);
        }
        folds.push(Fold {
            train_ids: train_idx.iter().map(|&i| dataset[i].id.clone()).collect(),
            infer_ids: infer_idx.iter().map(|&i| dataset[i].id.clone()).collect(),
            model,
            loss_trace: out.loss_trace,
        });
    }
    let maps = maps.into_iter().map(|m| m.expect("every image is in exactly one inference fold")).collect();
    let folds: [Fold; 2] = folds.try_into().expect("two folds");
    Ok(CvOutcome { maps, folds })
}

fn common_scale(dataset: &[CvSample]) -> Result<Option<f64>> {
    let first = dataset[0].image.scale_mm_per_px();
    for s in &dataset[1..] {
        if s.image.scale_mm_per_px() != first {
            return Err(Error::FovMismatch {
                model_mm_per_px: first.unwrap_or(f64::NAN),
                image_mm_per_px: s.image.scale_mm_per_px().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(first)
}

fn fold_patches(
    dataset: &[CvSample],
    prepped: &[GrayImage],
    idx: &[usize],
    cfg: &CvConfig,
    seed: u64,
) -> Result<LabeledPatchSet> {
    let per_image = cfg.patches_per_class.div_ceil(idx.len()).max(1);
    let mut set = LabeledPatchSet::empty(cfg.arch.patch_side());
    for &i in idx {
        let gt = &dataset[i].gt;
        let roi_total = gt.roi().count();
        let vessels = gt.vessel_count();
        let n = per_image.min(vessels).min(roi_total - vessels);
        if n == 0 {
            return Err(Error::InsufficientClassPixels {
                class: if vessels == 0 { "vessel" } else { "non-vessel" },
                requested: per_image,
                available: 0,
            });
        }
        let image_seed = seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        set.extend(sample_balanced(&prepped[i], gt, n, cfg.arch.patch_side(), i, image_seed)?)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RoiMask;
    use crate::segnet::network::Layer;

    fn tiny_cfg() -> CvConfig {
        CvConfig {
            arch: Architecture::new(
                5,
                vec![
                    Layer::Conv { kernel_h: 3, kernel_w: 3, in_channels: 1, out_channels: 2 },
                    Layer::Relu,
                    Layer::Dense { inputs: 18, outputs: 2 },
                ],
            )
            .unwrap(),
            train: TrainConfig { epochs: 2, batch_size: 8, ..Default::default() },
            preprocessing: Preprocessing::default(),
            patches_per_class: 40,
        }
    }

    fn sample(id: usize) -> CvSample {
        let image = GrayImage::from_fn(16, 16, |x, y| if (x + id) % 4 == 0 { 0.9 } else { 0.1 + 0.01 * y as f64 })
            .unwrap();
        let gt = BinaryMask::from_fn(RoiMask::full(16, 16), |x, _| (x + id) % 4 == 0);
        CvSample { id: format!("eye{id}"), image, gt }
    }

    #[test]
    fn four_images_split_in_halves() {
        let data: Vec<_> = (1..=4).map(sample).collect();
        let out = split_half_cv(&data, &tiny_cfg()).unwrap();
        assert_eq!(out.maps.len(), 4);
        assert_eq!(out.folds[0].train_ids, ["eye1", "eye2"]);
        assert_eq!(out.folds[0].infer_ids, ["eye3", "eye4"]);
        assert_eq!(out.folds[1].train_ids, ["eye3", "eye4"]);
        assert_eq!(out.folds[1].infer_ids, ["eye1", "eye2"]);
        for f in &out.folds {
            assert!(f.train_ids.iter().all(|id| !f.infer_ids.contains(id)));
            assert_eq!(f.loss_trace.len(), 2);
        }
    }

    #[test]
    fn odd_count_puts_extra_image_first() {
        let data: Vec<_> = (0..5).map(sample).collect();
        let out = split_half_cv(&data, &tiny_cfg()).unwrap();
        assert_eq!(out.folds[0].train_ids.len(), 3);
        assert_eq!(out.folds[1].train_ids.len(), 2);
    }

    #[test]
    fn needs_two_images() {
        assert!(split_half_cv(&[sample(0)], &tiny_cfg()).is_err());
    }

    #[test]
    fn refuses_mixed_fields_of_view() {
        let mut data: Vec<_> = (0..2).map(sample).collect();
        data[0].image = data[0].image.clone().with_scale(0.01).unwrap();
        data[1].image = data[1].image.clone().with_scale(0.012).unwrap();
        assert!(matches!(split_half_cv(&data, &tiny_cfg()), Err(Error::FovMismatch { .. })));
    }

    #[test]
    fn deterministic() {
        let data: Vec<_> = (0..4).map(sample).collect();
        let a = split_half_cv(&data, &tiny_cfg()).unwrap();
        let b = split_half_cv(&data, &tiny_cfg()).unwrap();
        assert_eq!(a.maps, b.maps);
        assert_eq!(a.folds[1].model.network, b.folds[1].model.network);
    }
}
