//! Pixel-wise agreement between automated and manual vessel masks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Counts over ROI pixels. Both masks must share dimensions and ROI.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::arg(format!("mask sizes differ: {:?} vs {:?}", pred.dims(), gt.dims())));
    }
    if pred.roi() != gt.roi() {
        return Err(Error::arg("predicted and manual masks have different ROIs"));
    }
    let mut c = ConfusionCounts::default();
    let roi = pred.roi().as_slice();
    for ((&p, &g), &inside) in pred.as_slice().iter().zip(gt.as_slice()).zip(roi) {
        if !inside {
            continue;
        }
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn rates(c: &ConfusionCounts) -> Result<Rates> {
    let total = c.total();
    if total == 0 {
        return Err(Error::UndefinedRate("accuracy"));
    }
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedRate("sensitivity"));
    }
    if c.tn + c.fp == 0 {
        return Err(Error::UndefinedRate("specificity"));
    }
    Ok(Rates {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        sensitivity: c.tp as f64 / (c.tp + c.fn_) as f64,
        specificity: c.tn as f64 / (c.tn + c.fp) as f64,
    })
}

/// Dice overlap `2TP / (2TP + FP + FN)`. Not one of the reported agreement
/// rates; provided for comparison only.
pub fn dice(c: &ConfusionCounts) -> Result<f64> {
    let d = 2 * c.tp + c.fp + c.fn_;
    if d == 0 {
        return Err(Error::UndefinedRate("dice"));
    }
    Ok(2.0 * c.tp as f64 / d as f64)
}

/// One predicted/manual mask pair with its group label
/// (e.g. `optovue-healthy`).
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub id: String,
    pub group: String,
    pub pred: BinaryMask,
    pub gt: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageAgreement {
    pub id: String,
    pub group: String,
    pub counts: ConfusionCounts,
    pub rates: Rates,
    pub dice: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Mean of per-image rates.
    #[default]
    PerImage,
    /// Rates of the summed counts.
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRates {
    pub group: String,
    pub n_images: usize,
    pub rates: Rates,
}

pub fn image_agreement(pairs: &[EvalPair]) -> Result<Vec<ImageAgreement>> {
    pairs
        .par_iter()
        .map(|p| {
            let counts = confusion(&p.pred, &p.gt)?;
            Ok(ImageAgreement {
                id: p.id.clone(),
                group: p.group.clone(),
                rates: rates(&counts)?,
                dice: dice(&counts).ok(),
                counts,
            })
        })
        .collect()
}

/// Per-group rates, in the order of `groups`. Every listed group needs at
/// least one image.
pub fn dataset_rates(images: &[ImageAgreement], groups: &[&str], agg: Aggregation) -> Result<Vec<GroupRates>> {
    groups
        .iter()
        .map(|&g| {
            let members: Vec<&ImageAgreement> = images.iter().filter(|i| i.group == g).collect();
            if members.is_empty() {
                return Err(Error::arg(format!("group `{g}` has no images")));
            }
            let rates = match agg {
                Aggregation::PerImage => {
                    let n = members.len() as f64;
                    let mean = |f: fn(&Rates) -> f64| members.iter().map(|m| f(&m.rates)).sum::<f64>() / n;
                    Rates {
                        accuracy: mean(|r| r.accuracy),
                        sensitivity: mean(|r| r.sensitivity),
                        specificity: mean(|r| r.specificity),
                    }
                }
                Aggregation::Pooled => rates(&members.iter().fold(ConfusionCounts::default(), |a, m| a.add(m.counts)))?,
            };
            Ok(GroupRates { group: g.to_string(), n_images: members.len(), rates })
        })
        .collect()
}

pub const AGREEMENT_HEADER: &str = "id,group,tp,fp,tn,fn,accuracy,sensitivity,specificity,dice_extra";
pub const GROUP_HEADER: &str = "group,n_images,aggregation,accuracy,sensitivity,specificity";

/// Per-image rows, a blank line, then the group summary block.
pub fn render_agreement_csv(images: &[ImageAgreement], summary: &[GroupRates], agg: Aggregation) -> String {
    let mut out = format!("{AGREEMENT_HEADER}\n");
    for i in images {
        let c = &i.counts;
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{}\n",
            i.id,
            i.group,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            i.rates.accuracy,
            i.rates.sensitivity,
            i.rates.specificity,
            i.dice.map(|d| format!("{d:.6}")).unwrap_or_default()
        ));
    }
    out.push('\n');
    out.push_str(GROUP_HEADER);
    out.push('\n');
    let agg = match agg {
        Aggregation::PerImage => "per_image_mean",
        Aggregation::Pooled => "pooled",
    };
    for g in summary {
        out.push_str(&format!(
            "{},{},{agg},{:.3},{:.3},{:.3}\n",
            g.group, g.n_images, g.rates.accuracy, g.rates.sensitivity, g.rates.specificity
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RoiMask;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, vessel: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(RoiMask::full(w, h), |x, y| vessel.contains(&(x, y)))
    }

    fn negate(m: &BinaryMask) -> BinaryMask {
        BinaryMask::from_fn(m.roi().clone(), |x, y| !m.is_vessel(x, y))
    }

    fn counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn two_by_two_example() {
        let gt = mask(2, 2, &[(0, 0), (0, 1)]);
        let pred = mask(2, 2, &[(0, 0), (1, 0)]);
        assert_eq!(confusion(&pred, &gt).unwrap(), counts(1, 1, 1, 1));
    }

    #[test]
    fn identical_and_negated() {
        let gt = mask(5, 4, &[(1, 1), (2, 1), (3, 3)]);
        let same = confusion(&gt, &gt).unwrap();
        assert_eq!((same.fp, same.fn_), (0, 0));
        let inv = confusion(&negate(&gt), &gt).unwrap();
        assert_eq!((inv.tp, inv.tn), (0, 0));
    }

    #[test]
    fn outside_roi_is_ignored() {
        let roi = RoiMask::excluding_rect(4, 4, 0, 0, 2, 2).unwrap();
        let pred = BinaryMask::from_fn(roi.clone(), |_, _| true);
        let gt = BinaryMask::from_fn(roi, |_, _| false);
        let c = confusion(&pred, &gt).unwrap();
        assert_eq!(c.total(), 12);
    }

    #[test]
    fn mismatches_are_argument_errors() {
        let a = mask(3, 3, &[]);
        assert!(matches!(confusion(&a, &mask(3, 4, &[])), Err(Error::Argument(_))));
        let other = BinaryMask::from_fn(RoiMask::excluding_rect(3, 3, 0, 0, 1, 1).unwrap(), |_, _| false);
        assert!(matches!(confusion(&a, &other), Err(Error::Argument(_))));
    }

    #[test]
    fn rate_examples() {
        let r = rates(&counts(50, 0, 50, 0)).unwrap();
        assert_eq!((r.accuracy, r.sensitivity, r.specificity), (1.0, 1.0, 1.0));
        let r = rates(&counts(1, 1, 1, 1)).unwrap();
        assert_eq!((r.accuracy, r.sensitivity, r.specificity), (0.5, 0.5, 0.5));
        assert!(matches!(rates(&counts(0, 3, 4, 0)), Err(Error::UndefinedRate("sensitivity"))));
        assert!(matches!(rates(&counts(2, 0, 0, 1)), Err(Error::UndefinedRate("specificity"))));
        assert!(matches!(rates(&counts(0, 0, 0, 0)), Err(Error::UndefinedRate("accuracy"))));
        assert_eq!(dice(&counts(1, 1, 1, 1)).unwrap(), 0.5);
    }

    fn pair(id: &str, group: &str, pred: BinaryMask, gt: BinaryMask) -> EvalPair {
        EvalPair { id: id.into(), group: group.into(), pred, gt }
    }

    #[test]
    fn group_means() {
        let gt = mask(4, 4, &[(0, 0), (1, 1), (2, 2)]);
        let p1 = mask(4, 4, &[(0, 0), (1, 1), (3, 3)]);
        let p2 = mask(4, 4, &[(0, 0), (1, 2)]);
        let imgs = image_agreement(&[pair("a", "h", p1.clone(), gt.clone()), pair("b", "d", p2.clone(), gt.clone())]).unwrap();
        let g = dataset_rates(&imgs, &["h", "d"], Aggregation::PerImage).unwrap();
        assert_eq!(g[0].rates, imgs[0].rates);
        assert_eq!(g[1].rates, imgs[1].rates);

        let dup = image_agreement(&[pair("a", "h", p1.clone(), gt.clone()), pair("a2", "h", p1, gt)]).unwrap();
        let gd = dataset_rates(&dup, &["h"], Aggregation::PerImage).unwrap();
        assert_eq!(gd[0].rates, imgs[0].rates);
        assert_eq!(gd[0].n_images, 2);

        assert!(matches!(dataset_rates(&imgs, &["h", "missing"], Aggregation::PerImage), Err(Error::Argument(_))));
    }

    #[test]
    fn pooled_differs_from_per_image_when_sizes_differ() {
        let small_gt = mask(2, 2, &[(0, 0)]);
        let small_pred = mask(2, 2, &[(0, 0), (1, 1)]);
        let big_gt = mask(10, 10, &[(0, 0), (5, 5)]);
        let imgs = image_agreement(&[
            pair("s", "g", small_pred.clone(), small_gt.clone()),
            pair("b", "g", big_gt.clone(), big_gt.clone()),
        ])
        .unwrap();
        let mean = dataset_rates(&imgs, &["g"], Aggregation::PerImage).unwrap()[0].rates.accuracy;
        let pooled = dataset_rates(&imgs, &["g"], Aggregation::Pooled).unwrap()[0].rates.accuracy;
        assert_eq!(mean, (0.75 + 1.0) / 2.0);
        assert_eq!(pooled, 103.0 / 104.0);
        let csv = render_agreement_csv(&imgs, &[], Aggregation::Pooled);
        assert!(csv.starts_with(AGREEMENT_HEADER));
        assert!(csv.contains("\ns,g,1,1,2,0,0.750000,1.000000,0.666667,0.666667\n"));
    }

    proptest! {
        #[test]
        fn accuracy_identity(tp in 1u64..1000, fp in 0u64..1000, tn in 1u64..1000, fn_ in 0u64..1000) {
            let c = counts(tp, fp, tn, fn_);
            let r = rates(&c).unwrap();
            let total = c.total() as f64;
            let recon = (r.sensitivity * (tp + fn_) as f64 + r.specificity * (tn + fp) as f64) / total;
            prop_assert!((recon - r.accuracy).abs() < 1e-12);
            for v in [r.accuracy, r.sensitivity, r.specificity] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn swap_exchanges_fp_and_fn(a in proptest::collection::vec(any::<bool>(), 30), b in proptest::collection::vec(any::<bool>(), 30)) {
            let ma = BinaryMask::from_fn(RoiMask::full(6, 5), |x, y| a[y * 6 + x]);
            let mb = BinaryMask::from_fn(RoiMask::full(6, 5), |x, y| b[y * 6 + x]);
            let ab = confusion(&ma, &mb).unwrap();
            let ba = confusion(&mb, &ma).unwrap();
            prop_assert_eq!((ab.tp, ab.tn, ab.fp, ab.fn_), (ba.tp, ba.tn, ba.fn_, ba.fp));
            prop_assert_eq!(ab.total(), 30);
        }
    }
}
