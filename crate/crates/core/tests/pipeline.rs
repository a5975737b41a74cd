use octafaz::binarize::metrics_mask;
use octafaz::metrics::{confusion, rates};
use octafaz::morphometry::{centroid, diameters, quantify, Region};
use octafaz::segnet::{load_model, save_model, split_half_cv, Architecture, CvConfig, CvSample};
use octafaz::synth::{generate_cohort, CohortPreset};
use proptest::prelude::*;

fn small_cv() -> CvConfig {
    let mut cfg = CvConfig::default();
    cfg.arch = Architecture::parse(9, "conv3x3:1>4,relu,pool2,dense:36>8,relu,dense:8>2").unwrap();
    cfg.patches_per_class = 400;
    cfg.train.epochs = 2;
    cfg
}

#[test]
fn synth_train_segment_quantify() {
    let cohort = generate_cohort(&CohortPreset::zeiss_healthy(), &CohortPreset::zeiss_diabetic(), 2, 5).unwrap();
    let data: Vec<CvSample> = cohort
        .eyes
        .iter()
        .map(|e| CvSample { id: e.id.clone(), image: e.image.clone(), gt: e.truth.mask.clone() })
        .collect();
    let out = split_half_cv(&data, &small_cv()).unwrap();
    assert_eq!(out.maps.len(), data.len());
    for fold in &out.folds {
        assert!(fold.loss_trace.iter().all(|l| l.is_finite() && *l > 0.0));
        assert!(fold.train_ids.iter().all(|id| !fold.infer_ids.contains(id)));
    }

    // A saved and reloaded fold model reproduces that fold's maps exactly.
    let dir = tempfile::tempdir().unwrap();
    let fold = &out.folds[0];
    let path = dir.path().join("fold.octanet");
    save_model(&fold.model, &path).unwrap();
    let model = load_model(&path).unwrap();
    assert_eq!(model, fold.model);
    for (sample, map) in data.iter().zip(&out.maps) {
        if fold.infer_ids.contains(&sample.id) {
            assert_eq!(&model.segment(&sample.image, sample.gt.roi()).unwrap(), map);
        }
    }

    for (sample, map) in data.iter().zip(&out.maps) {
        assert!(map.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let (_, mask) = metrics_mask(map).unwrap();
        let r = rates(&confusion(&mask, &sample.gt).unwrap()).unwrap();
        assert!(r.accuracy > 0.5, "{}: {r:?}", sample.id);
    }

    let truth = cohort.truth_rows();
    for (eye, row) in cohort.eyes.iter().zip(&truth) {
        let m = quantify(&eye.truth.mask, eye.params.mm_per_px).unwrap();
        let area = row.area_mm2;
        assert!((m.area_mm2 - area).abs() <= 0.03 * area, "{}: {} vs {area}", eye.id, m.area_mm2);
    }
}

fn ellipse(side: usize, c: (f64, f64), a: f64, b: f64, rot_deg: f64) -> Vec<(usize, usize)> {
    let (s, co) = rot_deg.to_radians().sin_cos();
    (0..side)
        .flat_map(|y| (0..side).map(move |x| (x, y)))
        .filter(|&(x, y)| {
            let (dx, dy) = (x as f64 - c.0, y as f64 - c.1);
            let (u, v) = (dx * co + dy * s, -dx * s + dy * co);
            (u / a).powi(2) + (v / b).powi(2) < 1.0
        })
        .collect()
}

fn extremes(side: usize, pixels: Vec<(usize, usize)>) -> (f64, f64) {
    let r = Region::new(side, side, pixels).unwrap();
    let d = diameters(&r, centroid(&r), 1.0).unwrap();
    (d.d_min, d.d_max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chords_respect_lattice_symmetries(
        a in 12.0f64..30.0,
        ratio in 0.4f64..1.0,
        rot in 0.0f64..180.0,
        off in (0.0f64..1.0, 0.0f64..1.0),
        shift in (0usize..7, 0usize..7),
    ) {
        let side = 80;
        let base = ellipse(side, (36.0 + off.0, 36.0 + off.1), a, a * ratio, rot);
        let (lo, hi) = extremes(side, base.clone());
        prop_assert!(lo > 0.0 && lo <= hi);

        let moved = base.iter().map(|&(x, y)| (x + shift.0, y + shift.1)).collect();
        let (lo_t, hi_t) = extremes(side, moved);
        prop_assert!((lo_t - lo).abs() < 1e-6 && (hi_t - hi).abs() < 1e-6, "{lo} {hi} vs {lo_t} {hi_t}");

        let turned = base.iter().map(|&(x, y)| (side - 1 - y, x)).collect();
        let (lo_r, hi_r) = extremes(side, turned);
        prop_assert!((lo_r - lo).abs() < 1e-6 && (hi_r - hi).abs() < 1e-6, "{lo} {hi} vs {lo_r} {hi_r}");

        let mirrored = base.iter().map(|&(x, y)| (side - 1 - x, y)).collect();
        let (lo_m, hi_m) = extremes(side, mirrored);
        prop_assert!((lo_m - lo).abs() < 1e-6 && (hi_m - hi).abs() < 1e-6, "{lo} {hi} vs {lo_m} {hi_m}");
    }
}
