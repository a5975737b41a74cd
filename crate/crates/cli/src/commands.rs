//! Subcommand bodies. Every command writes its outputs under `out`, sorted
//! by eye id, and reports how many eyes failed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use octafaz::binarize::{density_mask, metrics_mask};
use octafaz::metrics::{dataset_rates, image_agreement, render_agreement_csv, EvalPair};
use octafaz::morphometry::{
    area_and_density, parse_metrics_csv, perimeter, quantify_paths, render_metrics_csv, MetricsRow, Rater,
};
use octafaz::raster::{
    load_gray, load_mask, load_roi, save_gray, save_mask, save_ppm, BinaryMask, BitDepth, GrayImage, RoiMask,
    Sidecar,
};
use octafaz::segnet::{load_model, save_model, split_half_cv, ConfidenceMap, CvConfig, CvSample};
use octafaz::stats::{cohort_summary, default_comparisons, CohortReport};
use octafaz::synth::{generate_cohort, CohortPreset};
use octafaz::Error;

use crate::config::{Preset, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{self, Entry};
use crate::overlay::{self, Annotation};

/// Number of eyes that failed and were logged rather than aborting the run.
pub type Failures = usize;

fn mkdir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

fn write(p: &Path, text: &str) -> CliResult<()> {
    fs::write(p, text).map_err(|e| CliError::io(p, e))
}

fn need_manifest(m: Option<&Path>) -> CliResult<Vec<Entry>> {
    manifest::load(m.ok_or_else(|| CliError::Usage("this command needs --manifest".into()))?)
}

/// An eye loaded and checked against the configured device geometry.
struct Eye {
    entry: Entry,
    image: GrayImage,
    roi: RoiMask,
}

fn load_eye(cfg: &RunConfig, entry: &Entry) -> CliResult<Eye> {
    let image = load_gray(&entry.image)?;
    let sidecar = Sidecar::path_for(&entry.image);
    if sidecar.exists() {
        let meta = Sidecar::load(&sidecar)?;
        if let Some(fov) = meta.fov_mm {
            if (fov - cfg.fov_mm).abs() > 1e-9 {
                return Err(CliError::Usage(format!(
                    "eye {} was acquired at fov {fov} mm but the run is configured for {} mm; \
                     a training set is needed for each field of view",
                    entry.eye_id, cfg.fov_mm
                )));
            }
        }
        if let Some(dev) = meta.device.as_deref() {
            if cfg.preset != Preset::Custom && dev != cfg.preset.name() {
                return Err(CliError::Usage(format!(
                    "eye {} comes from device preset {dev}, the run uses {}; \
                     a training set is needed for each field of view",
                    entry.eye_id,
                    cfg.preset.name()
                )));
            }
        }
    }
    if image.width() != cfg.samples {
        return Err(CliError::Usage(format!(
            "eye {} is {} px wide but preset {} samples {} px per line; \
             a training set is needed for each field of view",
            entry.eye_id,
            image.width(),
            cfg.preset.name(),
            cfg.samples
        )));
    }
    let image = image.with_scale(cfg.mm_per_px())?;
    let roi = match &entry.roi {
        Some(p) => load_roi(p)?,
        None => RoiMask::full(image.width(), image.height()),
    };
    if roi.dims() != image.dims() {
        return Err(CliError::Usage(format!("eye {}: ROI and image sizes differ", entry.eye_id)));
    }
    Ok(Eye { entry: entry.clone(), image, roi })
}

fn load_eyes(cfg: &RunConfig, entries: &[Entry]) -> CliResult<Vec<Eye>> {
    entries.iter().map(|e| load_eye(cfg, e)).collect()
}

fn save_map(map: &ConfidenceMap, path: &Path) -> CliResult<()> {
    Ok(save_gray(&map.to_gray(), path, BitDepth::Sixteen)?)
}

fn cv_config(cfg: &RunConfig) -> CvConfig {
    let mut train = cfg.train;
    train.seed = cfg.seed;
    CvConfig { arch: cfg.arch.clone(), train, preprocessing: cfg.preprocessing, patches_per_class: cfg.patches_per_class }
}

pub fn train(cfg: &RunConfig, manifest: Option<&Path>, out: &Path) -> CliResult<Failures> {
    let eyes = load_eyes(cfg, &need_manifest(manifest)?)?;
    if eyes.len() < 2 {
        return Err(CliError::Usage("training needs at least two eyes in the manifest".into()));
    }
    let samples = eyes
        .iter()
        .map(|e| {
            let gt = load_mask(&e.entry.manual_mask, &e.roi)?;
            Ok(CvSample { id: e.entry.eye_id.clone(), image: e.image.clone(), gt })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let outcome = split_half_cv(&samples, &cv_config(cfg))?;
    let models = out.join("models");
    let maps = out.join("maps");
    mkdir(&models)?;
    mkdir(&maps)?;
    let mut loss = String::from("fold,epoch,mean_loss\n");
    let mut folds = String::from("fold,role,eye_id\n");
    for (fold, name) in outcome.folds.iter().zip(["a", "b"]) {
        save_model(&fold.model, models.join(format!("fold_{name}.octanet")))?;
        for (epoch, l) in fold.loss_trace.iter().enumerate() {
            loss.push_str(&format!("{name},{epoch},{l:.9}\n"));
        }
        for id in &fold.train_ids {
            folds.push_str(&format!("{name},train,{id}\n"));
        }
        for id in &fold.infer_ids {
            folds.push_str(&format!("{name},infer,{id}\n"));
        }
    }
    write(&out.join("train_loss.csv"), &loss)?;
    write(&out.join("folds.csv"), &folds)?;
    for (s, map) in samples.iter().zip(&outcome.maps) {
        save_map(map, &maps.join(format!("{}.pgm", s.id)))?;
    }
    Ok(0)
}

pub fn segment(cfg: &RunConfig, manifest: Option<&Path>, model: &Path, out: &Path) -> CliResult<Failures> {
    let eyes = load_eyes(cfg, &need_manifest(manifest)?)?;
    let model = load_model(model)?;
    let maps = out.join("maps");
    mkdir(&maps)?;
    eyes.iter().try_for_each(|e| {
        let map = model.segment(&e.image, &e.roi)?;
        save_map(&map, &maps.join(format!("{}.pgm", e.entry.eye_id)))
    })?;
    Ok(0)
}

/// Per-eye quantification result: the row (if any), its overlay and an
/// exceptions-log line (if any).
struct Measured {
    row: Option<MetricsRow>,
    overlay: octafaz::raster::RgbImage,
    exception: Option<String>,
}

fn measure(cfg: &RunConfig, eye: &Eye, rater: Rater, shape: &BinaryMask, dens: &BinaryMask) -> Measured {
    let (id, cohort) = (&eye.entry.eye_id, &eye.entry.cohort);
    let scale = cfg.mm_per_px();
    match quantify_paths(shape, dens, scale, cfg.diameter_step_deg) {
        Ok(m) => Measured {
            row: Some(MetricsRow::from_metrics(id, cohort, rater, &m)),
            overlay: overlay::render(&eye.image, &eye.roi, Annotation::Full(&m)),
            exception: None,
        },
        Err(Error::CentroidOutside { cx, cy, region }) => {
            let row = area_and_density(shape, dens, scale).ok().map(|(_, area, density)| MetricsRow {
                id: id.clone(),
                cohort: cohort.clone(),
                rater,
                area_mm2: area,
                d_min_mm: None,
                d_max_mm: None,
                eccentricity: None,
                density,
            });
            let p = perimeter(&region);
            Measured {
                row,
                overlay: overlay::render(&eye.image, &eye.roi, Annotation::PerimeterOnly(&p)),
                exception: Some(format!(
                    "{id},{rater},centroid ({cx:.2}, {cy:.2}) lies outside the FAZ; diameters left empty"
                )),
            }
        }
        Err(e) => Measured {
            row: None,
            overlay: overlay::render(&eye.image, &eye.roi, Annotation::None),
            exception: Some(format!("{id},{rater},{e}")),
        },
    }
}

/// Manual rows from the manifest masks and, when `maps` is given,
/// automated rows from `<maps>/<eye>.pgm`. Returns rows and failure count.
fn quantify_rows(
    cfg: &RunConfig,
    manifest: Option<&Path>,
    maps: Option<&Path>,
    out: &Path,
) -> CliResult<(Vec<MetricsRow>, Failures)> {
    let eyes = load_eyes(cfg, &need_manifest(manifest)?)?;
    let overlays = out.join("overlays");
    mkdir(&overlays)?;
    let per_eye: Vec<CliResult<Vec<(Rater, Measured)>>> = eyes
        .par_iter()
        .map(|eye| {
            let mut done = Vec::new();
            let manual = load_mask(&eye.entry.manual_mask, &eye.roi)?;
            done.push((Rater::Manual, measure(cfg, eye, Rater::Manual, &manual, &manual)));
            if let Some(dir) = maps {
                let path = dir.join(format!("{}.pgm", eye.entry.eye_id));
                let map = ConfidenceMap::from_gray(&load_gray(&path)?, eye.roi.clone())?;
                let measured = match (metrics_mask(&map), density_mask(&map, cfg.gamma)) {
                    (Ok((_, shape)), Ok((_, dens))) => measure(cfg, eye, Rater::Automated, &shape, &dens),
                    (Err(e), _) | (_, Err(e)) => Measured {
                        row: None,
                        overlay: overlay::render(&eye.image, &eye.roi, Annotation::None),
                        exception: Some(format!("{},automated,{e}", eye.entry.eye_id)),
                    },
                };
                done.push((Rater::Automated, measured));
            }
            Ok(done)
        })
        .collect();
    let mut rows = Vec::new();
    let mut log = String::new();
    let mut failed = BTreeSet::new();
    for (eye, result) in eyes.iter().zip(per_eye) {
        for (rater, m) in result? {
            save_ppm(&m.overlay, overlays.join(format!("{}_{rater}.ppm", eye.entry.eye_id)))?;
            if let Some(x) = m.exception {
                log.push_str(&x);
                log.push('\n');
                failed.insert(eye.entry.eye_id.clone());
            }
            rows.extend(m.row);
        }
    }
    write(&out.join("metrics.csv"), &render_metrics_csv(&rows)?)?;
    write(&out.join("exceptions.log"), &log)?;
    Ok((rows, failed.len()))
}

pub fn quantify(cfg: &RunConfig, manifest: Option<&Path>, maps: Option<&Path>, out: &Path) -> CliResult<Failures> {
    Ok(quantify_rows(cfg, manifest, maps, out)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredKind {
    Map,
    Mask,
}

pub fn evaluate(
    cfg: &RunConfig,
    manifest: Option<&Path>,
    pred_dir: &Path,
    kind: PredKind,
    out: &Path,
) -> CliResult<Failures> {
    let eyes = load_eyes(cfg, &need_manifest(manifest)?)?;
    let listed: BTreeSet<String> = eyes.iter().map(|e| e.entry.eye_id.clone()).collect();
    let found: BTreeSet<String> = fs::read_dir(pred_dir)
        .map_err(|e| CliError::io(pred_dir, e))?
        .filter_map(|d| d.ok().map(|d| d.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    let unpaired: Vec<String> = listed.symmetric_difference(&found).cloned().collect();
    if !unpaired.is_empty() {
        return Err(CliError::Usage(format!("unpaired eye ids: {}", unpaired.join(", "))));
    }
    let pairs = eyes
        .iter()
        .map(|e| {
            let path = pred_dir.join(format!("{}.pgm", e.entry.eye_id));
            let pred = match kind {
                PredKind::Mask => load_mask(&path, &e.roi)?,
                PredKind::Map => metrics_mask(&ConfidenceMap::from_gray(&load_gray(&path)?, e.roi.clone())?)?.1,
            };
            let gt = load_mask(&e.entry.manual_mask, &e.roi)?;
            Ok(EvalPair { id: e.entry.eye_id.clone(), group: e.entry.cohort.clone(), pred, gt })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let images = image_agreement(&pairs)?;
    let groups: BTreeSet<&str> = pairs.iter().map(|p| p.group.as_str()).collect();
    let groups: Vec<&str> = groups.into_iter().collect();
    let summary = dataset_rates(&images, &groups, cfg.aggregation)?;
    mkdir(out)?;
    write(&out.join("agreement.csv"), &render_agreement_csv(&images, &summary, cfg.aggregation))?;
    Ok(0)
}

fn write_report(rows: &[MetricsRow], out: &Path) -> CliResult<CohortReport> {
    let cohorts: BTreeSet<String> = rows.iter().map(|r| r.cohort.clone()).collect();
    let cohorts: Vec<String> = cohorts.into_iter().collect();
    let report = cohort_summary(rows, &default_comparisons(&cohorts))?;
    mkdir(out)?;
    write(&out.join("report.json"), &report.to_json())?;
    write(&out.join("report.txt"), &report.to_table())?;
    Ok(report)
}

pub fn stats(csvs: &[PathBuf], out: &Path) -> CliResult<Failures> {
    if csvs.is_empty() {
        return Err(CliError::Usage("stats needs at least one metrics CSV".into()));
    }
    let mut rows = Vec::new();
    for p in csvs {
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        rows.extend(parse_metrics_csv(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?);
    }
    write_report(&rows, out)?;
    Ok(0)
}

/// Quantify both raters, then the cohort report over eyes measured by both.
pub fn report(cfg: &RunConfig, manifest: Option<&Path>, maps: &Path, out: &Path) -> CliResult<Failures> {
    let (rows, failures) = quantify_rows(cfg, manifest, Some(maps), out)?;
    let mut raters: BTreeMap<&str, BTreeSet<Rater>> = BTreeMap::new();
    for r in &rows {
        raters.entry(&r.id).or_default().insert(r.rater);
    }
    let paired: Vec<MetricsRow> = rows.iter().filter(|r| raters[r.id.as_str()].len() == 2).cloned().collect();
    write_report(&paired, out)?;
    Ok(failures)
}

/// Synthetic cohort on the configured device geometry.
pub fn synth(cfg: &RunConfig, out: &Path) -> CliResult<Failures> {
    let adapt = |mut p: CohortPreset| {
        p.base.width = cfg.samples;
        p.base.height = cfg.samples;
        p.base.mm_per_px = cfg.mm_per_px();
        p.base.noise.speckle_var = cfg.synth_speckle_var;
        p
    };
    let cohort = generate_cohort(
        &adapt(CohortPreset::zeiss_healthy()),
        &adapt(CohortPreset::zeiss_diabetic()),
        cfg.synth_n_each,
        cfg.seed,
    )?;
    let (images, truth) = (out.join("images"), out.join("truth"));
    mkdir(&images)?;
    mkdir(&truth)?;
    let mut listing = Vec::new();
    for eye in &cohort.eyes {
        let img = images.join(format!("{}.pgm", eye.id));
        save_gray(&eye.image, &img, BitDepth::Sixteen)?;
        Sidecar {
            fov_mm: Some(cfg.fov_mm),
            device: Some(cfg.preset.name().into()),
            eye_id: Some(eye.id.clone()),
            cohort: Some(eye.cohort.clone()),
        }
        .save(Sidecar::path_for(&img))?;
        save_mask(&eye.truth.mask, truth.join(format!("{}.pgm", eye.id)))?;
        listing.push((
            eye.id.clone(),
            eye.cohort.clone(),
            format!("images/{}.pgm", eye.id),
            format!("truth/{}.pgm", eye.id),
        ));
    }
    listing.sort();
    let mut rows = cohort.truth_rows();
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    write(&out.join("truth.csv"), &render_metrics_csv(&rows)?)?;
    write(&out.join("manifest.csv"), &manifest::render(&listing))?;
    Ok(0)
}
