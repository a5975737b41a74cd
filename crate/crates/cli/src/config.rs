//! `key=value` run configuration.

use std::path::{Path, PathBuf};

use octafaz::metrics::Aggregation;
use octafaz::preprocess::{ClaheParams, NotchParams, Preprocessing};
use octafaz::raster::{parse_key_values, pixel_scale};
use octafaz::segnet::{Architecture, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Prototype2mm300,
    Optovue3mm304,
    Zeiss3mm245,
    Custom,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "prototype2mm300" => Preset::Prototype2mm300,
            "optovue3mm304" => Preset::Optovue3mm304,
            "zeiss3mm245" => Preset::Zeiss3mm245,
            "custom" => Preset::Custom,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Prototype2mm300 => "prototype2mm300",
            Preset::Optovue3mm304 => "optovue3mm304",
            Preset::Zeiss3mm245 => "zeiss3mm245",
            Preset::Custom => "custom",
        }
    }

    /// Field of view (mm) and samples per line of the device protocol.
    pub fn geometry(self) -> Option<(f64, usize)> {
        match self {
            Preset::Prototype2mm300 => Some((2.0, 300)),
            Preset::Optovue3mm304 => Some((3.0, 304)),
            Preset::Zeiss3mm245 => Some((3.0, 245)),
            Preset::Custom => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Preset,
    pub fov_mm: f64,
    pub samples: usize,
    pub preprocessing: Preprocessing,
    pub train: TrainConfig,
    pub patches_per_class: usize,
    pub arch: Architecture,
    pub gamma: f64,
    pub diameter_step_deg: f64,
    pub aggregation: Aggregation,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub synth_n_each: usize,
    pub synth_speckle_var: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let (fov_mm, samples) = Preset::Zeiss3mm245.geometry().expect("fixed preset");
        Self {
            preset: Preset::Zeiss3mm245,
            fov_mm,
            samples,
            preprocessing: Preprocessing::standard(),
            train: TrainConfig::default(),
            patches_per_class: 10_000,
            arch: Architecture::vessel_default(),
            gamma: octafaz::binarize::DEFAULT_GAMMA,
            diameter_step_deg: octafaz::morphometry::DEFAULT_STEP_DEG,
            aggregation: Aggregation::PerImage,
            out_dir: PathBuf::from("out"),
            seed: 0x0c7a,
            synth_n_each: 10,
            synth_speckle_var: 0.05,
        }
    }
}

fn on_off(v: &str) -> Option<bool> {
    match v {
        "on" | "true" | "yes" => Some(true),
        "off" | "false" | "no" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    pub fn mm_per_px(&self) -> f64 {
        pixel_scale(self.fov_mm, self.samples).expect("validated geometry")
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut c = RunConfig::default();
        let mut notch = NotchParams::default();
        let mut clahe = ClaheParams::default();
        let (mut use_notch, mut use_clahe) = (true, true);
        let mut geometry: (Option<f64>, Option<usize>) = (None, None);
        let mut layers: Option<String> = None;
        let mut patch_side: Option<usize> = None;
        for (line, (key, value)) in parse_key_values(text)? {
            let bad = |what: &str| CliError::Config { line, message: format!("invalid {what} `{value}`") };
            macro_rules! num {
                ($what:expr) => {
                    value.parse().map_err(|_| bad($what))?
                };
            }
            match key.as_str() {
                "preset" => c.preset = Preset::parse(&value).ok_or_else(|| bad("preset"))?,
                "fov_mm" => geometry.0 = Some(num!("fov_mm")),
                "samples" => geometry.1 = Some(num!("samples")),
                "notch" => use_notch = on_off(&value).ok_or_else(|| bad("notch switch"))?,
                "notch_band_halfwidth" => notch.band_halfwidth = num!("notch_band_halfwidth"),
                "notch_min_stripe_freq" => notch.min_stripe_freq = num!("notch_min_stripe_freq"),
                "notch_attenuation" => notch.attenuation = num!("notch_attenuation"),
                "clahe" => use_clahe = on_off(&value).ok_or_else(|| bad("clahe switch"))?,
                "clahe_tiles_x" => clahe.tiles_x = num!("clahe_tiles_x"),
                "clahe_tiles_y" => clahe.tiles_y = num!("clahe_tiles_y"),
                "clahe_clip_limit" => clahe.clip_limit = num!("clahe_clip_limit"),
                "learning_rate" => c.train.learning_rate = num!("learning_rate"),
                "momentum" => c.train.momentum = num!("momentum"),
                "batch_size" => c.train.batch_size = num!("batch_size"),
                "epochs" => c.train.epochs = num!("epochs"),
                "patches_per_class" => c.patches_per_class = num!("patches_per_class"),
                "patch_side" => patch_side = Some(num!("patch_side")),
                "layers" => layers = Some(value.clone()),
                "gamma" => c.gamma = num!("gamma"),
                "diameter_step_deg" => c.diameter_step_deg = num!("diameter_step_deg"),
                "aggregation" => {
                    c.aggregation = match value.as_str() {
                        "per_image" => Aggregation::PerImage,
                        "pooled" => Aggregation::Pooled,
                        _ => return Err(bad("aggregation")),
                    }
                }
                "out_dir" => c.out_dir = PathBuf::from(&value),
                "seed" => c.seed = num!("seed"),
                "synth_n_each" => c.synth_n_each = num!("synth_n_each"),
                "synth_speckle_var" => c.synth_speckle_var = num!("synth_speckle_var"),
                other => return Err(CliError::Config { line, message: format!("unknown key `{other}`") }),
            }
        }
        c.preprocessing = Preprocessing { notch: use_notch.then_some(notch), clahe: use_clahe.then_some(clahe) };
        match (layers, patch_side) {
            (Some(l), Some(k)) => c.arch = Architecture::parse(k, &l)?,
            (None, None) => {}
            _ => return Err(CliError::Config { line: 0, message: "`layers` and `patch_side` must be given together".into() }),
        }
        c.set_geometry(geometry)?;
        c.validate()?;
        Ok(c)
    }

    fn set_geometry(&mut self, given: (Option<f64>, Option<usize>)) -> CliResult<()> {
        match self.preset.geometry() {
            Some((fov, samples)) => {
                if given.0.is_some_and(|f| f != fov) || given.1.is_some_and(|s| s != samples) {
                    return Err(CliError::Usage(format!(
                        "preset {} fixes fov_mm={fov} and samples={samples}; use preset=custom to change them",
                        self.preset.name()
                    )));
                }
                (self.fov_mm, self.samples) = (fov, samples);
            }
            None => match given {
                (Some(f), Some(s)) => (self.fov_mm, self.samples) = (f, s),
                _ => return Err(CliError::Usage("preset=custom needs fov_mm and samples".into())),
            },
        }
        Ok(())
    }

    /// Switches preset after parsing (command-line override).
    pub fn with_preset(mut self, preset: Preset) -> CliResult<Self> {
        if preset != self.preset {
            let keep = (Some(self.fov_mm), Some(self.samples));
            self.preset = preset;
            self.set_geometry(if preset == Preset::Custom { keep } else { (None, None) })?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        pixel_scale(self.fov_mm, self.samples)?;
        if let Some(n) = &self.preprocessing.notch {
            n.validate()?;
        }
        if let Some(c) = &self.preprocessing.clahe {
            c.validate()?;
        }
        self.train.validate()?;
        if self.patches_per_class == 0 {
            return Err(CliError::Usage("patches_per_class must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(CliError::Usage(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.diameter_step_deg > 0.0 && self.diameter_step_deg <= 5.0) {
            return Err(CliError::Usage(format!("diameter_step_deg must lie in (0, 5], got {}", self.diameter_step_deg)));
        }
        if self.synth_n_each < 2 || self.synth_speckle_var < 0.0 {
            return Err(CliError::Usage("synth_n_each must be at least 2 and synth_speckle_var non-negative".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_fix_geometry() {
        let c = RunConfig::parse("preset=prototype2mm300\n").unwrap();
        assert_eq!((c.fov_mm, c.samples), (2.0, 300));
        assert!((c.mm_per_px() - 2.0 / 300.0).abs() < 1e-15);
        let o = RunConfig::parse("preset=optovue3mm304\nfov_mm=3\n").unwrap();
        assert_eq!(o.samples, 304);
        assert!(RunConfig::parse("preset=zeiss3mm245\nsamples=300\n").is_err());
        let custom = RunConfig::parse("preset=custom\nfov_mm=6\nsamples=350\n").unwrap();
        assert_eq!(custom.samples, 350);
        assert!(RunConfig::parse("preset=custom\n").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        match RunConfig::parse("seed=3\n\nlearnng_rate=0.1\n") {
            Err(CliError::Config { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("learnng_rate"));
            }
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse("gamma=abc\n").is_err());
        assert!(RunConfig::parse("gamma=-1\n").is_err());
    }

    #[test]
    fn switches_and_architecture() {
        let c = RunConfig::parse("notch=off\nclahe_clip_limit=3\npatch_side=7\nlayers=conv3x3:1>2,relu,pool2,dense:8>2\n");
        let c = c.unwrap();
        assert!(c.preprocessing.notch.is_none());
        assert_eq!(c.preprocessing.clahe.unwrap().clip_limit, 3.0);
        assert_eq!(c.arch.patch_side(), 7);
        assert!(RunConfig::parse("patch_side=7\n").is_err());
    }

    #[test]
    fn preset_override() {
        let c = RunConfig::parse("").unwrap().with_preset(Preset::Optovue3mm304).unwrap();
        assert_eq!((c.fov_mm, c.samples), (3.0, 304));
    }
}
