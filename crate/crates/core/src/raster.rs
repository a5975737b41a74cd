//! Image and mask containers, netpbm I/O, physical scale and patch extraction.
//!
//! Grayscale rasters are stored row-major as `f64` in `[0, 1]`. Files are
//! binary PGM (`P5`) with maxval 255 or 65535; masks use the same format with
//! values `{0, 255}`. Colour output (overlays) is binary PPM (`P6`).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Scalar raster with values in `[0, 1]` and an optional physical pixel pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    scale_mm_per_px: Option<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg(format!("pixel {i} has value {} outside [0,1]", data[i])));
        }
        Ok(Self { width, height, data, scale_mm_per_px: None })
    }

    /// Builds an image by evaluating `f(x, y)` and clamping into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(clamp_unit(f(x, y)));
            }
        }
        Self::new(width, height, data)
    }

    /// Clamps arbitrary values (NaN becomes 0) into `[0, 1]`.
    pub fn from_clamped(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(width, height, data.into_iter().map(clamp_unit).collect())
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn with_scale(mut self, mm_per_px: f64) -> Result<Self> {
        if !(mm_per_px > 0.0 && mm_per_px.is_finite()) {
            return Err(Error::arg(format!("pixel scale must be positive, got {mm_per_px}")));
        }
        self.scale_mm_per_px = Some(mm_per_px);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn scale_mm_per_px(&self) -> Option<f64> {
        self.scale_mm_per_px
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Applies `f` per pixel and clamps the result; keeps the pixel scale.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| clamp_unit(f(v))).collect(),
            scale_mm_per_px: self.scale_mm_per_px,
        }
    }

    pub(crate) fn with_data_like(&self, data: Vec<f64>) -> GrayImage {
        debug_assert_eq!(data.len(), self.data.len());
        GrayImage {
            width: self.width,
            height: self.height,
            data: data.into_iter().map(clamp_unit).collect(),
            scale_mm_per_px: self.scale_mm_per_px,
        }
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Measured-area mask. `true` marks pixels that take part in analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    width: usize,
    height: usize,
    included: Vec<bool>,
}

impl RoiMask {
    pub fn new(width: usize, height: usize, included: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || included.len() != width * height {
            return Err(Error::Shape(format!(
                "roi of {} entries does not match {width}x{height}",
                included.len()
            )));
        }
        if !included.iter().any(|&b| b) {
            return Err(Error::arg("roi must include at least one pixel"));
        }
        Ok(Self { width, height, included })
    }

    pub fn full(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "roi dimensions must be positive");
        Self { width, height, included: vec![true; width * height] }
    }

    /// Full ROI with an axis-aligned rectangle excluded (e.g. a vendor icon).
    pub fn excluding_rect(width: usize, height: usize, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        let mut included = vec![true; width * height];
        for y in y0..(y0 + h).min(height) {
            for x in x0..(x0 + w).min(width) {
                included[y * width + x] = false;
            }
        }
        Self::new(width, height, included)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.included[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.included
    }

    pub fn count(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }
}

/// Per-pixel vessel labels restricted to an ROI. Labels outside the ROI are
/// stored as `false` and never counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    vessel: Vec<bool>,
    roi: RoiMask,
}

impl BinaryMask {
    pub fn new(vessel: Vec<bool>, roi: RoiMask) -> Result<Self> {
        if vessel.len() != roi.width * roi.height {
            return Err(Error::Shape(format!(
                "mask of {} entries does not match roi {}x{}",
                vessel.len(),
                roi.width,
                roi.height
            )));
        }
        let vessel = vessel.into_iter().zip(&roi.included).map(|(v, &r)| v && r).collect();
        Ok(Self { vessel, roi })
    }

    pub fn from_fn(roi: RoiMask, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let (w, h) = roi.dims();
        let mut vessel = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                vessel.push(roi.contains(x, y) && f(x, y));
            }
        }
        Self { vessel, roi }
    }

    pub fn width(&self) -> usize {
        self.roi.width
    }

    pub fn height(&self) -> usize {
        self.roi.height
    }

    pub fn dims(&self) -> (usize, usize) {
        self.roi.dims()
    }

    pub fn roi(&self) -> &RoiMask {
        &self.roi
    }

    #[inline]
    pub fn is_vessel(&self, x: usize, y: usize) -> bool {
        self.vessel[y * self.roi.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.vessel
    }

    pub fn vessel_count(&self) -> usize {
        self.vessel.iter().filter(|&&b| b).count()
    }
}

/// 8-bit RGB raster used for annotated overlays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn from_gray(img: &GrayImage) -> Self {
        let data = img.data().iter().map(|&v| [quantize8(v); 3]).collect();
        Self { width: img.width(), height: img.height(), data }
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            self.data[y * self.width + x] = rgb;
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }
}

/// Bit depth used when writing PGM files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

#[inline]
pub(crate) fn quantize8(v: f64) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

/// Millimetres per pixel for a field of view sampled at `samples` positions.
pub fn pixel_scale(fov_mm: f64, samples: usize) -> Result<f64> {
    if !(fov_mm > 0.0 && fov_mm.is_finite()) {
        return Err(Error::arg(format!("field of view must be positive, got {fov_mm}")));
    }
    if samples == 0 {
        return Err(Error::arg("sample count must be at least 1"));
    }
    Ok(fov_mm / samples as f64)
}

/// Half-sample symmetric reflection of `i` into `0..n` (`-1 -> 0`, `n -> n-1`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Extracts the `k`×`k` neighbourhood centred on `(cx, cy)`, row-major,
/// with out-of-bounds samples mirrored about the image border.
pub fn extract_patch(img: &GrayImage, cx: usize, cy: usize, k: usize) -> Result<Vec<f64>> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::arg(format!("patch side must be odd and >= 3, got {k}")));
    }
    if cx >= img.width() || cy >= img.height() {
        return Err(Error::arg(format!(
            "patch centre ({cx},{cy}) outside {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let half = (k / 2) as isize;
    let mut out = Vec::with_capacity(k * k);
    for dy in -half..=half {
        let y = reflect_index(cy as isize + dy, img.height());
        let row = &img.data()[y * img.width()..(y + 1) * img.width()];
        for dx in -half..=half {
            out.push(row[reflect_index(cx as isize + dx, img.width())]);
        }
    }
    Ok(out)
}

/// Mirror-pads an image by `pad` pixels on every side (same reflection as
/// [`extract_patch`]). Returns the padded data and its width.
pub fn mirror_pad(img: &GrayImage, pad: usize) -> (Vec<f64>, usize) {
    let pw = img.width() + 2 * pad;
    let ph = img.height() + 2 * pad;
    let mut out = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        let y = reflect_index(py as isize - pad as isize, img.height());
        for px in 0..pw {
            let x = reflect_index(px as isize - pad as isize, img.width());
            out.push(img.get(x, y));
        }
    }
    (out, pw)
}

// ---------------------------------------------------------------------------
// PGM / PPM
// ---------------------------------------------------------------------------

fn read_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            if tok.is_empty() {
                return Err(Error::MalformedHeader("unexpected end of header".into()));
            }
            break;
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut comment = Vec::new();
            r.read_until(b'\n', &mut comment)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    String::from_utf8(tok).map_err(|_| Error::MalformedHeader("non-ascii header token".into()))
}

fn parse_header_number<R: BufRead>(r: &mut R, what: &str) -> Result<usize> {
    let tok = read_token(r)?;
    tok.parse::<usize>()
        .map_err(|_| Error::MalformedHeader(format!("invalid {what} `{tok}`")))
}

/// Decodes a binary PGM stream.
pub fn read_gray<R: Read>(reader: R) -> Result<GrayImage> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 2];
    r.read_exact(&mut magic)
        .map_err(|_| Error::MalformedHeader("missing magic number".into()))?;
    match &magic {
        b"P5" => {}
        [b'P', d] if d.is_ascii_digit() => {
            return Err(Error::UnsupportedFormat(format!("P{} (only binary P5 graymaps are read)", *d as char)))
        }
        _ => return Err(Error::MalformedHeader("bad magic number".into())),
    }
    let width = parse_header_number(&mut r, "width")?;
    let height = parse_header_number(&mut r, "height")?;
    let maxval = parse_header_number(&mut r, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    let bytes_per = match maxval {
        255 => 1,
        65535 => 2,
        other => return Err(Error::UnsupportedFormat(format!("maxval {other} (expected 255 or 65535)"))),
    };
    let expected = width * height * bytes_per;
    let mut payload = Vec::with_capacity(expected);
    r.take(expected as u64).read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(Error::Truncated { expected, found: payload.len() });
    }
    let data = if bytes_per == 1 {
        payload.iter().map(|&b| b as f64 / 255.0).collect()
    } else {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect()
    };
    GrayImage::new(width, height, data)
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    read_gray(file)
}

pub fn write_gray<W: Write>(img: &GrayImage, depth: BitDepth, mut w: W) -> Result<()> {
    let maxval = match depth {
        BitDepth::Eight => 255,
        BitDepth::Sixteen => 65535,
    };
    write!(w, "P5\n{} {}\n{}\n", img.width(), img.height(), maxval)?;
    match depth {
        BitDepth::Eight => {
            let bytes: Vec<u8> = img.data().iter().map(|&v| quantize8(v)).collect();
            w.write_all(&bytes)?;
        }
        BitDepth::Sixteen => {
            let mut bytes = Vec::with_capacity(img.data().len() * 2);
            for &v in img.data() {
                let q = (clamp_unit(v) * 65535.0).round() as u16;
                bytes.extend_from_slice(&q.to_be_bytes());
            }
            w.write_all(&bytes)?;
        }
    }
    Ok(())
}

pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let mut buf = Vec::new();
    write_gray(img, depth, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Writes a mask as PGM: vessel 255, everything else 0.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let data = mask.as_slice().iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let img = GrayImage::new(mask.width(), mask.height(), data)?;
    save_gray(&img, path, BitDepth::Eight)
}

/// Reads a mask PGM (`> 0.5` is vessel) and restricts it to `roi`.
pub fn load_mask(path: impl AsRef<Path>, roi: &RoiMask) -> Result<BinaryMask> {
    let img = load_gray(path)?;
    if img.dims() != roi.dims() {
        return Err(Error::Shape(format!(
            "mask is {}x{}, roi is {}x{}",
            img.width(),
            img.height(),
            roi.width(),
            roi.height()
        )));
    }
    BinaryMask::new(img.data().iter().map(|&v| v > 0.5).collect(), roi.clone())
}

/// Reads an ROI PGM: non-zero pixels are included.
pub fn load_roi(path: impl AsRef<Path>) -> Result<RoiMask> {
    let img = load_gray(path)?;
    RoiMask::new(img.width(), img.height(), img.data().iter().map(|&v| v > 0.5).collect())
}

pub fn save_roi(roi: &RoiMask, path: impl AsRef<Path>) -> Result<()> {
    let data = roi.as_slice().iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    save_gray(&GrayImage::new(roi.width(), roi.height(), data)?, path, BitDepth::Eight)
}

pub fn write_ppm<W: Write>(img: &RgbImage, mut w: W) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.data.iter().flat_map(|p| p.iter().copied()).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn save_ppm(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_ppm(img, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sidecar metadata
// ---------------------------------------------------------------------------

/// `key=value` sidecar stored next to an image as `<stem>.meta`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    pub fov_mm: Option<f64>,
    pub device: Option<String>,
    pub eye_id: Option<String>,
    pub cohort: Option<String>,
}

impl Sidecar {
    pub fn path_for(image: &Path) -> PathBuf {
        image.with_extension("meta")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Sidecar::default();
        for (lineno, kv) in parse_key_values(text)? {
            let (key, value) = kv;
            match key.as_str() {
                "fov_mm" => {
                    let v: f64 = value.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("invalid fov_mm `{value}`"),
                    })?;
                    out.fov_mm = Some(v);
                }
                "device" => out.device = Some(value),
                "eye_id" => out.eye_id = Some(value),
                "cohort" => out.cohort = Some(value),
                other => {
                    return Err(Error::Parse { line: lineno, message: format!("unknown sidecar key `{other}`") })
                }
            }
        }
        Ok(out)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        if let Some(v) = self.fov_mm {
            s.push_str(&format!("fov_mm={v}\n"));
        }
        for (k, v) in [("device", &self.device), ("eye_id", &self.eye_id), ("cohort", &self.cohort)] {
            if let Some(v) = v {
                s.push_str(&format!("{k}={v}\n"));
            }
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments. Returns
/// `(line number, (key, value))` in file order; duplicate keys are rejected.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, (String, String))>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key=value, got `{line}`"),
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if seen.insert(k.clone(), i + 1).is_some() {
            return Err(Error::Parse { line: i + 1, message: format!("duplicate key `{k}`") });
        }
        out.push((i + 1, (k, v)));
    }
    Ok(out)
}
