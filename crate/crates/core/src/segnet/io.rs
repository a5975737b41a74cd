//! Model file layout:
//!
//! ```text
//! OCTANET1\n
//! version=1\n
//! patch_side=33\n
//! layers=conv5x5:1>16,relu,...\n
//! preprocessing=notch:1:4:0;clahe:8:8:2\n
//! mm_per_px=0.012244897959183673\n      (or `none`)
//! seed=42\n
//! params=64642\n
//! end\n
//! <params × f64 little-endian>
//! <CRC-32 little-endian of everything after the magic line>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::network::{Architecture, Network};
use super::{CnnModel, ModelMeta};
use crate::error::{Error, Result};
use crate::preprocess::Preprocessing;

pub const MODEL_MAGIC: &[u8] = b"OCTANET1\n";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &CnnModel, mut w: W) -> Result<()> {
    let net = &model.network;
    let mut body = String::new();
    body.push_str(&format!("version={MODEL_VERSION}\n"));
    body.push_str(&format!("patch_side={}\n", net.patch_side()));
    body.push_str(&format!("layers={}\n", net.arch().describe()));
    body.push_str(&format!("preprocessing={}\n", model.meta.preprocessing.describe()));
    match model.meta.mm_per_px {
        Some(s) => body.push_str(&format!("mm_per_px={s:?}\n")),
        None => body.push_str("mm_per_px=none\n"),
    }
    body.push_str(&format!("seed={}\n", model.meta.seed));
    body.push_str(&format!("params={}\nend\n", net.params().len()));
    let mut payload = body.into_bytes();
    payload.reserve(net.params().len() * 8 + 4);
    for p in net.params() {
        payload.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&payload);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&payload)?;
    w.write_all(&crc.to_le_bytes())?;
    Ok(())
}

pub fn save_model(model: &CnnModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_model(bytes: &[u8]) -> Result<CnnModel> {
    let rest = bytes
        .strip_prefix(MODEL_MAGIC)
        .ok_or_else(|| Error::ModelFormat("missing OCTANET1 magic".into()))?;
    let mut fields = std::collections::BTreeMap::new();
    let mut at = 0;
    loop {
        let nl = rest[at..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::ModelFormat("header is not terminated by `end`".into()))?;
        let line = std::str::from_utf8(&rest[at..at + nl])
            .map_err(|_| Error::ModelFormat("header is not valid UTF-8".into()))?;
        at += nl + 1;
        if line == "end" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::ModelFormat(format!("header line `{line}` is not key=value")))?;
        if fields.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::ModelFormat(format!("duplicate header key `{k}`")));
        }
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| Error::ModelFormat(format!("header lacks `{k}`")));
    let num = |k: &str| -> Result<u64> {
        get(k)?.parse().map_err(|_| Error::ModelFormat(format!("header `{k}` is not an integer")))
    };
    let version = num("version")?;
    if version != MODEL_VERSION as u64 {
        return Err(Error::VersionMismatch { found: version as u32, supported: MODEL_VERSION });
    }
    let n = num("params")? as usize;
    let expected = at + n * 8 + 4;
    if rest.len() < expected {
        return Err(Error::Truncated { expected: expected + MODEL_MAGIC.len(), found: bytes.len() });
    }
    if rest.len() > expected {
        return Err(Error::ModelFormat(format!("{} trailing bytes after checksum", rest.len() - expected)));
    }
    let payload = &rest[..at + n * 8];
    let stored = u32::from_le_bytes(rest[at + n * 8..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let patch_side = num("patch_side")? as usize;
    let arch = Architecture::parse(patch_side, get("layers")?)?;
    let params = payload[at..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let network = Network::from_params(arch, params)?;
    let preprocessing = Preprocessing::parse(get("preprocessing")?)?;
    let mm_per_px = match get("mm_per_px")?.as_str() {
        "none" => None,
        s => Some(
            s.parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(|| Error::ModelFormat(format!("invalid mm_per_px `{s}`")))?,
        ),
    };
    let seed = num("seed")?;
    let known = ["version", "patch_side", "layers", "preprocessing", "mm_per_px", "seed", "params"];
    if let Some(k) = fields.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::ModelFormat(format!("unknown header key `{k}`")));
    }
    Ok(CnnModel { network, meta: ModelMeta { preprocessing, mm_per_px, seed } })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CnnModel> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    read_model(&fs::read(path)?)
}

/// Loads a model and checks it classifies `patch_side`² patches.
pub fn load_model_for(path: impl AsRef<Path>, patch_side: usize) -> Result<CnnModel> {
    let model = load_model(path)?;
    if model.network.patch_side() != patch_side {
        return Err(Error::Shape(format!(
            "model classifies {0}x{0} patches, expected {1}x{1}",
            model.network.patch_side(),
            patch_side
        )));
    }
    Ok(model)
}
