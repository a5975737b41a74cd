//! Dataset manifest: `eye_id,cohort,image_path,manual_mask_path[,roi_path]`.
//!
//! Relative paths resolve against the manifest's directory. A first line
//! starting with `eye_id` is a header; blank lines and `#` comments are
//! skipped.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub const MANIFEST_HEADER: &str = "eye_id,cohort,image_path,manual_mask_path,roi_path";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub eye_id: String,
    pub cohort: String,
    pub image: PathBuf,
    pub manual_mask: PathBuf,
    pub roi: Option<PathBuf>,
}

/// Entries sorted by eye id.
pub fn parse(text: &str, base: &Path) -> CliResult<Vec<Entry>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') || (out.is_empty() && t.starts_with("eye_id")) {
            continue;
        }
        let f: Vec<&str> = t.split(',').map(str::trim).collect();
        if !(4..=5).contains(&f.len()) || f[..4].iter().any(|s| s.is_empty()) {
            return Err(CliError::Manifest {
                line,
                message: format!("expected eye_id,cohort,image_path,manual_mask_path[,roi_path], got `{t}`"),
            });
        }
        if !seen.insert(f[0].to_string()) {
            return Err(CliError::Manifest { line, message: format!("duplicate eye id `{}`", f[0]) });
        }
        let path = |s: &str| base.join(s);
        out.push(Entry {
            eye_id: f[0].into(),
            cohort: f[1].into(),
            image: path(f[2]),
            manual_mask: path(f[3]),
            roi: f.get(4).filter(|s| !s.is_empty()).map(|s| path(s)),
        });
    }
    if out.is_empty() {
        return Err(CliError::Manifest { line: 0, message: "manifest lists no eyes".into() });
    }
    out.sort_by(|a, b| a.eye_id.cmp(&b.eye_id));
    Ok(out)
}

pub fn load(path: &Path) -> CliResult<Vec<Entry>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Manifest text with paths written relative to the manifest's directory.
pub fn render(entries: &[(String, String, String, String)]) -> String {
    let mut s = format!("{MANIFEST_HEADER}\n");
    for (id, cohort, image, mask) in entries {
        s.push_str(&format!("{id},{cohort},{image},{mask},\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_sorts() {
        let text = "eye_id,cohort,image_path,manual_mask_path,roi_path\n# c\nb,healthy,img/b.pgm,gt/b.pgm\na,diabetic,img/a.pgm,gt/a.pgm,roi/a.pgm\n";
        let e = parse(text, Path::new("/data")).unwrap();
        assert_eq!(e[0].eye_id, "a");
        assert_eq!(e[0].roi.as_deref(), Some(Path::new("/data/roi/a.pgm")));
        assert_eq!(e[1].image, PathBuf::from("/data/img/b.pgm"));
        assert!(e[1].roi.is_none());
    }

    #[test]
    fn reports_bad_lines() {
        match parse("a,h,x.pgm\n", Path::new(".")) {
            Err(CliError::Manifest { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(parse("a,h,x,y\na,h,x,y\n", Path::new(".")).is_err());
        assert!(parse("\n", Path::new(".")).is_err());
    }

    #[test]
    fn render_round_trips() {
        let text = render(&[("e1".into(), "healthy".into(), "images/e1.pgm".into(), "truth/e1.pgm".into())]);
        let e = parse(&text, Path::new("/m")).unwrap();
        assert_eq!(e[0].manual_mask, PathBuf::from("/m/truth/e1.pgm"));
        assert!(e[0].roi.is_none());
    }
}
