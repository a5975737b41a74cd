use std::fmt;
use std::str::FromStr;

use super::FazMetrics;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "id,cohort,rater,area_mm2,d_min_mm,d_max_mm,eccentricity,density";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rater {
    Manual,
    Automated,
}

impl fmt::Display for Rater {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rater::Manual => "manual",
            Rater::Automated => "automated",
        })
    }
}

impl FromStr for Rater {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(Rater::Manual),
            "automated" => Ok(Rater::Automated),
            _ => Err(Error::arg(format!("rater must be `manual` or `automated`, got `{s}`"))),
        }
    }
}

/// One eye measured by one rater. Diameter fields are empty when the
/// centroid fell outside the FAZ.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub id: String,
    pub cohort: String,
    pub rater: Rater,
    pub area_mm2: f64,
    pub d_min_mm: Option<f64>,
    pub d_max_mm: Option<f64>,
    pub eccentricity: Option<f64>,
    pub density: f64,
}

impl MetricsRow {
    pub fn from_metrics(id: &str, cohort: &str, rater: Rater, m: &FazMetrics) -> Self {
        Self {
            id: id.into(),
            cohort: cohort.into(),
            rater,
            area_mm2: m.area_mm2,
            d_min_mm: Some(m.d_min_mm),
            d_max_mm: Some(m.d_max_mm),
            eccentricity: Some(m.eccentricity),
            density: m.vessel_density,
        }
    }
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn check_text(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains([',', '\n', '\r']) {
        return Err(Error::arg(format!("{what} `{s}` must be non-empty and free of commas and newlines")));
    }
    Ok(())
}

/// Header plus one line per row, in the given order.
pub fn render_metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        check_text(&r.id, "eye id")?;
        check_text(&r.cohort, "cohort")?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.id,
            r.cohort,
            r.rater,
            r.area_mm2,
            field(r.d_min_mm),
            field(r.d_max_mm),
            field(r.eccentricity),
            r.density
        ));
    }
    Ok(out)
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == METRICS_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse { line: 1, message: format!("expected header `{METRICS_HEADER}`, found `{h}`") })
        }
        None => return Err(Error::Parse { line: 1, message: "empty metrics file".into() }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: line_no, message };
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", f.len())));
        }
        let num = |s: &str, name: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("{name} `{s}` is not a finite number")))
        };
        let opt = |s: &str, name: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, name).map(Some)
            }
        };
        if f[0].is_empty() || f[1].is_empty() {
            return Err(bad("id and cohort must be non-empty".into()));
        }
        let row = MetricsRow {
            id: f[0].into(),
            cohort: f[1].into(),
            rater: f[2].parse().map_err(|e: Error| bad(e.to_string()))?,
            area_mm2: num(f[3], "area_mm2")?,
            d_min_mm: opt(f[4], "d_min_mm")?,
            d_max_mm: opt(f[5], "d_max_mm")?,
            eccentricity: opt(f[6], "eccentricity")?,
            density: num(f[7], "density")?,
        };
        if row.area_mm2 < 0.0 || !(0.0..=1.0).contains(&row.density) {
            return Err(bad("area must be non-negative and density within [0,1]".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, rater: Rater, d: Option<f64>) -> MetricsRow {
        MetricsRow {
            id: id.into(),
            cohort: "healthy".into(),
            rater,
            area_mm2: 0.1 + 0.2,
            d_min_mm: d,
            d_max_mm: d.map(|v| v * 2.0),
            eccentricity: d.map(|_| 0.75),
            density: 0.513,
        }
    }

    #[test]
    fn round_trips_exactly() {
        let rows = vec![row("e1", Rater::Manual, Some(0.123456789)), row("e1", Rater::Automated, None)];
        let text = render_metrics_csv(&rows).unwrap();
        assert!(text.starts_with(METRICS_HEADER));
        assert_eq!(parse_metrics_csv(&text).unwrap(), rows);
    }

    #[test]
    fn reports_line_numbers() {
        let text = format!("{METRICS_HEADER}\ne1,healthy,manual,0.3,0.5,0.6,0.5,0.5\ne2,healthy,robot,0.3,,,,0.5\n");
        match parse_metrics_csv(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_metrics_csv("a,b\n"), Err(Error::Parse { line: 1, .. })));
        let short = format!("{METRICS_HEADER}\ne1,healthy,manual,0.3\n");
        assert!(matches!(parse_metrics_csv(&short), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn rejects_commas_in_ids() {
        assert!(render_metrics_csv(&[row("a,b", Rater::Manual, None)]).is_err());
    }
}
