//! Paired and Welch t-tests, ICC(A,1), and the Table-style cohort report.
//!
//! p-values come from a regularized incomplete beta function evaluated by
//! Lentz's continued fraction, with a Lanczos log-gamma.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::morphometry::{MetricsRow, Rater};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student t cumulative distribution. NaN when `df <= 0` or `t` is NaN.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if !(df > 0.0) || t.is_nan() {
        return f64::NAN;
    }
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-tailed p-value `P(|T| ≥ |t|)`.
pub fn two_tailed_p(t: f64, df: f64) -> f64 {
    inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub t: f64,
    pub df: f64,
    /// Two-tailed.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedSample {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::arg(format!("paired vectors differ in length: {} vs {}", a.len(), b.len())));
        }
        if a.len() < 2 {
            return Err(Error::arg("a paired sample needs at least two pairs"));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::arg("paired sample contains a non-finite value"));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn swapped(&self) -> Self {
        Self { a: self.b.clone(), b: self.a.clone() }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with the `n − 1` denominator.
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn paired_t(s: &PairedSample) -> Result<TestResult> {
    let d: Vec<f64> = s.a.iter().zip(&s.b).map(|(a, b)| a - b).collect();
    let var = sample_variance(&d);
    if var <= 0.0 {
        return Err(Error::Degenerate("paired differences have zero variance".into()));
    }
    let n = d.len() as f64;
    let t = mean(&d) / (var / n).sqrt();
    let df = n - 1.0;
    Ok(TestResult { t, df, p_value: two_tailed_p(t, df) })
}

pub fn welch_t(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::arg("Welch's test needs at least two values per group"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::arg("Welch sample contains a non-finite value"));
    }
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (vx, vy) = (sample_variance(x) / nx, sample_variance(y) / ny);
    if vx + vy <= 0.0 {
        return Err(Error::Degenerate("both groups have zero variance".into()));
    }
    let t = (mean(x) - mean(y)) / (vx + vy).sqrt();
    let df = (vx + vy).powi(2) / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
    Ok(TestResult { t, df, p_value: two_tailed_p(t, df) })
}

/// Two-way, single-measure, absolute-agreement ICC with two raters.
pub fn icc(s: &PairedSample) -> Result<f64> {
    let n = s.len() as f64;
    let k = 2.0;
    let gm = (s.a.iter().sum::<f64>() + s.b.iter().sum::<f64>()) / (n * k);
    let (ma, mb) = (mean(&s.a), mean(&s.b));
    let mut ss_rows = 0.0;
    let mut ss_err = 0.0;
    let mut ss_total = 0.0;
    for (&a, &b) in s.a.iter().zip(&s.b) {
        let row = (a + b) / 2.0;
        ss_rows += k * (row - gm).powi(2);
        ss_err += (a - row - ma + gm).powi(2) + (b - row - mb + gm).powi(2);
        ss_total += (a - gm).powi(2) + (b - gm).powi(2);
    }
    if ss_total <= 0.0 {
        return Err(Error::Degenerate("ICC undefined: all values are equal".into()));
    }
    let ss_cols = n * ((ma - gm).powi(2) + (mb - gm).powi(2));
    let ms_r = ss_rows / (n - 1.0);
    let ms_c = ss_cols / (k - 1.0);
    let ms_e = ss_err / ((n - 1.0) * (k - 1.0));
    let denom = ms_r + (k - 1.0) * ms_e + k / n * (ms_c - ms_e);
    if denom <= 0.0 {
        return Err(Error::Degenerate("ICC undefined: no between-subject or rater variance".into()));
    }
    Ok((ms_r - ms_e) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AreaMm2,
    DMinMm,
    DMaxMm,
    Eccentricity,
    Density,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::AreaMm2, Metric::DMinMm, Metric::DMaxMm, Metric::Eccentricity, Metric::Density];

    pub fn label(self) -> &'static str {
        match self {
            Metric::AreaMm2 => "FAZ Area (mm2)",
            Metric::DMinMm => "Min Diameter (mm)",
            Metric::DMaxMm => "Max Diameter (mm)",
            Metric::Eccentricity => "Eccentricity",
            Metric::Density => "Vessel Density",
        }
    }

    pub fn of(self, r: &MetricsRow) -> Option<f64> {
        match self {
            Metric::AreaMm2 => Some(r.area_mm2),
            Metric::DMinMm => r.d_min_mm,
            Metric::DMaxMm => r.d_max_mm,
            Metric::Eccentricity => r.eccentricity,
            Metric::Density => Some(r.density),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    fn of(v: &[f64]) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::arg(format!("a summary cell needs at least two values, found {}", v.len())));
        }
        Ok(Self { n: v.len(), mean: mean(v), sd: sample_variance(v).sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricAgreement {
    pub metric: Metric,
    pub manual: Summary,
    pub automated: Summary,
    /// `None` when the manual−automated differences have zero variance.
    pub paired_t: Option<TestResult>,
    pub icc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortBlock {
    pub cohort: String,
    pub n_eyes: usize,
    pub metrics: Vec<MetricAgreement>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub metric: Metric,
    pub first: Summary,
    pub second: Summary,
    pub welch: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonBlock {
    pub first: String,
    pub second: String,
    pub rater: String,
    pub metrics: Vec<GroupComparison>,
}

pub const REPORT_SCHEMA: &str = "octafaz-cohort-report/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortReport {
    pub schema: String,
    pub icc_model: String,
    pub tails: String,
    pub sd: String,
    pub cohorts: Vec<CohortBlock>,
    pub comparisons: Vec<ComparisonBlock>,
}

/// Pairs each `…healthy` cohort with the `…diabetic` cohort of the same
/// prefix, in order of first appearance.
pub fn default_comparisons(cohorts: &[String]) -> Vec<(String, String)> {
    cohorts
        .iter()
        .filter_map(|c| {
            let prefix = c.strip_suffix("healthy")?;
            let other = format!("{prefix}diabetic");
            cohorts.contains(&other).then(|| (c.clone(), other))
        })
        .collect()
}

type Eye<'a> = (Option<&'a MetricsRow>, Option<&'a MetricsRow>);

/// Groups rows by cohort in first-appearance order and pairs raters per eye.
fn pair_rows(rows: &[MetricsRow]) -> Result<Vec<(String, Vec<(String, &MetricsRow, &MetricsRow)>)>> {
    let mut order: Vec<String> = Vec::new();
    let mut eyes: BTreeMap<(String, String), Eye> = BTreeMap::new();
    let mut eye_order: Vec<(String, String)> = Vec::new();
    for r in rows {
        if !order.contains(&r.cohort) {
            order.push(r.cohort.clone());
        }
        let key = (r.cohort.clone(), r.id.clone());
        let slot = eyes.entry(key.clone()).or_insert_with(|| {
            eye_order.push(key.clone());
            (None, None)
        });
        let target = match r.rater {
            Rater::Manual => &mut slot.0,
            Rater::Automated => &mut slot.1,
        };
        if target.is_some() {
            return Err(Error::Pairing(format!("eye `{}` has two {} rows", r.id, r.rater)));
        }
        *target = Some(r);
    }
    let mut out: Vec<(String, Vec<(String, &MetricsRow, &MetricsRow)>)> = order.iter().map(|c| (c.clone(), Vec::new())).collect();
    for key in eye_order {
        let (m, a) = eyes[&key];
        let (Some(m), Some(a)) = (m, a) else {
            let missing = if m.is_none() { Rater::Manual } else { Rater::Automated };
            return Err(Error::Pairing(format!("eye `{}` has no {missing} row", key.1)));
        };
        out.iter_mut().find(|(c, _)| *c == key.0).expect("cohort recorded").1.push((key.1, m, a));
    }
    Ok(out)
}

/// Mean ± SD per cohort and rater, paired t and ICC between raters, and
/// Welch's test on automated rows for each `(first, second)` comparison.
/// Eyes without diameters drop out of the diameter and eccentricity cells.
pub fn cohort_summary(rows: &[MetricsRow], comparisons: &[(String, String)]) -> Result<CohortReport> {
    let cohorts = pair_rows(rows)?;
    let mut blocks = Vec::new();
    for (cohort, eyes) in &cohorts {
        let mut metrics = Vec::new();
        for m in Metric::ALL {
            let (ma, au): (Vec<f64>, Vec<f64>) =
                eyes.iter().filter_map(|(_, man, aut)| Some((m.of(man)?, m.of(aut)?))).unzip();
            let manual = Summary::of(&ma).map_err(|e| Error::arg(format!("cohort `{cohort}`, {m:?}: {e}")))?;
            let automated = Summary::of(&au)?;
            let sample = PairedSample::new(ma, au)?;
            metrics.push(MetricAgreement {
                metric: m,
                manual,
                automated,
                paired_t: paired_t(&sample).ok(),
                icc: icc(&sample).ok(),
            });
        }
        blocks.push(CohortBlock { cohort: cohort.clone(), n_eyes: eyes.len(), metrics });
    }
    let mut comps = Vec::new();
    for (first, second) in comparisons {
        let automated = |c: &str| -> Result<&Vec<(String, &MetricsRow, &MetricsRow)>> {
            cohorts
                .iter()
                .find(|(name, _)| name == c)
                .map(|(_, e)| e)
                .ok_or_else(|| Error::arg(format!("no rows for cohort `{c}`")))
        };
        let (ea, eb) = (automated(first)?, automated(second)?);
        let mut metrics = Vec::new();
        for m in Metric::ALL {
            let xa: Vec<f64> = ea.iter().filter_map(|(_, _, a)| m.of(a)).collect();
            let xb: Vec<f64> = eb.iter().filter_map(|(_, _, a)| m.of(a)).collect();
            metrics.push(GroupComparison {
                metric: m,
                first: Summary::of(&xa)?,
                second: Summary::of(&xb)?,
                welch: welch_t(&xa, &xb).ok(),
            });
        }
        comps.push(ComparisonBlock { first: first.clone(), second: second.clone(), rater: "automated".into(), metrics });
    }
    Ok(CohortReport {
        schema: REPORT_SCHEMA.into(),
        icc_model: "two-way, single-measure, absolute agreement ICC(A,1), k = 2 raters".into(),
        tails: "two-tailed".into(),
        sd: "sample standard deviation (n - 1)".into(),
        cohorts: blocks,
        comparisons: comps,
    })
}

impl CohortReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned text table with one block per cohort, mirroring the
    /// Manual / Automated / T-test / ICC row layout.
    pub fn to_table(&self) -> String {
        const FIRST: usize = 24;
        const COL: usize = 20;
        let mut out = format!("{:FIRST$}", "");
        for m in Metric::ALL {
            out.push_str(&format!("{:>COL$}", m.label()));
        }
        out.push('\n');
        let line = |label: &str, cells: Vec<String>| {
            let mut s = format!("{label:FIRST$}");
            for c in cells {
                s.push_str(&format!("{c:>COL$}"));
            }
            s.push('\n');
            s
        };
        let ms = |s: &Summary| format!("{:.3} ± {:.3}", s.mean, s.sd);
        let p = |t: &Option<TestResult>| t.map(|t| format!("p = {:.2}", t.p_value)).unwrap_or_else(|| "degenerate".into());
        for b in &self.cohorts {
            out.push_str(&format!("{} (n = {})\n", b.cohort, b.n_eyes));
            out.push_str(&line("  Manual", b.metrics.iter().map(|m| ms(&m.manual)).collect()));
            out.push_str(&line("  Automated", b.metrics.iter().map(|m| ms(&m.automated)).collect()));
            out.push_str(&line("  T-test", b.metrics.iter().map(|m| p(&m.paired_t)).collect()));
            out.push_str(&line(
                "  ICC",
                b.metrics.iter().map(|m| m.icc.map(|v| format!("{v:.2}")).unwrap_or_else(|| "undefined".into())).collect(),
            ));
        }
        for c in &self.comparisons {
            out.push_str(&format!("{} vs {} ({}, Welch)\n", c.first, c.second, c.rater));
            out.push_str(&line("  Welch t-test", c.metrics.iter().map(|m| p(&m.welch)).collect()));
        }
        out
    }
}
