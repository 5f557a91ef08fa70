//! Convergence records and their CSV / JSON-lines output.

use super::config::Experiment;
use crate::error::Result;
use num_complex::Complex64;
use serde::Serialize;
use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str =
    "experiment,d,r,alpha_id,value_re,value_im,limit_re,limit_im,abs_dev,rel_dev,tail_est,seconds";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: Experiment,
    pub d: usize,
    pub r: f64,
    pub alpha_id: String,
    /// Coupling, for the λ-sweep only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub value_re: f64,
    pub value_im: f64,
    pub limit_re: f64,
    pub limit_im: f64,
    pub abs_dev: f64,
    pub rel_dev: f64,
    pub tail_est: f64,
    pub seconds: f64,
}

impl Row {
    /// Deviations are taken against the limit; `scale` replaces `|limit|`
    /// as the denominator of the relative deviation when given.
    pub fn new(
        experiment: Experiment,
        d: usize,
        r: f64,
        alpha_id: &str,
        value: Complex64,
        limit: Complex64,
        scale: Option<f64>,
        tail: f64,
        seconds: f64,
    ) -> Self {
        let abs_dev = (value - limit).norm();
        let denom = scale.unwrap_or_else(|| limit.norm());
        Self {
            experiment,
            d,
            r,
            alpha_id: alpha_id.to_string(),
            lambda: None,
            value_re: value.re,
            value_im: value.im,
            limit_re: limit.re,
            limit_im: limit.im,
            abs_dev,
            rel_dev: if denom > 0.0 { abs_dev / denom } else { f64::INFINITY },
            tail_est: tail,
            seconds,
        }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.value_re, self.value_im)
    }

    pub fn limit(&self) -> Complex64 {
        Complex64::new(self.limit_re, self.limit_im)
    }
}

/// Least-squares slope of `log y` against `log x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
}

pub fn log_log_fit(name: &str, pts: &[(f64, f64)]) -> Fit {
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Fit {
        name: name.to_string(),
        slope,
        intercept: my - slope * mx,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub observed: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Verdict {
    /// `observed ≤ threshold`.
    pub fn at_most(check: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            observed,
            threshold,
            passed: observed <= threshold,
        }
    }

    /// `observed ≥ threshold`.
    pub fn at_least(check: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            observed,
            threshold,
            passed: observed >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// The input lies outside the hypotheses; no pass/fail is given.
    Excluded(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub experiment: Experiment,
    pub rows: Vec<Row>,
    pub fits: Vec<Fit>,
    pub verdicts: Vec<Verdict>,
    pub status: Status,
}

impl ConvergenceRecord {
    pub fn empty(experiment: Experiment) -> Self {
        Self {
            experiment,
            rows: Vec::new(),
            fits: Vec::new(),
            verdicts: Vec::new(),
            status: Status::Pass,
        }
    }

    pub fn excluded(experiment: Experiment, reason: impl Into<String>) -> Self {
        Self {
            status: Status::Excluded(reason.into()),
            ..Self::empty(experiment)
        }
    }

    /// Rows by `r` descending, then `λ` ascending; ties keep their order.
    pub fn sort_rows(&mut self) {
        self.rows.sort_by(|a, b| {
            b.r.partial_cmp(&a.r)
                .unwrap_or(Ordering::Equal)
                .then(a.lambda.partial_cmp(&b.lambda).unwrap_or(Ordering::Equal))
        });
    }

    /// Set the status from the verdicts (excluded records stay excluded).
    pub fn settle(&mut self) {
        if matches!(self.status, Status::Excluded(_)) {
            return;
        }
        self.status = if self.verdicts.iter().all(|v| v.passed) {
            Status::Pass
        } else {
            Status::Fail
        };
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn fit(&self, name: &str) -> Option<&Fit> {
        self.fits.iter().find(|f| f.name == name)
    }

    pub fn verdict(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

/// Fixed-width scientific notation, so equal values give equal bytes.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.17e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(rec: &ConvergenceRecord) -> String {
    let with_lambda = rec.rows.iter().any(|r| r.lambda.is_some());
    let mut out = String::from(CSV_HEADER);
    if with_lambda {
        out.push_str(",lambda");
    }
    out.push('\n');
    for row in &rec.rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            row.experiment,
            row.d,
            num(row.r),
            csv_field(&row.alpha_id),
            num(row.value_re),
            num(row.value_im),
            num(row.limit_re),
            num(row.limit_im),
            num(row.abs_dev),
            num(row.rel_dev),
            num(row.tail_est),
            num(row.seconds),
        );
        if with_lambda {
            let _ = write!(out, ",{}", row.lambda.map(num).unwrap_or_default());
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: Experiment,
    summary: bool,
    #[serde(flatten)]
    status: &'a Status,
    fits: &'a [Fit],
    verdicts: &'a [Verdict],
}

/// One JSON object per row, then one summary line with fits and verdicts.
pub fn to_json_lines(rec: &ConvergenceRecord) -> Result<String> {
    let mut out = String::new();
    let io = |e: serde_json::Error| std::io::Error::other(e);
    for row in &rec.rows {
        out.push_str(&serde_json::to_string(row).map_err(io)?);
        out.push('\n');
    }
    let summary = Summary {
        experiment: rec.experiment,
        summary: true,
        status: &rec.status,
        fits: &rec.fits,
        verdicts: &rec.verdicts,
    };
    out.push_str(&serde_json::to_string(&summary).map_err(io)?);
    out.push('\n');
    Ok(out)
}

/// Write `<experiment>.csv` or `<experiment>.jsonl` into `dir`.
pub fn emit_results(rec: &ConvergenceRecord, dir: &Path, format: Format) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let (ext, body) = match format {
        Format::Csv => ("csv", to_csv(rec)),
        Format::JsonLines => ("jsonl", to_json_lines(rec)?),
    };
    let path = dir.join(format!("{}.{ext}", rec.experiment));
    std::fs::write(&path, body)?;
    Ok(path)
}
