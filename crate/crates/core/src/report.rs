//! Compilation-outcome summaries over sets of validation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::validate::{DifferentialVerdict, FailureCategory, ValidationReport};

/// Printed in place of a rate whose denominator is zero.
pub const UNDEFINED: &str = "undefined";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report format `{0}` (expected text, csv or json)")]
    UnknownFormat(String),
    #[error("report line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("inconsistent report: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_cases: usize,
    pub compile_success: usize,
    pub fixable_failures: usize,
    pub excluded_unparallelizable: usize,
    /// `None` when every case was excluded.
    pub effective_success_rate: Option<f64>,
    /// Compiled cases whose outputs matched the serial reference.
    pub differential_pass: usize,
    pub failure_categories: BTreeMap<FailureCategory, usize>,
}

impl RunSummary {
    pub fn from_reports(reports: &[ValidationReport]) -> Self {
        let mut s = RunSummary {
            total_cases: reports.len(),
            compile_success: 0,
            fixable_failures: 0,
            excluded_unparallelizable: 0,
            effective_success_rate: None,
            differential_pass: 0,
            failure_categories: BTreeMap::new(),
        };
        for r in reports {
            if r.excluded_unparallelizable {
                s.excluded_unparallelizable += 1;
            } else if r.compile_ok {
                s.compile_success += 1;
                if r.differential_verdict == DifferentialVerdict::Pass {
                    s.differential_pass += 1;
                }
            } else {
                s.fixable_failures += 1;
                let cat = r.failure_category.unwrap_or(FailureCategory::OtherCompileError);
                *s.failure_categories.entry(cat).or_default() += 1;
            }
        }
        let eligible = s.total_cases - s.excluded_unparallelizable;
        s.effective_success_rate = (eligible > 0).then(|| s.compile_success as f64 / eligible as f64);
        s
    }

    pub fn eligible(&self) -> usize {
        self.total_cases - self.excluded_unparallelizable
    }

    pub fn compile_success_rate(&self) -> Option<f64> {
        (self.total_cases > 0).then(|| self.compile_success as f64 / self.total_cases as f64)
    }

    pub fn fixable_failure_rate(&self) -> Option<f64> {
        (self.total_cases > 0).then(|| self.fixable_failures as f64 / self.total_cases as f64)
    }

    pub fn check(&self) -> Result<(), ReportError> {
        if self.compile_success + self.fixable_failures + self.excluded_unparallelizable != self.total_cases {
            return Err(ReportError::Inconsistent("outcome counts do not add up to the total".into()));
        }
        Ok(())
    }
}

/// Rate as a percentage with one decimal, e.g. `75.9%`.
pub fn percent(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{:.1}%", r * 100.0),
        None => UNDEFINED.to_string(),
    }
}

fn ratio(n: usize, d: usize, rate: Option<f64>) -> String {
    format!("{n}/{d} ({})", percent(rate))
}

/// Reads the JSONL written by the validate stage.
pub fn parse_reports(text: &str) -> Result<Vec<ValidationReport>, ReportError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let r: ValidationReport = serde_json::from_str(l).map_err(|e| ReportError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            r.check().map_err(|message| ReportError::Parse { line: i + 1, message })?;
            Ok(r)
        })
        .collect()
}

pub fn reports_to_jsonl(reports: &[ValidationReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

/// Renders one column (or row, or object) per labelled report set.
pub fn render(sets: &[(&str, &[ValidationReport])], format: ReportFormat) -> String {
    let summaries: Vec<(&str, RunSummary)> = sets.iter().map(|(l, r)| (*l, RunSummary::from_reports(r))).collect();
    match format {
        ReportFormat::Text => render_text(&summaries),
        ReportFormat::Csv => render_csv(&summaries),
        ReportFormat::Json => render_json(&summaries),
    }
}

/// Parses `format` and renders; an unknown format is a usage error.
pub fn report(sets: &[(&str, &[ValidationReport])], format: &str) -> Result<String, ReportError> {
    Ok(render(sets, format.parse()?))
}

fn render_text(summaries: &[(&str, RunSummary)]) -> String {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Metric".to_string())
        .chain(summaries.iter().map(|(l, _)| l.to_string()))
        .collect()];
    let mut row = |name: &str, f: &dyn Fn(&RunSummary) -> String| {
        rows.push(std::iter::once(name.to_string()).chain(summaries.iter().map(|(_, s)| f(s))).collect());
    };
    row("Compilation Success", &|s| ratio(s.compile_success, s.total_cases, s.compile_success_rate()));
    row("Failures (Fixable)", &|s| ratio(s.fixable_failures, s.total_cases, s.fixable_failure_rate()));
    row("Unparallelizable", &|s| format!("{}/{} (excluded)", s.excluded_unparallelizable, s.total_cases));
    row("Effective Success", &|s| ratio(s.compile_success, s.eligible(), s.effective_success_rate));
    row("Differential Pass", &|s| format!("{}/{}", s.differential_pass, s.compile_success));
    let categories: Vec<FailureCategory> = FailureCategory::ALL
        .into_iter()
        .filter(|c| summaries.iter().any(|(_, s)| s.failure_categories.contains_key(c)))
        .collect();
    for c in categories {
        row(&format!("  {c}"), &|s| s.failure_categories.get(&c).copied().unwrap_or(0).to_string());
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (n, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
        if n == 0 {
            out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
            out.push('\n');
        }
    }
    out
}

fn render_csv(summaries: &[(&str, RunSummary)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "label",
        "total_cases",
        "compile_success",
        "fixable_failures",
        "excluded_unparallelizable",
        "differential_pass",
        "compile_success_pct",
        "effective_success_pct",
    ])
    .expect("in-memory write");
    for (label, s) in summaries {
        let pct = |r: Option<f64>| r.map(|r| format!("{:.1}", r * 100.0)).unwrap_or_else(|| UNDEFINED.into());
        w.write_record([
            label.to_string(),
            s.total_cases.to_string(),
            s.compile_success.to_string(),
            s.fixable_failures.to_string(),
            s.excluded_unparallelizable.to_string(),
            s.differential_pass.to_string(),
            pct(s.compile_success_rate()),
            pct(s.effective_success_rate),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn render_json(summaries: &[(&str, RunSummary)]) -> String {
    let items: Vec<serde_json::Value> = summaries
        .iter()
        .map(|(label, s)| {
            serde_json::json!({
                "label": label,
                "summary": s,
                "compile_success_pct": percent(s.compile_success_rate()),
                "effective_success_pct": percent(s.effective_success_rate),
            })
        })
        .collect();
    let mut out = serde_json::to_string_pretty(&items).expect("json");
    let _ = writeln!(out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(id: &str) -> ValidationReport {
        ValidationReport {
            case_id: id.into(),
            compile_ok: true,
            failure_category: None,
            diagnostics: String::new(),
            differential_verdict: DifferentialVerdict::Pass,
            threads_tested: vec![1, 8],
            excluded_unparallelizable: false,
        }
    }

    fn failed(id: &str, c: FailureCategory) -> ValidationReport {
        ValidationReport {
            case_id: id.into(),
            compile_ok: false,
            failure_category: Some(c),
            diagnostics: "error".into(),
            differential_verdict: DifferentialVerdict::Skipped,
            threads_tested: vec![],
            excluded_unparallelizable: false,
        }
    }

    #[test]
    fn single_pass_is_full_effective_success() {
        let s = RunSummary::from_reports(&[ok("a")]);
        assert_eq!(percent(s.effective_success_rate), "100.0%");
        s.check().unwrap();
    }

    #[test]
    fn all_excluded_is_undefined() {
        let r = [ValidationReport::excluded("a"), ValidationReport::excluded("b")];
        let s = RunSummary::from_reports(&r);
        assert_eq!(s.effective_success_rate, None);
        let text = render(&[("x", &r)], ReportFormat::Text);
        assert!(text.contains("0/0 (undefined)"));
        assert!(render(&[("x", &r)], ReportFormat::Csv).contains(",undefined"));
    }

    #[test]
    fn empty_is_zeros() {
        let s = RunSummary::from_reports(&[]);
        assert_eq!((s.total_cases, s.compile_success, s.fixable_failures), (0, 0, 0));
        s.check().unwrap();
    }

    #[test]
    fn unknown_format_rejected() {
        assert!(matches!(report(&[], "xml"), Err(ReportError::UnknownFormat(_))));
    }

    #[test]
    fn jsonl_roundtrip_and_categories() {
        let r = vec![ok("a"), failed("b", FailureCategory::SyntaxError), ValidationReport::excluded("c")];
        let back = parse_reports(&reports_to_jsonl(&r)).unwrap();
        assert_eq!(back, r);
        let text = render(&[("baseline", &back)], ReportFormat::Text);
        assert!(text.contains("SyntaxError"));
        assert!(text.contains("1/2 (50.0%)"));
        let json: serde_json::Value = serde_json::from_str(&render(&[("b", &back)], ReportFormat::Json)).unwrap();
        assert_eq!(json[0]["effective_success_pct"], "50.0%");
        assert!(parse_reports("{}\n").is_err());
    }
}
