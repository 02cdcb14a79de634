//! Text, CSV and JSON renderings of a set of reports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::report::Report;
use crate::BenchError;

pub const CSV_HEADER: &str =
    "scenario,protocol,mode,suite,bytes_c2s,bytes_s2c,total,datagrams,retrans,paper_ref,deviation_pct";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(BenchError::Config(format!("unknown format {s:?}"))),
        }
    }
}

pub fn emit(reports: &[Report], format: Format, compare_paper: bool) -> Result<String, BenchError> {
    if reports.is_empty() {
        return Err(BenchError::Config("no reports".into()));
    }
    Ok(match format {
        Format::Text => text(reports, compare_paper),
        Format::Csv => csv(reports),
        Format::Json => serde_json::to_string_pretty(reports)? + "\n",
    })
}

fn suite_name(r: &Report) -> String {
    r.scenario.effective_suite().map_or_else(|_| "?".into(), |s| s.cli_name().to_string())
}

fn text(reports: &[Report], compare_paper: bool) -> String {
    let width = reports.iter().map(|r| r.key.len()).max().unwrap_or(0).max("configuration".len());
    let mut out = String::new();
    let _ = write!(out, "{:<width$}  {:>9}  {:>11}  {:>6}", "configuration", "1.2 model", "1.3 measured", "diff");
    if compare_paper {
        let _ = write!(out, "  {:>8}  {:>8}  {:>9}", "paper1.2", "paper1.3", "dev%");
    }
    out.push('\n');
    for r in reports {
        let diff = r.total() as i64 - r.legacy12_total as i64;
        let _ = write!(out, "{:<width$}  {:>9}  {:>11}  {:>+6}", r.key, r.legacy12_total, r.total(), diff);
        if compare_paper {
            match &r.paper {
                Some(p) => {
                    let _ = write!(out, "  {:>8}  {:>8}  {:>+9.1}", p.paper_v12, p.paper_v13, p.deviation_pct);
                }
                None => {
                    let _ = write!(out, "  {:>8}  {:>8}  {:>9}", "-", "-", "-");
                }
            }
        }
        if !r.ok {
            let _ = write!(
                out,
                "  FAILED in {}: {}",
                r.failed_phase.as_deref().unwrap_or("?"),
                r.error.as_deref().unwrap_or("?")
            );
        }
        out.push('\n');
    }
    if compare_paper {
        for w in warnings(reports) {
            out.push_str(&w);
            out.push('\n');
        }
    }
    out
}

fn csv(reports: &[Report]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let (paper_ref, dev) = match &r.paper {
            Some(p) => (p.paper_v13.to_string(), format!("{:.2}", p.deviation_pct)),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.key,
            r.scenario.protocol.name(),
            r.scenario.mode,
            suite_name(r),
            r.stats.bytes_c2s,
            r.stats.bytes_s2c,
            r.total(),
            r.stats.datagrams(),
            r.retransmissions(),
            paper_ref,
            dev
        );
    }
    out
}

/// One line per row whose measured total is more than the warning threshold
/// away from the published 1.3 value.
pub fn warnings(reports: &[Report]) -> Vec<String> {
    reports
        .iter()
        .filter_map(|r| {
            let p = r.paper.as_ref()?;
            p.warns().then(|| {
                format!(
                    "warning: {} measured {} vs published {} ({:+.1}%)",
                    r.key,
                    r.total(),
                    p.paper_v13,
                    p.deviation_pct
                )
            })
        })
        .collect()
}

/// Rows whose 1.2 → 1.3 change has the opposite sign to the published one.
pub fn sign_breaches(reports: &[Report]) -> Vec<&Report> {
    reports.iter().filter(|r| r.paper.as_ref().is_some_and(|p| !p.same_sign())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperDelta {
    pub key: String,
    pub label: String,
    pub paper_v12: usize,
    pub paper_v13: usize,
    pub model_v12: usize,
    pub measured_v13: usize,
    pub deviation_pct: f64,
    pub same_sign: bool,
}

/// Reports that correspond to a published row, set against it.
pub fn compare_paper(reports: &[Report]) -> Vec<PaperDelta> {
    reports
        .iter()
        .filter_map(|r| {
            let p = r.paper.as_ref()?;
            Some(PaperDelta {
                key: r.key.clone(),
                label: p.label.clone(),
                paper_v12: p.paper_v12,
                paper_v13: p.paper_v13,
                model_v12: r.legacy12_total,
                measured_v13: r.total(),
                deviation_pct: p.deviation_pct,
                same_sign: p.same_sign(),
            })
        })
        .collect()
}
