//! Identification report: JSON metrics per scorer and fusion node, a CMC
//! table for plotting and a small SVG chart of the same curves.
//!
//! All floats are printed with six decimals and keys keep a fixed order,
//! so identical results give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;
use twinfuse_core::eval::{summarize, CmcCurve, CmcSummary};
use twinfuse_core::fusion::NodeKind;

use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const CMC_FILE: &str = "cmc.csv";
pub const SVG_FILE: &str = "cmc.svg";

/// Metrics of one scorer or fusion node.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub kind: NodeKind,
    /// Weight inside the parent fusion node, if any.
    pub weight: Option<f64>,
    pub cmc: CmcCurve,
    pub summary: CmcSummary,
}

impl ReportRow {
    pub fn new(name: impl Into<String>, kind: NodeKind, weight: Option<f64>, cmc: CmcCurve) -> Self {
        let summary = summarize(&cmc);
        Self {
            name: name.into(),
            kind,
            weight,
            cmc,
            summary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub seed: Option<u64>,
    pub n_probes: usize,
    pub n_subjects: usize,
    pub excluded_subjects: Vec<String>,
    /// Scorers dropped from the fusion plan because their inputs were missing.
    pub pruned_scorers: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Effective configuration echo.
    pub config: serde_json::Value,
}

pub fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

struct Fixed(f64);

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawValue::from_string(fixed6(self.0))
            .map_err(serde::ser::Error::custom)?
            .serialize(s)
    }
}

#[derive(Serialize)]
struct RowDoc<'a> {
    name: &'a str,
    kind: NodeKind,
    weight: Option<Fixed>,
    rank1: Fixed,
    rank2: Fixed,
    rank5: Fixed,
    auc: Fixed,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    cmc: Vec<Fixed>,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    seed: Option<u64>,
    n_probes: usize,
    n_subjects: usize,
    excluded_subjects: &'a [String],
    pruned_scorers: &'a [String],
    rows: Vec<RowDoc<'a>>,
    config: &'a serde_json::Value,
}

fn clamp_note(row: &ReportRow, n_subjects: usize) -> Option<String> {
    if row.summary.clamped.is_empty() {
        return None;
    }
    let ks: Vec<String> = row.summary.clamped.iter().map(|k| format!("rank-{k}")).collect();
    Some(format!(
        "{} reported as rank-{n_subjects}: only {n_subjects} enrolled subjects",
        ks.join(", ")
    ))
}

impl Report {
    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> String {
        let doc = ReportDoc {
            seed: self.seed,
            n_probes: self.n_probes,
            n_subjects: self.n_subjects,
            excluded_subjects: &self.excluded_subjects,
            pruned_scorers: &self.pruned_scorers,
            rows: self
                .rows
                .iter()
                .map(|r| RowDoc {
                    name: &r.name,
                    kind: r.kind,
                    weight: r.weight.map(Fixed),
                    rank1: Fixed(r.summary.rank1),
                    rank2: Fixed(r.summary.rank2),
                    rank5: Fixed(r.summary.rank5),
                    auc: Fixed(r.summary.auc),
                    note: clamp_note(r, self.n_subjects),
                    cmc: r.cmc.rates.iter().copied().map(Fixed).collect(),
                })
                .collect(),
            config: &self.config,
        };
        serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
    }

    /// `rank,<row names...>` then one line per rank.
    pub fn cmc_csv(&self) -> String {
        let mut out = String::from("rank");
        for r in &self.rows {
            write!(out, ",{}", r.name).unwrap();
        }
        out.push('\n');
        let n = self.rows.iter().map(|r| r.cmc.rates.len()).max().unwrap_or(0);
        for k in 0..n {
            write!(out, "{}", k + 1).unwrap();
            for r in &self.rows {
                let v = r.cmc.rates.get(k).or(r.cmc.rates.last()).copied().unwrap_or(1.0);
                write!(out, ",{}", fixed6(v)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const PAD: f64 = 50.0;
        const COLORS: [&str; 8] = [
            "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
        ];
        let n = self.rows.iter().map(|r| r.cmc.rates.len()).max().unwrap_or(1).max(1);
        let x = |k: usize| {
            if n == 1 {
                PAD
            } else {
                PAD + (W - 2.0 * PAD) * (k as f64) / ((n - 1) as f64)
            }
        };
        let y = |v: f64| H - PAD - (H - 2.0 * PAD) * v;
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<path d="M{PAD} {PAD} V{b} H{r}" fill="none" stroke="black"/>"#,
            b = H - PAD,
            r = W - PAD
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{cx}" y="{ty}" text-anchor="middle" font-size="12">rank (1..{n})</text>"#,
            cx = W / 2.0,
            ty = H - 15.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="15" y="{cy}" font-size="12" transform="rotate(-90 15 {cy})" text-anchor="middle">identification rate</text>"#,
            cy = H / 2.0
        )
        .unwrap();
        for (i, r) in self.rows.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let points: Vec<String> = r
                .cmc
                .rates
                .iter()
                .enumerate()
                .map(|(k, v)| format!("{:.2},{:.2}", x(k), y(*v)))
                .collect();
            writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                points.join(" ")
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{lx:.2}" y="{ly:.2}" font-size="11" fill="{color}">{}</text>"#,
                r.name,
                lx = W - PAD - 110.0,
                ly = y(0.0) - 10.0 - 14.0 * i as f64
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub json: PathBuf,
    pub cmc_csv: PathBuf,
    pub svg: PathBuf,
}

pub fn write_report(report: &Report, dir: &Path) -> Result<ReportPaths> {
    if report.rows.is_empty() {
        return Err(Error::Config("a report needs at least one result".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ReportPaths {
        json: dir.join(REPORT_FILE),
        cmc_csv: dir.join(CMC_FILE),
        svg: dir.join(SVG_FILE),
    };
    for (path, text) in [
        (&paths.json, report.to_json()),
        (&paths.cmc_csv, report.cmc_csv()),
        (&paths.svg, report.svg()),
    ] {
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(paths)
}
