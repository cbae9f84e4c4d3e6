//! Comma-separated tables: embedding and descriptor tables, per-sample
//! feature dumps and score matrices with their JSON sidecar.
//!
//! Values are written with Rust's shortest round-trip formatting so a table
//! read back reproduces the in-memory numbers exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twinfuse_core::datamodel::SubjectId;
use twinfuse_core::embeddings::EmbeddingTable;
use twinfuse_core::score::Orientation;
use twinfuse_core::{Matrix, ScoreMatrix};

use crate::error::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_cell(path: &Path, line: usize, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::table(path, line, format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::table(path, line, format!("`{cell}` is not finite")));
    }
    Ok(v)
}

fn push_row(out: &mut String, id: &str, values: &[f64]) {
    out.push_str(id);
    for v in values {
        write!(out, ",{v}").unwrap();
    }
    out.push('\n');
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Reads a `sample_id,f0,f1,...` table.
pub fn read_vector_table(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = read_text(path)?;
    let mut it = lines(&text);
    let (_, header) = it.next().ok_or_else(|| Error::table(path, 1, "empty table"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns[0].trim() != "sample_id" || columns.len() < 2 {
        return Err(Error::table(path, 1, "header must be `sample_id,f0,f1,...`"));
    }
    let dim = columns.len() - 1;
    let mut rows = Vec::new();
    for (line, l) in it {
        let mut cells = l.split(',');
        let id = cells.next().unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::table(path, line, "empty sample id"));
        }
        let values = cells.map(|c| parse_cell(path, line, c)).collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::table(
                path,
                line,
                format!("ragged row: {} values, header declares {dim}", values.len()),
            ));
        }
        rows.push((id, values));
    }
    Ok(rows)
}

pub fn write_vector_table(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut out = String::from("sample_id");
    for k in 0..dim {
        write!(out, ",f{k}").unwrap();
    }
    out.push('\n');
    for (id, v) in rows {
        push_row(&mut out, id, v);
    }
    write_text(path, &out)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let rows = read_vector_table(path)?;
    EmbeddingTable::new(rows).map_err(|e| Error::table(path, 0, e.to_string()))
}

/// One frame per row, no header.
pub fn write_feature_dump(path: &Path, frames: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in frames.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_feature_dump(path: &Path) -> Result<Matrix> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (line, l) in lines(&text) {
        rows.push(l.split(',').map(|c| parse_cell(path, line, c)).collect::<Result<Vec<f64>>>()?);
    }
    if rows.is_empty() {
        return Err(Error::table(path, 1, "no frames"));
    }
    Matrix::from_rows(&rows).map_err(|e| Error::table(path, 0, e.to_string()))
}

/// Metadata stored next to a score-matrix table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSidecar {
    pub orientation: Orientation,
    pub normalized: bool,
    pub n_probes: usize,
    pub n_subjects: usize,
}

pub fn sidecar_path(table: &Path) -> PathBuf {
    table.with_extension("json")
}

/// Writes the table (first row subject ids, first column probe ids) and
/// its sidecar.
pub fn write_score_matrix(path: &Path, m: &ScoreMatrix) -> Result<()> {
    let mut out = String::from("probe");
    for s in m.subject_ids() {
        write!(out, ",{s}").unwrap();
    }
    out.push('\n');
    for (p, id) in m.probe_ids().iter().enumerate() {
        push_row(&mut out, id, m.values().row(p));
    }
    write_text(path, &out)?;
    let sidecar = ScoreSidecar {
        orientation: m.orientation(),
        normalized: m.is_normalized(),
        n_probes: m.n_probes(),
        n_subjects: m.n_subjects(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write_text(&sidecar_path(path), &(json + "\n"))
}

pub fn read_score_matrix(path: &Path) -> Result<ScoreMatrix> {
    let side_path = sidecar_path(path);
    let sidecar: ScoreSidecar = serde_json::from_str(&read_text(&side_path)?).map_err(|source| Error::Json {
        path: side_path.clone(),
        source,
    })?;
    let text = read_text(path)?;
    let mut it = lines(&text);
    let (_, header) = it.next().ok_or_else(|| Error::table(path, 1, "empty table"))?;
    let subjects = header
        .split(',')
        .skip(1)
        .map(|s| SubjectId::new(s.trim()).map_err(|e| Error::table(path, 1, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut probes = Vec::new();
    let mut values = Vec::new();
    for (line, l) in it {
        let mut cells = l.split(',');
        probes.push(cells.next().unwrap_or("").trim().to_string());
        let row = cells.map(|c| parse_cell(path, line, c)).collect::<Result<Vec<f64>>>()?;
        if row.len() != subjects.len() {
            return Err(Error::table(path, line, "row length differs from the header"));
        }
        values.extend(row);
    }
    if (probes.len(), subjects.len()) != (sidecar.n_probes, sidecar.n_subjects) {
        return Err(Error::table(path, 0, "table shape disagrees with its sidecar"));
    }
    let values = Matrix::from_vec(probes.len(), subjects.len(), values)?;
    Ok(ScoreMatrix::new(probes, subjects, values, sidecar.normalized)?)
}
