//! File ingestion: CSV samples and JSON matrices or pmfs.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use crate::lattice::{pmd_pmf_exact, ParamMatrix, Point, SparsePmf};
use crate::{Error, Result};

/// Read one point per line of comma-separated integers. A first line that does
/// not parse as integers is taken as a header.
pub fn read_samples<R: Read>(reader: R) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(reader);
    let mut out: Vec<Point> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Point, _> = rec.iter().map(|f| f.parse::<i64>()).collect();
        match parsed {
            Ok(p) => {
                if let Some(first) = out.first() {
                    if first.len() != p.len() {
                        return Err(Error::Parse(format!("line {}: {} fields, expected {}", line + 1, p.len(), first.len())));
                    }
                }
                out.push(p);
            }
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", line + 1))),
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("no samples".into()));
    }
    Ok(out)
}

pub fn read_samples_file(path: &Path) -> Result<Vec<Point>> {
    read_samples(BufReader::new(File::open(path)?))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_matrix(path: &Path) -> Result<ParamMatrix> {
    parse_json(&std::fs::read_to_string(path)?)
}

/// A law given either as a parameter matrix or as a tabulated pmf.
#[derive(Debug, Clone)]
pub enum LawFile {
    Matrix(ParamMatrix),
    Pmf(SparsePmf),
}

impl LawFile {
    pub fn parse(text: &str) -> Result<Self> {
        let v: serde_json::Value = parse_json(text)?;
        if v.get("rows").is_some() {
            Ok(LawFile::Matrix(parse_json(text)?))
        } else if v.get("points").is_some() {
            Ok(LawFile::Pmf(parse_json(text)?))
        } else {
            Err(Error::Parse("expected a matrix (`rows`) or a pmf (`points`)".into()))
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Materialize the pmf, running the exact DP for matrices.
    pub fn into_pmf(self) -> Result<SparsePmf> {
        match self {
            LawFile::Matrix(pm) => pmd_pmf_exact(&pm),
            LawFile::Pmf(p) => Ok(p),
        }
    }
}

/// Format with 12 significant digits, trailing zeros trimmed.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let e = v.abs().log10().floor() as i32;
    if (-5..12).contains(&e) {
        let s = format!("{:.*}", (11 - e).max(0) as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.11e}")
    }
}
