//! Flat text tables: one row per atom, whitespace separated.
//!
//! Measures have `d` coordinate columns followed by a weight column; clouds
//! have only the coordinates. Lines starting with `#` are comments. Numbers
//! are written in shortest round-trip form, so a write/read cycle is exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{DiscreteMeasure, ParticleCloud};
use crate::error::{Error, Result};

pub fn write_measure_table(nu: &DiscreteMeasure) -> String {
    let d = nu.dim();
    let mut s = String::with_capacity(nu.len() * (d + 1) * 20);
    let header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    let _ = writeln!(s, "# {} weight", header.join(" "));
    for (x, w) in nu.atoms() {
        for v in x {
            let _ = write!(s, "{v} ");
        }
        let _ = writeln!(s, "{w}");
    }
    s
}

pub fn write_cloud_table(cloud: &ParticleCloud) -> String {
    let d = cloud.dim();
    let mut s = String::with_capacity(cloud.len() * d * 20);
    let header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    let _ = writeln!(s, "# {}", header.join(" "));
    for p in cloud.points().chunks_exact(d) {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

fn parse_rows(text: &str) -> Result<(usize, Vec<f64>)> {
    let mut cols = None;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::invalid(format!("line {}: cannot parse `{tok}`", lineno + 1))
            })?;
            values.push(v);
        }
        let n = values.len() - before;
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::invalid(format!(
                    "line {}: expected {c} columns, found {n}",
                    lineno + 1
                )))
            }
            _ => {}
        }
    }
    let cols = cols.ok_or_else(|| Error::invalid("table has no rows"))?;
    Ok((cols, values))
}

pub fn parse_measure_table(text: &str) -> Result<DiscreteMeasure> {
    let (cols, values) = parse_rows(text)?;
    if cols < 2 {
        return Err(Error::invalid("measure table needs coordinates and a weight column"));
    }
    let d = cols - 1;
    let mut points = Vec::with_capacity(values.len() / cols * d);
    let mut weights = Vec::with_capacity(values.len() / cols);
    for row in values.chunks_exact(cols) {
        points.extend_from_slice(&row[..d]);
        weights.push(row[d]);
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > super::MASS_TOL {
        return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
    }
    DiscreteMeasure::new(d, points, weights)
}

pub fn parse_cloud_table(text: &str, epoch: usize, step: usize) -> Result<ParticleCloud> {
    let (cols, values) = parse_rows(text)?;
    ParticleCloud::new(cols, values, epoch, step)
}

pub fn read_measure_table(path: &Path) -> std::io::Result<Result<DiscreteMeasure>> {
    Ok(parse_measure_table(&std::fs::read_to_string(path)?))
}
