//! Plain-text file formats.
//!
//! * matrix: CSV, no header, one matrix row per line;
//! * partition: one line of comma-separated group sizes;
//! * vector: one value per line.
//!
//! Floats are written with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::group::GroupPartition;

/// Scientific notation with 17 significant digits (round-trips any f64).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("line {line}: '{field}': {e}")))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| parse_f64(f, k + 1))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} columns, expected {}",
                    k + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!(
            "{} holds no matrix rows",
            path.display()
        )));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 24);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(m[(r, c)]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_partition(path: &Path) -> Result<GroupPartition> {
    let text = fs::read_to_string(path)?;
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Parse(format!("{} is empty", path.display())))?;
    let sizes = line
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("group size '{f}': {e}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    GroupPartition::new(&sizes)
}

pub fn write_partition(path: &Path, partition: &GroupPartition) -> Result<()> {
    let line: Vec<String> = partition.sizes().iter().map(|s| s.to_string()).collect();
    fs::write(path, line.join(",") + "\n")?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let text = fs::read_to_string(path)?;
    let values = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| parse_f64(l, k + 1))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DVector::from_vec(values))
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for x in v.iter() {
        writeln!(f, "{}", fmt_f64(*x))?;
    }
    f.flush()?;
    Ok(())
}
