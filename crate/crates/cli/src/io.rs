//! CSV ingestion and emission for trajectories and label sequences.

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Read a numeric CSV (one row per time step, optional single header row).
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("malformed CSV row {i}"))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if values.is_empty() {
                    bail!("row {i} of {} is empty", path.display());
                }
                rows.push(values);
            }
            Err(_) if i == 0 => continue, // header row
            Err(e) => bail!("row {i} of {} is not numeric: {e}", path.display()),
        }
    }
    if rows.is_empty() {
        bail!("{} holds no data rows", path.display());
    }
    let cols = rows[0].len();
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        bail!(
            "{} is ragged: row {i} has {} fields, expected {cols}",
            path.display(),
            row.len()
        );
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Write a matrix as CSV, one row per time step, full-precision decimals.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read a label file: one nonnegative integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<usize>() {
            Ok(v) => labels.push(v),
            Err(_) if i == 0 => continue, // header line
            Err(e) => bail!("line {i} of {} is not a label: {e}", path.display()),
        }
    }
    if labels.is_empty() {
        bail!("{} holds no labels", path.display());
    }
    Ok(labels)
}

/// Write a label file, one integer per line.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for &z in labels {
        writeln!(w, "{z}")?;
    }
    Ok(())
}
