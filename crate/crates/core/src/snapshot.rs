//! Field snapshot formats.
//!
//! Both layouts store the grid header `dim, points_per_axis, period_per_axis`
//! followed by the values in row-major order (axis 0 slowest).
//!
//! Binary, little-endian:
//!
//! ```text
//! u32 dim | u32 points_per_axis | f64 period | f64 × points_per_axis^dim
//! ```
//!
//! CSV: a header line `dim,points_per_axis,period_per_axis`, one line with the
//! three header values, then one value per line. Floats are written with
//! Rust's shortest round-trip formatting, so reading back is lossless.

use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

use crate::grid::{GridError, GridSpec, ScalarField, TorusGrid};

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

pub const CSV_HEADER: &str = "dim,points_per_axis,period_per_axis";

pub fn write_binary<W: Write>(field: &ScalarField, mut out: W) -> Result<(), SnapshotError> {
    let spec = field.grid().spec();
    out.write_all(&(spec.dim as u32).to_le_bytes())?;
    out.write_all(&(spec.points_per_axis as u32).to_le_bytes())?;
    out.write_all(&spec.period.to_le_bytes())?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<ScalarField, SnapshotError> {
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    input.read_exact(&mut b4)?;
    let points_per_axis = u32::from_le_bytes(b4) as usize;
    input.read_exact(&mut b8)?;
    let period = f64::from_le_bytes(b8);
    let grid = TorusGrid::from_spec(GridSpec {
        dim,
        points_per_axis,
        period,
    })?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        input.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    if input.read(&mut b8)? != 0 {
        return Err(SnapshotError::Malformed("trailing bytes after values".into()));
    }
    Ok(ScalarField::new(grid, values)?)
}

pub fn write_csv<W: Write>(field: &ScalarField, mut out: W) -> Result<(), SnapshotError> {
    let spec = field.grid().spec();
    writeln!(out, "{CSV_HEADER}")?;
    writeln!(out, "{},{},{:?}", spec.dim, spec.points_per_axis, spec.period)?;
    for v in field.values() {
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<ScalarField, SnapshotError> {
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String, SnapshotError> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| SnapshotError::Malformed(format!("missing {what}")))
    };
    if next("header")?.trim() != CSV_HEADER {
        return Err(SnapshotError::Malformed("unexpected header line".into()));
    }
    let head = next("grid line")?;
    let parts: Vec<&str> = head.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(SnapshotError::Malformed(format!("bad grid line {head:?}")));
    }
    let bad = |e: &dyn std::fmt::Display| SnapshotError::Malformed(e.to_string());
    let spec = GridSpec {
        dim: parts[0].parse().map_err(|e| bad(&e))?,
        points_per_axis: parts[1].parse().map_err(|e| bad(&e))?,
        period: parts[2].parse().map_err(|e| bad(&e))?,
    };
    let grid = TorusGrid::from_spec(spec)?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|e| bad(&e))?);
    }
    Ok(ScalarField::new(grid, values)?)
}
