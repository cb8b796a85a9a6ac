//! CSV and JSON serialization of grids and particle clouds.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DensityGrid, EmpiricalMeasure};

/// Geometry header written next to a grid CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
}

/// Path of the JSON header accompanying a grid CSV.
pub fn header_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes one CSV row per node (`x0, .., value`) and the JSON geometry header.
pub fn write_grid(path: &Path, grid: &DensityGrid<f64>) -> Result<()> {
    write_grid_values(path, grid, grid.values())?;
    let header = GridHeader {
        origin: grid.origin().to_vec(),
        spacing: grid.spacing().to_vec(),
        shape: grid.shape().to_vec(),
    };
    let f = File::create(header_path(path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &header)?;
    Ok(())
}

/// Writes arbitrary (possibly signed) nodal values in grid CSV layout.
pub fn write_grid_values(path: &Path, grid: &DensityGrid<f64>, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head: Vec<String> = (0..grid.dim()).map(|k| format!("x{k}")).collect();
    head.push("value".into());
    w.write_record(&head)?;
    for (i, v) in values.iter().enumerate() {
        let mut row: Vec<String> = grid.node(i).iter().map(|x| x.to_string()).collect();
        row.push(v.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a grid written by [`write_grid`].
pub fn read_grid(path: &Path) -> Result<DensityGrid<f64>> {
    let header: GridHeader = serde_json::from_reader(File::open(header_path(path))?)?;
    let mut r = csv::Reader::from_path(path)?;
    let d = header.shape.len();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: f64 = rec
            .get(d)
            .ok_or_else(|| Error::Io("grid row too short".into()))?
            .parse()
            .map_err(|e| Error::Io(format!("bad grid value: {e}")))?;
        values.push(v);
    }
    DensityGrid::new(header.origin, header.spacing, header.shape, values)
}

/// Writes one CSV row per atom (`x0, .., weight`).
pub fn write_empirical(path: &Path, m: &EmpiricalMeasure<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head: Vec<String> = (0..m.dim()).map(|k| format!("x{k}")).collect();
    head.push("weight".into());
    w.write_record(&head)?;
    for (p, wt) in m.iter() {
        let mut row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        row.push(wt.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_empirical(path: &Path) -> Result<EmpiricalMeasure<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let d = r.headers()?.len().saturating_sub(1);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| Error::Io(format!("bad number: {e}")))?;
        if vals.len() != d + 1 {
            return Err(Error::Io("ragged particle CSV".into()));
        }
        points.extend_from_slice(&vals[..d]);
        weights.push(vals[d]);
    }
    EmpiricalMeasure::new(d, points, weights)
}

/// Writes `# comment` lines followed by whitespace-separated columns.
pub fn write_columns(path: &Path, comments: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(f, "# {c}")?;
    }
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", line.join(" "))?;
    }
    f.flush()?;
    Ok(())
}
