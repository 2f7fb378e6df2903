//! CSV and JSON reading and writing.

use std::path::Path;

use anyhow::{Context, Result};
use polqkd::channel::TrajectoryPoint;
use polqkd::emitter::HistogramBin;
use polqkd::polarization::StokesVector;
use polqkd::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    wavelength_nm: f64,
    s1: f64,
    s2: f64,
    s3: f64,
}

/// Parses CSV rows with a header; errors carry the offending line.
pub fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, message: e.to_string() }
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no data rows".into()).into());
    }
    Ok(rows)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryPoint<f64>>> {
    Ok(parse_csv::<TrajectoryRow>(text)?
        .into_iter()
        .map(|r| TrajectoryPoint { wavelength: r.wavelength_nm, stokes: StokesVector::new(r.s1, r.s2, r.s3) })
        .collect())
}

pub fn trajectory_csv(points: &[TrajectoryPoint<f64>]) -> Result<Vec<u8>> {
    let rows: Vec<_> = points
        .iter()
        .map(|p| TrajectoryRow { wavelength_nm: p.wavelength, s1: p.stokes.s1, s2: p.stokes.s2, s3: p.stokes.s3 })
        .collect();
    to_csv(&rows)
}

pub fn parse_histogram(text: &str) -> Result<Vec<HistogramBin>> {
    parse_csv(text)
}

pub fn histogram_csv(bins: &[HistogramBin]) -> Result<Vec<u8>> {
    to_csv(bins)
}
