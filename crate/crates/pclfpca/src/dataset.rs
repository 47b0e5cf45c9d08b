//! Functional datasets on a common time grid.
//!
//! A dataset is an `n x T` matrix of discretised curves: one row per curve
//! (brain region, electrode, ...), one column per time point. CSV layout
//! follows the same convention. A header row of time stamps and a leading
//! label column are both optional; the header is recognised when the very
//! first cell of the file is not numeric while the rest of the first row is.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered time stamps shared by all curves in a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    /// Strictly increasing grid with at least 4 points (cubic smoothing
    /// needs that many).
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Dimension(format!(
                "time grid needs at least 4 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Dimension("time grid contains non-finite values".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Dimension("time grid must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// Default grid 1..=T used when a CSV carries no header of time stamps.
    pub fn unit_spaced(len: usize) -> Result<Self> {
        Self::new((1..=len).map(|t| t as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Grid span (last - first).
    pub fn span(&self) -> f64 {
        self.points[self.points.len() - 1] - self.points[0]
    }
}

/// An `n x T` matrix of observed curves on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    values: DMatrix<f64>,
    grid: TimeGrid,
    labels: Option<Vec<String>>,
}

impl FunctionalDataset {
    pub fn new(values: DMatrix<f64>, grid: TimeGrid, labels: Option<Vec<String>>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::Dimension(format!(
                "need at least 2 curves, got {}",
                values.nrows()
            )));
        }
        if values.ncols() != grid.len() {
            return Err(Error::Dimension(format!(
                "dataset has {} columns but grid has {} points",
                values.ncols(),
                grid.len()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != values.nrows() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} curves",
                    labels.len(),
                    values.nrows()
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("dataset contains non-finite values".into()));
        }
        Ok(Self { values, grid, labels })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of curves.
    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }

    /// Number of time points.
    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    /// Write the dataset back to CSV with the same layout `load_dataset`
    /// reads. Values round-trip bit-identically (shortest-representation
    /// float formatting).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for i in 0..self.values.nrows() {
            let mut record: Vec<String> = Vec::with_capacity(self.values.ncols() + 1);
            if let Some(labels) = &self.labels {
                record.push(labels[i].clone());
            }
            for j in 0..self.values.ncols() {
                record.push(format_float(self.values[(i, j)]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_float(v: f64) -> String {
    let mut buf = ryu_like(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_like(v: f64) -> String {
    // Rust's float Display emits the shortest string that parses back exactly.
    format!("{v}")
}

/// Supported on-disk formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    Csv,
}

/// Load a dataset from CSV. Rows are curves, columns are time points.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<FunctionalDataset> {
    match format {
        DataFormat::Csv => load_csv(path),
    }
}

fn load_csv(path: &Path) -> Result<FunctionalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        rows.push(record.iter().map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::Format("empty CSV file".into()));
    }
    let width = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Format(format!(
                "ragged CSV: row {} has {} cells, expected {}",
                i + 1,
                row.len(),
                width
            )));
        }
    }

    let parses = |s: &str| s.parse::<f64>().is_ok();
    // Header row of time stamps: first cell non-numeric (e.g. "label" or
    // empty), remaining cells numeric.
    let has_header = !rows[0].is_empty()
        && !parses(&rows[0][0])
        && rows[0].len() > 1
        && rows[0][1..].iter().all(|c| parses(c));
    // Label column: first cell of the data rows non-numeric.
    let data_start = usize::from(has_header);
    if data_start >= rows.len() {
        return Err(Error::Format("CSV contains a header but no data rows".into()));
    }
    let has_labels = has_header || rows[data_start..].iter().any(|r| !parses(&r[0]));

    let col_start = usize::from(has_labels);
    let t_len = width - col_start;
    if t_len < 4 {
        return Err(Error::Dimension(format!(
            "need at least 4 time points, got {t_len}"
        )));
    }

    let grid = if has_header {
        let stamps = rows[0][col_start..]
            .iter()
            .enumerate()
            .map(|(j, c)| {
                c.parse::<f64>().map_err(|e| Error::Parse {
                    row: 1,
                    col: col_start + j + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TimeGrid::new(stamps)?
    } else {
        TimeGrid::unit_spaced(t_len)?
    };

    let n = rows.len() - data_start;
    let mut values = DMatrix::zeros(n, t_len);
    let mut labels = Vec::with_capacity(n);
    for (i, row) in rows[data_start..].iter().enumerate() {
        if has_labels {
            labels.push(row[0].clone());
        }
        for (j, cell) in row[col_start..].iter().enumerate() {
            values[(i, j)] = cell.parse::<f64>().map_err(|e| Error::Parse {
                row: data_start + i + 1,
                col: col_start + j + 1,
                message: e.to_string(),
            })?;
        }
    }

    FunctionalDataset::new(values, grid, if has_labels { Some(labels) } else { None })
}

/// Row-centred data together with the mean curve it was centred around.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredDataset {
    values: DMatrix<f64>,
    mean_curve: DVector<f64>,
}

impl CenteredDataset {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mean_curve(&self) -> &DVector<f64> {
        &self.mean_curve
    }

    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }
}

/// Subtract the cross-sectional mean curve from every row.
///
/// The input is expected to be smoothed already, so the column mean is the
/// smoothed sample mean (smoothing is linear and commutes with averaging).
pub fn center(dataset: &FunctionalDataset) -> CenteredDataset {
    let values = dataset.values();
    let n = values.nrows() as f64;
    let mean_curve = DVector::from_fn(values.ncols(), |j, _| values.column(j).sum() / n);
    let mut centered = values.clone();
    for mut row in centered.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v -= mean_curve[j];
        }
    }
    CenteredDataset {
        values: centered,
        mean_curve,
    }
}
