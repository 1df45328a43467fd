//! The loss matrix `values[i][j] = L(Y_i, F_{λ_j}(X_i))` and its CSV form.
//!
//! CSV layout: a header row whose cells are the grid points (vector points
//! written as coordinates joined by `;`), then one row of decimal losses per
//! calibration sample. Columns may appear in any order; they are reordered
//! into canonical grid order on load.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ParamGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    grid: ParamGrid,
    rows: usize,
    values: Vec<f64>,
}

impl LossMatrix {
    pub fn from_rows(grid: ParamGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = grid.len();
        let mut values = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch { expected: width, got: row.len() });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { row: i, col: j, value: row[j] });
            }
            values.extend_from_slice(row);
        }
        Ok(Self { grid, rows: rows.len(), values })
    }

    /// Builds a matrix from a per-sample row function, evaluated in parallel.
    pub fn from_row_fn<F>(grid: ParamGrid, n: usize, row: F) -> Result<Self>
    where
        F: Fn(usize) -> Vec<f64> + Sync,
    {
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(&row).collect();
        Self::from_rows(grid, rows)
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn n_samples(&self) -> usize {
        self.rows
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn get(&self, sample: usize, point: usize) -> f64 {
        self.values[sample * self.grid.len() + point]
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        let w = self.grid.len();
        &self.values[sample * w..(sample + 1) * w]
    }

    pub fn column(&self, point: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, point)).collect()
    }

    pub fn max_value(&self) -> Option<f64> {
        self.values.iter().copied().max_by(f64::total_cmp)
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.rows);
        Self {
            grid: self.grid.clone(),
            rows: n,
            values: self.values[..n * self.grid.len()].to_vec(),
        }
    }

    /// The matrix extended by one extra sample row (e.g. a test sample).
    pub fn with_row(&self, row: &[f64]) -> Result<Self> {
        if row.len() != self.grid.len() {
            return Err(Error::DimensionMismatch { expected: self.grid.len(), got: row.len() });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { row: self.rows, col: j, value: row[j] });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(row);
        Ok(Self { grid: self.grid.clone(), rows: self.rows + 1, values })
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.grid.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self { grid: self.grid.clone(), rows: indices.len(), values }
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = csv.headers()?.clone();
        let mut points = Vec::with_capacity(header.len());
        for (c, cell) in header.iter().enumerate() {
            let point = ParamGrid::parse_point(cell).ok_or_else(|| Error::Parse {
                row: 1,
                column: c + 1,
                message: format!("header cell `{cell}` is not a grid point"),
            })?;
            points.push(point);
        }
        let (grid, position) = ParamGrid::canonicalize(points).map_err(|e| Error::Parse {
            row: 1,
            column: 0,
            message: e.to_string(),
        })?;
        let width = grid.len();
        let mut values = Vec::new();
        let mut rows = 0;
        for (r, record) in csv.records().enumerate() {
            let record = record?;
            let line = r + 2;
            if record.len() != width {
                return Err(Error::Parse {
                    row: line,
                    column: record.len().min(width) + 1,
                    message: format!("expected {width} values, found {}", record.len()),
                });
            }
            let mut row = vec![0.0; width];
            for (c, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: c + 1,
                    message: format!("`{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: line,
                        column: c + 1,
                        message: format!("non-finite loss `{cell}`"),
                    });
                }
                row[position[c]] = v;
            }
            values.extend(row);
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::EmptySample);
        }
        Ok(Self { grid, rows, values })
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record((0..self.grid.len()).map(|j| self.grid.format_point(j)))?;
        for i in 0..self.rows {
            csv.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Evaluates `loss(label_i, predict(λ_j, object_i))` for every sample and grid point.
///
/// Cells are evaluated in parallel; the result does not depend on the
/// evaluation order.
pub fn compute_loss_matrix<X, Y, P, Pf, Lf>(
    samples: &[(X, Y)],
    grid: &ParamGrid,
    predict: Pf,
    loss: Lf,
) -> Result<LossMatrix>
where
    X: Sync,
    Y: Sync,
    Pf: Fn(&[f64], &X) -> P + Sync,
    Lf: Fn(&Y, &P) -> f64 + Sync,
{
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let rows: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|(x, y)| grid.points().map(|lambda| loss(y, &predict(lambda, x))).collect())
        .collect();
    LossMatrix::from_rows(grid.clone(), rows)
}
