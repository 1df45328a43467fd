//! Datasets consumed by split experiments.
//!
//! Regression CSV: a header of column names, one row per sample. Target
//! columns are named explicitly; by default the last column is the single
//! target and every other column is a feature.
//!
//! Field datasets live in a directory of per-sample CSV grids:
//! `field_<i>.csv` (probabilities) and `label_<i>.csv` (0/1 events), with `<i>`
//! zero-padded to four digits and numbered from 0.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{GridPredictionSet, ProbabilityField};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionDataset {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    /// `targets[i][j]` is target `j` of sample `i`.
    pub targets: Vec<Vec<f64>>,
}

impl RegressionDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    /// Column `j` of the targets for the given rows.
    pub fn target_column(&self, j: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.targets[i][j]).collect()
    }

    pub fn feature_rows(&self, rows: &[usize]) -> Vec<Vec<f64>> {
        rows.iter().map(|&i| self.features[i].clone()).collect()
    }

    pub fn read_csv(path: impl AsRef<Path>, target_columns: &[String]) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?, target_columns)
    }

    pub fn from_csv_reader(reader: impl std::io::Read, target_columns: &[String]) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
        let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 {
            return Err(Error::Parse { row: 1, column: 1, message: "need at least one feature and one target".into() });
        }
        let target_idx: Vec<usize> = if target_columns.is_empty() {
            vec![header.len() - 1]
        } else {
            target_columns
                .iter()
                .map(|name| {
                    header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                        row: 1,
                        column: 0,
                        message: format!("target column `{name}` not in header"),
                    })
                })
                .collect::<Result<_>>()?
        };
        let feature_idx: Vec<usize> = (0..header.len()).filter(|c| !target_idx.contains(c)).collect();
        if feature_idx.is_empty() {
            return Err(Error::Parse { row: 1, column: 0, message: "no feature columns left".into() });
        }
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for (r, record) in csv.records().enumerate() {
            let record = record?;
            let line = r + 2;
            if record.len() != header.len() {
                return Err(Error::Parse {
                    row: line,
                    column: record.len().min(header.len()) + 1,
                    message: format!("expected {} values, found {}", header.len(), record.len()),
                });
            }
            let parse = |c: usize| -> Result<f64> {
                let cell = &record[c];
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    row: line,
                    column: c + 1,
                    message: format!("`{cell}` is not a finite number"),
                })
            };
            features.push(feature_idx.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?);
            targets.push(target_idx.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?);
        }
        if features.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(Self {
            feature_names: feature_idx.iter().map(|&c| header[c].clone()).collect(),
            target_names: target_idx.iter().map(|&c| header[c].clone()).collect(),
            features,
            targets,
        })
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(self.feature_names.iter().chain(&self.target_names))?;
        for (x, y) in self.features.iter().zip(&self.targets) {
            csv.write_record(x.iter().chain(y).map(|v| v.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Rescales every feature and target column to `[0, 1]`. Constant
    /// columns become all zeros.
    pub fn min_max_normalized(mut self) -> Self {
        fn rescale(rows: &mut [Vec<f64>]) {
            let width = rows.first().map_or(0, Vec::len);
            for c in 0..width {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[c]), hi.max(r[c]))
                });
                for r in rows.iter_mut() {
                    r[c] = if hi > lo { (r[c] - lo) / (hi - lo) } else { 0.0 };
                }
            }
        }
        rescale(&mut self.features);
        rescale(&mut self.targets);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSample {
    pub field: ProbabilityField,
    pub label: GridPredictionSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldDataset {
    pub samples: Vec<FieldSample>,
}

impl FieldDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut samples = Vec::new();
        loop {
            let field_path = dir.join(format!("field_{:04}.csv", samples.len()));
            if !field_path.exists() {
                break;
            }
            let label_path = dir.join(format!("label_{:04}.csv", samples.len()));
            let field = ProbabilityField::read_csv(&field_path)?;
            let label = GridPredictionSet::read_csv(&label_path)?;
            if field.dims() != label.dims() {
                let (r, c) = field.dims();
                let (lr, lc) = label.dims();
                return Err(Error::DimensionMismatch { expected: r * c, got: lr * lc });
            }
            samples.push(FieldSample { field, label });
        }
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(Self { samples })
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (i, s) in self.samples.iter().enumerate() {
            s.field.write_csv(std::fs::File::create(dir.join(format!("field_{i:04}.csv")))?)?;
            s.label.write_csv(std::fs::File::create(dir.join(format!("label_{i:04}.csv")))?)?;
        }
        Ok(())
    }
}
