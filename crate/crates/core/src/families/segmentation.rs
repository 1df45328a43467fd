//! Thresholded probability fields and the false-discovery loss.
//!
//! `F_λ(x) = {(p, q) : f_pq(x) ≥ λ}` is the set of cells whose predicted event
//! probability reaches `λ`. The loss `1 − |y ∩ F| / |F|` is one minus the
//! per-sample precision and is not monotone under set inclusion. An empty
//! prediction makes no discoveries and has loss `0`.
//!
//! Fields and label sets are stored as CSV grids: one line per row, one
//! value per column, no header. Label grids hold `0`/`1`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityField {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl ProbabilityField {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: probs.len() });
        }
        if let Some(i) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig(format!(
                "probability {} at cell ({}, {}) is outside [0, 1]",
                probs[i],
                i / cols,
                i % cols
            )));
        }
        Ok(Self { rows, cols, probs })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.probs[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.probs
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let (rows, cols, values) = read_grid(std::fs::File::open(path)?)?;
        Self::new(rows, cols, values)
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let (rows, cols, values) = read_grid(reader)?;
        Self::new(rows, cols, values)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        write_grid(writer, self.cols, self.probs.iter().map(|p| p.to_string()))
    }
}

/// A set of grid cells on a `rows × cols` grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPredictionSet {
    rows: usize,
    cols: usize,
    members: Vec<bool>,
}

impl GridPredictionSet {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, members: vec![false; rows * cols] }
    }

    pub fn from_mask(rows: usize, cols: usize, members: Vec<bool>) -> Result<Self> {
        if members.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: members.len() });
        }
        Ok(Self { rows, cols, members })
    }

    pub fn from_cells(rows: usize, cols: usize, cells: &[(usize, usize)]) -> Result<Self> {
        let mut set = Self::empty(rows, cols);
        for &(r, c) in cells {
            if r >= rows || c >= cols {
                return Err(Error::InvalidConfig(format!("cell ({r}, {c}) outside {rows}×{cols} grid")));
            }
            set.members[r * cols + c] = true;
        }
        Ok(set)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.members[row * self.cols + col]
    }

    pub fn mask(&self) -> &[bool] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    /// Member cells in row-major order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        (0..self.members.len())
            .filter(|&i| self.members[i])
            .map(|i| (i / self.cols, i % self.cols))
            .collect()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.members.iter().zip(&other.members).all(|(&a, &b)| !a || b)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let (rows, cols, values) = read_grid(reader)?;
        let mut members = Vec::with_capacity(values.len());
        for (i, v) in values.into_iter().enumerate() {
            members.push(match v {
                0.0 => false,
                1.0 => true,
                other => {
                    return Err(Error::Parse {
                        row: i / cols + 1,
                        column: i % cols + 1,
                        message: format!("label cells must be 0 or 1, got {other}"),
                    })
                }
            });
        }
        Self::from_mask(rows, cols, members)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        write_grid(writer, self.cols, self.members.iter().map(|&m| if m { "1" } else { "0" }.to_string()))
    }
}

fn read_grid(reader: impl Read) -> Result<(usize, usize, Vec<f64>)> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in csv.records().enumerate() {
        let record = record?;
        let width = *cols.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::Parse {
                row: r + 1,
                column: record.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            values.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                row: r + 1,
                column: c + 1,
                message: format!("`{cell}` is not a number"),
            })?);
        }
        rows += 1;
    }
    match cols {
        Some(cols) if cols > 0 => Ok((rows, cols, values)),
        _ => Err(Error::EmptySample),
    }
}

fn write_grid(writer: impl Write, cols: usize, cells: impl Iterator<Item = String>) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let cells: Vec<String> = cells.collect();
    for row in cells.chunks(cols) {
        csv.write_record(row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Cells whose probability is at least `lambda`.
pub fn segmentation_threshold(field: &ProbabilityField, lambda: f64) -> GridPredictionSet {
    GridPredictionSet {
        rows: field.rows,
        cols: field.cols,
        members: field.probs.iter().map(|&p| p >= lambda).collect(),
    }
}

pub fn false_discovery_loss(label: &GridPredictionSet, prediction: &GridPredictionSet) -> Result<f64> {
    if label.dims() != prediction.dims() {
        let (r, c) = label.dims();
        let (pr, pc) = prediction.dims();
        return Err(Error::DimensionMismatch { expected: r * c, got: pr * pc });
    }
    let size = prediction.len();
    if size == 0 {
        return Ok(0.0);
    }
    let hits = label
        .members
        .iter()
        .zip(&prediction.members)
        .filter(|(&y, &f)| y && f)
        .count();
    Ok(1.0 - hits as f64 / size as f64)
}

/// `|F| / (P·Q)`.
pub fn normalized_size(set: &GridPredictionSet) -> f64 {
    set.len() as f64 / set.members.len() as f64
}

/// Probabilities sorted descending, paired with a running count of label hits.
fn ranked_hits(field: &ProbabilityField, label: Option<&GridPredictionSet>) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..field.probs.len()).collect();
    order.sort_by(|&a, &b| field.probs[b].total_cmp(&field.probs[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| field.probs[i]).collect();
    let mut hits = Vec::with_capacity(order.len() + 1);
    hits.push(0);
    if let Some(label) = label {
        for &i in &order {
            hits.push(hits.last().unwrap() + usize::from(label.members[i]));
        }
    }
    (sorted, hits)
}

/// False-discovery loss at every threshold in one pass over the sorted field.
///
/// Equivalent to thresholding and scoring at each `λ` separately, but
/// `O(PQ log PQ + |Λ| log PQ)` instead of `O(PQ · |Λ|)`.
pub fn false_discovery_profile(
    field: &ProbabilityField,
    label: &GridPredictionSet,
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    if field.dims() != label.dims() {
        return Err(Error::DimensionMismatch { expected: field.probs.len(), got: label.members.len() });
    }
    let (sorted, hits) = ranked_hits(field, Some(label));
    Ok(thresholds
        .iter()
        .map(|&t| {
            let size = sorted.partition_point(|&p| p >= t);
            if size == 0 {
                0.0
            } else {
                1.0 - hits[size] as f64 / size as f64
            }
        })
        .collect())
}

/// Normalized size at every threshold.
pub fn size_profile(field: &ProbabilityField, thresholds: &[f64]) -> Vec<f64> {
    let (sorted, _) = ranked_hits(field, None);
    let total = sorted.len() as f64;
    thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&p| p >= t) as f64 / total)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field_2x2() -> ProbabilityField {
        ProbabilityField::new(2, 2, vec![0.9, 0.1, 0.5, 0.5]).unwrap()
    }

    #[test]
    fn threshold_examples() {
        let f = field_2x2();
        assert_eq!(segmentation_threshold(&f, 0.0).len(), 4);
        assert!(segmentation_threshold(&f, 1.01).is_empty());
        assert_eq!(segmentation_threshold(&f, 0.5).cells(), vec![(0, 0), (1, 0), (1, 1)]);
    }

    #[test]
    fn loss_examples() {
        let y = GridPredictionSet::from_cells(2, 2, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(false_discovery_loss(&y, &y).unwrap(), 0.0);
        let miss = GridPredictionSet::from_cells(2, 2, &[(0, 1)]).unwrap();
        assert_eq!(false_discovery_loss(&y, &miss).unwrap(), 1.0);
        let half = GridPredictionSet::from_cells(2, 2, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(false_discovery_loss(&y, &half).unwrap(), 0.5);
        assert_eq!(false_discovery_loss(&y, &GridPredictionSet::empty(2, 2)).unwrap(), 0.0);
        assert!(false_discovery_loss(&y, &GridPredictionSet::empty(3, 2)).is_err());
    }

    #[test]
    fn loss_is_not_monotone_under_inclusion() {
        let y = GridPredictionSet::from_cells(2, 2, &[(0, 0)]).unwrap();
        let small = GridPredictionSet::from_cells(2, 2, &[(0, 0)]).unwrap();
        let large = GridPredictionSet::from_cells(2, 2, &[(0, 0), (0, 1)]).unwrap();
        assert!(small.is_subset_of(&large));
        assert!(false_discovery_loss(&y, &large).unwrap() > false_discovery_loss(&y, &small).unwrap());
    }

    #[test]
    fn sizes() {
        let f = field_2x2();
        assert_eq!(normalized_size(&segmentation_threshold(&f, 0.0)), 1.0);
        assert_eq!(size_profile(&f, &[0.0, 0.5, 0.95]), vec![1.0, 0.75, 0.0]);
    }

    #[test]
    fn csv_grids() {
        let f = field_2x2();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0.9,0.1\n0.5,0.5\n");
        assert_eq!(ProbabilityField::from_csv_reader(buf.as_slice()).unwrap(), f);
        let y = GridPredictionSet::from_csv_reader("0,1\n1,0\n".as_bytes()).unwrap();
        assert_eq!(y.cells(), vec![(0, 1), (1, 0)]);
        assert!(GridPredictionSet::from_csv_reader("0,2\n".as_bytes()).is_err());
        assert!(ProbabilityField::from_csv_reader("0.1,1.5\n".as_bytes()).is_err());
    }

    fn field_and_label() -> impl Strategy<Value = (ProbabilityField, GridPredictionSet)> {
        (2usize..6, 2usize..6).prop_flat_map(|(r, c)| {
            (
                prop::collection::vec(prop_oneof![0.0f64..=1.0, Just(0.5), Just(0.25)], r * c),
                prop::collection::vec(any::<bool>(), r * c),
            )
                .prop_map(move |(p, m)| {
                    (ProbabilityField::new(r, c, p).unwrap(), GridPredictionSet::from_mask(r, c, m).unwrap())
                })
        })
    }

    proptest! {
        #[test]
        fn profile_matches_direct_route((field, label) in field_and_label()) {
            let thresholds: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).chain([0.25, 0.5, 1.1]).collect();
            let profile = false_discovery_profile(&field, &label, &thresholds).unwrap();
            let sizes = size_profile(&field, &thresholds);
            for (k, &t) in thresholds.iter().enumerate() {
                let set = segmentation_threshold(&field, t);
                prop_assert!((profile[k] - false_discovery_loss(&label, &set).unwrap()).abs() < 1e-12);
                prop_assert_eq!(sizes[k], normalized_size(&set));
                prop_assert!((0.0..=1.0).contains(&profile[k]));
            }
        }

        #[test]
        fn thresholds_nest((field, _) in field_and_label(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(segmentation_threshold(&field, hi).is_subset_of(&segmentation_threshold(&field, lo)));
        }
    }
}
