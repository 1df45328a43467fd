//! Discrete parameter grids.
//!
//! Points are stored in lexicographic ascending order, fixed at construction.
//! Search functions index into this order, so `min`, `max` and grid-order
//! searches are total and reproducible.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    dim: usize,
    coords: Vec<f64>,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Rounds away the representation error accumulated by `start + i * step`.
fn tidy(v: f64) -> f64 {
    let r = (v * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl ParamGrid {
    /// Scalar grid from arbitrary values; sorted ascending.
    pub fn scalar(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        Self::from_points(values.into_iter().map(|v| vec![v]).collect())
    }

    /// Evenly spaced scalar grid `start, start+step, …` up to and including `stop`.
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
            return Err(Error::InvalidGrid(format!(
                "range {start}:{stop}:{step} needs finite values, step > 0 and stop ≥ start"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Self::scalar((0..count).map(|i| tidy(start + i as f64 * step)))
    }

    /// Parses `"start:stop:step"`.
    pub fn parse_range(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
        let bad = || Error::InvalidGrid(format!("expected start:stop:step, got `{spec}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Self::range(nums[0], nums[1], nums[2])
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::canonicalize(points).map(|(grid, _)| grid)
    }

    /// Builds a grid and reports where each input point landed:
    /// `position[i]` is the canonical index of `points[i]`.
    pub fn canonicalize(points: Vec<Vec<f64>>) -> Result<(Self, Vec<usize>)> {
        let dim = match points.first() {
            Some(p) if !p.is_empty() => p.len(),
            Some(_) => return Err(Error::InvalidGrid("grid points need at least one coordinate".into())),
            None => return Err(Error::InvalidGrid("grid is empty".into())),
        };
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGrid(format!("non-finite grid point {p:?}")));
            }
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| lexicographic(&points[a], &points[b]));
        for w in order.windows(2) {
            if lexicographic(&points[w[0]], &points[w[1]]).is_eq() {
                return Err(Error::InvalidGrid(format!("duplicate grid point {:?}", points[w[0]])));
            }
        }
        let mut position = vec![0; points.len()];
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (canonical, &original) in order.iter().enumerate() {
            position[original] = canonical;
            coords.extend_from_slice(&points[original]);
        }
        Ok((Self { dim, coords }, position))
    }

    /// Cartesian product of per-dimension axes, in lexicographic order.
    pub fn product(axes: &[Vec<f64>]) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(Vec::is_empty) {
            return Err(Error::InvalidGrid("product grid needs nonempty axes".into()));
        }
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Self::from_points(points)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Values of a one-dimensional grid.
    pub fn scalar_values(&self) -> Option<&[f64]> {
        (self.dim == 1).then_some(self.coords.as_slice())
    }

    /// Canonical index of `point`, if present.
    pub fn position(&self, point: &[f64]) -> Option<usize> {
        if point.len() != self.dim {
            return None;
        }
        let mut lo = 0;
        let mut hi = self.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            match lexicographic(self.point(mid), point) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Distinct values taken by coordinate `axis`, ascending.
    pub fn axis_values(&self, axis: usize) -> Vec<f64> {
        let mut values: Vec<f64> = self.points().map(|p| p[axis]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        values
    }

    /// `"a;b;c"` rendering used in CSV headers.
    pub fn format_point(&self, index: usize) -> String {
        self.point(index)
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_point(text: &str) -> Option<Vec<f64>> {
        text.split(';').map(|t| t.trim().parse::<f64>().ok()).collect()
    }
}
