use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform tensor grid in one or two dimensions. Axis 0 varies fastest in
/// the flat index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
    pub dx: Vec<f64>,
}

pub const MIN_POINTS: usize = 8;

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        let dim = lo.len();
        if !(1..=2).contains(&dim) || hi.len() != dim || n.len() != dim {
            return Err(Error::shape("grid needs 1 or 2 axes with matching bounds and counts"));
        }
        let mut dx = Vec::with_capacity(dim);
        for i in 0..dim {
            if n[i] < MIN_POINTS {
                return Err(Error::config(format!("axis {i} has {} points, need at least {MIN_POINTS}", n[i])));
            }
            if !(hi[i] > lo[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(Error::config(format!("axis {i} bounds [{}, {}] are not increasing", lo[i], hi[i])));
            }
            dx.push((hi[i] - lo[i]) / (n[i] - 1) as f64);
        }
        Ok(Grid { lo, hi, n, dx })
    }

    /// Grid with spacing as close to `dx` as the bounds allow.
    pub fn with_spacing(lo: Vec<f64>, hi: Vec<f64>, dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::config(format!("spacing must be positive, got {dx}")));
        }
        let n = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| ((b - a) / dx).round() as usize + 1)
            .collect();
        Grid::new(lo, hi, n)
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.n[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.dx[axis]
        }
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        let i0 = flat % self.n[0];
        let i1 = if self.dim() == 2 { flat / self.n[0] } else { 0 };
        [i0, i1]
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        idx[0] + if self.dim() == 2 { self.n[0] * idx[1] } else { 0 }
    }

    pub fn point(&self, flat: usize) -> DVector<f64> {
        let idx = self.multi_index(flat);
        DVector::from_fn(self.dim(), |axis, _| self.coord(axis, idx[axis]))
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Largest Euclidean norm of a grid point.
    pub fn max_norm(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.lo[i].abs().max(self.hi[i].abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| x[i] >= self.lo[i] - 1e-12 && x[i] <= self.hi[i] + 1e-12)
    }

    /// Multilinear interpolation of a layer at `x`.
    pub fn interpolate(&self, layer: &[f64], x: &DVector<f64>) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::domain(format!("point {:?} lies outside the grid", x.as_slice())));
        }
        let mut cell = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for axis in 0..self.dim() {
            let u = ((x[axis] - self.lo[axis]) / self.dx[axis]).clamp(0.0, (self.n[axis] - 1) as f64);
            let i = (u.floor() as usize).min(self.n[axis] - 2);
            cell[axis] = i;
            frac[axis] = u - i as f64;
        }
        if self.dim() == 1 {
            let a = layer[cell[0]];
            let b = layer[cell[0] + 1];
            return Ok(a + frac[0] * (b - a));
        }
        let at = |i: usize, j: usize| layer[self.flat_index([cell[0] + i, cell[1] + j])];
        let lower = at(0, 0) + frac[0] * (at(1, 0) - at(0, 0));
        let upper = at(0, 1) + frac[0] * (at(1, 1) - at(0, 1));
        Ok(lower + frac[1] * (upper - lower))
    }
}
