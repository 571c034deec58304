//! Ghost-cell extension and central difference operators.
//!
//! ```text
//! ghost = 3w₀ − 3w₁ + w₂        (quadratic through the three nearest nodes)
//! D⁰w   = (w₊ − w₋)/(2dx)
//! D²w   = (w₊ − 2w + w₋)/dx²
//! ```

use nalgebra::DVector;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Layer padded with one ghost node on each side of every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostLayer {
    pub n_ext: Vec<usize>,
    pub data: Vec<f64>,
}

impl GhostLayer {
    fn ext_flat(&self, idx: [usize; 2]) -> usize {
        idx[0] + if self.n_ext.len() == 2 { self.n_ext[0] * idx[1] } else { 0 }
    }

    /// Value at interior multi-index `idx` shifted by `offset` along `axis`.
    #[inline]
    pub fn at(&self, idx: [usize; 2], axis: usize, offset: isize) -> f64 {
        let mut e = [idx[0] + 1, if self.n_ext.len() == 2 { idx[1] + 1 } else { 0 }];
        e[axis] = (e[axis] as isize + offset) as usize;
        self.data[self.ext_flat(e)]
    }

    /// `(w₋, w, w₊)` along `axis` at interior multi-index `idx`.
    #[inline]
    pub fn triple(&self, idx: [usize; 2], axis: usize) -> (f64, f64, f64) {
        (self.at(idx, axis, -1), self.at(idx, axis, 0), self.at(idx, axis, 1))
    }
}

/// Pads the layer with quadratically extrapolated ghost values.
pub fn boundary_ghosts(layer: &[f64], grid: &Grid) -> Result<GhostLayer> {
    if layer.len() != grid.len() {
        return Err(Error::shape(format!("layer has {} values, grid has {}", layer.len(), grid.len())));
    }
    let dim = grid.dim();
    let n_ext: Vec<usize> = grid.n.iter().map(|n| n + 2).collect();
    let total: usize = n_ext.iter().product();
    let mut ext = GhostLayer {
        n_ext: n_ext.clone(),
        data: vec![0.0; total],
    };
    for k in 0..grid.len() {
        let [i, j] = grid.multi_index(k);
        let e = ext.ext_flat([i + 1, if dim == 2 { j + 1 } else { 0 }]);
        ext.data[e] = layer[k];
    }
    let extrapolate = |data: &mut Vec<f64>, line: &dyn Fn(usize) -> usize, len: usize| {
        // nodes 1..=len are real, 0 and len+1 are ghosts
        data[line(0)] = 3.0 * data[line(1)] - 3.0 * data[line(2)] + data[line(3)];
        data[line(len + 1)] = 3.0 * data[line(len)] - 3.0 * data[line(len - 1)] + data[line(len - 2)];
    };
    if dim == 1 {
        extrapolate(&mut ext.data, &|i| i, grid.n[0]);
        return Ok(ext);
    }
    let (nx, ny) = (n_ext[0], n_ext[1]);
    for j in 1..=grid.n[1] {
        extrapolate(&mut ext.data, &|i| i + nx * j, grid.n[0]);
    }
    // second axis over the full padded width, which fills the corners too
    for i in 0..nx {
        extrapolate(&mut ext.data, &|j| i + nx * j, grid.n[1]);
    }
    debug_assert_eq!(ext.data.len(), nx * ny);
    Ok(ext)
}

pub fn numerical_gradient(ext: &GhostLayer, grid: &Grid, index: usize) -> DVector<f64> {
    let idx = grid.multi_index(index);
    DVector::from_fn(grid.dim(), |axis, _| {
        let (m, _, p) = ext.triple(idx, axis);
        (p - m) / (2.0 * grid.dx[axis])
    })
}

pub fn numerical_hessian_diag(ext: &GhostLayer, grid: &Grid, index: usize) -> DVector<f64> {
    let idx = grid.multi_index(index);
    DVector::from_fn(grid.dim(), |axis, _| {
        let (m, c, p) = ext.triple(idx, axis);
        (p - 2.0 * c + m) / (grid.dx[axis] * grid.dx[axis])
    })
}
