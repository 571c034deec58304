use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::Dissipation;
use crate::error::{Error, Result};
use crate::model::Orientation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    /// Problem time of the first layer whose max-norm crossed the threshold.
    pub time: f64,
    /// Same instant measured from the data layer.
    pub march_time: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub dt: f64,
    pub steps: usize,
    pub p_max: f64,
    pub theta: f64,
    pub a_max: f64,
    pub dt_max: f64,
    /// Largest `dt·Σ(2aᵢ/dxᵢ² + θᵢ/dxᵢ)` met during marching; `≤ 1` means every
    /// executed update was monotone.
    pub max_courant: f64,
    pub dissipation: Dissipation,
}

impl Default for SolveStats {
    fn default() -> Self {
        SolveStats {
            dt: 0.0,
            steps: 0,
            p_max: 0.0,
            theta: 0.0,
            a_max: 0.0,
            dt_max: 0.0,
            max_courant: 0.0,
            dissipation: Dissipation::Local,
        }
    }
}

/// Recorded layers in marching order: `layers[0]` is the data `ψ` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionField {
    pub grid: Grid,
    pub orientation: Orientation,
    pub horizon: f64,
    /// Problem times of the layers (decreasing for terminal-value problems).
    pub times: Vec<f64>,
    pub march_times: Vec<f64>,
    pub layers: Vec<Vec<f64>>,
    pub norm_history: Vec<f64>,
    pub blow_up: Option<BlowUp>,
    pub stats: SolveStats,
}

impl SolutionField {
    pub(crate) fn new(grid: Grid, orientation: Orientation, horizon: f64) -> Self {
        SolutionField {
            grid,
            orientation,
            horizon,
            times: Vec::new(),
            march_times: Vec::new(),
            layers: Vec::new(),
            norm_history: Vec::new(),
            blow_up: None,
            stats: SolveStats::default(),
        }
    }

    pub(crate) fn push(&mut self, march_time: f64, time: f64, layer: Vec<f64>, norm: f64) {
        self.march_times.push(march_time);
        self.times.push(time);
        self.layers.push(layer);
        self.norm_history.push(norm);
    }

    /// Field sampled from `f(x, t)` at the given problem times, listed in
    /// marching order.
    pub fn from_fn(
        grid: Grid,
        orientation: Orientation,
        horizon: f64,
        times: &[f64],
        f: impl Fn(&DVector<f64>, f64) -> f64,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::config("a field needs at least one time"));
        }
        let mut field = SolutionField::new(grid, orientation, horizon);
        let points = field.grid.points();
        let mut last = f64::NEG_INFINITY;
        for &t in times {
            let s = field.march_time_of(t);
            if !(s > last) {
                return Err(Error::config("times must advance in marching order"));
            }
            last = s;
            let layer: Vec<f64> = points.iter().map(|x| f(x, t)).collect();
            let norm = layer.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            field.push(s, t, layer, norm);
        }
        Ok(field)
    }

    pub fn blew_up(&self) -> bool {
        self.blow_up.is_some()
    }

    pub fn final_layer(&self) -> &[f64] {
        self.layers.last().expect("a field always holds the data layer")
    }

    fn march_time_of(&self, t: f64) -> f64 {
        match self.orientation {
            Orientation::Initial => t,
            Orientation::Terminal => self.horizon - t,
        }
    }

    /// Index of the recorded layer closest to problem time `t`.
    pub fn nearest_layer(&self, t: f64) -> usize {
        let s = self.march_time_of(t);
        let mut best = 0;
        for (k, m) in self.march_times.iter().enumerate() {
            if (m - s).abs() < (self.march_times[best] - s).abs() {
                best = k;
            }
        }
        best
    }

    /// Space-time interpolation at problem time `t`; linear in time between
    /// recorded layers, multilinear in space.
    pub fn sample(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        let s = self.march_time_of(t);
        let last = *self.march_times.last().expect("nonempty");
        let tol = 1e-12 * self.horizon.max(1.0);
        if s < -tol || s > last + tol {
            return Err(Error::domain(format!("time {t} is outside the computed range")));
        }
        let k = self.march_times.partition_point(|m| *m <= s);
        if k == 0 {
            return self.grid.interpolate(&self.layers[0], x);
        }
        if k >= self.march_times.len() {
            return self.grid.interpolate(self.final_layer(), x);
        }
        let (s0, s1) = (self.march_times[k - 1], self.march_times[k]);
        let w0 = self.grid.interpolate(&self.layers[k - 1], x)?;
        let w1 = self.grid.interpolate(&self.layers[k], x)?;
        let lambda = (s - s0) / (s1 - s0);
        Ok(w0 + lambda * (w1 - w0))
    }
}
