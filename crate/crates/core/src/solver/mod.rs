//! Explicit monotone finite-difference solver on 1-D and 2-D grids.
//!
//! Terminal-value problems are marched in reversed time `s = T − t`, so both
//! orientations share one update
//!
//! ```text
//! u^{n+1} = u^n − Δs·[ Ĥ(x, t(s), D⁰u, diag D²u) − Σᵢ θᵢ (u₊ − 2u + u₋)/(2Δxᵢ) ]
//! ```
//!
//! with `Ĥ = H + G` from the exact evaluators. The dissipation `θᵢ` is either
//! the global cap `max |∂Ĥ/∂pᵢ|` over `|p| ≤ p_max` (Lax–Friedrichs) or the
//! same bound over the local one-sided difference box (local Lax–Friedrichs).
//! Monotonicity requires
//!
//! ```text
//! Δs · Σᵢ (2aᵢ/Δxᵢ² + θᵢ/Δxᵢ) ≤ 1
//! ```
//!
//! where `aᵢ` is the coefficient of `∂ᵢᵢu`. Cross-diffusion is not supported.

mod field;
mod grid;
mod stencil;

pub use field::{BlowUp, SolutionField, SolveStats};
pub use grid::{Grid, MIN_POINTS};
pub use stencil::{boundary_ghosts, numerical_gradient, numerical_hessian_diag, GhostLayer};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dissipation {
    /// Single dissipation coefficient per axis from the global gradient cap.
    Global,
    /// Per-node coefficient from the local one-sided difference box.
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Fixed step; `None` selects `cfl_safety · dt_max`.
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    /// Dissipation coefficient overriding the cap derived from `p_max`.
    pub theta: Option<f64>,
    /// Gradient cap; `None` selects `2·ĉ·(1 + max|x|)`.
    pub p_max: Option<f64>,
    pub dissipation: Dissipation,
    pub blowup_threshold: f64,
    /// Store every k-th layer (the data layer and the last layer are always kept).
    pub record_every: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            dt: None,
            cfl_safety: 0.9,
            theta: None,
            p_max: None,
            dissipation: Dissipation::Local,
            blowup_threshold: 1e8,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityBound {
    pub dt_max: f64,
    /// `max_i θᵢ`.
    pub theta: f64,
    pub theta_axes: Vec<f64>,
    /// `max_i aᵢ`.
    pub a_max: f64,
    pub a_axes: Vec<f64>,
}

/// `dt_max = 1 / (dim · max_i (2a/dx_i² + θ/dx_i))`.
pub fn cfl_dt(dx: &[f64], a_max: f64, theta: f64) -> f64 {
    let worst = dx
        .iter()
        .map(|h| 2.0 * a_max / (h * h) + theta / h)
        .fold(0.0, f64::max);
    if worst == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (dx.len() as f64 * worst)
    }
}

/// Samples the coefficients on the grid at 11 equispaced times.
fn sample_times(horizon: f64) -> impl Iterator<Item = f64> {
    (0..=10).map(move |k| horizon * k as f64 / 10.0)
}

fn diffusion_diag(spec: &ProblemSpec, x: &DVector<f64>, t: f64, out: &mut [f64]) -> Result<()> {
    out.iter_mut().for_each(|a| *a = 0.0);
    for term in &spec.terms {
        if let Some(a) = term.diffusion_matrix(x, t)? {
            for (i, slot) in out.iter_mut().enumerate() {
                *slot += a[(i, i)];
            }
        }
    }
    Ok(())
}

/// Largest stable step for the gradient cap `p_max`.
pub fn cfl_bound(spec: &ProblemSpec, grid: &Grid, p_max: f64) -> Result<StabilityBound> {
    if !(p_max > 0.0) {
        return Err(Error::domain(format!("gradient cap must be positive, got {p_max}")));
    }
    if spec.state_dim != grid.dim() {
        return Err(Error::shape(format!(
            "problem dimension {} on a {}-D grid",
            spec.state_dim,
            grid.dim()
        )));
    }
    let dim = grid.dim();
    let p_box = vec![p_max; dim];
    let mut theta_axes = vec![0.0; dim];
    let mut a_axes = vec![0.0; dim];
    let mut a = vec![0.0; dim];
    for t in sample_times(spec.horizon) {
        for x in grid.points() {
            let mut sens = vec![0.0; dim];
            for term in &spec.terms {
                for (s, v) in sens.iter_mut().zip(term.gradient_sensitivity(&x, t, &p_box)?) {
                    *s += v;
                }
            }
            diffusion_diag(spec, &x, t, &mut a)?;
            for i in 0..dim {
                theta_axes[i] = f64::max(theta_axes[i], sens[i]);
                a_axes[i] = f64::max(a_axes[i], a[i]);
            }
        }
    }
    let theta = theta_axes.iter().copied().fold(0.0, f64::max);
    let a_max = a_axes.iter().copied().fold(0.0, f64::max);
    Ok(StabilityBound {
        dt_max: cfl_dt(&grid.dx, a_max, theta),
        theta,
        theta_axes,
        a_max,
        a_axes,
    })
}

/// Rejects second-order coefficients with off-diagonal entries and negative
/// diagonals on the sampled grid.
pub fn check_diagonal_diffusion(spec: &ProblemSpec, grid: &Grid) -> Result<()> {
    for t in [0.0, 0.5 * spec.horizon, spec.horizon] {
        for x in grid.points() {
            for term in &spec.terms {
                if let Some(a) = term.diffusion_matrix(&x, t)? {
                    for i in 0..a.nrows() {
                        if a[(i, i)] < 0.0 {
                            return Err(Error::validation("negative diffusion coefficient"));
                        }
                        for j in 0..a.ncols() {
                            if i != j && a[(i, j)].abs() > 1e-12 {
                                return Err(Error::validation(format!(
                                    "cross-diffusion entry ({i},{j}) = {} at x = {:?} is not supported",
                                    a[(i, j)],
                                    x.as_slice()
                                )));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Default gradient cap `2·ĉ·(1 + max|x|)`.
pub fn default_p_max(spec: &ProblemSpec, grid: &Grid) -> f64 {
    2.0 * spec.constants.c_hat * (1.0 + grid.max_norm())
}

/// Scheme parameters after the stability analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedScheme {
    pub dt: f64,
    pub steps: usize,
    pub p_max: f64,
    /// Per-axis dissipation used by [`Dissipation::Global`] and by the step bound.
    pub theta: Vec<f64>,
    pub bound: StabilityBound,
    pub dissipation: Dissipation,
    pub blowup_threshold: f64,
    pub record_every: usize,
}

impl SchemeConfig {
    pub fn resolve(&self, spec: &ProblemSpec, grid: &Grid) -> Result<ResolvedScheme> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::config(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::config("blow-up threshold must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be at least 1"));
        }
        check_diagonal_diffusion(spec, grid)?;
        let p_max = self.p_max.unwrap_or_else(|| default_p_max(spec, grid));
        let mut bound = cfl_bound(spec, grid, p_max)?;
        if let Some(theta) = self.theta {
            if !(theta >= 0.0) {
                return Err(Error::config(format!("theta must be nonnegative, got {theta}")));
            }
            bound.theta = theta;
            bound.theta_axes = vec![theta; grid.dim()];
            bound.dt_max = cfl_dt(&grid.dx, bound.a_max, theta);
        }
        let dt = match self.dt {
            Some(dt) if !(dt > 0.0) => return Err(Error::config(format!("dt must be positive, got {dt}"))),
            Some(dt) if dt > bound.dt_max * (1.0 + 1e-12) => {
                return Err(Error::config(format!(
                    "dt = {dt} violates the monotonicity bound dt_max = {}",
                    bound.dt_max
                )))
            }
            Some(dt) => dt,
            None => self.cfl_safety * bound.dt_max,
        };
        let dt = dt.min(spec.horizon);
        let steps = (spec.horizon / dt).ceil() as usize;
        Ok(ResolvedScheme {
            dt: spec.horizon / steps as f64,
            steps,
            p_max,
            theta: bound.theta_axes.clone(),
            bound,
            dissipation: self.dissipation,
            blowup_threshold: self.blowup_threshold,
            record_every: self.record_every,
        })
    }
}

/// Updated value and local Courant number at one node.
pub fn update_point(
    ext: &GhostLayer,
    grid: &Grid,
    index: usize,
    spec: &ProblemSpec,
    time: f64,
    scheme: &ResolvedScheme,
) -> Result<(f64, f64)> {
    let dim = grid.dim();
    let idx = grid.multi_index(index);
    let x = grid.point(index);
    let mut p = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    let mut p_box = vec![0.0; dim];
    let mut second = [0.0; 2];
    let mut center = 0.0;
    for axis in 0..dim {
        let (m, c, q) = ext.triple(idx, axis);
        let h = grid.dx[axis];
        center = c;
        p[axis] = (q - m) / (2.0 * h);
        second[axis] = q - 2.0 * c + m;
        hess[(axis, axis)] = second[axis] / (h * h);
        p_box[axis] = (c - m).abs().max((q - c).abs()) / h;
    }
    let mut hamiltonian = 0.0;
    let mut theta = [0.0; 2];
    for term in &spec.terms {
        hamiltonian += term.eval(&x, time, &p, &hess)?;
        if scheme.dissipation == Dissipation::Local {
            for (slot, s) in theta.iter_mut().zip(term.gradient_sensitivity(&x, time, &p_box)?) {
                *slot += s;
            }
        }
    }
    if scheme.dissipation == Dissipation::Global {
        theta[..dim].copy_from_slice(&scheme.theta);
    }
    let mut a = [0.0; 2];
    diffusion_diag(spec, &x, time, &mut a[..dim])?;
    let mut dissipation = 0.0;
    let mut courant = 0.0;
    for axis in 0..dim {
        let h = grid.dx[axis];
        dissipation += theta[axis] * second[axis] / (2.0 * h);
        courant += 2.0 * a[axis] / (h * h) + theta[axis] / h;
    }
    Ok((center - scheme.dt * (hamiltonian - dissipation), scheme.dt * courant))
}

/// One explicit step from march time `march_time`; returns the new layer
/// and the largest local Courant number.
pub fn step(
    layer: &[f64],
    march_time: f64,
    spec: &ProblemSpec,
    grid: &Grid,
    scheme: &ResolvedScheme,
) -> Result<(Vec<f64>, f64)> {
    let ext = boundary_ghosts(layer, grid)?;
    let time = spec.model_time(march_time);
    let updates = (0..grid.len())
        .into_par_iter()
        .map(|k| update_point(&ext, grid, k, spec, time, scheme))
        .collect::<Result<Vec<_>>>()?;
    let courant = updates.iter().map(|u| u.1).fold(0.0, f64::max);
    Ok((updates.into_iter().map(|u| u.0).collect(), courant))
}

fn max_norm(layer: &[f64]) -> f64 {
    layer.iter().fold(0.0, |m: f64, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// Marches from the data layer over the full horizon or until blow-up.
pub fn solve(spec: &ProblemSpec, grid: &Grid, scheme: &SchemeConfig) -> Result<SolutionField> {
    let resolved = scheme.resolve(spec, grid)?;
    solve_resolved(spec, grid, &resolved)
}

pub fn solve_resolved(spec: &ProblemSpec, grid: &Grid, scheme: &ResolvedScheme) -> Result<SolutionField> {
    let mut layer: Vec<f64> = grid.points().iter().map(|x| spec.data.eval(x)).collect();
    let mut field = SolutionField::new(grid.clone(), spec.orientation, spec.horizon);
    let norm0 = max_norm(&layer);
    let mut max_courant: f64 = 0.0;
    let mut blow_up = None;
    if !norm0.is_finite() || norm0 > scheme.blowup_threshold {
        blow_up = Some(BlowUp {
            march_time: 0.0,
            time: spec.model_time(0.0),
            norm: norm0,
        });
    }
    field.push(0.0, spec.model_time(0.0), layer.clone(), norm0);
    let mut steps_taken = 0;
    if blow_up.is_none() {
        for n in 0..scheme.steps {
            let s = n as f64 * scheme.dt;
            let (next, courant) = step(&layer, s, spec, grid, scheme)?;
            max_courant = max_courant.max(courant);
            steps_taken = n + 1;
            let s_next = if n + 1 == scheme.steps { spec.horizon } else { (n + 1) as f64 * scheme.dt };
            let norm = max_norm(&next);
            if !norm.is_finite() || norm > scheme.blowup_threshold {
                blow_up = Some(BlowUp {
                    march_time: s_next,
                    time: spec.model_time(s_next),
                    norm,
                });
                break;
            }
            layer = next;
            if (n + 1) % scheme.record_every == 0 || n + 1 == scheme.steps {
                field.push(s_next, spec.model_time(s_next), layer.clone(), norm);
            }
        }
    }
    field.blow_up = blow_up;
    field.stats = SolveStats {
        dt: scheme.dt,
        steps: steps_taken,
        p_max: scheme.p_max,
        theta: scheme.bound.theta,
        a_max: scheme.bound.a_max,
        dt_max: scheme.bound.dt_max,
        max_courant,
        dissipation: scheme.dissipation,
    };
    Ok(field)
}

#[cfg(test)]
mod tests;
