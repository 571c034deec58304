//! Executable checks: ordering, growth, residuals and independent oracles,
//! grouped into named suites.
//!
//! ```text
//! ordering:  max (U − V) over sampled (x, t)             pass ⇔ ≤ tol
//! growth:    max |w(x,t)| / (1 + |x|²)                   pass ⇔ ≤ ĉ
//! Hopf–Lax:  w(x,t) = min_y { ψ(y) + |x − y|²/(4ht) }
//! residual:  ±w_t + (H + G)(x, t, Dw, D²w)               + initial, − terminal orientation
//! ```
//!
//! Residuals use fourth-order centred differences and are meant for smooth
//! closed-form fields only.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barriers::{self, Barrier, RationalBarrier, DEFAULT_ETA};
use crate::error::{Error, Result};
use crate::mc::{self, McConfig, PolicyFamily, PolicySpec, SearchConfig};
use crate::model::{eval_full, Orientation, ProblemSpec, StateFn};
use crate::presets::{preset, Oracle, Preset, PresetOptions, StochLqParams};
use crate::riccati::{self, ScalarLQParams};
use crate::solver::{self, boundary_ghosts, default_p_max, numerical_gradient, numerical_hessian_diag, Grid, SolutionField};

/// Ordering tolerance for pairs of closed-form functions.
pub const ANALYTIC_TOLERANCE: f64 = 1e-10;
/// Ordering tolerance whenever a numerical field is involved.
pub const NUMERIC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    /// `max (U − V)` over the samples.
    pub max_violation: f64,
    pub location: Option<SamplePoint>,
    pub tolerance: f64,
    pub passed: bool,
}

impl OrderingReport {
    fn from_max(best: Option<(f64, SamplePoint)>, tolerance: f64) -> Self {
        match best {
            Some((v, at)) => OrderingReport {
                max_violation: v,
                location: Some(at),
                tolerance,
                passed: v <= tolerance,
            },
            None => OrderingReport {
                max_violation: f64::NEG_INFINITY,
                location: None,
                tolerance,
                passed: true,
            },
        }
    }
}

impl Barrier for SolutionField {
    fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        self.sample(x, t)
    }
}

/// Closure adapter for [`comparison_check`].
pub struct FnField<F>(pub F);

impl<F: Fn(&DVector<f64>, f64) -> f64> Barrier for FnField<F> {
    fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        Ok((self.0)(x, t))
    }
}

fn track_max(best: &mut Option<(f64, SamplePoint)>, d: f64, x: &DVector<f64>, t: f64) -> Result<()> {
    if d.is_nan() {
        return Err(Error::validation(format!("NaN difference at x = {:?}, t = {t}", x.as_slice())));
    }
    if best.as_ref().is_none_or(|(m, _)| d > *m) {
        *best = Some((
            d,
            SamplePoint {
                x: x.as_slice().to_vec(),
                t,
            },
        ));
    }
    Ok(())
}

/// Samples `U − V` on `grid × times`.
pub fn comparison_check(
    u: &dyn Barrier,
    v: &dyn Barrier,
    grid: &Grid,
    times: &[f64],
    tolerance: f64,
) -> Result<OrderingReport> {
    let points = grid.points();
    let mut best = None;
    for &t in times {
        for x in &points {
            track_max(&mut best, u.value(x, t)? - v.value(x, t)?, x, t)?;
        }
    }
    Ok(OrderingReport::from_max(best, tolerance))
}

/// Node-by-node ordering of two fields recorded on the same grid and layers.
pub fn compare_fields(u: &SolutionField, v: &SolutionField, tolerance: f64) -> Result<OrderingReport> {
    if u.grid != v.grid || u.layers.len() != v.layers.len() {
        return Err(Error::shape("fields are not sampled on the same grid and layers"));
    }
    if u.march_times.iter().zip(&v.march_times).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::shape("fields are recorded at different times"));
    }
    let points = u.grid.points();
    let mut best = None;
    for (k, (lu, lv)) in u.layers.iter().zip(&v.layers).enumerate() {
        for (i, x) in points.iter().enumerate() {
            track_max(&mut best, lu[i] - lv[i], x, u.times[k])?;
        }
    }
    Ok(OrderingReport::from_max(best, tolerance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub max_ratio: f64,
    pub location: Option<SamplePoint>,
    pub c_hat: f64,
    pub passed: bool,
}

/// `max |w|/(1 + |x|²)` over every recorded layer.
pub fn growth_check(field: &SolutionField, c_hat: f64) -> GrowthReport {
    let points = field.grid.points();
    let mut best: Option<(f64, SamplePoint)> = None;
    for (k, layer) in field.layers.iter().enumerate() {
        for (x, w) in points.iter().zip(layer) {
            let ratio = if w.is_finite() { w.abs() / (1.0 + x.norm_squared()) } else { f64::INFINITY };
            if best.as_ref().is_none_or(|(m, _)| ratio > *m) {
                best = Some((
                    ratio,
                    SamplePoint {
                        x: x.as_slice().to_vec(),
                        t: field.times[k],
                    },
                ));
            }
        }
    }
    let (max_ratio, location) = match best {
        Some((r, at)) => (r, Some(at)),
        None => (0.0, None),
    };
    GrowthReport {
        max_ratio,
        location,
        c_hat,
        passed: max_ratio <= c_hat,
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// `min_y { ψ(y) + |x − y|²/(4ht) }` in one dimension: a uniform scan of the
/// bracket `|y − x| ≤ 10(1+|x|)` followed by golden-section refinement to `1e-8`.
pub fn hopf_lax_oracle(psi: impl Fn(f64) -> f64, h: f64, x: f64, t: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("h must be positive, got {h}")));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("t must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(psi(x));
    }
    let f = |y: f64| psi(y) + (x - y) * (x - y) / (4.0 * h * t);
    let radius = 10.0 * (1.0 + x.abs());
    const SCAN: usize = 4000;
    let step = 2.0 * radius / SCAN as f64;
    let (mut k_best, mut f_best) = (0, f64::INFINITY);
    for k in 0..=SCAN {
        let v = f(x - radius + k as f64 * step);
        if v < f_best {
            (k_best, f_best) = (k, v);
        }
    }
    let centre = x - radius + k_best as f64 * step;
    let (mut a, mut b) = (centre - step, centre + step);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-8 {
        if fc <= fd {
            (b, d, fd) = (d, c, fc);
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            (a, c, fc) = (c, d, fd);
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    Ok(f_best.min(f(0.5 * (a + b))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub location: Option<SamplePoint>,
}

fn d1(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

fn d2(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(-2.0 * h) + 16.0 * f(-h) - 30.0 * f(0.0) + 16.0 * f(h) - f(2.0 * h)) / (12.0 * h * h)
}

/// Max over interior nodes and 11 times in `[2dt, T − 2dt]` of the pointwise
/// equation residual of a smooth field `w(x, t)` given in problem time.
pub fn residual_check(
    field: &dyn Fn(&DVector<f64>, f64) -> f64,
    spec: &ProblemSpec,
    grid: &Grid,
    dt: f64,
) -> Result<ResidualReport> {
    if spec.state_dim != grid.dim() {
        return Err(Error::shape("grid and problem dimensions differ"));
    }
    if !(dt > 0.0 && 4.0 * dt < spec.horizon) {
        return Err(Error::config(format!("dt = {dt} must lie in (0, T/4)")));
    }
    let sign = match spec.orientation {
        Orientation::Initial => 1.0,
        Orientation::Terminal => -1.0,
    };
    let dim = grid.dim();
    let shifted = |x: &DVector<f64>, axis: usize, h: f64| {
        let mut y = x.clone();
        y[axis] += h;
        y
    };
    let mut best: Option<(f64, SamplePoint)> = None;
    for k in 0..=10 {
        let t = 2.0 * dt + (spec.horizon - 4.0 * dt) * k as f64 / 10.0;
        for index in 0..grid.len() {
            let idx = grid.multi_index(index);
            if (0..dim).any(|a| idx[a] == 0 || idx[a] + 1 == grid.n[a]) {
                continue;
            }
            let x = grid.point(index);
            let wt = d1(|h| field(&x, t + h), dt);
            let p = DVector::from_fn(dim, |a, _| d1(|h| field(&shifted(&x, a, h), t), grid.dx[a]));
            let hess = DMatrix::from_fn(dim, dim, |i, j| {
                if i == j {
                    d2(|h| field(&shifted(&x, i, h), t), grid.dx[i])
                } else {
                    d1(|h| d1(|g| field(&shifted(&shifted(&x, i, h), j, g), t), grid.dx[j]), grid.dx[i])
                }
            });
            let r = (sign * wt + eval_full(spec, &x, t, &p, &hess)?).abs();
            track_max(&mut best, r, &x, t)?;
        }
    }
    let (max_residual, location) = match best {
        Some((r, at)) => (r, Some(at)),
        None => (0.0, None),
    };
    Ok(ResidualReport { max_residual, location })
}

fn in_inner_region(grid: &Grid, x: &DVector<f64>, fraction: f64) -> bool {
    (0..grid.dim()).all(|a| {
        let centre = 0.5 * (grid.lo[a] + grid.hi[a]);
        let half = 0.5 * (grid.hi[a] - grid.lo[a]);
        (x[a] - centre).abs() <= fraction * half + 1e-12
    })
}

/// Max of `|(u^{n+1} − u^{n−1})/(s_{n+1} − s_{n−1}) + Ĥ(x, t_n, D⁰uⁿ, D²uⁿ)|`
/// over the inner region of a computed field. Measures the consistency
/// defect left by the numerical dissipation; shrinks with the grid spacing.
pub fn field_residual(field: &SolutionField, spec: &ProblemSpec, inner_fraction: f64) -> Result<f64> {
    let grid = &field.grid;
    let mut worst: f64 = 0.0;
    for n in 1..field.layers.len().saturating_sub(1) {
        let ext = boundary_ghosts(&field.layers[n], grid)?;
        let ds = field.march_times[n + 1] - field.march_times[n - 1];
        for index in 0..grid.len() {
            let x = grid.point(index);
            if !in_inner_region(grid, &x, inner_fraction) {
                continue;
            }
            let p = numerical_gradient(&ext, grid, index);
            let hess = DMatrix::from_diagonal(&numerical_hessian_diag(&ext, grid, index));
            let us = (field.layers[n + 1][index] - field.layers[n - 1][index]) / ds;
            let r = us + eval_full(spec, &x, field.times[n], &p, &hess)?;
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub dx: Vec<f64>,
    /// Max final-layer difference between consecutive refinements on the
    /// coarse nodes of the inner region.
    pub differences: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `log₂` of the ratio of the last two differences.
    pub order: f64,
    pub passed: bool,
}

/// Solves at `base_dx / 2^k`, `k < levels`, and checks that successive
/// differences and consistency defects shrink.
pub fn self_convergence(p: &Preset, base_dx: f64, levels: usize) -> Result<ConvergenceReport> {
    if levels < 3 {
        return Err(Error::config("self-convergence needs at least three levels"));
    }
    const INNER: f64 = 2.0 / 3.0;
    let mut dx = Vec::new();
    let mut fields = Vec::new();
    let mut residuals = Vec::new();
    for k in 0..levels {
        let h = base_dx / 2f64.powi(k as i32);
        let grid = p.grid(Some(h))?;
        let field = solver::solve(&p.spec, &grid, &p.scheme())?;
        if field.blew_up() {
            return Err(Error::validation(format!("{} blew up at dx = {h}", p.name)));
        }
        residuals.push(field_residual(&field, &p.spec, INNER)?);
        dx.push(h);
        fields.push(field);
    }
    let coarse: Vec<DVector<f64>> = fields[0]
        .grid
        .points()
        .into_iter()
        .filter(|x| in_inner_region(&fields[0].grid, x, INNER))
        .collect();
    let t_end = *fields[0].times.last().expect("nonempty");
    let mut differences = Vec::new();
    for pair in fields.windows(2) {
        let mut worst: f64 = 0.0;
        for x in &coarse {
            worst = worst.max((pair[0].sample(x, t_end)? - pair[1].sample(x, t_end)?).abs());
        }
        differences.push(worst);
    }
    let n = differences.len();
    let order = (differences[n - 2] / differences[n - 1]).log2();
    let passed = differences.windows(2).all(|w| w[1] < w[0]) && residuals.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceReport {
        dx,
        differences,
        residuals,
        order,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSweepReport {
    /// Sorted in decreasing order.
    pub epsilons: Vec<f64>,
    /// Max-norm distance of the final layer to the `ε = 0` solution.
    pub distances: Vec<f64>,
    pub monotone: bool,
}

/// Distance of the risk-sensitive solutions to the robust limit as `ε ↓ 0`.
pub fn risk_sweep(epsilons: &[f64], dx: f64) -> Result<RiskSweepReport> {
    let mut eps: Vec<f64> = epsilons.to_vec();
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::config("sweep values must be positive"));
    }
    eps.sort_by(|a, b| b.total_cmp(a));
    let limit = preset("robust-limit", &PresetOptions::default())?;
    let grid = limit.grid(Some(dx))?;
    let reference = solver::solve(&limit.spec, &grid, &limit.scheme())?;
    let mut distances = Vec::new();
    for &e in &eps {
        let p = preset(
            "risk-sensitive",
            &PresetOptions {
                epsilon: Some(e),
                ..PresetOptions::default()
            },
        )?;
        let field = solver::solve(&p.spec, &grid, &p.scheme())?;
        let d = field
            .final_layer()
            .iter()
            .zip(reference.final_layer())
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        distances.push(d);
    }
    let monotone = distances.windows(2).all(|w| w[1] <= w[0]);
    Ok(RiskSweepReport {
        epsilons: eps,
        distances,
        monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingPropertyReport {
    pub preset: String,
    pub pairs: usize,
    pub max_violation: f64,
    pub location: Option<SamplePoint>,
    pub max_courant: f64,
    pub passed: bool,
}

/// Solves `pairs` random ordered data pairs `ψ₁ ≤ ψ₂` built around the
/// preset data and checks that the fields stay ordered node by node.
///
/// ```text
/// ψ₁ = ψ + a·sin(k·x + ϕ),   ψ₂ = ψ₁ + b·exp(−|x − c|²) + d,   a, b, d ≥ 0, a ≤ 0.2, |kᵢ| ≤ 1
/// ```
///
/// The gradient cap is inflated by 1.5 to cover the perturbations.
pub fn ordering_property(name: &str, pairs: usize, seed: u64) -> Result<OrderingPropertyReport> {
    let p = preset(name, &PresetOptions::default())?;
    let grid = p.grid(None)?;
    let dim = grid.dim();
    let mut scheme = p.scheme();
    scheme.p_max = Some(1.5 * p.p_max.unwrap_or_else(|| default_p_max(&p.spec, &grid)));
    let resolved = scheme.resolve(&p.spec, &grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, SamplePoint)> = None;
    let mut max_courant: f64 = 0.0;
    for _ in 0..pairs {
        // a·k² ≤ 0.2 keeps the curvature of the data small enough that the
        // sign-changing preset does not blow up before its horizon
        let a = rng.random_range(0.0..0.2);
        let k: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.0)).collect();
        let phase = rng.random_range(0.0..2.0 * PI);
        let b = rng.random_range(0.0..0.5);
        let c: Vec<f64> = (0..dim)
            .map(|i| rng.random_range(0.5 * grid.lo[i]..0.5 * grid.hi[i]))
            .collect();
        // touching pairs half of the time
        let shift = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.2) };
        let base = p.spec.data.clone();
        let psi1 = {
            let (base, k) = (base.clone(), k.clone());
            StateFn::new(move |x| base.eval(x) + a * (x.iter().zip(&k).map(|(xi, ki)| xi * ki).sum::<f64>() + phase).sin())
        };
        let psi2 = {
            let lower = psi1.clone();
            StateFn::new(move |x| {
                let dist2: f64 = x.iter().zip(&c).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum();
                lower.eval(x) + b * (-dist2).exp() + shift
            })
        };
        let u1 = solver::solve_resolved(&p.spec.with_data(psi1), &grid, &resolved)?;
        let u2 = solver::solve_resolved(&p.spec.with_data(psi2), &grid, &resolved)?;
        if u1.blew_up() || u2.blew_up() {
            return Err(Error::validation(format!("{name}: a perturbed solve blew up")));
        }
        max_courant = max_courant.max(u1.stats.max_courant).max(u2.stats.max_courant);
        let report = compare_fields(&u1, &u2, NUMERIC_TOLERANCE)?;
        if best.as_ref().is_none_or(|(m, _)| report.max_violation > *m) {
            best = Some((report.max_violation, report.location.expect("nonempty grid")));
        }
    }
    let summary = OrderingReport::from_max(best, NUMERIC_TOLERANCE);
    Ok(OrderingPropertyReport {
        preset: name.into(),
        pairs,
        max_violation: summary.max_violation,
        location: summary.location,
        max_courant,
        passed: summary.passed && max_courant <= 1.0,
    })
}

// ---------------------------------------------------------------------------
// named suites

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub note: String,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, metrics: &[(&str, f64)], note: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

pub const SUITE_NAMES: [&str; 10] = [
    "riccati",
    "barriers",
    "lq",
    "blowup",
    "hopf-lax",
    "ordering",
    "risk",
    "convergence",
    "mc",
    "all",
];

type CheckFn = fn(u64) -> Result<Vec<CheckResult>>;

fn suite_checks(name: &str) -> Option<Vec<CheckFn>> {
    let list: Vec<CheckFn> = match name {
        "riccati" => vec![check_riccati_exactness, check_riccati_blowup],
        "barriers" => vec![check_heat_barrier, check_quadratic_pair, check_rational_barrier],
        "lq" => vec![check_lq],
        "blowup" => vec![check_numerical_blowup],
        "hopf-lax" => vec![check_hopf_lax],
        "ordering" => vec![check_ordering],
        "risk" => vec![check_risk_sweep],
        "convergence" => vec![check_self_convergence],
        "mc" => vec![check_mc_identification, check_moments],
        "all" => SUITE_NAMES[..SUITE_NAMES.len() - 1]
            .iter()
            .flat_map(|n| suite_checks(n).expect("listed suite"))
            .collect(),
        _ => return None,
    };
    Some(list)
}

/// Runs a named suite. A check that errors is reported as failed with the
/// error message as its note.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let checks = suite_checks(name).ok_or_else(|| {
        Error::config(format!("unknown suite {name:?}; available suites: {}", SUITE_NAMES.join(", ")))
    })?;
    let mut results = Vec::new();
    for (k, check) in checks.iter().enumerate() {
        match check(seed) {
            Ok(mut r) => results.append(&mut r),
            Err(e) => results.push(CheckResult::new(&format!("{name}#{k}"), false, &[], e.to_string())),
        }
    }
    Ok(SuiteReport {
        suite: name.into(),
        seed,
        passed: results.iter().all(|r| r.passed),
        checks: results,
    })
}

/// RK4 at `dt = 1e-5` against the closed form on 50 random `(ρ, T)`.
pub fn check_riccati_exactness(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let params = ScalarLQParams::new(rng.random_range(1.0..5.0), rng.random_range(0.5..3.0))?;
        let traj = riccati::phi_rk4(&params, 1e-5)?;
        for (t, v) in traj.times.iter().zip(&traj.values) {
            worst = worst.max((v - riccati::phi_closed(&params, *t)?).abs());
        }
    }
    Ok(vec![CheckResult::new(
        "riccati_exactness",
        worst <= 1e-6,
        &[("max_abs_error", worst), ("tolerance", 1e-6)],
        "50 random (rho, T), dt = 1e-5",
    )])
}

pub fn check_riccati_blowup(_seed: u64) -> Result<Vec<CheckResult>> {
    let params = ScalarLQParams::new(0.5, 2.0)?;
    let tau = riccati::blowup_time(&params).expect("rho < 1 blows up on T = 2");
    let traj = riccati::phi_rk4(&params, 1e-5)?;
    let gap = (traj.t_min - tau).abs();
    Ok(vec![CheckResult::new(
        "riccati_blowup_localization",
        traj.blew_up && gap <= 1e-3,
        &[("t_min", traj.t_min), ("blowup_time", tau), ("gap", gap), ("tolerance", 1e-3)],
        "rho = 0.5, T = 2",
    )])
}

/// Residual, slope bounds, obstacle bound and kink-limit of the heat barrier.
pub fn check_heat_barrier(_seed: u64) -> Result<Vec<CheckResult>> {
    let horizon: f64 = 1.0;
    let r_kink = 1.0;
    let chi = |s: f64, t: f64| barriers::chi(s, t, r_kink);
    // χ_t = χ_ss is φ_t = r²φ_rr + rφ_r in s = ln r
    let h = 2e-3;
    let mut residual: f64 = 0.0;
    for t in [0.1, 0.5, 1.0 - h] {
        for k in 0..=50 {
            let s = (10f64).ln() * (-1.0 + 2.5 * k as f64 / 50.0);
            let ct = (chi(s, t + h)? - chi(s, t - h)?) / (2.0 * h);
            let css = (chi(s + h, t)? - 2.0 * chi(s, t)? + chi(s - h, t)?) / (h * h);
            residual = residual.max((ct - css).abs());
        }
    }
    let dr = 0.05;
    let (mut slope_min, mut slope_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut obstacle_gap = f64::INFINITY;
    for t in [0.05, 0.25, 0.5, horizon] {
        let values = (0..=800)
            .map(|k| barriers::phi_heat(k as f64 * dr, t, r_kink))
            .collect::<Result<Vec<_>>>()?;
        for (k, w) in values.windows(2).enumerate() {
            let slope = (w[1] - w[0]) / dr;
            slope_min = slope_min.min(slope);
            slope_max = slope_max.max(slope);
            obstacle_gap = obstacle_gap.min(w[0] - (k as f64 * dr - r_kink).max(0.0));
        }
    }
    let kinks = [1e2, 1e4, 1e6];
    let tails = kinks
        .iter()
        .map(|&r| barriers::phi_heat(1.0, horizon, r))
        .collect::<Result<Vec<_>>>()?;
    let decreasing = tails.windows(2).all(|w| w[1] <= w[0]) && tails[2] < 1e-6;
    let e_t = horizon.exp();
    Ok(vec![
        CheckResult::new(
            "heat_barrier_residual",
            residual <= 1e-4,
            &[("max_residual", residual), ("tolerance", 1e-4)],
            "r in [0.1, 31.6] log-spaced, t in {0.1, 0.5, 1}",
        ),
        CheckResult::new(
            "heat_barrier_slope",
            slope_min >= 0.0 && slope_max <= e_t + 1e-6,
            &[("min_slope", slope_min), ("max_slope", slope_max), ("upper", e_t)],
            "forward differences on r in [0, 40]",
        ),
        CheckResult::new(
            "heat_barrier_obstacle",
            obstacle_gap >= 0.0,
            &[("min_gap", obstacle_gap)],
            "phi(r, t) - (r - R)+",
        ),
        CheckResult::new(
            "heat_barrier_kink_limit",
            decreasing,
            &[("R_1e2", tails[0]), ("R_1e4", tails[1]), ("R_1e6", tails[2])],
            "phi(1, T) as R grows",
        ),
    ])
}

pub fn check_quadratic_pair(_seed: u64) -> Result<Vec<CheckResult>> {
    let p = preset("lq", &PresetOptions::default())?;
    let (sub, sup) = barriers::quadratic_barrier_constants(&p.spec.constants);
    let grid = Grid::with_spacing(vec![-5.0], vec![5.0], 0.25)?;
    let times: Vec<f64> = (0..=10).map(|k| sup.tau * k as f64 / 10.0).collect();
    let report = comparison_check(&sub, &sup, &grid, &times, ANALYTIC_TOLERANCE)?;
    Ok(vec![CheckResult::new(
        "quadratic_barrier_ordering",
        report.passed && report.max_violation <= 0.0,
        &[("max_violation", report.max_violation), ("K", sup.k), ("rho", sup.rho)],
        "sub <= super on the validity window",
    )])
}

/// Sampled strict-supersolution margin of the rational barrier for `w_t + |Dw|²/(4ρ) − ρ|x|²`.
pub fn check_rational_barrier(_seed: u64) -> Result<Vec<CheckResult>> {
    let mut margin = f64::INFINITY;
    for rho in [0.5, 2.0, 4.0] {
        let b = RationalBarrier::for_scalar_lq(rho, 3.0, DEFAULT_ETA)?;
        for k in 0..=40 {
            let t = 0.95 / b.l.max(1.0) * k as f64 / 40.0;
            for j in 0..=100 {
                let x = DVector::from_element(1, -5.0 + 0.1 * j as f64);
                let jet = b.jet(&x, t)?;
                let lhs = jet.dt + jet.gradient.norm_squared() / (4.0 * rho) - rho * x.norm_squared();
                margin = margin.min(lhs);
            }
        }
    }
    Ok(vec![CheckResult::new(
        "rational_barrier_strictness",
        margin >= 0.5 * DEFAULT_ETA,
        &[("min_lhs", margin), ("required", 0.5 * DEFAULT_ETA)],
        "K = 3, rho in {0.5, 2, 4}",
    )])
}

fn scalar_lq_params(p: &Preset) -> ScalarLQParams {
    match p.oracle {
        Some(Oracle::ScalarLq(params)) => params,
        _ => unreachable!("scalar LQ presets carry their Riccati oracle"),
    }
}

/// PDE against `φ(t)x²`, growth, barrier ordering and the exact-field residual.
pub fn check_lq(_seed: u64) -> Result<Vec<CheckResult>> {
    let p = preset("lq", &PresetOptions::default())?;
    let params = scalar_lq_params(&p);
    let grid = p.grid(None)?;
    let field = solver::solve(&p.spec, &grid, &p.scheme())?;
    let (mut err, mut scale): (f64, f64) = (0.0, 0.0);
    let points = grid.points();
    for (k, layer) in field.layers.iter().enumerate() {
        let t = field.times[k];
        for (x, w) in points.iter().zip(layer) {
            if x[0].abs() <= 2.0 + 1e-12 {
                let exact = riccati::lq_value(&params, x[0], t)?;
                err = err.max((w - exact).abs());
                scale = scale.max(exact.abs());
            }
        }
    }
    let rel = err / scale;
    let phi_max = riccati::phi_abs_max(&params, 0.0)?;
    let growth = growth_check(&field, phi_max + 0.1);
    let barrier = RationalBarrier::for_scalar_lq(params.rho, 2.0 * phi_max + 1.0, DEFAULT_ETA)?;
    let horizon = params.horizon;
    let upper = FnField(|x: &DVector<f64>, t: f64| barrier.eval(x, horizon - t).unwrap_or(f64::NAN));
    let times: Vec<f64> = field.times.iter().step_by(4).copied().collect();
    let ordering = comparison_check(&field, &upper, &grid, &times, NUMERIC_TOLERANCE)?;
    let fine = Grid::with_spacing(vec![-2.0], vec![2.0], 1e-2)?;
    let exact = |x: &DVector<f64>, t: f64| riccati::lq_value(&params, x[0], t).unwrap_or(f64::NAN);
    let residual = residual_check(&exact, &p.spec, &fine, 1e-2)?;
    Ok(vec![
        CheckResult::new(
            "lq_pde_vs_exact",
            rel <= 2e-2 && !field.blew_up(),
            &[
                ("max_rel_err", rel),
                ("max_abs_err", err),
                ("tolerance", 2e-2),
                ("dt", field.stats.dt),
                ("max_courant", field.stats.max_courant),
            ],
            "|x| <= 2, all recorded t; error normalised by max |phi(t)x^2|",
        ),
        CheckResult::new(
            "lq_growth",
            growth.passed,
            &[("max_ratio", growth.max_ratio), ("c_hat", growth.c_hat)],
            "",
        ),
        CheckResult::new(
            "lq_rational_barrier_ordering",
            ordering.passed,
            &[("max_violation", ordering.max_violation), ("K", barrier.k)],
            "numerical solution below the rational barrier",
        ),
        CheckResult::new(
            "lq_exact_residual",
            residual.max_residual <= 1e-3,
            &[("max_residual", residual.max_residual), ("tolerance", 1e-3)],
            "phi(t)x^2 at dx = dt = 1e-2",
        ),
    ])
}

pub fn check_numerical_blowup(_seed: u64) -> Result<Vec<CheckResult>> {
    let p = preset("lq-blowup", &PresetOptions::default())?;
    let params = scalar_lq_params(&p);
    let tau = riccati::blowup_time(&params).expect("rho < 1 blows up on T = 2");
    let field = solver::solve(&p.spec, &p.grid(None)?, &p.scheme())?;
    let detected = field.blow_up.map(|b| b.time).unwrap_or(f64::NAN);
    let gap = (detected - tau).abs();
    Ok(vec![CheckResult::new(
        "pde_blowup_localization",
        field.blew_up() && gap <= 0.1,
        &[("detected_time", detected), ("blowup_time", tau), ("gap", gap), ("tolerance", 0.1)],
        "first layer above the threshold, in problem time",
    )])
}

pub fn check_hopf_lax(_seed: u64) -> Result<Vec<CheckResult>> {
    let p = preset("const-h", &PresetOptions::default())?;
    let field = solver::solve(&p.spec, &p.grid(Some(0.02))?, &p.scheme())?;
    let closed = |x: f64, t: f64| x * x / (1.0 + 4.0 * t);
    let (mut pde_err, mut oracle_err): (f64, f64) = (0.0, 0.0);
    for t in [0.125, 0.25] {
        for x in [-0.5, -0.25, 0.0, 0.25, 0.5] {
            let v = field.sample(&DVector::from_element(1, x), t)?;
            pde_err = pde_err.max((v - closed(x, t)).abs());
            oracle_err = oracle_err.max((hopf_lax_oracle(|y| y * y, 1.0, x, t)? - closed(x, t)).abs());
        }
    }
    let fine = Grid::with_spacing(vec![-2.0], vec![2.0], 1e-2)?;
    let exact = |x: &DVector<f64>, t: f64| closed(x[0], t);
    let residual = residual_check(&exact, &p.spec, &fine, 1e-2)?;
    Ok(vec![
        CheckResult::new(
            "hopf_lax_pde",
            pde_err <= 5e-3,
            &[("max_abs_err", pde_err), ("tolerance", 5e-3)],
            "10 probes, dx = 0.02",
        ),
        CheckResult::new(
            "hopf_lax_oracle",
            oracle_err <= 1e-8,
            &[("max_abs_err", oracle_err)],
            "golden-section minimisation vs closed form",
        ),
        CheckResult::new(
            "hopf_lax_residual",
            residual.max_residual <= 1e-3,
            &[("max_residual", residual.max_residual), ("tolerance", 1e-3)],
            "",
        ),
    ])
}

pub fn check_ordering(seed: u64) -> Result<Vec<CheckResult>> {
    ["lq", "sign-h", "sigma-form"]
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let r = ordering_property(name, 20, seed.wrapping_add(k as u64))?;
            Ok(CheckResult::new(
                &format!("ordering_{name}"),
                r.passed,
                &[
                    ("pairs", r.pairs as f64),
                    ("max_violation", r.max_violation),
                    ("tolerance", NUMERIC_TOLERANCE),
                    ("max_courant", r.max_courant),
                ],
                "",
            ))
        })
        .collect()
}

pub fn check_risk_sweep(_seed: u64) -> Result<Vec<CheckResult>> {
    let r = risk_sweep(&[0.4, 0.2, 0.1, 0.05], 0.02)?;
    let metrics: Vec<(String, f64)> = r.epsilons.iter().zip(&r.distances).map(|(e, d)| (format!("distance_eps_{e}"), *d)).collect();
    let metrics: Vec<(&str, f64)> = metrics.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    Ok(vec![CheckResult::new(
        "risk_sensitive_limit",
        r.monotone,
        &metrics,
        "distance to the eps = 0 solution shrinks with eps",
    )])
}

pub fn check_self_convergence(_seed: u64) -> Result<Vec<CheckResult>> {
    let options = PresetOptions::default();
    ["finance", "risk-sensitive"]
        .iter()
        .map(|name| {
            let r = self_convergence(&preset(name, &options)?, 0.04, 3)?;
            Ok(CheckResult::new(
                &format!("self_convergence_{name}"),
                r.passed,
                &[
                    ("diff_coarse", r.differences[0]),
                    ("diff_fine", r.differences[1]),
                    ("order", r.order),
                    ("residual_coarse", r.residuals[0]),
                    ("residual_fine", r.residuals[2]),
                ],
                "dx = 0.04, 0.02, 0.01",
            ))
        })
        .collect()
}

/// Monte Carlo against the value function on the deterministic and the
/// stochastic LQ problems.
pub fn check_mc_identification(seed: u64) -> Result<Vec<CheckResult>> {
    let x0 = DVector::from_element(1, 1.0);
    let lq = preset("lq", &PresetOptions::default())?;
    let params = scalar_lq_params(&lq);
    let gain_params = params;
    let optimal = PolicySpec::LinearFeedback {
        gain: std::sync::Arc::new(move |t| {
            DMatrix::from_element(1, 1, -riccati::phi_closed(&gain_params, t).unwrap_or(f64::NAN) / gain_params.rho)
        }),
        label: "riccati feedback".into(),
    };
    let det_config = McConfig {
        n_paths: 1,
        dt: 1e-4,
        seed,
        truncation: None,
    };
    let det = mc::estimate_cost(lq.sde.as_ref().expect("lq has dynamics"), &optimal, &x0, 0.0, &det_config)?;
    let exact = riccati::lq_value(&params, 1.0, 0.0)?;
    let det_gap = (det.mean - exact).abs();

    let stoch = preset("stoch-lq", &PresetOptions::default())?;
    let field = solver::solve(&stoch.spec, &stoch.grid(None)?, &stoch.scheme())?;
    let pde = field.sample(&x0, 0.0)?;
    let config = McConfig {
        n_paths: 4000,
        dt: 2e-3,
        seed,
        truncation: None,
    };
    let search = SearchConfig {
        sweeps: 1,
        golden_iterations: 20,
    };
    let best = mc::optimize_policy(
        stoch.sde.as_ref().expect("stoch-lq has dynamics"),
        &PolicyFamily::LinearGain { lo: -3.0, hi: 1.0 },
        &x0,
        0.0,
        &config,
        &search,
    )?;
    let gap = (best.estimate.mean - pde).abs();
    let allowed = (3.0 * best.estimate.stderr).max(0.03 * pde.abs());
    let exact_stoch = StochLqParams::default().value(1.0, 0.0)?;
    Ok(vec![
        CheckResult::new(
            "mc_deterministic_lq",
            det_gap <= 1e-3,
            &[("mc_cost", det.mean), ("exact", exact), ("gap", det_gap), ("tolerance", 1e-3)],
            "Riccati feedback, dt = 1e-4",
        ),
        CheckResult::new(
            "mc_stochastic_lq",
            gap <= allowed,
            &[
                ("mc_value", best.estimate.mean),
                ("mc_stderr", best.estimate.stderr),
                ("pde_value", pde),
                ("exact_value", exact_stoch),
                ("best_gain", best.params[0]),
                ("gap", gap),
                ("allowed", allowed),
            ],
            "optimised constant gain in [-3, 1], 4000 paths, dt = 2e-3",
        ),
    ])
}

/// Second-moment bound on three presets with 10⁴ paths.
pub fn check_moments(seed: u64) -> Result<Vec<CheckResult>> {
    let x0 = DVector::from_element(1, 1.0);
    let config = McConfig {
        n_paths: 10_000,
        dt: 1e-2,
        seed,
        truncation: None,
    };
    let cases = [("lq", -0.4), ("stoch-lq", -1.0), ("finance", -0.5)];
    cases
        .iter()
        .map(|(name, gain)| {
            let p = preset(name, &PresetOptions::default())?;
            let policy = PolicySpec::constant_gain(DMatrix::from_element(1, 1, *gain));
            let r = mc::moment_check(p.sde.as_ref().expect("preset has dynamics"), &policy, &x0, 0.0, &config)?;
            Ok(CheckResult::new(
                &format!("moment_bound_{name}"),
                r.passed,
                &[
                    ("empirical", r.empirical),
                    ("stderr", r.stderr),
                    ("bound", r.bound),
                    ("control_energy", r.control_energy),
                ],
                format!("constant gain {gain}, 10000 paths"),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrowthConstants, HamiltonianTerm, ScalarHTerm};
    use proptest::prelude::*;

    fn grid1() -> Grid {
        Grid::with_spacing(vec![-2.0], vec![2.0], 0.1).unwrap()
    }

    #[test]
    fn identical_fields_have_zero_violation() {
        let f = FnField(|x: &DVector<f64>, t: f64| x[0].sin() + t);
        let r = comparison_check(&f, &f, &grid1(), &[0.0, 0.5], ANALYTIC_TOLERANCE).unwrap();
        assert_eq!(r.max_violation, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn violation_is_located() {
        let u = FnField(|x: &DVector<f64>, _t: f64| (-(x[0] - 1.0).powi(2) * 10.0).exp());
        let v = FnField(|_x: &DVector<f64>, _t: f64| 0.0);
        let r = comparison_check(&u, &v, &grid1(), &[0.3], ANALYTIC_TOLERANCE).unwrap();
        assert!(!r.passed);
        let at = r.location.unwrap();
        assert!((at.x[0] - 1.0).abs() < 1e-9 && at.t == 0.3);
    }

    #[test]
    fn growth_examples() {
        let grid = grid1();
        let zero = SolutionField::from_fn(grid.clone(), Orientation::Initial, 1.0, &[0.0], |_, _| 0.0).unwrap();
        assert_eq!(growth_check(&zero, 1.0).max_ratio, 0.0);
        let wide = Grid::with_spacing(vec![-10.0], vec![10.0], 0.5).unwrap();
        let expo = SolutionField::from_fn(wide, Orientation::Initial, 1.0, &[0.0], |x, _| x[0].abs().exp()).unwrap();
        let r = growth_check(&expo, 5.0);
        assert!(!r.passed);
        assert_eq!(r.location.unwrap().x[0].abs(), 10.0);
    }

    #[test]
    fn hopf_lax_examples() {
        assert!((hopf_lax_oracle(|y| y * y, 1.0, 0.5, 0.25).unwrap() - 0.125).abs() < 1e-12);
        assert_eq!(hopf_lax_oracle(|y| y * y, 1.0, 0.7, 0.0).unwrap(), 0.7 * 0.7);
        assert!((hopf_lax_oracle(|_| 3.0, 2.0, -1.2, 0.5).unwrap() - 3.0).abs() < 1e-15);
        assert!((hopf_lax_oracle(|y| y * y, 1.0, 0.7, 1e-9).unwrap() - 0.49).abs() < 1e-6);
        assert!(hopf_lax_oracle(|y| y, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn hopf_lax_handles_nonconvex_data() {
        // ψ = min((y−1)², (y+1)²) has w(0, t) = 1/(1 + 4t) for h = 1
        let psi = |y: f64| ((y - 1.0) * (y - 1.0)).min((y + 1.0) * (y + 1.0));
        let v = hopf_lax_oracle(psi, 1.0, 0.0, 0.5).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn residual_examples() {
        let zero_spec = ProblemSpec::new(
            1,
            vec![HamiltonianTerm::ScalarH(ScalarHTerm { h: StateFn::constant(0.0) })],
            StateFn::constant(0.0),
            Orientation::Initial,
            1.0,
            GrowthConstants::new(1.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let zero = |_: &DVector<f64>, _: f64| 0.0;
        assert_eq!(residual_check(&zero, &zero_spec, &grid1(), 1e-2).unwrap().max_residual, 0.0);

        let p = preset("const-h", &PresetOptions::default()).unwrap();
        let hl = |x: &DVector<f64>, t: f64| x[0] * x[0] / (1.0 + 4.0 * t);
        let r = residual_check(&hl, &p.spec, &grid1(), 1e-2).unwrap();
        assert!(r.max_residual <= 1e-3, "{r:?}");
        // a wrong field is caught
        let bad = |x: &DVector<f64>, t: f64| x[0] * x[0] / (1.0 + 3.0 * t);
        assert!(residual_check(&bad, &p.spec, &grid1(), 1e-2).unwrap().max_residual > 0.1);
    }

    #[test]
    fn lq_exact_residual_is_small() {
        let p = preset("lq", &PresetOptions::default()).unwrap();
        let params = ScalarLQParams::new(2.0, 1.0).unwrap();
        let exact = |x: &DVector<f64>, t: f64| riccati::lq_value(&params, x[0], t).unwrap();
        let grid = Grid::with_spacing(vec![-2.0], vec![2.0], 1e-2).unwrap();
        assert!(residual_check(&exact, &p.spec, &grid, 1e-2).unwrap().max_residual <= 1e-3);
    }

    #[test]
    fn fields_on_different_grids_are_rejected() {
        let a = SolutionField::from_fn(grid1(), Orientation::Initial, 1.0, &[0.0], |_, _| 0.0).unwrap();
        let g2 = Grid::with_spacing(vec![-2.0], vec![2.0], 0.2).unwrap();
        let b = SolutionField::from_fn(g2, Orientation::Initial, 1.0, &[0.0], |_, _| 0.0).unwrap();
        assert!(matches!(compare_fields(&a, &b, 1e-6), Err(Error::Shape(_))));
    }

    #[test]
    fn unknown_suite_lists_names() {
        let e = run_suite("nope", 0).unwrap_err();
        assert!(e.to_string().contains("hopf-lax"));
    }

    #[test]
    fn barrier_suite_passes() {
        let r = run_suite("barriers", 1).unwrap();
        assert!(r.passed, "{:#?}", r.checks);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn swapping_arguments_negates_a_constant_gap(c in -3.0f64..3.0, a in -2.0f64..2.0) {
            let u = FnField(move |x: &DVector<f64>, t: f64| a * x[0] * x[0] + t);
            let v = FnField(move |x: &DVector<f64>, t: f64| a * x[0] * x[0] + t + c);
            let times = [0.0, 0.4];
            let uv = comparison_check(&u, &v, &grid1(), &times, ANALYTIC_TOLERANCE).unwrap();
            let vu = comparison_check(&v, &u, &grid1(), &times, ANALYTIC_TOLERANCE).unwrap();
            prop_assert!((uv.max_violation + vu.max_violation).abs() < 1e-12);
        }
    }
}
