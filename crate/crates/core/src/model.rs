//! Problem descriptions and exact evaluation of the Hamiltonians.
//!
//! The equation family is
//!
//! ```text
//! w_t + H(x, t, Dw, D²w) + G(x, t, Dw, D²w) = 0,      w(x, 0) = ψ(x)
//!
//! H(x,t,p,X) = inf_{α ∈ ℝᵏ} { ⟨b(x,t,α), p⟩ + ℓ(x,t,α) − Tr[σσᵀ(x,t) X] }
//! G(x,t,p,X) = sup_{β ∈ B}  { −⟨g(x,t,β), p⟩ − f(x,t,β) − Tr[ccᵀ(x,t,β) X] }
//! ```
//!
//! or its terminal-value twin `−w_t + H + G = 0, w(x, T) = ψ(x)`. The
//! unbounded-control terms are restricted to control-affine drift
//! `b = b₀ + B·α` and running cost `ℓ = (ν/2)|α|² + ℓ₀(x,t)`, for which the
//! infimum (or supremum) over `α ∈ ℝᵏ` has a closed form. Compact control
//! sets are represented by a finite grid of control points.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Space-time coefficient `(x, t) ↦ T`, shareable across worker threads.
pub struct Field<T>(Arc<dyn Fn(&DVector<f64>, f64) -> T + Send + Sync>);

pub type ScalarField = Field<f64>;
pub type VectorField = Field<DVector<f64>>;
pub type MatrixField = Field<DMatrix<f64>>;

impl<T> Field<T> {
    pub fn new(f: impl Fn(&DVector<f64>, f64) -> T + Send + Sync + 'static) -> Self {
        Field(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: &DVector<f64>, t: f64) -> T {
        (self.0)(x, t)
    }
}

impl<T: Clone + Send + Sync + 'static> Field<T> {
    pub fn constant(value: T) -> Self {
        Field::new(move |_, _| value.clone())
    }
}

impl ScalarField {
    pub fn zero() -> Self {
        Field::constant(0.0)
    }
}

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        Field::constant(DVector::zeros(n))
    }
}

impl MatrixField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Field::constant(DMatrix::zeros(rows, cols))
    }
}

impl<T> Clone for Field<T> {
    fn clone(&self) -> Self {
        Field(Arc::clone(&self.0))
    }
}

impl<T> fmt::Debug for Field<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Field(..)")
    }
}

/// Time-independent scalar function of the state, used for data `ψ` and the
/// coefficient `h` of the scalar quadratic form.
#[derive(Clone)]
pub struct StateFn(Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>);

impl StateFn {
    pub fn new(f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        StateFn(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        StateFn::new(move |_| c)
    }

    #[inline]
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for StateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("StateFn(..)")
    }
}

/// Growth constants: `c_bar` bounds the data, `nu` is the coercivity of the
/// running cost in the control, `c_hat` bounds the quadratic growth of solutions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GrowthConstants {
    pub c_bar: f64,
    pub nu: f64,
    pub c_hat: f64,
}

impl GrowthConstants {
    pub fn new(c_bar: f64, nu: f64, c_hat: f64) -> Result<Self> {
        for (name, v) in [("c_bar", c_bar), ("nu", nu), ("c_hat", c_hat)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(GrowthConstants { c_bar, nu, c_hat })
    }
}

/// Drift `b(x,t,α) = b₀(x,t) + B(x,t)·α` and control-free diffusion `σ(x,t)`.
#[derive(Debug, Clone)]
pub struct ControlAffineDynamics {
    pub state_dim: usize,
    pub control_dim: usize,
    pub noise_dim: usize,
    pub drift: VectorField,
    pub control_matrix: MatrixField,
    pub diffusion: MatrixField,
}

impl ControlAffineDynamics {
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        noise_dim: usize,
        drift: VectorField,
        control_matrix: MatrixField,
        diffusion: MatrixField,
    ) -> Self {
        ControlAffineDynamics {
            state_dim,
            control_dim,
            noise_dim,
            drift,
            control_matrix,
            diffusion,
        }
    }

    pub(crate) fn drift_at(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let b0 = self.drift.eval(x, t);
        if b0.len() != self.state_dim {
            return Err(Error::shape(format!(
                "drift has length {}, state dimension is {}",
                b0.len(),
                self.state_dim
            )));
        }
        Ok(b0)
    }

    pub(crate) fn control_matrix_at(&self, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let b = self.control_matrix.eval(x, t);
        if b.shape() != (self.state_dim, self.control_dim) {
            return Err(Error::shape(format!(
                "control matrix is {:?}, expected {:?}",
                b.shape(),
                (self.state_dim, self.control_dim)
            )));
        }
        Ok(b)
    }

    pub(crate) fn diffusion_at(&self, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let s = self.diffusion.eval(x, t);
        if s.shape() != (self.state_dim, self.noise_dim) {
            return Err(Error::shape(format!(
                "diffusion matrix is {:?}, expected {:?}",
                s.shape(),
                (self.state_dim, self.noise_dim)
            )));
        }
        Ok(s)
    }
}

/// Running cost `ℓ(x,t,α) = (ν/2)|α|² + ℓ₀(x,t)`.
#[derive(Debug, Clone)]
pub struct RunningCost {
    pub nu: f64,
    pub ell0: ScalarField,
}

impl RunningCost {
    pub fn new(nu: f64, ell0: ScalarField) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::validation(format!("cost coercivity must be positive, got {nu}")));
        }
        Ok(RunningCost { nu, ell0 })
    }

    pub fn eval(&self, x: &DVector<f64>, t: f64, alpha: &DVector<f64>) -> f64 {
        0.5 * self.nu * alpha.norm_squared() + self.ell0.eval(x, t)
    }
}

/// Unbounded-control term with control-affine drift and quadratic cost.
#[derive(Debug, Clone)]
pub struct QuadraticTerm {
    pub dynamics: ControlAffineDynamics,
    pub cost: RunningCost,
}

/// One point `β` of a compact control grid: drift `g`, cost `f`, diffusion `c`.
#[derive(Debug, Clone)]
pub struct ControlPoint {
    pub g: VectorField,
    pub f: ScalarField,
    pub c: MatrixField,
}

#[derive(Debug, Clone)]
pub struct CompactTerm {
    pub state_dim: usize,
    pub points: Vec<ControlPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `sign · ⟨Σ(x,t) p, p⟩`.
#[derive(Debug, Clone)]
pub struct SigmaTerm {
    pub state_dim: usize,
    pub sigma: MatrixField,
    pub sign: Sign,
}

/// `h(x)|p|²`.
#[derive(Debug, Clone)]
pub struct ScalarHTerm {
    pub h: StateFn,
}

#[derive(Debug, Clone)]
pub enum HamiltonianTerm {
    InfQuadratic(QuadraticTerm),
    SupQuadratic(QuadraticTerm),
    SupCompact(CompactTerm),
    Sigma(SigmaTerm),
    ScalarH(ScalarHTerm),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `w_t + H + G = 0` with `w(·, 0) = ψ`.
    Initial,
    /// `−w_t + H + G = 0` with `w(·, T) = ψ`; solved in reversed time.
    Terminal,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub state_dim: usize,
    pub terms: Vec<HamiltonianTerm>,
    pub data: StateFn,
    pub orientation: Orientation,
    pub horizon: f64,
    pub constants: GrowthConstants,
}

impl ProblemSpec {
    pub fn new(
        state_dim: usize,
        terms: Vec<HamiltonianTerm>,
        data: StateFn,
        orientation: Orientation,
        horizon: f64,
        constants: GrowthConstants,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::shape("state dimension must be at least 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::validation(format!("horizon must be positive, got {horizon}")));
        }
        for term in &terms {
            if let Some(n) = term.state_dim() {
                if n != state_dim {
                    return Err(Error::shape(format!(
                        "term of dimension {n} in a problem of dimension {state_dim}"
                    )));
                }
            }
            if let HamiltonianTerm::SupCompact(c) = term {
                if c.points.is_empty() {
                    return Err(Error::config("compact control grid has no points"));
                }
            }
        }
        Ok(ProblemSpec {
            state_dim,
            terms,
            data,
            orientation,
            horizon,
            constants,
        })
    }

    pub fn with_data(&self, data: StateFn) -> Self {
        ProblemSpec {
            data,
            ..self.clone()
        }
    }

    /// Time at which the coefficients are evaluated after `march_time` units of
    /// marching away from the data: identity for initial-value problems,
    /// `t ↦ T − t` for terminal-value problems.
    pub fn model_time(&self, march_time: f64) -> f64 {
        match self.orientation {
            Orientation::Initial => march_time,
            Orientation::Terminal => self.horizon - march_time,
        }
    }

    /// Inverse of [`ProblemSpec::model_time`] (the map is an involution).
    pub fn march_time(&self, model_time: f64) -> f64 {
        self.model_time(model_time)
    }
}

impl HamiltonianTerm {
    pub fn state_dim(&self) -> Option<usize> {
        match self {
            HamiltonianTerm::InfQuadratic(q) | HamiltonianTerm::SupQuadratic(q) => {
                Some(q.dynamics.state_dim)
            }
            HamiltonianTerm::SupCompact(c) => Some(c.state_dim),
            HamiltonianTerm::Sigma(s) => Some(s.state_dim),
            HamiltonianTerm::ScalarH(_) => None,
        }
    }

    pub fn eval(&self, x: &DVector<f64>, t: f64, p: &DVector<f64>, hess: &DMatrix<f64>) -> Result<f64> {
        match self {
            HamiltonianTerm::InfQuadratic(q) => eval_inf_closed(q, x, t, p, hess),
            HamiltonianTerm::SupQuadratic(q) => eval_sup_closed(q, x, t, p, hess),
            HamiltonianTerm::SupCompact(c) => eval_sup_compact(c, x, t, p, hess),
            HamiltonianTerm::Sigma(s) => eval_sigma_form(s, x, t, p),
            HamiltonianTerm::ScalarH(h) => Ok(eval_h_form(h, x, p)),
        }
    }

    /// Per-axis upper bound of `|∂H/∂p_i|` over the box `|p_j| ≤ p_box[j]`.
    pub fn gradient_sensitivity(&self, x: &DVector<f64>, t: f64, p_box: &[f64]) -> Result<Vec<f64>> {
        let n = p_box.len();
        let mut out = vec![0.0; n];
        match self {
            HamiltonianTerm::InfQuadratic(q) | HamiltonianTerm::SupQuadratic(q) => {
                let b0 = q.dynamics.drift_at(x, t)?;
                let b = q.dynamics.control_matrix_at(x, t)?;
                check_len(n, q.dynamics.state_dim, "gradient box")?;
                let bbt = &b * b.transpose();
                for i in 0..n {
                    let quad: f64 = (0..n).map(|j| bbt[(i, j)].abs() * p_box[j]).sum();
                    out[i] = b0[i].abs() + quad / q.cost.nu;
                }
            }
            HamiltonianTerm::SupCompact(c) => {
                check_len(n, c.state_dim, "gradient box")?;
                for point in &c.points {
                    let g = point.g.eval(x, t);
                    check_len(g.len(), n, "compact drift")?;
                    for i in 0..n {
                        out[i] = out[i].max(g[i].abs());
                    }
                }
            }
            HamiltonianTerm::Sigma(s) => {
                check_len(n, s.state_dim, "gradient box")?;
                let m = s.sigma.eval(x, t);
                for i in 0..n {
                    // ∂/∂p_i ⟨Σp,p⟩ = ((Σ + Σᵀ)p)_i
                    out[i] = (0..n)
                        .map(|j| (m[(i, j)] + m[(j, i)]).abs() * p_box[j])
                        .sum();
                }
            }
            HamiltonianTerm::ScalarH(h) => {
                let hx = h.h.eval(x).abs();
                for i in 0..n {
                    out[i] = 2.0 * hx * p_box[i];
                }
            }
        }
        Ok(out)
    }

    /// Second-order coefficient matrix `A(x,t)` such that the term depends on
    /// the Hessian through `−Tr[A X]`; the compact form reports the elementwise
    /// maximum over its control points.
    pub fn diffusion_matrix(&self, x: &DVector<f64>, t: f64) -> Result<Option<DMatrix<f64>>> {
        match self {
            HamiltonianTerm::InfQuadratic(q) | HamiltonianTerm::SupQuadratic(q) => {
                let s = q.dynamics.diffusion_at(x, t)?;
                Ok(Some(&s * s.transpose()))
            }
            HamiltonianTerm::SupCompact(c) => {
                let mut acc: Option<DMatrix<f64>> = None;
                for point in &c.points {
                    let cm = point.c.eval(x, t);
                    let a = &cm * cm.transpose();
                    acc = Some(match acc {
                        None => a,
                        Some(prev) => prev.zip_map(&a, |u, v| if v.abs() > u.abs() { v } else { u }),
                    });
                }
                Ok(acc)
            }
            HamiltonianTerm::Sigma(_) | HamiltonianTerm::ScalarH(_) => Ok(None),
        }
    }
}

fn check_len(got: usize, expected: usize, what: &str) -> Result<()> {
    if got != expected {
        return Err(Error::shape(format!("{what} has length {got}, expected {expected}")));
    }
    Ok(())
}

fn check_args(n: usize, p: &DVector<f64>, hess: &DMatrix<f64>) -> Result<()> {
    check_len(p.len(), n, "gradient")?;
    if hess.shape() != (n, n) {
        return Err(Error::shape(format!("Hessian is {:?}, expected {n}x{n}", hess.shape())));
    }
    Ok(())
}

fn trace_product(a: &DMatrix<f64>, hess: &DMatrix<f64>) -> f64 {
    a.component_mul(hess).sum()
}

/// Lower bound `−γ²/(4ρ)` of `inf_α { ρ|α|² + γ|α| }`.
pub fn inf_quadratic_bound(rho: f64, gamma: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::domain(format!("rho must be positive, got {rho}")));
    }
    Ok(-gamma * gamma / (4.0 * rho))
}

/// Exact `min_{r ≥ 0} { ρr² + γr }`.
pub fn inf_quadratic_exact(rho: f64, gamma: f64) -> Result<f64> {
    let bound = inf_quadratic_bound(rho, gamma)?;
    Ok(if gamma <= 0.0 { bound } else { 0.0 })
}

/// `inf_α {⟨b₀ + Bα, p⟩ + (ν/2)|α|² + ℓ₀} − Tr[σσᵀX]`
/// `= ⟨b₀,p⟩ + ℓ₀ − Tr[σσᵀX] − |Bᵀp|²/(2ν)`.
pub fn eval_inf_closed(
    term: &QuadraticTerm,
    x: &DVector<f64>,
    t: f64,
    p: &DVector<f64>,
    hess: &DMatrix<f64>,
) -> Result<f64> {
    let dynamics = &term.dynamics;
    check_args(dynamics.state_dim, p, hess)?;
    let b0 = dynamics.drift_at(x, t)?;
    let b = dynamics.control_matrix_at(x, t)?;
    let s = dynamics.diffusion_at(x, t)?;
    let btp = b.tr_mul(p);
    let diffusion = trace_product(&(&s * s.transpose()), hess);
    Ok(b0.dot(p) + term.cost.ell0.eval(x, t) - diffusion - btp.norm_squared() / (2.0 * term.cost.nu))
}

/// `sup_α {−⟨b₀ + Bα, p⟩ − (ν/2)|α|² − ℓ₀} − Tr[σσᵀX]`
/// `= −⟨b₀,p⟩ − ℓ₀ − Tr[σσᵀX] + |Bᵀp|²/(2ν)`.
pub fn eval_sup_closed(
    term: &QuadraticTerm,
    x: &DVector<f64>,
    t: f64,
    p: &DVector<f64>,
    hess: &DMatrix<f64>,
) -> Result<f64> {
    let dynamics = &term.dynamics;
    check_args(dynamics.state_dim, p, hess)?;
    let b0 = dynamics.drift_at(x, t)?;
    let b = dynamics.control_matrix_at(x, t)?;
    let s = dynamics.diffusion_at(x, t)?;
    let btp = b.tr_mul(p);
    let diffusion = trace_product(&(&s * s.transpose()), hess);
    Ok(-b0.dot(p) - term.cost.ell0.eval(x, t) - diffusion + btp.norm_squared() / (2.0 * term.cost.nu))
}

/// Maximum over the control grid; returns the value and the index of the
/// first maximizing point.
pub fn eval_sup_compact_argmax(
    term: &CompactTerm,
    x: &DVector<f64>,
    t: f64,
    p: &DVector<f64>,
    hess: &DMatrix<f64>,
) -> Result<(f64, usize)> {
    check_args(term.state_dim, p, hess)?;
    if term.points.is_empty() {
        return Err(Error::config("compact control grid has no points"));
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, point) in term.points.iter().enumerate() {
        let g = point.g.eval(x, t);
        check_len(g.len(), term.state_dim, "compact drift")?;
        let c = point.c.eval(x, t);
        if c.nrows() != term.state_dim {
            return Err(Error::shape(format!("compact diffusion has {} rows", c.nrows())));
        }
        let value = -g.dot(p) - point.f.eval(x, t) - trace_product(&(&c * c.transpose()), hess);
        // strict comparison keeps the lowest index on ties
        if value > best.0 {
            best = (value, i);
        }
    }
    Ok(best)
}

/// `max_β { −⟨g(x,t,β),p⟩ − f(x,t,β) − Tr[ccᵀ(x,t,β) X] }`.
pub fn eval_sup_compact(
    term: &CompactTerm,
    x: &DVector<f64>,
    t: f64,
    p: &DVector<f64>,
    hess: &DMatrix<f64>,
) -> Result<f64> {
    eval_sup_compact_argmax(term, x, t, p, hess).map(|(v, _)| v)
}

pub(crate) const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// `sign · ⟨Σ(x,t)p, p⟩`; `Σ` must be symmetric.
pub fn eval_sigma_form(term: &SigmaTerm, x: &DVector<f64>, t: f64, p: &DVector<f64>) -> Result<f64> {
    check_len(p.len(), term.state_dim, "gradient")?;
    let m = term.sigma.eval(x, t);
    if m.shape() != (term.state_dim, term.state_dim) {
        return Err(Error::shape(format!("Sigma is {:?}", m.shape())));
    }
    let asym = (&m - m.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::validation(format!("Sigma is not symmetric (defect {asym:e})")));
    }
    Ok(term.sign.value() * (&m * p).dot(p))
}

/// `h(x)|p|²`.
pub fn eval_h_form(term: &ScalarHTerm, x: &DVector<f64>, p: &DVector<f64>) -> f64 {
    term.h.eval(x) * p.norm_squared()
}

/// Sum of all term values: the spatial operator `H + G` of the equation.
pub fn eval_full(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    t: f64,
    p: &DVector<f64>,
    hess: &DMatrix<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for term in &spec.terms {
        total += term.eval(x, t, p, hess)?;
    }
    Ok(total)
}

/// Options for the sampled growth audit.
#[derive(Debug, Clone, Copy)]
pub struct AuditConfig {
    /// Half-width of the sampled state box `[−radius, radius]ᴺ`.
    pub radius: f64,
    pub points: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            radius: 10.0,
            points: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditViolation {
    pub check: &'static str,
    pub x: Vec<f64>,
    pub t: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub samples: usize,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Radical-inverse (Halton) coordinate of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    inv = out;
    inv
}

const HALTON_BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Quasi-random sample points `(x, t)` in `[−r, r]ᴺ × [0, T]`.
pub fn halton_points(dim: usize, radius: f64, horizon: f64, count: usize) -> Vec<(DVector<f64>, f64)> {
    assert!(dim < HALTON_BASES.len(), "audit supports up to 7 state dimensions");
    (1..=count as u64)
        .map(|k| {
            let x = DVector::from_fn(dim, |i, _| radius * (2.0 * radical_inverse(k, HALTON_BASES[i]) - 1.0));
            let t = horizon * radical_inverse(k, HALTON_BASES[dim]);
            (x, t)
        })
        .collect()
}

/// Checks the growth conditions of every coefficient on quasi-random samples.
///
/// Matrix norms are Frobenius norms. The sigma form is additionally required
/// to be symmetric with eigenvalues in `(0, c_bar]`.
pub fn audit(spec: &ProblemSpec, config: &AuditConfig) -> Result<AuditReport> {
    let c = spec.constants.c_bar;
    let slack = |bound: f64| bound * (1.0 + 1e-9) + 1e-12;
    let mut report = AuditReport {
        samples: config.points,
        violations: Vec::new(),
    };
    let mut push = |check: &'static str, x: &DVector<f64>, t: f64, value: f64, bound: f64| {
        if !(value <= slack(bound)) {
            report.violations.push(AuditViolation {
                check,
                x: x.iter().copied().collect(),
                t,
                value,
                bound,
            });
        }
    };
    for (x, t) in halton_points(spec.state_dim, config.radius, spec.horizon, config.points) {
        let r = x.norm();
        let lin = c * (1.0 + r);
        let quad = c * (1.0 + r * r);
        push("data", &x, t, spec.data.eval(&x).abs(), quad);
        for term in &spec.terms {
            match term {
                HamiltonianTerm::InfQuadratic(q) | HamiltonianTerm::SupQuadratic(q) => {
                    push("drift", &x, t, q.dynamics.drift_at(&x, t)?.norm(), lin);
                    push("control_matrix", &x, t, q.dynamics.control_matrix_at(&x, t)?.norm(), c);
                    push("diffusion", &x, t, q.dynamics.diffusion_at(&x, t)?.norm(), lin);
                    // ℓ₀ ≥ −c(1+|x|²)
                    push("running_cost_lower", &x, t, -q.cost.ell0.eval(&x, t), quad);
                }
                HamiltonianTerm::SupCompact(ct) => {
                    for point in &ct.points {
                        push("compact_drift", &x, t, point.g.eval(&x, t).norm(), lin);
                        push("compact_cost", &x, t, point.f.eval(&x, t).abs(), quad);
                        push("compact_diffusion", &x, t, point.c.eval(&x, t).norm(), lin);
                    }
                }
                HamiltonianTerm::Sigma(s) => {
                    let m = s.sigma.eval(&x, t);
                    let asym = (&m - m.transpose()).amax();
                    push("sigma_symmetry", &x, t, asym, SYMMETRY_TOLERANCE);
                    let sym = (&m + m.transpose()) * 0.5;
                    let eig = sym.symmetric_eigenvalues();
                    let lo = eig.min();
                    let hi = eig.max();
                    // smallest eigenvalue must be positive, largest at most c_bar
                    push("sigma_positive", &x, t, -lo, -f64::MIN_POSITIVE);
                    push("sigma_bounded", &x, t, hi, c);
                }
                HamiltonianTerm::ScalarH(_) => {}
            }
        }
    }
    Ok(report)
}

/// Runs [`audit`] and turns the first violation into a validation error.
pub fn validate(spec: &ProblemSpec, config: &AuditConfig) -> Result<()> {
    let report = audit(spec, config)?;
    match report.violations.first() {
        None => Ok(()),
        Some(v) => Err(Error::validation(format!(
            "{} violates its growth bound at x = {:?}, t = {}: {} > {}",
            v.check, v.x, v.t, v.value, v.bound
        ))),
    }
}

/// One-dimensional check that `h' = 0` wherever `h` vanishes: zeros are
/// located by bisection between sign changes on a uniform sample of
/// `[−radius, radius]` and the derivative is estimated by central differences.
pub fn check_degenerate_zeros(h: &StateFn, radius: f64, samples: usize, tolerance: f64) -> Result<Vec<f64>> {
    let eval = |x: f64| h.eval(&DVector::from_element(1, x));
    let step = 2.0 * radius / samples as f64;
    let mut zeros = Vec::new();
    let mut a = -radius;
    let mut fa = eval(a);
    for k in 1..=samples {
        let b = -radius + k as f64 * step;
        let fb = eval(b);
        let zero = if fa == 0.0 {
            Some(a)
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = eval(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            Some(0.5 * (lo + hi))
        } else {
            None
        };
        if let Some(z) = zero {
            if zeros.last().map_or(true, |&last: &f64| (z - last).abs() > step * 0.5) {
                let d = 1e-5;
                let slope = (eval(z + d) - eval(z - d)) / (2.0 * d);
                if slope.abs() > tolerance {
                    return Err(Error::validation(format!(
                        "h vanishes at {z} with nonzero slope {slope}"
                    )));
                }
                zeros.push(z);
            }
        }
        a = b;
        fa = fb;
    }
    Ok(zeros)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn quadratic_1d(b: f64, nu: f64, ell0: f64) -> QuadraticTerm {
        QuadraticTerm {
            dynamics: ControlAffineDynamics::new(
                1,
                1,
                1,
                VectorField::zeros(1),
                MatrixField::constant(DMatrix::from_element(1, 1, b)),
                MatrixField::zeros(1, 1),
            ),
            cost: RunningCost::new(nu, ScalarField::constant(ell0)).unwrap(),
        }
    }

    #[test]
    fn quadratic_bound_values() {
        assert_eq!(inf_quadratic_bound(1.0, -2.0).unwrap(), -1.0);
        assert_eq!(inf_quadratic_bound(5.0, 0.0).unwrap(), 0.0);
        assert_eq!(inf_quadratic_bound(2.0, 3.0).unwrap(), -1.125);
        assert!(matches!(inf_quadratic_bound(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(inf_quadratic_exact(-1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn quadratic_exact_matches_grid_minimum() {
        // grid minimization of ρr² + γr over r ∈ [0, 10], step 1e-4
        let grid_min = |rho: f64, gamma: f64| {
            (0..=100_000)
                .map(|k| {
                    let r = k as f64 * 1e-4;
                    rho * r * r + gamma * r
                })
                .fold(f64::INFINITY, f64::min)
        };
        assert!((inf_quadratic_exact(1.0, -2.0).unwrap() - grid_min(1.0, -2.0)).abs() < 1e-8);
        assert_eq!(inf_quadratic_exact(1.0, -2.0).unwrap(), -1.0);
        assert_eq!(inf_quadratic_exact(2.0, 3.0).unwrap(), 0.0);
        assert_eq!(inf_quadratic_exact(1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn inf_closed_examples() {
        // H = −|aᵀp|²/2 with a = Id
        let term = QuadraticTerm {
            dynamics: ControlAffineDynamics::new(
                2,
                2,
                2,
                VectorField::zeros(2),
                MatrixField::constant(DMatrix::identity(2, 2)),
                MatrixField::zeros(2, 2),
            ),
            cost: RunningCost::new(1.0, ScalarField::zero()).unwrap(),
        };
        let x = v(&[0.3, -1.0]);
        let h = eval_inf_closed(&term, &x, 0.0, &v(&[1.0, 0.0]), &DMatrix::zeros(2, 2)).unwrap();
        assert!((h + 0.5).abs() < 1e-15);

        let with_cost = quadratic_1d(1.0, 1.0, 0.75);
        let h0 = eval_inf_closed(&with_cost, &v(&[2.0]), 0.0, &v(&[0.0]), &DMatrix::from_element(1, 1, 9.0)).unwrap();
        assert_eq!(h0, 0.75);

        // grid minimization of 3α + α² over [−20, 20], step 1e-4
        let oracle = (0..=400_000)
            .map(|k| {
                let a = -20.0 + k as f64 * 1e-4;
                3.0 * a + a * a
            })
            .fold(f64::INFINITY, f64::min);
        let scalar = quadratic_1d(1.0, 2.0, 0.0);
        let h = eval_inf_closed(&scalar, &v(&[0.0]), 0.0, &v(&[3.0]), &DMatrix::zeros(1, 1)).unwrap();
        assert!((h + 2.25).abs() < 1e-15);
        assert!((h - oracle).abs() < 1e-7);
    }

    #[test]
    fn sup_closed_examples() {
        let scalar = quadratic_1d(1.0, 2.0, 0.0);
        let g = eval_sup_closed(&scalar, &v(&[0.0]), 0.0, &v(&[2.0]), &DMatrix::zeros(1, 1)).unwrap();
        assert!((g - 1.0).abs() < 1e-15);
        let oracle = (0..=400_000)
            .map(|k| {
                let a = -20.0 + k as f64 * 1e-4;
                -2.0 * a - a * a
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((g - oracle).abs() < 1e-7);

        let with_cost = quadratic_1d(1.0, 2.0, 0.4);
        let g0 = eval_sup_closed(&with_cost, &v(&[1.0]), 0.0, &v(&[0.0]), &DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(g0, -0.4);
    }

    #[test]
    fn shape_errors() {
        let scalar = quadratic_1d(1.0, 2.0, 0.0);
        let err = eval_inf_closed(&scalar, &v(&[0.0]), 0.0, &v(&[1.0, 2.0]), &DMatrix::zeros(1, 1));
        assert!(matches!(err, Err(Error::Shape(_))));
        let err = eval_sup_closed(&scalar, &v(&[0.0]), 0.0, &v(&[1.0]), &DMatrix::zeros(2, 2));
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    fn linear_point(slope: f64, cost: f64) -> ControlPoint {
        ControlPoint {
            g: VectorField::constant(v(&[slope])),
            f: ScalarField::constant(cost),
            c: MatrixField::zeros(1, 1),
        }
    }

    #[test]
    fn sup_compact_examples() {
        let one = CompactTerm {
            state_dim: 1,
            points: vec![linear_point(0.0, -1.0)],
        };
        let x = v(&[0.0]);
        let z = DMatrix::zeros(1, 1);
        assert_eq!(eval_sup_compact(&one, &x, 0.0, &v(&[5.0]), &z).unwrap(), 1.0);

        let two = CompactTerm {
            state_dim: 1,
            points: vec![linear_point(0.0, -3.0), linear_point(0.0, 2.0)],
        };
        assert_eq!(eval_sup_compact(&two, &x, 0.0, &v(&[1.0]), &z).unwrap(), 3.0);

        // sup_{|β| ≤ 1} βp = |p|, with g = −β
        let ball = CompactTerm {
            state_dim: 1,
            points: (0..=2000).map(|k| linear_point(-(-1.0 + k as f64 * 1e-3), 0.0)).collect(),
        };
        let value = eval_sup_compact(&ball, &x, 0.0, &v(&[0.7]), &z).unwrap();
        assert!((value - 0.7).abs() <= 1e-3);

        let empty = CompactTerm {
            state_dim: 1,
            points: vec![],
        };
        assert!(matches!(eval_sup_compact(&empty, &x, 0.0, &v(&[1.0]), &z), Err(Error::Config(_))));
    }

    #[test]
    fn sup_compact_tie_break_is_lowest_index() {
        let tied = CompactTerm {
            state_dim: 1,
            points: vec![linear_point(1.0, 0.0), linear_point(-1.0, 0.0), linear_point(0.0, 0.0)],
        };
        // at p = 0 all three values are 0
        let (value, index) = eval_sup_compact_argmax(&tied, &v(&[0.0]), 0.0, &v(&[0.0]), &DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(index, 0);
    }

    #[test]
    fn sigma_form_examples() {
        let id = SigmaTerm {
            state_dim: 2,
            sigma: MatrixField::constant(DMatrix::identity(2, 2)),
            sign: Sign::Plus,
        };
        let x = v(&[0.0, 0.0]);
        assert_eq!(eval_sigma_form(&id, &x, 0.0, &v(&[1.0, 2.0])).unwrap(), 5.0);
        assert_eq!(eval_sigma_form(&id, &x, 0.0, &v(&[0.0, 0.0])).unwrap(), 0.0);

        let skew = SigmaTerm {
            state_dim: 2,
            sigma: MatrixField::constant(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])),
            sign: Sign::Plus,
        };
        assert!(matches!(eval_sigma_form(&skew, &x, 0.0, &v(&[1.0, 1.0])), Err(Error::Validation(_))));
    }

    #[test]
    fn sigma_form_of_mixed_inf_sup_pair() {
        // a₁ = 2 (concave part), a₂ = 1 (convex part); Σ = (a₁+a₂)(a₂−a₁)ᵀ = −3
        let (a1, a2) = (2.0, 1.0);
        let sigma = SigmaTerm {
            state_dim: 1,
            sigma: MatrixField::constant(DMatrix::from_element(1, 1, (a1 + a2) * (a2 - a1))),
            sign: Sign::Plus,
        };
        let x = v(&[0.0]);
        let p = v(&[1.0]);
        let z = DMatrix::zeros(1, 1);
        let value = eval_sigma_form(&sigma, &x, 0.0, &p).unwrap();
        assert_eq!(value, -3.0);
        // H + G = ½⟨Σp,p⟩ with H = −|a₁p|²/2, G = |a₂p|²/2
        let h = eval_inf_closed(&quadratic_1d(a1, 1.0, 0.0), &x, 0.0, &p, &z).unwrap();
        let g = eval_sup_closed(&quadratic_1d(a2, 1.0, 0.0), &x, 0.0, &p, &z).unwrap();
        assert!((h + g - 0.5 * value).abs() < 1e-15);
    }

    #[test]
    fn h_form_examples() {
        let one = ScalarHTerm { h: StateFn::constant(1.0) };
        assert_eq!(eval_h_form(&one, &v(&[3.0]), &v(&[2.0])), 4.0);
        let tanh3 = ScalarHTerm {
            h: StateFn::new(|x| x[0].tanh().powi(3)),
        };
        assert_eq!(eval_h_form(&tanh3, &v(&[0.0]), &v(&[17.0])), 0.0);
        let cube = ScalarHTerm {
            h: StateFn::new(|x| x[0].powi(3)),
        };
        assert_eq!(eval_h_form(&cube, &v(&[0.5]), &v(&[2.0])), 0.5);
    }

    #[test]
    fn full_operator_is_additive() {
        let constants = GrowthConstants::new(1.0, 1.0, 1.0).unwrap();
        let empty = ProblemSpec::new(1, vec![], StateFn::constant(0.0), Orientation::Initial, 1.0, constants).unwrap();
        let x = v(&[0.4]);
        let p = v(&[1.3]);
        let z = DMatrix::zeros(1, 1);
        assert_eq!(eval_full(&empty, &x, 0.0, &p, &z).unwrap(), 0.0);

        let h = HamiltonianTerm::InfQuadratic(quadratic_1d(1.0, 1.0, 0.0));
        let g = HamiltonianTerm::SupCompact(CompactTerm {
            state_dim: 1,
            points: vec![linear_point(0.5, 0.25)],
        });
        let both = ProblemSpec::new(1, vec![h.clone(), g.clone()], StateFn::constant(0.0), Orientation::Initial, 1.0, constants).unwrap();
        let sum = h.eval(&x, 0.0, &p, &z).unwrap() + g.eval(&x, 0.0, &p, &z).unwrap();
        assert_eq!(eval_full(&both, &x, 0.0, &p, &z).unwrap(), sum);
    }

    #[test]
    fn audit_rejects_super_quadratic_data() {
        let constants = GrowthConstants::new(1.0, 2.0, 1.0).unwrap();
        let config = AuditConfig::default();
        let good = ProblemSpec::new(
            1,
            vec![HamiltonianTerm::SupQuadratic(quadratic_1d(1.0, 2.0, 0.0))],
            StateFn::new(|x| -x[0] * x[0]),
            Orientation::Terminal,
            1.0,
            constants,
        )
        .unwrap();
        assert!(validate(&good, &config).is_ok());
        let bad = good.with_data(StateFn::new(|x| (x[0] * x[0]).exp()));
        let report = audit(&bad, &config).unwrap();
        assert!(!report.passed());
        assert_eq!(report.violations[0].check, "data");
        assert!(matches!(validate(&bad, &config), Err(Error::Validation(_))));
    }

    #[test]
    fn degenerate_zero_check() {
        let tanh3 = StateFn::new(|x| x[0].tanh().powi(3));
        let zeros = check_degenerate_zeros(&tanh3, 5.0, 1001, 1e-6).unwrap();
        assert_eq!(zeros.len(), 1);
        assert!(zeros[0].abs() < 1e-6);
        let sine = StateFn::new(|x| x[0].sin());
        assert!(check_degenerate_zeros(&sine, 5.0, 1000, 1e-6).is_err());
    }

    #[test]
    fn halton_points_fill_the_box() {
        let pts = halton_points(2, 3.0, 2.0, 500);
        assert!(pts.iter().all(|(x, t)| x.amax() <= 3.0 && (0.0..=2.0).contains(t)));
        let mean: f64 = pts.iter().map(|(x, _)| x[0]).sum::<f64>() / 500.0;
        assert!(mean.abs() < 0.05);
    }
}
