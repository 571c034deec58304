//! Monte-Carlo estimation of control costs by Euler–Maruyama simulation.
//!
//! ```text
//! X_{k+1} = X_k + (b₀ + Bα_k)Δt + σ √Δt ξ_k,        ξ_k ~ N(0, I)
//! J       ≈ Σ_k ℓ(X_k, t_k, α_k)Δt + ψ(X_n)
//! ```
//!
//! Path `i` draws its normals from a ChaCha8 stream selected by `(seed, i)`,
//! so every path is reproducible in isolation and the estimate does not
//! depend on the order in which paths are scheduled. Per-path results are
//! reduced in index order with compensated summation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlAffineDynamics, GrowthConstants, RunningCost, StateFn};

#[derive(Debug, Clone)]
pub struct SdeSpec {
    pub dynamics: ControlAffineDynamics,
    pub cost: RunningCost,
    pub psi: StateFn,
    pub horizon: f64,
    pub constants: GrowthConstants,
}

type GainFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
type FeedbackFn = Arc<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub enum PolicySpec {
    /// `α = K(t)·x`.
    LinearFeedback { gain: GainFn, label: String },
    /// General state feedback `α = κ(x, t)`.
    Feedback { law: FeedbackFn, label: String },
    ConstantControl { alpha: DVector<f64> },
    /// Piecewise constant in time on equal cells of `[t0, T]`.
    GridOpenLoop { values: Vec<DVector<f64>> },
}

impl fmt::Debug for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.summary())
    }
}

/// Serializable description of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub kind: String,
    pub label: String,
    pub params: Vec<f64>,
}

impl PolicySpec {
    pub fn constant_gain(gain: DMatrix<f64>) -> Self {
        let label = format!("constant gain {:?}", gain.as_slice());
        PolicySpec::LinearFeedback {
            gain: Arc::new(move |_| gain.clone()),
            label,
        }
    }

    pub fn summary(&self) -> PolicySummary {
        match self {
            PolicySpec::LinearFeedback { gain, label } => PolicySummary {
                kind: "linear_feedback".into(),
                label: label.clone(),
                params: gain(0.0).as_slice().to_vec(),
            },
            PolicySpec::Feedback { label, .. } => PolicySummary {
                kind: "feedback".into(),
                label: label.clone(),
                params: vec![],
            },
            PolicySpec::ConstantControl { alpha } => PolicySummary {
                kind: "constant".into(),
                label: String::new(),
                params: alpha.as_slice().to_vec(),
            },
            PolicySpec::GridOpenLoop { values } => PolicySummary {
                kind: "open_loop".into(),
                label: format!("{} cells", values.len()),
                params: values.iter().flat_map(|v| v.iter().copied()).collect(),
            },
        }
    }

    fn control(&self, x: &DVector<f64>, t: f64, t0: f64, horizon: f64) -> DVector<f64> {
        match self {
            PolicySpec::LinearFeedback { gain, .. } => gain(t) * x,
            PolicySpec::Feedback { law, .. } => law(x, t),
            PolicySpec::ConstantControl { alpha } => alpha.clone(),
            PolicySpec::GridOpenLoop { values } => {
                let frac = ((t - t0) / (horizon - t0)).clamp(0.0, 1.0);
                let cell = ((frac * values.len() as f64) as usize).min(values.len() - 1);
                values[cell].clone()
            }
        }
    }

    /// Largest control norm of open-loop and constant policies.
    fn static_bound(&self) -> Option<f64> {
        match self {
            PolicySpec::ConstantControl { alpha } => Some(alpha.norm()),
            PolicySpec::GridOpenLoop { values } => Some(values.iter().map(|v| v.norm()).fold(0.0, f64::max)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Radius `n` of the admissible control ball; controls are projected onto it.
    pub truncation: Option<f64>,
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::config("at least one path is required"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(n) = self.truncation {
            if !(n > 0.0) {
                return Err(Error::config(format!("truncation radius must be positive, got {n}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub cost: f64,
    pub divergent: bool,
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    cost: f64,
    sup_sq: f64,
    control_energy: f64,
}

fn time_grid(t0: f64, horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t0 < horizon) {
        return Err(Error::domain(format!("start time {t0} must precede the horizon {horizon}")));
    }
    let steps = ((horizon - t0) / dt).ceil().max(1.0) as usize;
    Ok((steps, (horizon - t0) / steps as f64))
}

fn project(alpha: DVector<f64>, radius: Option<f64>) -> DVector<f64> {
    match radius {
        Some(n) => {
            let norm = alpha.norm();
            if norm > n {
                alpha * (n / norm)
            } else {
                alpha
            }
        }
        None => alpha,
    }
}

fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    spec: &SdeSpec,
    policy: &PolicySpec,
    x0: &DVector<f64>,
    t0: f64,
    config: &McConfig,
    path_index: u64,
    mut record: Option<&mut Trajectory>,
) -> Result<Option<PathOutcome>> {
    let dynamics = &spec.dynamics;
    let (steps, h) = time_grid(t0, spec.horizon, config.dt)?;
    let sqrt_h = h.sqrt();
    let mut rng = path_rng(config.seed, path_index);
    let mut x = x0.clone();
    let mut cost = 0.0;
    let mut sup_sq = x.norm_squared();
    let mut energy = 0.0;
    let mut xi = DVector::zeros(dynamics.noise_dim);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let alpha = project(policy.control(&x, t, t0, spec.horizon), config.truncation);
        if alpha.len() != dynamics.control_dim {
            return Err(Error::shape(format!(
                "policy returns {} controls, dynamics expect {}",
                alpha.len(),
                dynamics.control_dim
            )));
        }
        cost += spec.cost.eval(&x, t, &alpha) * h;
        energy += alpha.norm_squared() * h;
        let drift = dynamics.drift_at(&x, t)? + dynamics.control_matrix_at(&x, t)? * &alpha;
        let sigma = dynamics.diffusion_at(&x, t)?;
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if let Some(traj) = record.as_deref_mut() {
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.controls.push(alpha);
        }
        x += drift * h + sigma * &xi * sqrt_h;
        if !x.iter().all(|v| v.is_finite()) {
            if let Some(traj) = record.as_deref_mut() {
                traj.divergent = true;
            }
            return Ok(None);
        }
        sup_sq = sup_sq.max(x.norm_squared());
    }
    cost += spec.psi.eval(&x);
    if let Some(traj) = record {
        traj.times.push(spec.horizon);
        traj.states.push(x.clone());
        traj.cost = cost;
    }
    if !cost.is_finite() {
        return Ok(None);
    }
    Ok(Some(PathOutcome {
        cost,
        sup_sq,
        control_energy: energy,
    }))
}

/// Simulates one path; the noise depends only on `(config.seed, path_index)`.
pub fn simulate_path(
    spec: &SdeSpec,
    policy: &PolicySpec,
    x0: &DVector<f64>,
    t0: f64,
    config: &McConfig,
    path_index: u64,
) -> Result<Trajectory> {
    config.validate()?;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        cost: f64::NAN,
        divergent: false,
    };
    run_path(spec, policy, x0, t0, config, path_index, Some(&mut traj))?;
    Ok(traj)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn run_all(spec: &SdeSpec, policy: &PolicySpec, x0: &DVector<f64>, t0: f64, config: &McConfig) -> Result<Vec<PathOutcome>> {
    config.validate()?;
    if x0.len() != spec.dynamics.state_dim {
        return Err(Error::shape(format!(
            "initial state has length {}, expected {}",
            x0.len(),
            spec.dynamics.state_dim
        )));
    }
    let outcomes = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| run_path(spec, policy, x0, t0, config, i, None).map(|o| (i, o)))
        .collect::<Result<Vec<_>>>()?;
    let mut good = Vec::with_capacity(outcomes.len());
    for (i, outcome) in outcomes {
        match outcome {
            Some(o) => good.push(o),
            None => {
                return Err(Error::Estimation(format!(
                    "path {i} diverged; the estimate is aborted rather than biased"
                )))
            }
        }
    }
    Ok(good)
}

/// Sample mean of the discretized cost over `config.n_paths` paths.
pub fn estimate_cost(spec: &SdeSpec, policy: &PolicySpec, x0: &DVector<f64>, t0: f64, config: &McConfig) -> Result<McEstimate> {
    let outcomes = run_all(spec, policy, x0, t0, config)?;
    let costs: Vec<f64> = outcomes.iter().map(|o| o.cost).collect();
    let (mean, stderr) = mean_and_stderr(&costs);
    Ok(McEstimate {
        mean,
        stderr,
        n_paths: costs.len(),
    })
}

/// Parametric policy families searched by [`optimize_policy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyFamily {
    /// Exhaustive search over listed constant controls inside the truncation ball.
    ConstantGrid { values: Vec<Vec<f64>> },
    /// Constant control with every component in `[lo, hi]`.
    Constant { lo: f64, hi: f64 },
    /// Constant gain matrix with every entry in `[lo, hi]`.
    LinearGain { lo: f64, hi: f64 },
    /// Open-loop control, piecewise constant on `cells` time cells.
    OpenLoop { cells: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
pub struct OptimizedPolicy {
    pub policy: PolicySpec,
    pub estimate: McEstimate,
    pub params: Vec<f64>,
    pub evaluations: usize,
}

/// Coordinate-descent sweeps and golden-section iterations per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub sweeps: usize,
    pub golden_iterations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            sweeps: 2,
            golden_iterations: 20,
        }
    }
}

fn family_policy(family: &PolicyFamily, params: &[f64], k: usize, n: usize) -> PolicySpec {
    match family {
        PolicyFamily::ConstantGrid { .. } | PolicyFamily::Constant { .. } => PolicySpec::ConstantControl {
            alpha: DVector::from_column_slice(params),
        },
        PolicyFamily::LinearGain { .. } => PolicySpec::constant_gain(DMatrix::from_column_slice(k, n, params)),
        PolicyFamily::OpenLoop { cells, .. } => PolicySpec::GridOpenLoop {
            values: (0..*cells).map(|c| DVector::from_column_slice(&params[c * k..(c + 1) * k])).collect(),
        },
    }
}

struct Search<'a> {
    spec: &'a SdeSpec,
    family: &'a PolicyFamily,
    x0: &'a DVector<f64>,
    t0: f64,
    config: &'a McConfig,
    best: Option<(Vec<f64>, McEstimate)>,
    evaluations: usize,
}

impl Search<'_> {
    fn evaluate(&mut self, params: &[f64]) -> Result<f64> {
        let k = self.spec.dynamics.control_dim;
        let n = self.spec.dynamics.state_dim;
        let policy = family_policy(self.family, params, k, n);
        let est = estimate_cost(self.spec, &policy, self.x0, self.t0, self.config)?;
        self.evaluations += 1;
        if self.best.as_ref().is_none_or(|(_, b)| est.mean < b.mean) {
            self.best = Some((params.to_vec(), est));
        }
        Ok(est.mean)
    }
}

/// Searches a policy family with common random numbers and returns the best
/// evaluated member. The result over-estimates the value function, since the
/// infimum is taken over a subfamily.
pub fn optimize_policy(
    spec: &SdeSpec,
    family: &PolicyFamily,
    x0: &DVector<f64>,
    t0: f64,
    config: &McConfig,
    search: &SearchConfig,
) -> Result<OptimizedPolicy> {
    let k = spec.dynamics.control_dim;
    let n = spec.dynamics.state_dim;
    let mut state = Search {
        spec,
        family,
        x0,
        t0,
        config,
        best: None,
        evaluations: 0,
    };
    let (lo, hi, dim) = match family {
        PolicyFamily::ConstantGrid { values } => {
            let radius = config.truncation.unwrap_or(f64::INFINITY);
            for v in values {
                if v.len() != k {
                    return Err(Error::shape(format!("grid control has length {}, expected {k}", v.len())));
                }
                if DVector::from_column_slice(v).norm() <= radius {
                    state.evaluate(v)?;
                }
            }
            (0.0, 0.0, 0)
        }
        PolicyFamily::Constant { lo, hi } => (*lo, *hi, k),
        PolicyFamily::LinearGain { lo, hi } => (*lo, *hi, k * n),
        PolicyFamily::OpenLoop { cells, lo, hi } => {
            if *cells == 0 {
                return Err(Error::config("open-loop family needs at least one cell"));
            }
            (*lo, *hi, k * cells)
        }
    };
    if dim > 0 {
        if !(lo < hi) {
            return Err(Error::config(format!("search interval [{lo}, {hi}] is empty")));
        }
        let mut params = vec![(0.0f64).clamp(lo, hi); dim];
        state.evaluate(&params)?;
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..search.sweeps {
            for c in 0..dim {
                let (mut a, mut b) = (lo, hi);
                let mut x1 = b - inv_phi * (b - a);
                let mut x2 = a + inv_phi * (b - a);
                let mut probe = params.clone();
                probe[c] = x1;
                let mut f1 = state.evaluate(&probe)?;
                probe[c] = x2;
                let mut f2 = state.evaluate(&probe)?;
                for _ in 0..search.golden_iterations {
                    if f1 <= f2 {
                        b = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = b - inv_phi * (b - a);
                        probe[c] = x1;
                        f1 = state.evaluate(&probe)?;
                    } else {
                        a = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = a + inv_phi * (b - a);
                        probe[c] = x2;
                        f2 = state.evaluate(&probe)?;
                    }
                }
                params = state.best.as_ref().expect("evaluated").0.clone();
            }
        }
    }
    let (params, estimate) = state
        .best
        .ok_or_else(|| Error::Estimation("the policy family has no admissible member".into()))?;
    Ok(OptimizedPolicy {
        policy: family_policy(family, &params, k, n),
        estimate,
        params,
        evaluations: state.evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// Sample mean of `sup_s |X_s|²`.
    pub empirical: f64,
    pub stderr: f64,
    /// Sample mean of `∫|α_s|² ds`.
    pub control_energy: f64,
    pub constant: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Second-moment bound `(|x|² + C(T−t) + C·E∫|α|²)·e^{C(T−t)}` with
/// `C = 5(c̄ + 2c̄²)`, compared with the sampled `E sup|X|²` at three standard errors.
pub fn moment_check(spec: &SdeSpec, policy: &PolicySpec, x0: &DVector<f64>, t0: f64, config: &McConfig) -> Result<MomentReport> {
    if let (Some(b), Some(n)) = (policy.static_bound(), config.truncation) {
        if b > n * (1.0 + 1e-12) {
            return Err(Error::config("policy leaves the truncation ball"));
        }
    }
    let outcomes = run_all(spec, policy, x0, t0, config)?;
    let sups: Vec<f64> = outcomes.iter().map(|o| o.sup_sq).collect();
    let (empirical, stderr) = mean_and_stderr(&sups);
    let control_energy = compensated_sum(outcomes.iter().map(|o| o.control_energy)) / outcomes.len() as f64;
    let c_bar = spec.constants.c_bar;
    let constant = 5.0 * (c_bar + 2.0 * c_bar * c_bar);
    let span = spec.horizon - t0;
    let bound = (x0.norm_squared() + constant * span + constant * control_energy) * (constant * span).exp();
    Ok(MomentReport {
        empirical,
        stderr,
        control_energy,
        constant,
        bound,
        passed: empirical <= bound + 3.0 * stderr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub lags: Vec<f64>,
    /// Root-mean-square increment `(E|X_{s+h} − X_s|²)^{1/2}` averaged over `s`.
    pub moduli: Vec<f64>,
    /// Least-squares slope of `ln modulus` against `ln lag`.
    pub slope: f64,
}

/// Empirical modulus of continuity of the paths at lags `lag_steps·dt`.
pub fn continuity_modulus(
    spec: &SdeSpec,
    policy: &PolicySpec,
    x0: &DVector<f64>,
    t0: f64,
    config: &McConfig,
    lag_steps: &[usize],
) -> Result<ModulusReport> {
    config.validate()?;
    let (_, h) = time_grid(t0, spec.horizon, config.dt)?;
    let paths = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(spec, policy, x0, t0, config, i))
        .collect::<Result<Vec<_>>>()?;
    if paths.iter().any(|p| p.divergent) {
        return Err(Error::Estimation("a path diverged".into()));
    }
    let mut lags = Vec::new();
    let mut moduli = Vec::new();
    for &j in lag_steps {
        let per_path: Vec<f64> = paths
            .iter()
            .map(|p| {
                let m = p.states.len().saturating_sub(j);
                if m == 0 {
                    return f64::NAN;
                }
                compensated_sum((0..m).map(|s| (&p.states[s + j] - &p.states[s]).norm_squared())) / m as f64
            })
            .collect();
        if per_path.iter().any(|v| v.is_nan()) || j == 0 {
            return Err(Error::config(format!("lag of {j} steps does not fit the horizon")));
        }
        lags.push(j as f64 * h);
        moduli.push((compensated_sum(per_path.iter().copied()) / per_path.len() as f64).sqrt());
    }
    let lx: Vec<f64> = lags.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = moduli.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(ModulusReport {
        lags,
        moduli,
        slope: sxy / sxx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatrixField, ScalarField, VectorField};

    fn scalar_spec(sigma: f64, nu: f64, ell0: ScalarField, psi: StateFn, horizon: f64) -> SdeSpec {
        SdeSpec {
            dynamics: ControlAffineDynamics::new(
                1,
                1,
                1,
                VectorField::zeros(1),
                MatrixField::constant(DMatrix::from_element(1, 1, 1.0)),
                MatrixField::constant(DMatrix::from_element(1, 1, sigma)),
            ),
            cost: RunningCost::new(nu, ell0).unwrap(),
            psi,
            horizon,
            constants: GrowthConstants::new(1.0, nu, 1.0).unwrap(),
        }
    }

    fn cfg(n_paths: usize, dt: f64) -> McConfig {
        McConfig {
            n_paths,
            dt,
            seed: 7,
            truncation: None,
        }
    }

    fn x(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn zero_control() -> PolicySpec {
        PolicySpec::ConstantControl { alpha: x(0.0) }
    }

    #[test]
    fn constant_paths() {
        let spec = scalar_spec(0.0, 1.0, ScalarField::zero(), StateFn::constant(0.0), 1.0);
        let traj = simulate_path(&spec, &zero_control(), &x(0.3), 0.0, &cfg(1, 0.1), 0).unwrap();
        assert!(traj.states.iter().all(|s| s[0] == 0.3));
        let drift = PolicySpec::ConstantControl { alpha: x(1.0) };
        let traj = simulate_path(&spec, &drift, &x(0.0), 0.0, &cfg(1, 0.01), 0).unwrap();
        assert!((traj.states.last().unwrap()[0] - 1.0).abs() < 1e-12);
        assert_eq!(traj.times.len(), traj.states.len());
    }

    #[test]
    fn brownian_terminal_variance() {
        let spec = scalar_spec(1.0, 1.0, ScalarField::zero(), StateFn::new(|x| x[0] * x[0]), 1.0);
        // E[W_T²] = T through the terminal cost
        let est = estimate_cost(&spec, &zero_control(), &x(0.0), 0.0, &cfg(100_000, 0.25)).unwrap();
        assert!((est.mean - 1.0).abs() <= 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn zero_cost_and_terminal_moment() {
        let spec = scalar_spec(0.0, 3.0, ScalarField::zero(), StateFn::constant(0.0), 1.0);
        let est = estimate_cost(&spec, &zero_control(), &x(1.0), 0.0, &cfg(100, 0.1)).unwrap();
        assert_eq!((est.mean, est.stderr), (0.0, 0.0));

        let spec = scalar_spec(1.0, 1.0, ScalarField::zero(), StateFn::new(|x| x[0] * x[0]), 0.5);
        let est = estimate_cost(&spec, &zero_control(), &x(1.0), 0.0, &cfg(20_000, 0.05)).unwrap();
        assert!((est.mean - 1.5).abs() <= 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn estimates_are_bit_identical() {
        let spec = scalar_spec(0.7, 1.0, ScalarField::new(|x, _| x[0] * x[0]), StateFn::new(|x| x[0].abs()), 1.0);
        let policy = PolicySpec::constant_gain(DMatrix::from_element(1, 1, -0.5));
        let a = estimate_cost(&spec, &policy, &x(0.4), 0.0, &cfg(500, 0.01)).unwrap();
        let b = estimate_cost(&spec, &policy, &x(0.4), 0.0, &cfg(500, 0.01)).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        let serial: Vec<f64> = (0..500)
            .map(|i| simulate_path(&spec, &policy, &x(0.4), 0.0, &cfg(500, 0.01), i).unwrap().cost)
            .collect();
        let mean = serial.iter().sum::<f64>() / 500.0;
        assert!((mean - a.mean).abs() <= 1e-12);
    }

    #[test]
    fn divergent_paths_abort() {
        let spec = SdeSpec {
            dynamics: ControlAffineDynamics::new(
                1,
                1,
                1,
                VectorField::new(|x, _| DVector::from_element(1, x[0] * x[0] * 1e200)),
                MatrixField::zeros(1, 1),
                MatrixField::zeros(1, 1),
            ),
            ..scalar_spec(0.0, 1.0, ScalarField::zero(), StateFn::constant(0.0), 1.0)
        };
        let err = estimate_cost(&spec, &zero_control(), &x(1.0), 0.0, &cfg(10, 0.1));
        assert!(matches!(err, Err(Error::Estimation(_))));
    }

    #[test]
    fn grid_search_and_truncation() {
        // one step of length 1: cost α² + (α − 0.3)², minimized at 0.15
        let spec = SdeSpec {
            psi: StateFn::new(|x| (x[0] - 0.3).powi(2)),
            ..scalar_spec(0.0, 2.0, ScalarField::zero(), StateFn::constant(0.0), 1.0)
        };
        let values: Vec<Vec<f64>> = (0..=20).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
        let family = PolicyFamily::ConstantGrid { values: values.clone() };
        let config = cfg(1, 1.0);
        let best = optimize_policy(&spec, &family, &x(0.0), 0.0, &config, &SearchConfig::default()).unwrap();
        assert!((best.params[0] - 0.1).abs() < 1e-12 || (best.params[0] - 0.2).abs() < 1e-12);
        for v in &values {
            let member = estimate_cost(&spec, &PolicySpec::ConstantControl { alpha: x(v[0]) }, &x(0.0), 0.0, &config).unwrap();
            assert!(best.estimate.mean <= member.mean);
        }
        let mut previous = f64::INFINITY;
        for radius in [0.05, 0.1, 0.5, 2.0] {
            let c = McConfig {
                truncation: Some(radius),
                ..config
            };
            let est = optimize_policy(&spec, &family, &x(0.0), 0.0, &c, &SearchConfig::default()).unwrap();
            assert!(est.estimate.mean <= previous);
            previous = est.estimate.mean;
        }
    }

    #[test]
    fn golden_section_finds_interior_minimum() {
        let spec = SdeSpec {
            psi: StateFn::new(|x| (x[0] - 0.3).powi(2)),
            ..scalar_spec(0.0, 2.0, ScalarField::zero(), StateFn::constant(0.0), 1.0)
        };
        let best = optimize_policy(&spec, &PolicyFamily::Constant { lo: -1.0, hi: 1.0 }, &x(0.0), 0.0, &cfg(1, 1.0), &SearchConfig::default()).unwrap();
        assert!((best.params[0] - 0.15).abs() < 1e-3);
        let open = PolicyFamily::OpenLoop { cells: 2, lo: -1.0, hi: 1.0 };
        let best = optimize_policy(&spec, &open, &x(0.0), 0.0, &cfg(1, 0.5), &SearchConfig::default()).unwrap();
        assert_eq!(best.params.len(), 2);
        assert!(best.estimate.mean < 0.09 * 0.5 + 1e-3);
    }

    #[test]
    fn moment_bound_examples() {
        let still = scalar_spec(0.0, 1.0, ScalarField::zero(), StateFn::constant(0.0), 1.0);
        let rep = moment_check(&still, &zero_control(), &x(1.5), 0.0, &cfg(10, 0.1)).unwrap();
        assert_eq!(rep.empirical, 2.25);
        assert!(rep.bound >= 2.25 && rep.passed);

        let brownian = scalar_spec(1.0, 1.0, ScalarField::zero(), StateFn::constant(0.0), 1.0);
        let rep = moment_check(&brownian, &zero_control(), &x(0.0), 0.0, &cfg(10_000, 0.01)).unwrap();
        // E sup_{[0,1]} W² lies between E W_1² = 1 and Doob's 4
        assert!(rep.empirical > 1.0 && rep.empirical < 4.0);
        assert!(rep.passed);
    }

    #[test]
    fn brownian_modulus_has_half_slope() {
        let brownian = scalar_spec(1.0, 1.0, ScalarField::zero(), StateFn::constant(0.0), 1.0);
        let rep = continuity_modulus(&brownian, &zero_control(), &x(0.0), 0.0, &cfg(400, 1e-3), &[1, 2, 4, 8, 16, 32]).unwrap();
        assert!((rep.slope - 0.5).abs() < 0.05, "{rep:?}");
    }
}
