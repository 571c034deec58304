//! Ready-made problems with default grids and, where available, oracles.
//!
//! | name             | equation (problem-time convention)                                      |
//! |------------------|-------------------------------------------------------------------------|
//! | `lq`             | `−w_t + |w_x|²/(4ρ) − ρx² = 0`, `w(·,T) = −x²`                          |
//! | `lq-blowup`      | same with `ρ < 1`, finite-time blow-up                                  |
//! | `stoch-lq`       | `−w_t − ½(cx+d)²w_xx − axw_x + b²w_x²/(4r) − qx² = 0`, `w(·,T) = sx²`   |
//! | `finance`        | `−w_t − ½β²w_xx + ½δ²w_x² − (α(x) − (μ/σ)(x)βρ_c)w_x − (μ/σ)² = 0`      |
//! | `risk-sensitive` | `−w_t − |c w_x|²/(2γ²) − (ε/2γ²)c²w_xx + max_β{−g(x,β)w_x − f(x,β)} = 0` |
//! | `robust-limit`   | `risk-sensitive` with `ε = 0`                                           |
//! | `sign-h`         | `w_t + tanh³(x)|w_x|² = 0`, `w(·,0) = ½x²`                              |
//! | `const-h`        | `w_t + |w_x|² = 0`, `w(·,0) = x²`                                       |
//! | `sigma-form`     | `w_t + ⟨Σ(x)Dw, Dw⟩ = 0` in 2-D, `w(·,0) = |x|²`                        |

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::SdeSpec;
use crate::model::{
    CompactTerm, ControlAffineDynamics, ControlPoint, GrowthConstants, HamiltonianTerm, MatrixField, Orientation,
    ProblemSpec, QuadraticTerm, RunningCost, ScalarField, ScalarHTerm, Sign, SigmaTerm, StateFn, VectorField,
};
use crate::riccati::{self, ScalarLQParams};
use crate::solver::{Grid, SchemeConfig};

pub const PRESET_NAMES: [&str; 9] = [
    "lq",
    "lq-blowup",
    "stoch-lq",
    "finance",
    "risk-sensitive",
    "robust-limit",
    "sign-h",
    "const-h",
    "sigma-form",
];

/// Coefficients of the scalar stochastic LQ problem
/// `dX = (aX + bα)ds + (cX + d)dW`, cost `∫(qX² + rα²)ds + sX_T²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochLqParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub horizon: f64,
}

impl Default for StochLqParams {
    fn default() -> Self {
        StochLqParams {
            a: 0.0,
            b: 1.0,
            c: 0.0,
            d: 0.5,
            q: 1.0,
            r: 1.0,
            s: 1.0,
            horizon: 1.0,
        }
    }
}

impl StochLqParams {
    /// Coefficients `(φ, β, k)` of `V(x, t) = φx² + 2βx + k` by backward RK4 of
    ///
    /// ```text
    /// φ′ = −2aφ − c²φ + b²φ²/r − q,   φ(T) = s
    /// β′ = −aβ + b²φβ/r − cdφ,        β(T) = 0
    /// k′ = b²β²/r − d²φ,              k(T) = 0
    /// ```
    pub fn coefficients(&self, t: f64) -> Result<[f64; 3]> {
        let StochLqParams { a, b, c, d, q, r, s, horizon } = *self;
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside [0, {horizon}]")));
        }
        let rate = |y: [f64; 3]| {
            let [phi, beta, _] = y;
            // derivatives in s = T − t
            [
                2.0 * a * phi + c * c * phi - b * b * phi * phi / r + q,
                a * beta - b * b * phi * beta / r + c * d * phi,
                -b * b * beta * beta / r + d * d * phi,
            ]
        };
        let steps = ((horizon - t) / 1e-3).ceil().max(1.0) as usize;
        let h = (horizon - t) / steps as f64;
        let mut y = [s, 0.0, 0.0];
        let axpy = |y: [f64; 3], k: [f64; 3], w: f64| [y[0] + w * k[0], y[1] + w * k[1], y[2] + w * k[2]];
        for _ in 0..steps {
            let k1 = rate(y);
            let k2 = rate(axpy(y, k1, 0.5 * h));
            let k3 = rate(axpy(y, k2, 0.5 * h));
            let k4 = rate(axpy(y, k3, h));
            for i in 0..3 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if !y.iter().all(|v| v.is_finite() && v.abs() <= riccati::BLOWUP_THRESHOLD) {
                return Err(Error::BlowUp {
                    t,
                    blowup_time: f64::NAN,
                });
            }
        }
        Ok(y)
    }

    pub fn value(&self, x: f64, t: f64) -> Result<f64> {
        let [phi, beta, k] = self.coefficients(t)?;
        Ok(phi * x * x + 2.0 * beta * x + k)
    }

    /// Optimal control `α* = −b(φx + β)/r`.
    pub fn optimal_feedback(&self, x: f64, t: f64) -> Result<f64> {
        let [phi, beta, _] = self.coefficients(t)?;
        Ok(-self.b * (phi * x + beta) / self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Oracle {
    ScalarLq(ScalarLQParams),
    StochLq(StochLqParams),
    /// `w_t + h|Dw|² = 0` with convex data, solved by the Hopf–Lax formula.
    HopfLax { h: f64 },
}

/// Optional overrides of preset parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PresetOptions {
    pub rho: Option<f64>,
    pub horizon: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub spec: ProblemSpec,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub dx: f64,
    pub p_max: Option<f64>,
    pub oracle: Option<Oracle>,
    pub sde: Option<SdeSpec>,
}

impl Preset {
    pub fn grid(&self, dx: Option<f64>) -> Result<Grid> {
        Grid::with_spacing(self.lo.clone(), self.hi.clone(), dx.unwrap_or(self.dx))
    }

    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            p_max: self.p_max,
            ..SchemeConfig::default()
        }
    }
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn vec1(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

pub fn preset(name: &str, options: &PresetOptions) -> Result<Preset> {
    match name {
        "lq" => scalar_lq(name, options.rho.unwrap_or(2.0), options.horizon.unwrap_or(1.0)),
        "lq-blowup" => scalar_lq(name, options.rho.unwrap_or(0.5), options.horizon.unwrap_or(2.0)),
        "stoch-lq" => stoch_lq(StochLqParams {
            horizon: options.horizon.unwrap_or(1.0),
            ..StochLqParams::default()
        }),
        "finance" => finance(options.horizon.unwrap_or(1.0)),
        "risk-sensitive" => risk_sensitive(name, options.epsilon.unwrap_or(0.1), options.horizon.unwrap_or(1.0)),
        "robust-limit" => risk_sensitive(name, 0.0, options.horizon.unwrap_or(1.0)),
        "sign-h" => h_form(name, StateFn::new(|x| x[0].tanh().powi(3)), 0.5, options.horizon.unwrap_or(0.25)),
        "const-h" => h_form(name, StateFn::constant(1.0), 1.0, options.horizon.unwrap_or(0.25)),
        "sigma-form" => sigma_form(options.horizon.unwrap_or(0.5)),
        _ => Err(Error::config(format!(
            "unknown preset {name:?}; available presets: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

fn scalar_lq(name: &str, rho: f64, horizon: f64) -> Result<Preset> {
    let params = ScalarLQParams::new(rho, horizon)?;
    let blows_up = riccati::blowup_time(&params).is_some();
    let phi_max = if blows_up { 1.0 } else { riccati::phi_abs_max(&params, 0.0)? };
    let constants = GrowthConstants::new(rho.max(1.0), 2.0 * rho, phi_max)?;
    let dynamics = ControlAffineDynamics::new(
        1,
        1,
        1,
        VectorField::zeros(1),
        MatrixField::constant(scalar(1.0)),
        MatrixField::zeros(1, 1),
    );
    let cost = RunningCost::new(2.0 * rho, ScalarField::new(move |x, _| rho * x[0] * x[0]))?;
    let psi = StateFn::new(|x| -x[0] * x[0]);
    let term = HamiltonianTerm::SupQuadratic(QuadraticTerm {
        dynamics: dynamics.clone(),
        cost: cost.clone(),
    });
    let spec = ProblemSpec::new(1, vec![term], psi.clone(), Orientation::Terminal, horizon, constants)?;
    let half_width = 4.0;
    Ok(Preset {
        name: name.into(),
        spec,
        lo: vec![-half_width],
        hi: vec![half_width],
        dx: 0.05,
        // gradient of φ(t)x² on the grid
        p_max: (!blows_up).then_some(2.0 * phi_max * half_width),
        oracle: Some(Oracle::ScalarLq(params)),
        sde: Some(SdeSpec {
            dynamics,
            cost,
            psi,
            horizon,
            constants,
        }),
    })
}

/// Stochastic scalar LQ problem as a preset.
pub fn stoch_lq(p: StochLqParams) -> Result<Preset> {
    let StochLqParams { a, b, c, d, q, r, s, horizon } = p;
    if !(r > 0.0) {
        return Err(Error::config("control weight r must be positive"));
    }
    let c_bar = [a.abs(), b.abs(), c.abs(), d.abs(), q.abs(), s.abs(), 1.0].into_iter().fold(0.0, f64::max);
    let c_hat = s.abs().max(q.abs() * horizon) + 0.5 * d * d * horizon;
    let constants = GrowthConstants::new(c_bar, 2.0 * r, c_hat)?;
    let sde_dynamics = ControlAffineDynamics::new(
        1,
        1,
        1,
        VectorField::new(move |x, _| vec1(a * x[0])),
        MatrixField::constant(scalar(b)),
        MatrixField::new(move |x, _| scalar(c * x[0] + d)),
    );
    // the equation carries −Tr[σσᵀX] where the generator has −½σ_sde²
    let pde_dynamics = ControlAffineDynamics {
        diffusion: MatrixField::new(move |x, _| scalar((c * x[0] + d) * FRAC_1_SQRT_2)),
        ..sde_dynamics.clone()
    };
    let cost = RunningCost::new(2.0 * r, ScalarField::new(move |x, _| q * x[0] * x[0]))?;
    let psi = StateFn::new(move |x| s * x[0] * x[0]);
    let term = HamiltonianTerm::SupQuadratic(QuadraticTerm {
        dynamics: pde_dynamics,
        cost: cost.clone(),
    });
    let spec = ProblemSpec::new(1, vec![term], psi.clone(), Orientation::Terminal, horizon, constants)?;
    Ok(Preset {
        name: "stoch-lq".into(),
        spec,
        lo: vec![-3.0],
        hi: vec![3.0],
        dx: 0.01,
        p_max: None,
        oracle: Some(Oracle::StochLq(p)),
        sde: Some(SdeSpec {
            dynamics: sde_dynamics,
            cost,
            psi,
            horizon,
            constants,
        }),
    })
}

fn finance(horizon: f64) -> Result<Preset> {
    let (beta, delta, rho_c) = (0.5, 1.0, 0.3);
    let alpha = |x: f64| -0.5 * x;
    let sharpe = |x: f64| 0.4 * x.tanh();
    let constants = GrowthConstants::new(1.0, 1.0, 1.0)?;
    let drift = VectorField::new(move |x, _| vec1(alpha(x[0]) - sharpe(x[0]) * beta * rho_c));
    let ell0 = ScalarField::new(move |x, _| sharpe(x[0]).powi(2));
    let pde_dynamics = ControlAffineDynamics::new(
        1,
        1,
        1,
        drift.clone(),
        MatrixField::constant(scalar(delta)),
        MatrixField::constant(scalar(beta * FRAC_1_SQRT_2)),
    );
    let sde_dynamics = ControlAffineDynamics {
        diffusion: MatrixField::constant(scalar(beta)),
        ..pde_dynamics.clone()
    };
    let cost = RunningCost::new(1.0, ell0)?;
    let psi = StateFn::constant(0.0);
    let term = HamiltonianTerm::SupQuadratic(QuadraticTerm {
        dynamics: pde_dynamics,
        cost: cost.clone(),
    });
    let spec = ProblemSpec::new(1, vec![term], psi.clone(), Orientation::Terminal, horizon, constants)?;
    Ok(Preset {
        name: "finance".into(),
        spec,
        lo: vec![-3.0],
        hi: vec![3.0],
        dx: 0.02,
        p_max: None,
        oracle: None,
        sde: Some(SdeSpec {
            dynamics: sde_dynamics,
            cost,
            psi,
            horizon,
            constants,
        }),
    })
}

/// Risk-sensitive equation with attenuation `γ = 2`, `c ≡ 1`, nominal
/// dynamics `g = −x + β`, `β ∈ [−1, 1]` on 21 points, `f = ½x²`, `ψ = ½x²`.
fn risk_sensitive(name: &str, epsilon: f64, horizon: f64) -> Result<Preset> {
    if !(epsilon >= 0.0) {
        return Err(Error::config(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let gamma: f64 = 2.0;
    let constants = GrowthConstants::new(1.0, gamma * gamma, 1.0)?;
    let noise = (epsilon / (2.0 * gamma * gamma)).sqrt();
    let inf_term = HamiltonianTerm::InfQuadratic(QuadraticTerm {
        dynamics: ControlAffineDynamics::new(
            1,
            1,
            1,
            VectorField::zeros(1),
            MatrixField::constant(scalar(1.0)),
            MatrixField::constant(scalar(noise)),
        ),
        cost: RunningCost::new(gamma * gamma, ScalarField::zero())?,
    });
    let points = (0..21)
        .map(|k| {
            let beta = -1.0 + 0.1 * k as f64;
            ControlPoint {
                g: VectorField::new(move |x, _| vec1(-x[0] + beta)),
                f: ScalarField::new(|x, _| 0.5 * x[0] * x[0]),
                c: MatrixField::zeros(1, 1),
            }
        })
        .collect();
    let sup_term = HamiltonianTerm::SupCompact(CompactTerm { state_dim: 1, points });
    let spec = ProblemSpec::new(
        1,
        vec![inf_term, sup_term],
        StateFn::new(|x| 0.5 * x[0] * x[0]),
        Orientation::Terminal,
        horizon,
        constants,
    )?;
    Ok(Preset {
        name: name.into(),
        spec,
        lo: vec![-3.0],
        hi: vec![3.0],
        dx: 0.02,
        p_max: None,
        oracle: None,
        sde: None,
    })
}

fn h_form(name: &str, h: StateFn, data_weight: f64, horizon: f64) -> Result<Preset> {
    let constants = GrowthConstants::new(1.0, 1.0, 1.0)?;
    let constant_h = name == "const-h";
    let spec = ProblemSpec::new(
        1,
        vec![HamiltonianTerm::ScalarH(ScalarHTerm { h })],
        StateFn::new(move |x| data_weight * x[0] * x[0]),
        Orientation::Initial,
        horizon,
        constants,
    )?;
    Ok(Preset {
        name: name.into(),
        spec,
        lo: vec![-3.0],
        hi: vec![3.0],
        dx: 0.02,
        p_max: None,
        oracle: constant_h.then_some(Oracle::HopfLax { h: 1.0 }),
        sde: None,
    })
}

/// `Σ(x) = [[0.5 + 0.2 sin x₁, 0.1], [0.1, 0.5 + 0.2 cos x₂]]`.
pub fn default_sigma(x: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.5 + 0.2 * x[0].sin(), 0.1, 0.1, 0.5 + 0.2 * x[1].cos()])
}

fn sigma_form(horizon: f64) -> Result<Preset> {
    let constants = GrowthConstants::new(1.0, 1.0, 1.0)?;
    let spec = ProblemSpec::new(
        2,
        vec![HamiltonianTerm::Sigma(SigmaTerm {
            state_dim: 2,
            sigma: MatrixField::new(|x, _| default_sigma(x)),
            sign: Sign::Plus,
        })],
        StateFn::new(|x| x.norm_squared()),
        Orientation::Initial,
        horizon,
        constants,
    )?;
    Ok(Preset {
        name: "sigma-form".into(),
        spec,
        lo: vec![-2.0, -2.0],
        hi: vec![2.0, 2.0],
        dx: 0.1,
        p_max: None,
        oracle: None,
        sde: None,
    })
}
