//! Scalar linear-quadratic benchmark with exact value and finite-time blow-up.
//!
//! Minimizing `ρ∫ₜᵀ(|α|² + |X|²)ds − |X_T|²` under `Ẋ = α` gives `V = φ(t)x²` with
//!
//! ```text
//! −φ′ + φ²/ρ = ρ,    φ(T) = −1
//!
//! φ(t) = ρ [(ρ−1) − (ρ+1)e^{−2(T−t)}] / [(ρ−1) + (ρ+1)e^{−2(T−t)}]
//! ```
//!
//! For `ρ < 1` the denominator vanishes at `τ̄ = T − ½ln((1+ρ)/(1−ρ))` when
//! that time is positive, and `φ → −∞` as `t ↓ τ̄`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Divergence sentinel for the numerical integrator.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

const UNIT_RHO_BAND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarLQParams {
    pub rho: f64,
    pub horizon: f64,
}

impl ScalarLQParams {
    pub fn new(rho: f64, horizon: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::domain(format!("rho must be positive, got {rho}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(ScalarLQParams { rho, horizon })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub blew_up: bool,
    /// Earliest time reached with `|φ| ≤ BLOWUP_THRESHOLD`; `0` without blow-up.
    pub t_min: f64,
}

impl RiccatiTrajectory {
    /// Value at the first recorded time (`φ(0)` when no blow-up occurred).
    pub fn initial_value(&self) -> f64 {
        self.values[0]
    }
}

/// `τ̄ = T − ½ln((1+ρ)/(1−ρ))` when `ρ < 1` and `τ̄ > 0`.
pub fn blowup_time(params: &ScalarLQParams) -> Option<f64> {
    let rho = params.rho;
    if rho >= 1.0 - UNIT_RHO_BAND {
        return None;
    }
    let tau = params.horizon - 0.5 * ((1.0 + rho) / (1.0 - rho)).ln();
    (tau > 0.0).then_some(tau)
}

/// Closed-form Riccati solution, valid on `(τ̄, T]`.
pub fn phi_closed(params: &ScalarLQParams, t: f64) -> Result<f64> {
    let ScalarLQParams { rho, horizon } = *params;
    if !(t <= horizon) {
        return Err(Error::domain(format!("t = {t} lies beyond the horizon {horizon}")));
    }
    if let Some(tau) = blowup_time(params) {
        if t <= tau {
            return Err(Error::BlowUp { t, blowup_time: tau });
        }
    }
    if (rho - 1.0).abs() < UNIT_RHO_BAND {
        return Ok(-1.0);
    }
    let decay = (-2.0 * (horizon - t)).exp();
    let num = (rho - 1.0) - (rho + 1.0) * decay;
    let den = (rho - 1.0) + (rho + 1.0) * decay;
    Ok(rho * num / den)
}

fn backward_rate(rho: f64, phi: f64) -> f64 {
    rho - phi * phi / rho
}

/// Backward RK4 integration of `dφ/ds = ρ − φ²/ρ`, `s = T − t`, from `φ(T) = −1`.
///
/// The step is `T/⌈T/dt⌉`. Integration stops at the first step where `|φ|`
/// exceeds [`BLOWUP_THRESHOLD`] or becomes non-finite.
pub fn phi_rk4(params: &ScalarLQParams, dt: f64) -> Result<RiccatiTrajectory> {
    let ScalarLQParams { rho, horizon } = *params;
    if !(dt > 0.0) || dt > horizon / 10.0 * (1.0 + 1e-12) {
        return Err(Error::domain(format!("dt = {dt} must lie in (0, T/10]")));
    }
    let steps = (horizon / dt).ceil() as usize;
    let h = horizon / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut phi = -1.0;
    times.push(horizon);
    values.push(phi);
    let mut blew_up = false;
    for k in 1..=steps {
        let k1 = backward_rate(rho, phi);
        let k2 = backward_rate(rho, phi + 0.5 * h * k1);
        let k3 = backward_rate(rho, phi + 0.5 * h * k2);
        let k4 = backward_rate(rho, phi + h * k3);
        let next = phi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() || next.abs() > BLOWUP_THRESHOLD {
            blew_up = true;
            break;
        }
        phi = next;
        times.push(horizon - k as f64 * h);
        values.push(phi);
    }
    if !blew_up {
        // pin the last node to t = 0 exactly
        *times.last_mut().expect("nonempty") = 0.0;
    }
    times.reverse();
    values.reverse();
    let t_min = if blew_up { times[0] } else { 0.0 };
    Ok(RiccatiTrajectory {
        times,
        values,
        blew_up,
        t_min,
    })
}

/// `V(x, t) = φ(t)x²`.
pub fn lq_value(params: &ScalarLQParams, x: f64, t: f64) -> Result<f64> {
    Ok(phi_closed(params, t)? * x * x)
}

/// Minimizer of the Hamiltonian: `α*(x, t) = −φ(t)x/ρ`.
pub fn lq_optimal_feedback(params: &ScalarLQParams, x: f64, t: f64) -> Result<f64> {
    Ok(-phi_closed(params, t)? * x / params.rho)
}

/// `max |φ|` over `[t_lo, T]`; `φ` is monotone there so the endpoints suffice.
pub fn phi_abs_max(params: &ScalarLQParams, t_lo: f64) -> Result<f64> {
    let a = phi_closed(params, t_lo)?.abs();
    Ok(a.max(1.0))
}
