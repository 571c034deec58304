//! Explicit sub- and supersolutions with their constant ledgers.
//!
//! ```text
//! quadratic:  ±K e^{ρt}(1+|x|²),            K = c̄+1, ρ = 10c̄ + 12c̄² + 2c̄²K e/ν, t ≤ 1/ρ
//! heat:       φ(r,t) = χ(ln r, t),          χ(s,t) = (4πt)^{-1/2} ∫_{ln R}^∞ e^{−(s−y)²/4t}(e^y − R) dy
//!             φ_t − r²φ_rr − rφ_r = 0,      φ(r,0) = (r − R)⁺
//! strict:     Φ(x,t) = φ(C(1+|x|²)e^{Lt}, Mt) + ηt
//! rational:   K[(|x|−R)⁺]²/(1−Lt) + ηt,     t < 1/L
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GrowthConstants, Sign};
use crate::quadrature;

/// Default additive slope `η` for strict supersolutions.
pub const DEFAULT_ETA: f64 = 1e-3;

/// Anything that can be sampled at `(x, t)` for ordering checks.
pub trait Barrier {
    fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticBarrier {
    pub k: f64,
    pub rho: f64,
    pub sign: Sign,
    /// Validity window `1/ρ`.
    pub tau: f64,
}

impl QuadraticBarrier {
    pub fn eval(&self, x: &DVector<f64>, t: f64) -> f64 {
        self.sign.value() * self.k * (self.rho * t).exp() * (1.0 + x.norm_squared())
    }
}

impl Barrier for QuadraticBarrier {
    fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        if !(0.0..=self.tau).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside the validity window [0, {}]", self.tau)));
        }
        Ok(self.eval(x, t))
    }
}

/// Returns the `(sub, super)` pair of quadratic barriers.
pub fn quadratic_barrier_constants(constants: &GrowthConstants) -> (QuadraticBarrier, QuadraticBarrier) {
    let c = constants.c_bar;
    let k = c + 1.0;
    // e^{ρt} ≤ e on the window tρ ≤ 1
    let rho = 10.0 * c + 12.0 * c * c + 2.0 * c * c * k * std::f64::consts::E / constants.nu;
    let make = |sign| QuadraticBarrier {
        k,
        rho,
        sign,
        tau: 1.0 / rho,
    };
    (make(Sign::Minus), make(Sign::Plus))
}

const TAIL_SIGMAS: f64 = 40.0;

/// Standard normal density.
fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `χ(s, t) = E[(e^Y − R)⁺]` with `Y ~ N(s, 2t)`, by adaptive quadrature.
///
/// In the standard-normal variable `z = (y − s)/√(2t)` the integrand is
/// `φ(z)(e^{s+√(2t)z} − R)` on `[z₀, ∞)`, `z₀ = (ln R − s)/√(2t)`. The range is
/// truncated to `[max(z₀, −40), √(2t) + 40]`; the discarded Gaussian tails
/// are below `(e^{s+t} + R)·φ(40)/40`.
pub fn chi(s: f64, t: f64, r_kink: f64) -> Result<f64> {
    if !(r_kink > 0.0) {
        return Err(Error::domain(format!("kink location must be positive, got {r_kink}")));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("heat time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok((s.exp() - r_kink).max(0.0));
    }
    let width = (2.0 * t).sqrt();
    let z0 = (r_kink.ln() - s) / width;
    let hi = width + TAIL_SIGMAS;
    if z0 >= hi {
        return Ok(0.0);
    }
    let lo = z0.max(-TAIL_SIGMAS);
    let integrand = |z: f64| normal_pdf(z) * ((s + width * z).exp() - r_kink);
    let scale = (s + t).exp().max(r_kink);
    let q = quadrature::integrate(integrand, lo, hi, 1e-13 * scale.min(1.0), 1e-13)?;
    Ok(q.value.max(0.0))
}

/// `φ(r, t) = χ(ln r, t)` for `r > 0`, with `φ(0, t) = 0`.
pub fn phi_heat(r: f64, t: f64, r_kink: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::domain(format!("heat barrier needs r ≥ 0, got {r}")));
    }
    if r == 0.0 {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("heat time must be nonnegative, got {t}")));
        }
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok((r - r_kink).max(0.0));
    }
    chi(r.ln(), t, r_kink)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatBarrierParams {
    pub r_kink: f64,
    pub horizon: f64,
}

impl HeatBarrierParams {
    pub fn new(r_kink: f64, horizon: f64) -> Result<Self> {
        if !(r_kink > 0.0) || !(horizon > 0.0) {
            return Err(Error::domain("kink location and horizon must be positive"));
        }
        Ok(HeatBarrierParams { r_kink, horizon })
    }

    pub fn phi(&self, r: f64, t: f64) -> Result<f64> {
        if t > self.horizon {
            return Err(Error::domain(format!("t = {t} beyond heat horizon {}", self.horizon)));
        }
        phi_heat(r, t, self.r_kink)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrictSupersolutionParams {
    pub c: f64,
    pub l: f64,
    pub m: f64,
    pub eta: f64,
    pub mu: f64,
    pub nu: f64,
    pub r_kink: f64,
    pub horizon: f64,
}

impl StrictSupersolutionParams {
    /// Validates `M > 16C² + 8C`, `L > 2C³e^{T+1}/(ν(1−μ))` and `C > max(c̄, ĉ)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        c: f64,
        l: f64,
        m: f64,
        eta: f64,
        mu: f64,
        r_kink: f64,
        horizon: f64,
        constants: &GrowthConstants,
    ) -> Result<Self> {
        let nu = constants.nu;
        if !(0.0 < mu && mu < 1.0) {
            return Err(Error::config(format!("mu must lie in (0, 1), got {mu}")));
        }
        if !(eta > 0.0 && r_kink > 0.0 && horizon > 0.0) {
            return Err(Error::config("eta, R and the horizon must be positive"));
        }
        let c_floor = constants.c_bar.max(constants.c_hat);
        if !(c > c_floor) {
            return Err(Error::config(format!("C = {c} must exceed max(c_bar, c_hat) = {c_floor}")));
        }
        let m_floor = 16.0 * c * c + 8.0 * c;
        if !(m > m_floor) {
            return Err(Error::config(format!("M = {m} must exceed 16C² + 8C = {m_floor}")));
        }
        let l_floor = l_lower_bound(c, nu, mu, horizon);
        if !(l > l_floor) {
            return Err(Error::config(format!("L = {l} must exceed 2C³e^(T+1)/(ν(1−μ)) = {l_floor}")));
        }
        Ok(StrictSupersolutionParams {
            c,
            l,
            m,
            eta,
            mu,
            nu,
            r_kink,
            horizon,
        })
    }

    /// Smallest admissible constants inflated by the factor `1 + margin`.
    pub fn minimal(constants: &GrowthConstants, mu: f64, r_kink: f64, horizon: f64, eta: f64, margin: f64) -> Result<Self> {
        let inflate = 1.0 + margin.max(1e-9);
        let c = constants.c_bar.max(constants.c_hat) * inflate;
        let m = (16.0 * c * c + 8.0 * c) * inflate;
        let l = l_lower_bound(c, constants.nu, mu, horizon) * inflate;
        StrictSupersolutionParams::new(c, l, m, eta, mu, r_kink, horizon, constants)
    }

    /// Largest time at which the value is defined: `min(1/L, T/M)`.
    pub fn time_limit(&self) -> f64 {
        (1.0 / self.l).min(self.horizon / self.m)
    }

    pub fn eval(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("t must be nonnegative, got {t}")));
        }
        if t > 1.0 / self.l {
            return Err(Error::domain(format!("t = {t} exceeds 1/L = {}", 1.0 / self.l)));
        }
        if self.m * t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::domain(format!("Mt = {} exceeds the heat horizon {}", self.m * t, self.horizon)));
        }
        let r = self.c * (1.0 + x.norm_squared()) * (self.l * t).exp();
        Ok(phi_heat(r, (self.m * t).min(self.horizon), self.r_kink)? + self.eta * t)
    }
}

impl Barrier for StrictSupersolutionParams {
    fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        self.eval(x, t)
    }
}

fn l_lower_bound(c: f64, nu: f64, mu: f64, horizon: f64) -> f64 {
    2.0 * c.powi(3) * (horizon + 1.0).exp() / (nu * (1.0 - mu))
}

pub fn strict_supersolution_value(params: &StrictSupersolutionParams, x: &DVector<f64>, t: f64) -> Result<f64> {
    params.eval(x, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalBarrier {
    pub k: f64,
    pub l: f64,
    pub radius: f64,
    pub eta: f64,
}

/// Value and derivatives of a barrier at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl RationalBarrier {
    pub fn new(k: f64, l: f64, radius: f64, eta: f64) -> Result<Self> {
        if !(k > 0.0 && l > 0.0 && radius > 0.0 && eta >= 0.0) {
            return Err(Error::config("rational barrier needs K, L, R > 0 and η ≥ 0"));
        }
        Ok(RationalBarrier { k, l, radius, eta })
    }

    /// Constants that make the barrier a strict supersolution of
    /// `w_t + |Dw|²/(4ρ) − ρ|x|² = 0`: `R² ≤ η/(4ρ)` and `KL + K²/ρ ≥ 2ρ`.
    pub fn for_scalar_lq(rho: f64, k: f64, eta: f64) -> Result<Self> {
        if !(rho > 0.0 && k > 0.0 && eta > 0.0) {
            return Err(Error::config("rho, K and eta must be positive"));
        }
        let radius = (eta / (4.0 * rho)).sqrt();
        let l = ((2.0 * rho - k * k / rho) / k).max(1e-3);
        RationalBarrier::new(k, l, radius, eta)
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let denom = 1.0 - self.l * t;
        if !(denom > 0.0) {
            return Err(Error::domain(format!("t = {t} is not below 1/L = {}", 1.0 / self.l)));
        }
        Ok(denom)
    }

    pub fn eval(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        let denom = self.check_time(t)?;
        let d = (x.norm() - self.radius).max(0.0);
        Ok(self.k * d * d / denom + self.eta * t)
    }

    /// Exact derivatives; `C¹` across `|x| = R`, so the Hessian there is the
    /// one-sided limit from inside (zero).
    pub fn jet(&self, x: &DVector<f64>, t: f64) -> Result<Jet> {
        let denom = self.check_time(t)?;
        let n = x.len();
        let r = x.norm();
        let d = (r - self.radius).max(0.0);
        let value = self.k * d * d / denom + self.eta * t;
        let dt = self.k * self.l * d * d / (denom * denom) + self.eta;
        if d == 0.0 {
            return Ok(Jet {
                value,
                dt,
                gradient: DVector::zeros(n),
                hessian: DMatrix::zeros(n, n),
            });
        }
        let unit = x / r;
        let scale = 2.0 * self.k / denom;
        let gradient = &unit * (scale * d);
        let radial = &unit * unit.transpose();
        let tangential = DMatrix::identity(n, n) - &radial;
        let hessian = (radial + tangential * (d / r)) * scale;
        Ok(Jet {
            value,
            dt,
            gradient,
            hessian,
        })
    }
}

impl Barrier for RationalBarrier {
    fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        self.eval(x, t)
    }
}

pub fn rational_barrier_value(params: &RationalBarrier, x: &DVector<f64>, t: f64) -> Result<f64> {
    params.eval(x, t)
}
