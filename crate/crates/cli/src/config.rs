//! Scenario files: one TOML document with optional sections. Every field
//! may also be set by a command-line flag, which wins over the file.
//!
//! ```text
//! preset = "lq"            # or an inline [problem] section, not both
//! [params]   rho, T, epsilon
//! [grid]     dx
//! [scheme]   dt, cfl_safety, theta, p_max, dissipation, record_every, blowup_threshold, expect_blowup
//! [mc]       n_paths, dt, seed, truncation, x0, t0, family, gain, lo, hi, cells, sweeps, golden_iterations, moments
//! [barrier]  kind, r_kink, T, r_max, points, rho, k, eta, mu, margin
//! [verify]   suite, seed
//! [output]   dir, name
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hjblab_core::mc::SdeSpec;
use hjblab_core::model::{
    ControlAffineDynamics, GrowthConstants, HamiltonianTerm, MatrixField, Orientation, ProblemSpec, QuadraticTerm,
    RunningCost, ScalarField, ScalarHTerm, Sign, SigmaTerm, StateFn, VectorField,
};
use hjblab_core::presets::{self, Preset, PresetOptions};
use hjblab_core::solver::{Dissipation, SchemeConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<InlineProblem>,
    pub params: ParamsSection,
    pub grid: GridSection,
    pub scheme: SchemeSection,
    pub mc: McSection,
    pub barrier: BarrierSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cfl_safety: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dissipation: Option<Dissipation>,
    /// Keep every k-th layer; by default about 100 layers are kept.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blowup_threshold: Option<f64>,
    pub expect_blowup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    pub x0: Vec<f64>,
    pub t0: f64,
    /// `linear-gain`, `constant`, `open-loop`, `gain` (fixed) or `optimal`.
    pub family: String,
    pub gain: f64,
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub sweeps: usize,
    pub golden_iterations: usize,
    pub moments: bool,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n_paths: 4000,
            dt: 2e-3,
            seed: 0,
            truncation: None,
            x0: vec![1.0],
            t0: 0.0,
            family: "linear-gain".into(),
            gain: -1.0,
            lo: -3.0,
            hi: 1.0,
            cells: 4,
            sweeps: 2,
            golden_iterations: 20,
            moments: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierSection {
    /// `heat`, `quadratic`, `strict` or `rational`.
    pub kind: String,
    pub r_kink: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub r_max: f64,
    pub points: usize,
    pub rho: f64,
    pub k: f64,
    pub eta: f64,
    pub mu: f64,
    pub margin: f64,
}

impl Default for BarrierSection {
    fn default() -> Self {
        BarrierSection {
            kind: "heat".into(),
            r_kink: 1.0,
            horizon: 1.0,
            r_max: 10.0,
            points: 101,
            rho: 2.0,
            k: 3.0,
            eta: hjblab_core::barriers::DEFAULT_ETA,
            mu: 0.5,
            margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub suite: String,
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            suite: "all".into(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Constant-coefficient problem family written directly in the scenario:
///
/// ```text
/// b₀(x) = A x + b,   B, σ constant,   ℓ₀(x) = xᵀQx + q₀,   ψ(x) = xᵀSx + ⟨s,x⟩ + s₀
/// ```
///
/// `kind` selects `inf-quadratic`, `sup-quadratic`, `h-form` (constant `h`) or
/// `sigma-form` (constant `Σ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InlineProblem {
    pub kind: String,
    pub dim: usize,
    pub orientation: Orientation,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub dx: f64,
    pub drift_matrix: Vec<Vec<f64>>,
    pub drift_offset: Vec<f64>,
    pub control_matrix: Vec<Vec<f64>>,
    pub diffusion: Vec<Vec<f64>>,
    pub nu: f64,
    pub cost_quadratic: Vec<Vec<f64>>,
    pub cost_offset: f64,
    pub data_quadratic: Vec<Vec<f64>>,
    pub data_linear: Vec<f64>,
    pub data_offset: f64,
    pub h: f64,
    pub sigma: Vec<Vec<f64>>,
    pub sign: f64,
    pub c_bar: f64,
    pub c_hat: f64,
}

impl Default for InlineProblem {
    fn default() -> Self {
        InlineProblem {
            kind: "sup-quadratic".into(),
            dim: 1,
            orientation: Orientation::Terminal,
            horizon: 1.0,
            lo: vec![-3.0],
            hi: vec![3.0],
            dx: 0.05,
            drift_matrix: vec![],
            drift_offset: vec![],
            control_matrix: vec![vec![1.0]],
            diffusion: vec![],
            nu: 1.0,
            cost_quadratic: vec![],
            cost_offset: 0.0,
            data_quadratic: vec![],
            data_linear: vec![],
            data_offset: 0.0,
            h: 1.0,
            sigma: vec![],
            sign: 1.0,
            c_bar: 1.0,
            c_hat: 1.0,
        }
    }
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(nrows, ncols));
    }
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        bail!(UsageError(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>> {
    if v.is_empty() {
        return Ok(DVector::zeros(n));
    }
    if v.len() != n {
        bail!(UsageError(format!("{what} must have {n} entries")));
    }
    Ok(DVector::from_column_slice(v))
}

impl InlineProblem {
    pub fn build(&self) -> Result<Preset> {
        let n = self.dim;
        if !(1..=2).contains(&n) {
            bail!(UsageError("inline problems have dimension 1 or 2".into()));
        }
        let s_mat = matrix(&self.data_quadratic, n, n, "data_quadratic")?;
        let s_vec = vector(&self.data_linear, n, "data_linear")?;
        let s0 = self.data_offset;
        let data = StateFn::new(move |x| (&s_mat * x).dot(x) + s_vec.dot(x) + s0);
        let constants = GrowthConstants::new(self.c_bar, self.nu, self.c_hat)?;
        let mut sde = None;
        let term = match self.kind.as_str() {
            "inf-quadratic" | "sup-quadratic" => {
                let a = matrix(&self.drift_matrix, n, n, "drift_matrix")?;
                let b = vector(&self.drift_offset, n, "drift_offset")?;
                let k = self.control_matrix.first().map_or(1, |r| r.len().max(1));
                let control = matrix(&self.control_matrix, n, k, "control_matrix")?;
                let sigma = matrix(&self.diffusion, n, n, "diffusion")?;
                let q = matrix(&self.cost_quadratic, n, n, "cost_quadratic")?;
                let q0 = self.cost_offset;
                let dynamics = ControlAffineDynamics::new(
                    n,
                    k,
                    n,
                    VectorField::new(move |x, _| &a * x + &b),
                    MatrixField::constant(control),
                    MatrixField::constant(sigma.clone()),
                );
                let cost = RunningCost::new(self.nu, ScalarField::new(move |x, _| (&q * x).dot(x) + q0))?;
                // the equation carries −Tr[σσᵀX]; the generator of dX = … + σ_sde dW has −½σ_sdeσ_sdeᵀ
                sde = Some(SdeSpec {
                    dynamics: ControlAffineDynamics {
                        diffusion: MatrixField::constant(sigma * std::f64::consts::SQRT_2),
                        ..dynamics.clone()
                    },
                    cost: cost.clone(),
                    psi: data.clone(),
                    horizon: self.horizon,
                    constants,
                });
                let quadratic = QuadraticTerm { dynamics, cost };
                if self.kind == "inf-quadratic" {
                    HamiltonianTerm::InfQuadratic(quadratic)
                } else {
                    HamiltonianTerm::SupQuadratic(quadratic)
                }
            }
            "h-form" => HamiltonianTerm::ScalarH(ScalarHTerm {
                h: StateFn::constant(self.h),
            }),
            "sigma-form" => HamiltonianTerm::Sigma(SigmaTerm {
                state_dim: n,
                sigma: MatrixField::constant(matrix(&self.sigma, n, n, "sigma")?),
                sign: if self.sign >= 0.0 { Sign::Plus } else { Sign::Minus },
            }),
            other => bail!(UsageError(format!(
                "unknown inline problem kind {other:?}; expected inf-quadratic, sup-quadratic, h-form or sigma-form"
            ))),
        };
        if self.lo.len() != n || self.hi.len() != n {
            bail!(UsageError(format!("lo and hi must have {n} entries")));
        }
        let spec = ProblemSpec::new(n, vec![term], data, self.orientation, self.horizon, constants)?;
        Ok(Preset {
            name: "inline".into(),
            spec,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            dx: self.dx,
            p_max: None,
            oracle: None,
            sde,
        })
    }
}

/// Bad configuration or flags; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| UsageError(e.to_string()).into())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn preset_options(&self) -> PresetOptions {
        PresetOptions {
            rho: self.params.rho,
            horizon: self.params.horizon,
            epsilon: self.params.epsilon,
        }
    }

    /// The preset or inline problem; `lq` when neither is given.
    pub fn problem(&self) -> Result<Preset> {
        match (&self.preset, &self.problem) {
            (Some(_), Some(_)) => bail!(UsageError("give either a preset or an inline [problem], not both".into())),
            (None, Some(inline)) => inline.build(),
            (name, None) => {
                let name = name.as_deref().unwrap_or("lq");
                if !presets::PRESET_NAMES.contains(&name) {
                    bail!(UsageError(format!(
                        "unknown preset {name:?}; available presets: {}",
                        presets::PRESET_NAMES.join(", ")
                    )));
                }
                Ok(presets::preset(name, &self.preset_options())?)
            }
        }
    }

    pub fn scheme_config(&self, p: &Preset) -> SchemeConfig {
        let base = p.scheme();
        let s = &self.scheme;
        SchemeConfig {
            dt: s.dt.or(base.dt),
            cfl_safety: s.cfl_safety.unwrap_or(base.cfl_safety),
            theta: s.theta.or(base.theta),
            p_max: s.p_max.or(base.p_max),
            dissipation: s.dissipation.unwrap_or(base.dissipation),
            blowup_threshold: s.blowup_threshold.unwrap_or(base.blowup_threshold),
            record_every: s.record_every.unwrap_or(base.record_every),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_every_field() {
        let mut config = ScenarioConfig {
            preset: Some("stoch-lq".into()),
            ..ScenarioConfig::default()
        };
        config.params.horizon = Some(0.75);
        config.scheme.dissipation = Some(Dissipation::Global);
        config.scheme.expect_blowup = true;
        config.mc.seed = u64::MAX;
        config.mc.dt = 0.1 + 0.2;
        config.grid.dx = Some(1.0 / 3.0);
        let text = config.to_toml().unwrap();
        assert_eq!(ScenarioConfig::parse(&text).unwrap(), config);
    }

    #[test]
    fn inline_problem_round_trips_and_builds() {
        let config = ScenarioConfig::parse(
            r#"
            [problem]
            kind = "sup-quadratic"
            T = 1.0
            lo = [-4.0]
            hi = [4.0]
            nu = 4.0
            cost_quadratic = [[2.0]]
            data_quadratic = [[-1.0]]
            c_bar = 2.0
            "#,
        )
        .unwrap();
        let text = config.to_toml().unwrap();
        assert_eq!(ScenarioConfig::parse(&text).unwrap(), config);
        let p = config.problem().unwrap();
        assert_eq!(p.spec.orientation, Orientation::Terminal);
        assert_eq!(p.spec.data.eval(&DVector::from_element(1, 2.0)), -4.0);
    }

    #[test]
    fn unknown_keys_and_double_problems_are_rejected() {
        assert!(ScenarioConfig::parse("presett = \"lq\"").is_err());
        let both = ScenarioConfig::parse("preset = \"lq\"\n[problem]\nkind = \"h-form\"").unwrap();
        assert!(both.problem().unwrap_err().downcast_ref::<UsageError>().is_some());
        let unknown = ScenarioConfig::parse("preset = \"nope\"").unwrap();
        let message = unknown.problem().unwrap_err().to_string();
        assert!(message.contains("risk-sensitive"));
    }
}
