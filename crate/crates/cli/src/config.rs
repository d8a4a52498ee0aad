//! Strict run configuration: TOML with sections, unknown keys rejected
//! before any computation starts.

use anyhow::{bail, Context};
use serde::Deserialize;

use nhdiff_core::systems::{RobotParams, SnakeboardControls, SnakeboardParams};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub controls: ControlsSection,
    pub simulate: Option<SimulateSection>,
    pub drift: Option<DriftSection>,
    pub measure_test: Option<MeasureTestSection>,
    pub plan: Option<PlanSection>,
    pub reconstruct: Option<ReconstructSection>,
    pub custom: Option<CustomSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub id: SystemId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemId {
    Robot,
    Snakeboard,
    Custom,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub robot: Option<RobotParamsSection>,
    pub snakeboard: Option<SnakeboardParamsSection>,
}

/// Robot parameters; every default here is a non-paper desk-scale value
/// except where a command overrides from the paper's figure caption.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotParamsSection {
    pub m0: f64,
    pub m_w: f64,
    pub j_w: f64,
    pub j_0: f64,
    pub l: f64,
    pub c: f64,
    pub r: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Default for RobotParamsSection {
    fn default() -> Self {
        let p = RobotParams::default();
        Self {
            m0: p.m0,
            m_w: p.m_w,
            j_w: p.j_w,
            j_0: p.j_0,
            l: p.l,
            c: p.c,
            r: p.r,
            d1: p.d1,
            d2: p.d2,
        }
    }
}

impl RobotParamsSection {
    pub fn to_params(&self) -> RobotParams {
        RobotParams {
            m0: self.m0,
            m_w: self.m_w,
            j_w: self.j_w,
            j_0: self.j_0,
            l: self.l,
            c: self.c,
            r: self.r,
            d1: self.d1,
            d2: self.d2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnakeboardParamsSection {
    pub m: f64,
    pub j_0: f64,
    pub j_phi: f64,
    pub j_psi: f64,
    pub j_theta: f64,
    pub r: f64,
}

impl Default for SnakeboardParamsSection {
    fn default() -> Self {
        let p = SnakeboardParams::default();
        Self {
            m: p.m,
            j_0: p.j_0,
            j_phi: p.j_phi,
            j_psi: p.j_psi,
            j_theta: p.j_theta,
            r: p.r,
        }
    }
}

impl SnakeboardParamsSection {
    pub fn to_params(&self) -> SnakeboardParams {
        SnakeboardParams {
            m: self.m,
            j_0: self.j_0,
            j_phi: self.j_phi,
            j_psi: self.j_psi,
            j_theta: self.j_theta,
            r: self.r,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// seconds
    pub t0: f64,
    pub t_final: f64,
    pub steps: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_final: 1.0,
            steps: 1000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub paths: usize,
    pub seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            paths: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlsSection {
    pub a_phi: f64,
    pub omega_phi: f64,
    pub a_psi: f64,
    pub omega_psi: f64,
}

impl Default for ControlsSection {
    fn default() -> Self {
        let c = SnakeboardControls::default();
        Self {
            a_phi: c.a_phi,
            omega_phi: c.omega_phi,
            a_psi: c.a_psi,
            omega_psi: c.omega_psi,
        }
    }
}

impl ControlsSection {
    pub fn to_controls(&self) -> SnakeboardControls {
        SnakeboardControls {
            a_phi: self.a_phi,
            omega_phi: self.omega_phi,
            a_psi: self.a_psi,
            omega_psi: self.omega_psi,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// noise field strength σ
    pub sigma: f64,
    /// initial chart point; length must match the system dimension
    pub initial: Option<Vec<f64>>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    /// shape-grid nodes per axis
    pub grid: usize,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self { grid: 8 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureTestSection {
    /// shape-grid resolution per axis (dβ is cross-checked at double this)
    pub resolution: usize,
}

impl Default for MeasureTestSection {
    fn default() -> Self {
        Self { resolution: 64 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSection {
    /// circle radius (m)
    pub rho: f64,
    /// total maneuver time; defaults to the profile's 3π/2 + t₁
    pub t_total: Option<f64>,
    pub paper_literal: bool,
    /// quadrature subintervals
    pub steps: usize,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            rho: 1.0,
            t_total: None,
            paper_literal: false,
            steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructSection {
    pub sigma: f64,
    /// initial chart point (φ, ψ, x, y, θ)
    pub initial: Vec<f64>,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            // the paper's figure initial condition
            initial: vec![0.0, 0.0, 0.0, 0.0, 0.5],
        }
    }
}

/// Synthetic one-forms for the custom measure test.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSection {
    pub beta: CustomBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomBeta {
    /// β = d(sin ψ¹): exact with potential sin ψ¹
    SinPsi1,
    /// β = ¼(dψ¹ + dψ²): closed, non-vanishing periods
    ConstantQuarter,
    /// β = sin(ψ²) dψ¹: not closed
    NotClosed,
    /// β = sin(5ψ²) dψ¹: not closed and badly resolved on coarse grids
    HighFrequency,
}

pub fn parse_config(text: &str, path: &str) -> anyhow::Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text)
        .with_context(|| format!("config error in {path}"))?;
    if cfg.ensemble.paths == 0 {
        bail!("config error in {path}: [ensemble] paths must be ≥ 1");
    }
    if cfg.grid.steps == 0 || !(cfg.grid.t_final > cfg.grid.t0) {
        bail!("config error in {path}: [grid] needs steps ≥ 1 and t_final > t0");
    }
    Ok(cfg)
}
