//! Experiment configuration. Keys carry their unit: `_abs` is an absolute
//! length, `_rel_r` a multiple of the ball radius, `_time` a time span.

use serde::{Deserialize, Serialize};

use crate::barrier::{choose_theta_params, default_n, BarrierParams};
use crate::error::{Error, Result};
use crate::exit::{Binning, SimulationSpec};
use crate::geometry::{field_by_name, norm, Ball, CoefficientField, FIELD_NAMES};
use crate::quad::audit::AuditGridSpec;
use crate::quad::gk::Tolerance;
use crate::quad::QuadratureSpec;
use crate::stable::StabilityIndex;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BallSection {
    pub center_abs: Vec<f64>,
    pub radius_abs: f64,
}

impl Default for BallSection {
    fn default() -> Self {
        Self {
            center_abs: vec![0.0, 0.0],
            radius_abs: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub name: String,
    /// Further fields for the uniformity comparison.
    pub compare: Vec<String>,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            name: "identity".into(),
            compare: vec!["diagonal".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierSection {
    pub eps_rel_r: f64,
    pub eta_ring_rel_r: f64,
    /// `0` selects the default `2 r (r ∨ 1)² / ε`.
    pub n_ratio: f64,
}

impl Default for BarrierSection {
    fn default() -> Self {
        Self {
            eps_rel_r: 0.25,
            eta_ring_rel_r: 0.25,
            n_ratio: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartSection {
    /// Depths `δ_D(x)` of the start points.
    pub depths_rel_r: Vec<f64>,
    /// Direction from the center along which start points are placed.
    pub direction: Vec<f64>,
}

impl Default for StartSection {
    fn default() -> Self {
        Self {
            depths_rel_r: vec![1.0, 0.1, 0.02],
            direction: vec![0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub time_step_time: f64,
    pub max_steps: u64,
    pub paths: usize,
    pub step_halving_levels: u32,
    pub censor_fraction: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let s = SimulationSpec::default();
        Self {
            time_step_time: s.time_step,
            max_steps: s.max_steps,
            paths: s.paths,
            step_halving_levels: s.step_halving_levels,
            censor_fraction: s.censor_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub inner_fraction: f64,
    pub taylor_fraction: f64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let q = QuadratureSpec::default();
        Self {
            abs_tol: q.tolerance.abs,
            rel_tol: q.tolerance.rel,
            max_subdivisions: q.tolerance.max_subdivisions,
            inner_fraction: q.inner_fraction,
            taylor_fraction: q.taylor_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinningSection {
    pub log_bins: usize,
    pub log_decades: f64,
    pub near_edge_rel_r: f64,
    pub growth_ratio: f64,
    pub far_edge_rel_r: f64,
}

impl Default for BinningSection {
    fn default() -> Self {
        let b = Binning::default();
        Self {
            log_bins: b.log_bins,
            log_decades: b.log_decades,
            near_edge_rel_r: b.near_factor,
            growth_ratio: b.growth,
            far_edge_rel_r: b.far_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub angles: usize,
    pub inner_radii: usize,
    pub transition_radii: usize,
    pub outer_radii: usize,
    pub margin_rel_r: f64,
    pub theta_grid_points: usize,
    pub identity_grid_points: usize,
    pub uniform_exit_points: usize,
    pub uniform_exit_paths: usize,
}

impl Default for AuditSection {
    fn default() -> Self {
        let g = AuditGridSpec::default();
        Self {
            angles: g.angles,
            inner_radii: g.inner_radii,
            transition_radii: g.transition_radii,
            outer_radii: g.outer_radii,
            margin_rel_r: g.margin_fraction,
            theta_grid_points: 10_000,
            identity_grid_points: 100,
            uniform_exit_points: 20,
            uniform_exit_paths: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerdictSection {
    pub spread_max: f64,
    pub field_spread_ratio_max: f64,
}

impl Default for VerdictSection {
    fn default() -> Self {
        Self {
            spread_max: 25.0,
            field_spread_ratio_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub seed: u64,
    pub output_dir: String,
    pub ball: BallSection,
    pub field: FieldSection,
    pub barrier: BarrierSection,
    pub start: StartSection,
    pub simulation: SimulationSection,
    pub quadrature: QuadratureSection,
    pub binning: BinningSection,
    pub audit: AuditSection,
    pub verdict: VerdictSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            seed: 20_240_601,
            output_dir: "out".into(),
            ball: BallSection::default(),
            field: FieldSection::default(),
            barrier: BarrierSection::default(),
            start: StartSection::default(),
            simulation: SimulationSection::default(),
            quadrature: QuadratureSection::default(),
            binning: BinningSection::default(),
            audit: AuditSection::default(),
            verdict: VerdictSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub alpha: Option<f64>,
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.paths {
            self.simulation.paths = p;
        }
        if let Some(a) = o.alpha {
            self.alpha = a;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        self
    }

    pub fn resolve(&self) -> Result<Resolved> {
        Resolved::new(self.clone())
    }
}

/// A validated configuration with module-level values built.
#[derive(Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub alpha: StabilityIndex,
    pub ball: Ball,
    pub field: Box<dyn CoefficientField>,
    pub compare_fields: Vec<Box<dyn CoefficientField>>,
    pub params: BarrierParams,
    pub simulation: SimulationSpec,
    pub quadrature: QuadratureSpec,
    pub binning: Binning,
    pub audit_grid: AuditGridSpec,
}

impl Resolved {
    fn new(config: ExperimentConfig) -> Result<Self> {
        let alpha = StabilityIndex::new(config.alpha)?;
        let ball = Ball::new(config.ball.center_abs.clone(), config.ball.radius_abs)?;
        let d = ball.dim();
        let r = ball.radius();
        let field = field_by_name(&config.field.name, d)?;
        let compare_fields = config
            .field
            .compare
            .iter()
            .map(|n| field_by_name(n, d))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| cfg_err(format!("{e}; known fields: {}", FIELD_NAMES.join(", "))))?;
        let eps = config.barrier.eps_rel_r * r;
        let eta = config.barrier.eta_ring_rel_r * r;
        let n = if config.barrier.n_ratio > 0.0 {
            config.barrier.n_ratio
        } else {
            default_n(r, eps)
        };
        let params = choose_theta_params(r, eps, eta, n, alpha)?;
        if config.start.direction.len() != d || !(norm(&config.start.direction) > 0.0) {
            return Err(cfg_err("start.direction must be a nonzero vector of the ball dimension"));
        }
        if config.start.depths_rel_r.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(cfg_err("start.depths_rel_r must lie in (0, 1]"));
        }
        let s = &config.simulation;
        let simulation = SimulationSpec {
            time_step: s.time_step_time,
            max_steps: s.max_steps,
            paths: s.paths,
            master_seed: config.seed,
            step_halving_levels: s.step_halving_levels,
            censor_threshold: s.censor_fraction,
        };
        simulation.validate()?;
        let q = &config.quadrature;
        let quadrature = QuadratureSpec {
            tolerance: Tolerance {
                abs: q.abs_tol,
                rel: q.rel_tol,
                max_subdivisions: q.max_subdivisions,
            },
            inner_fraction: q.inner_fraction,
            taylor_fraction: q.taylor_fraction,
            ..QuadratureSpec::default()
        };
        quadrature.validate()?;
        let b = &config.binning;
        let binning = Binning {
            log_bins: b.log_bins,
            log_decades: b.log_decades,
            near_factor: b.near_edge_rel_r,
            growth: b.growth_ratio,
            far_factor: b.far_edge_rel_r,
        };
        binning.validate()?;
        let a = &config.audit;
        let audit_grid = AuditGridSpec {
            angles: a.angles,
            inner_radii: a.inner_radii,
            transition_radii: a.transition_radii,
            outer_radii: a.outer_radii,
            margin_fraction: a.margin_rel_r,
        };
        if audit_grid.is_empty() {
            return Err(cfg_err("audit grid is empty"));
        }
        if !(config.verdict.spread_max >= 1.0 && config.verdict.field_spread_ratio_max >= 1.0) {
            return Err(cfg_err("verdict bounds must be at least 1"));
        }
        Ok(Self {
            config,
            alpha,
            ball,
            field,
            compare_fields,
            params,
            simulation,
            quadrature,
            binning,
            audit_grid,
        })
    }

    /// Start points at the configured depths along the configured direction.
    pub fn start_points(&self) -> Result<Vec<Vec<f64>>> {
        self.config
            .start
            .depths_rel_r
            .iter()
            .map(|t| self.ball.point_at_depth(&self.config.start.direction, t * self.ball.radius()))
            .collect()
    }

    /// The primary field followed by the comparison fields.
    pub fn all_fields(&self) -> Vec<&dyn CoefficientField> {
        std::iter::once(self.field.as_ref())
            .chain(self.compare_fields.iter().map(|f| f.as_ref()))
            .collect()
    }
}
