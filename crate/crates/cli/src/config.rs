//! Experiment configuration: one config = one mesh = one metric = one
//! solve, plus a battery of measurement checks with explicit thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use pharm_core::metric::MetricSpec;
use pharm_core::profiles::{BoundarySpec, RhsSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mesh_level: u32,
    pub metric: MetricSpec,
    pub energy: EnergySpec,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub rhs: Option<RhsSpec>,
    #[serde(default)]
    pub solve: SolveMode,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub battery: Vec<CheckSpec>,
    #[serde(default = "default_out")]
    pub output_dir: String,
    #[serde(default = "default_true")]
    pub deterministic: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> String {
    "out".into()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    #[default]
    Dirichlet,
    Critical,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergySpec {
    pub p: f64,
    pub target_dim: usize,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iterations: usize,
    #[serde(default = "default_mu_init")]
    pub mu_init: f64,
    #[serde(default = "default_mu_final")]
    pub mu_final: f64,
    #[serde(default = "default_mu_factor")]
    pub mu_factor: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            tolerance: default_tol(),
            max_iterations: default_max_iter(),
            mu_init: default_mu_init(),
            mu_final: default_mu_final(),
            mu_factor: default_mu_factor(),
            max_outer: default_max_outer(),
        }
    }
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    60
}
fn default_mu_init() -> f64 {
    1e-1
}
fn default_mu_final() -> f64 {
    1e-8
}
fn default_mu_factor() -> f64 {
    0.1
}
fn default_max_outer() -> usize {
    30
}

/// One measurement check with its parameters and pass thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum CheckSpec {
    ConvexHull {
        #[serde(default = "default_hull_tol")]
        tolerance_rel: f64,
    },
    Campanato {
        center: [f64; 2],
        r0: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_count")]
        count: usize,
        /// Fitted decay exponent must exceed this (degenerate all-zero
        /// tables pass).
        #[serde(default)]
        min_exponent: f64,
        /// When set, the exponent must instead stay BELOW this bound
        /// (no-false-decay control).
        #[serde(default)]
        max_exponent: Option<f64>,
    },
    Comparison {
        center: [f64; 2],
        radii: Vec<f64>,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_min_slope")]
        min_slope: f64,
        #[serde(default = "default_max_residual")]
        max_residual: f64,
    },
    Morrey {
        center: [f64; 2],
        radii: Vec<f64>,
        #[serde(default)]
        min_slope: f64,
        #[serde(default = "default_max_residual")]
        max_residual: f64,
    },
    Holder {
        center: [f64; 2],
        scales: Vec<f64>,
        #[serde(default)]
        gradient: bool,
        /// Expected exponent with tolerance; without it the check records
        /// the fit and passes on residual alone.
        #[serde(default)]
        expected: Option<f64>,
        #[serde(default = "default_holder_tol")]
        tol: f64,
    },
    Hessian {
        center: [f64; 2],
        radius: f64,
        h_list: Vec<f64>,
        /// Extrapolated limit must stay below this multiple of the
        /// scaling bound factor.
        #[serde(default)]
        max_bound_ratio: Option<f64>,
    },
    HoleFilling {
        centers: Vec<[f64; 2]>,
        radii: Vec<f64>,
        #[serde(default = "default_max_theta")]
        max_theta: f64,
    },
    /// Cross-check: the critical solve at Γ = 0 against the plain
    /// Dirichlet solve, in W^{1,2} distance.
    PicardConsistency {
        #[serde(default = "default_factor")]
        factor: f64,
    },
}

fn default_hull_tol() -> f64 {
    1e-6
}
fn default_delta() -> f64 {
    0.5
}
fn default_count() -> usize {
    4
}
fn default_beta() -> f64 {
    0.99
}
fn default_min_slope() -> f64 {
    0.8
}
fn default_max_residual() -> f64 {
    0.3
}
fn default_holder_tol() -> f64 {
    0.1
}
fn default_max_theta() -> f64 {
    1.0
}
fn default_factor() -> f64 {
    2.0
}

impl CheckSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CheckSpec::ConvexHull { .. } => "convex_hull",
            CheckSpec::Campanato { .. } => "campanato",
            CheckSpec::Comparison { .. } => "comparison",
            CheckSpec::Morrey { .. } => "morrey",
            CheckSpec::Holder { .. } => "holder",
            CheckSpec::Hessian { .. } => "hessian",
            CheckSpec::HoleFilling { .. } => "hole_filling",
            CheckSpec::PicardConsistency { .. } => "picard_consistency",
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> CliResult<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(json)
            .map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let err = |path: &str, msg: String| Err(CliError::Config(format!("{path}: {msg}")));
        if self.mesh_level > 9 {
            return err("mesh_level", format!("{} outside 0..=9", self.mesh_level));
        }
        if self.energy.p < 2.0 {
            return err("energy.p", format!("{} below 2", self.energy.p));
        }
        if self.energy.target_dim == 0 || self.energy.target_dim > 4 {
            return err("energy.target_dim", format!("{}", self.energy.target_dim));
        }
        if self.solve == SolveMode::Critical && self.energy.p != 2.0 {
            return err("solve", "critical mode requires p = 2".into());
        }
        let ball_ok = |c: &[f64; 2], r: f64| c[0].hypot(c[1]) + r <= 1.0 + 1e-12 && r > 0.0;
        for (i, check) in self.battery.iter().enumerate() {
            let path = format!("battery[{i}]");
            match check {
                CheckSpec::Campanato { center, r0, delta, count, .. } => {
                    if !ball_ok(center, *r0) {
                        return err(&format!("{path}.r0"), "hierarchy exits the unit ball".into());
                    }
                    if !(0.0 < *delta && *delta < 1.0) {
                        return err(&format!("{path}.delta"), format!("{delta} outside (0,1)"));
                    }
                    if *count < 2 {
                        return err(&format!("{path}.count"), "need at least 2 balls".into());
                    }
                }
                CheckSpec::Comparison { center, radii, beta, .. } => {
                    if radii.is_empty() {
                        return err(&format!("{path}.radii"), "empty".into());
                    }
                    for (k, &r) in radii.iter().enumerate() {
                        if !ball_ok(center, r) {
                            return err(&format!("{path}.radii[{k}]"), format!("ball of radius {r} exits the domain"));
                        }
                    }
                    if !(0.0 < *beta && *beta < 1.0) {
                        return err(&format!("{path}.beta"), format!("{beta} outside (0,1)"));
                    }
                }
                CheckSpec::Morrey { center, radii, .. } => {
                    for (k, &r) in radii.iter().enumerate() {
                        if !ball_ok(center, r) {
                            return err(&format!("{path}.radii[{k}]"), format!("ball of radius {r} exits the domain"));
                        }
                    }
                    if self.energy.p > 2.0 {
                        return err(&path, "morrey check needs p <= 2 in dimension 2".into());
                    }
                }
                CheckSpec::Holder { center, scales, .. } => {
                    if scales.len() < 3 {
                        return err(&format!("{path}.scales"), "need at least 3 scales".into());
                    }
                    for (k, &s) in scales.iter().enumerate() {
                        if !ball_ok(center, s) {
                            return err(&format!("{path}.scales[{k}]"), format!("scale {s} exits the domain"));
                        }
                    }
                }
                CheckSpec::Hessian { center, radius, h_list, .. } => {
                    let max_h = h_list.iter().cloned().fold(0.0, f64::max);
                    if h_list.is_empty() {
                        return err(&format!("{path}.h_list"), "empty".into());
                    }
                    if !ball_ok(center, radius + max_h) {
                        return err(&format!("{path}.radius"), "ball plus step exits the domain".into());
                    }
                }
                CheckSpec::HoleFilling { centers, radii, .. } => {
                    for (ci, c) in centers.iter().enumerate() {
                        for (k, &r) in radii.iter().enumerate() {
                            if !ball_ok(c, r) {
                                return err(
                                    &format!("{path}.centers[{ci}]/radii[{k}]"),
                                    "ball exits the domain".into(),
                                );
                            }
                        }
                    }
                }
                CheckSpec::PicardConsistency { .. } => {
                    if self.energy.p != 2.0 {
                        return err(&path, "picard consistency needs p = 2".into());
                    }
                }
                CheckSpec::ConvexHull { .. } => {}
            }
        }
        Ok(())
    }

    /// Canonical serialization (used for hashing and the config echo).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
