//! Scenario files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowKind};
use crate::manifold::{build_target, ModelSpec, TargetGeometry};
use crate::variational::{EigenSolver, Functional, DEFAULT_STEPS};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    /// Resolution ladder for `sweep`.
    #[serde(default)]
    pub resolutions: Vec<usize>,
    pub source: ModelSpec,
    pub target: TargetConfig,
    #[serde(default)]
    pub map: MapConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub name: String,
    pub curvature: Option<f64>,
    pub r_max: Option<f64>,
}

impl TargetConfig {
    pub fn build(&self) -> Result<TargetGeometry> {
        let mut t = build_target(&self.name, self.curvature)?;
        if let Some(r) = self.r_max {
            if !(r > 0.0) {
                return Err(Error::Config(format!("target.r_max must be positive, got {r}")));
            }
            t.r_max = r;
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapConfig {
    #[default]
    Identity,
    Constant {
        value: [f64; 2],
    },
    /// `u = A x + offset`, `A` row-major 2×q with integer entries.
    Linear {
        matrix: Vec<i64>,
        #[serde(default)]
        offset: [f64; 2],
    },
    /// `A x + offset` plus a seeded band-limited perturbation.
    SeededRandom {
        bandlimit: usize,
        amplitude: f64,
        #[serde(default)]
        matrix: Option<Vec<i64>>,
        #[serde(default)]
        offset: [f64; 2],
    },
    /// Field dump written by `flow` (columns `node, x.., u0, u1`).
    File {
        path: PathBuf,
        #[serde(default)]
        winding: Option<Vec<i64>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Validate,
    Identities,
    Variation,
    Spectrum,
    Flow,
    HessianBreakdown,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationOrder {
    #[default]
    First,
    Second,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    Random,
    Tension,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Required by `sweep`; the other verbs imply it.
    pub kind: Option<TaskKind>,
    pub order: VariationOrder,
    pub functional: Functional,
    pub steps: Vec<f64>,
    /// Use `φ + tV + sW` for second variations (else `W = V`).
    pub two_parameter: bool,
    /// Band limit and amplitude of the seeded variation fields.
    pub bandlimit: usize,
    pub amplitude: f64,
    pub eigenvalues: usize,
    pub solver: EigenSolver,
    pub assert_stable: bool,
    pub flow: FlowKind,
    pub assert_converged: bool,
    pub direction: Direction,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            kind: None,
            order: VariationOrder::First,
            functional: Functional::Energy,
            steps: DEFAULT_STEPS.to_vec(),
            two_parameter: true,
            bandlimit: 2,
            amplitude: 0.1,
            eigenvalues: 20,
            solver: EigenSolver::Dense,
            assert_stable: false,
            flow: FlowKind::Harmonic,
            assert_converged: false,
            direction: Direction::Random,
        }
    }
}

/// Asserted tolerances. Discretization residuals without a tolerance are
/// reported, and checked for convergence order by `sweep`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Identities that hold to rounding.
    pub exact: f64,
    pub variation_energy: f64,
    pub variation_bienergy: f64,
    pub thess: Option<f64>,
    pub conservation: Option<f64>,
    pub divergence: Option<f64>,
    pub weitzenbock: Option<f64>,
    pub bochner: Option<f64>,
    pub specialization: Option<f64>,
    /// `‖τ_b‖_∞` below which a map counts as harmonic.
    pub harmonic: f64,
    pub soft_validation: f64,
    pub min_order: f64,
    pub min_order_bienergy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            exact: 1e-10,
            variation_energy: 1e-5,
            variation_bienergy: 1e-4,
            thess: None,
            conservation: None,
            divergence: None,
            weitzenbock: None,
            bochner: None,
            specialization: None,
            harmonic: 1e-8,
            soft_validation: crate::manifold::DEFAULT_SOFT_TOL,
            min_order: 1.9,
            min_order_bienergy: 1.8,
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn check(&self) -> Result<()> {
        if !self.task.steps.iter().all(|t| *t > 0.0) {
            return Err(Error::Config("task.steps must be positive".into()));
        }
        if self.task.steps.len() < 2 {
            return Err(Error::Config(format!("task.steps needs at least 2 steps, got {}", self.task.steps.len())));
        }
        if self.task.eigenvalues == 0 {
            return Err(Error::Config("task.eigenvalues must be at least 1".into()));
        }
        self.flow
            .validate()
            .map_err(|e| Error::Config(format!("flow: {e}")))?;
        Ok(())
    }
}
