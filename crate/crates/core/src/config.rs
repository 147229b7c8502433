//! JSON experiment descriptions.
//!
//! ```json
//! {
//!   "domain": { "dim": 1, "extents": [0.0, 1.0], "resolution": 64 },
//!   "b": { "constant": 1.0 },
//!   "coefficient": { "breakpoints": [0.2], "pieces": [[0.2, -1.0], [-0.2, 1.0]],
//!                    "working_range": [-10.0, 10.0] },
//!   "nu": 0.01,
//!   "bounds": { "alpha": { "constant": 0.0 }, "beta": { "constant": 4.0 } },
//!   "target": { "constant": 0.5 },
//!   "control": { "constant": 0.0 },
//!   "state_solver": { "tol": 1e-13 },
//!   "optimizer": { "tol": 1e-11 },
//!   "soc": { "directions": 20, "seed": 7 }
//! }
//! ```
//!
//! Fields are given as `{"constant": c}`, `{"affine": [c0, c1, c2]}`
//! (`c0 + c1 x + c2 y`), `{"sine_product": A}` (`A Π_m sin(π ξ_m)` in
//! normalized coordinates) or `{"interpolated_csv": "path"}`. The target may
//! also be the string `"state_of_zero"`. Relative paths are resolved against
//! the directory of the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{Extents, GridFunction, Mesh};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pc2::{Pc2Coefficient, Pc2CoefficientDef};
use crate::problem::{BoxBounds, ProblemSpec, TrackingObjective};
use crate::reduced::OptimizeConfig;
use crate::second_order::SocConfig;
use crate::solvers::{solve_state, StateSolveConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    pub extents: Extents,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant(f64),
    Affine(Vec<f64>),
    SineProduct(f64),
    InterpolatedCsv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Named(TargetName),
    Field(FieldSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetName {
    StateOfZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub alpha: FieldSpec,
    pub beta: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub b: FieldSpec,
    pub coefficient: Pc2CoefficientDef,
    pub nu: f64,
    pub bounds: BoundsConfig,
    pub target: TargetSpec,
    /// Control evaluated by `solve`, `check-foc`, `taylor-check` and
    /// `gradient-check`, and the starting point of `optimize`.
    #[serde(default)]
    pub control: Option<FieldSpec>,
    #[serde(default)]
    pub state_solver: StateSolveConfig,
    #[serde(default)]
    pub optimizer: OptimizeConfig,
    #[serde(default)]
    pub soc: SocConfig,
    #[serde(default)]
    pub execution: Option<Execution>,
}

/// Everything needed to run an experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ProblemSpec,
    pub state: StateSolveConfig,
    pub optimizer: OptimizeConfig,
    pub soc: SocConfig,
    pub control: GridFunction,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::InvalidConfig(format!("at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates every section and builds the problem. `base_dir` resolves
    /// relative CSV paths; `resolution` overrides `domain.resolution`.
    pub fn build(&self, base_dir: &Path, resolution: Option<usize>) -> Result<Experiment> {
        fn key(k: &str) -> impl Fn(Error) -> Error + '_ { move |e| Error::InvalidConfig(format!("{k}: {e}")) }
        if self.domain.dim != self.domain.extents.dim() {
            return Err(Error::InvalidConfig(format!(
                "domain.dim is {} but domain.extents describe a {}D domain",
                self.domain.dim,
                self.domain.extents.dim()
            )));
        }
        self.state_solver.validate()?;
        self.optimizer.validate()?;
        self.soc.validate()?;
        let mesh = Arc::new(
            Mesh::new(self.domain.extents, resolution.unwrap_or(self.domain.resolution))
                .map_err(key("domain"))?,
        );
        let field = |spec: &FieldSpec, name: &str| build_field(spec, &mesh, base_dir).map_err(key(name));
        let coefficient = Pc2Coefficient::try_from(self.coefficient.clone()).map_err(key("coefficient"))?;
        let b = field(&self.b, "b")?;
        let bounds = BoxBounds::new(field(&self.bounds.alpha, "bounds.alpha")?, field(&self.bounds.beta, "bounds.beta")?)
            .map_err(key("bounds"))?;
        let control = match &self.control {
            Some(f) => field(f, "control")?,
            None => GridFunction::zeros(&mesh),
        };
        let execution = self.execution.unwrap_or_default();
        let target = match &self.target {
            TargetSpec::Field(f) => field(f, "target")?,
            TargetSpec::Named(TargetName::StateOfZero) => GridFunction::zeros(&mesh),
        };
        let mut spec = ProblemSpec::new(b.clone(), coefficient.clone(), self.nu, bounds.clone(), TrackingObjective::new(target))
            .map_err(key("problem"))?
            .with_execution(execution);
        if let TargetSpec::Named(TargetName::StateOfZero) = self.target {
            let (y0, report) = solve_state(&spec, &GridFunction::zeros(&mesh), &self.state_solver, None)?;
            if !report.converged {
                return Err(Error::StateNotConverged("state of the zero control".into()));
            }
            spec = ProblemSpec::new(b, coefficient, self.nu, bounds, TrackingObjective::new(y0))?
                .with_execution(execution);
        }
        Ok(Experiment {
            spec,
            state: self.state_solver,
            optimizer: self.optimizer,
            soc: self.soc.clone(),
            control,
        })
    }
}

fn build_field(spec: &FieldSpec, mesh: &Arc<Mesh>, base_dir: &Path) -> Result<GridFunction> {
    match spec {
        FieldSpec::Constant(c) => Ok(GridFunction::constant(mesh, *c)),
        FieldSpec::Affine(c) => {
            if c.is_empty() || c.len() > mesh.dim() + 1 {
                return Err(Error::InvalidConfig(format!(
                    "affine field needs 1..={} coefficients, got {}",
                    mesh.dim() + 1,
                    c.len()
                )));
            }
            let coeff = |k: usize| c.get(k).copied().unwrap_or(0.0);
            Ok(GridFunction::interpolate(mesh, |x, y| coeff(0) + coeff(1) * x + coeff(2) * y))
        }
        FieldSpec::SineProduct(amp) => {
            let (ix, iy) = match mesh.extents() {
                Extents::Interval(ix) => (ix, None),
                Extents::Rectangle([ix, iy]) => (ix, Some(iy)),
            };
            let s = |x: f64, [a, b]: [f64; 2]| (std::f64::consts::PI * (x - a) / (b - a)).sin();
            Ok(GridFunction::interpolate(mesh, |x, y| amp * s(x, ix) * iy.map_or(1.0, |iy| s(y, iy))))
        }
        FieldSpec::InterpolatedCsv(path) => {
            let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
            GridFunction::read_csv(mesh, &path)
        }
    }
}
