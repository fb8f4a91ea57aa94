//! Scenario configuration: built-in benchmark scenarios with their
//! defaults, a TOML config file, and flag overrides (flags win).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use sls_regret::evaluation::NoiseKind;
use sls_regret::ltv::{
    build_cost, build_quadrotor_system, build_synthetic_system, lift, uniform_box_bounds,
    CostOperator, LiftedSystem, LtvSystem, SafetySpec,
};
use sls_regret::NoiseBounds;

use crate::{CliError, Result};

/// The benchmark scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    SyntheticStable,
    SyntheticUnstable,
    Quadrotor,
    /// Synthetic dynamics with every numeric choice supplied explicitly.
    Custom,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scenario::SyntheticStable => "synthetic-stable",
            Scenario::SyntheticUnstable => "synthetic-unstable",
            Scenario::Quadrotor => "quadrotor",
            Scenario::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic-stable" => Ok(Scenario::SyntheticStable),
            "synthetic-unstable" => Ok(Scenario::SyntheticUnstable),
            "quadrotor" => Ok(Scenario::Quadrotor),
            "custom" => Ok(Scenario::Custom),
            other => Err(CliError::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Synthesized controllers plus the clairvoyant benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ControllerKind {
    Regret,
    H2,
    Hinf,
    Clairvoyant,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Regret,
        ControllerKind::H2,
        ControllerKind::Hinf,
        ControllerKind::Clairvoyant,
    ];
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ControllerKind::Regret => "regret",
            ControllerKind::H2 => "h2",
            ControllerKind::Hinf => "hinf",
            ControllerKind::Clairvoyant => "clairvoyant",
        };
        f.write_str(s)
    }
}

impl FromStr for ControllerKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regret" => Ok(ControllerKind::Regret),
            "h2" => Ok(ControllerKind::H2),
            "hinf" | "h-inf" | "h_inf" => Ok(ControllerKind::Hinf),
            "clairvoyant" => Ok(ControllerKind::Clairvoyant),
            other => Err(CliError::Config(format!("unknown controller `{other}`"))),
        }
    }
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub rho: f64,
    pub horizons: Vec<usize>,
    pub trials: usize,
    pub noise: Vec<NoiseKind>,
    pub controllers: Vec<ControllerKind>,
    pub base_seed: u64,
    /// Per-step safety bounds on the state coordinates.
    pub x_bound: Vec<f64>,
    /// Per-step safety bounds on the input coordinates.
    pub u_bound: Vec<f64>,
    /// Half-width of the process-noise box (uniform per coordinate).
    pub w_bound: f64,
    /// Half-width of the measurement-noise box.
    pub e_bound: f64,
    pub out_dir: PathBuf,
    pub tol: f64,
}

impl ScenarioConfig {
    /// Defaults for a named scenario at desk-scale horizons.
    pub fn defaults(scenario: Scenario) -> Self {
        match scenario {
            Scenario::SyntheticStable => Self {
                scenario,
                rho: 0.85,
                horizons: (2..=15).collect(),
                trials: 100,
                noise: NoiseKind::ALL.to_vec(),
                controllers: ControllerKind::ALL.to_vec(),
                base_seed: 1,
                x_bound: vec![5.0; 3],
                u_bound: vec![5.0; 2],
                w_bound: 1.0,
                e_bound: 1.0,
                out_dir: PathBuf::from("out"),
                tol: 1e-8,
            },
            Scenario::SyntheticUnstable => Self {
                scenario,
                rho: 1.05,
                x_bound: vec![30.0; 3],
                u_bound: vec![30.0; 2],
                ..Self::defaults(Scenario::SyntheticStable)
            },
            Scenario::Quadrotor => Self {
                scenario,
                rho: f64::NAN,
                horizons: (2..=12).collect(),
                trials: 100,
                noise: NoiseKind::ALL.to_vec(),
                controllers: ControllerKind::ALL.to_vec(),
                base_seed: 1,
                x_bound: vec![5.0; 6],
                u_bound: vec![std::f64::consts::PI, std::f64::consts::PI, 20.0],
                w_bound: 0.1,
                e_bound: 0.1,
                out_dir: PathBuf::from("out"),
                tol: 1e-8,
            },
            Scenario::Custom => Self {
                scenario,
                rho: f64::NAN,
                horizons: Vec::new(),
                trials: 0,
                noise: Vec::new(),
                controllers: ControllerKind::ALL.to_vec(),
                base_seed: 0,
                x_bound: Vec::new(),
                u_bound: Vec::new(),
                w_bound: f64::NAN,
                e_bound: f64::NAN,
                out_dir: PathBuf::from("out"),
                tol: 1e-8,
            },
        }
    }

    /// Full-scale horizon caps (behind a flag; sweeps take much longer).
    pub fn full_scale(&mut self) {
        let max = match self.scenario {
            Scenario::Quadrotor => 25,
            _ => 30,
        };
        let min = self.horizons.iter().copied().min().unwrap_or(2);
        self.horizons = (min..=max).collect();
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(CliError::Config("no horizons configured".into()));
        }
        if self.horizons.iter().any(|&t| t < 2) {
            return Err(CliError::Config("horizons must be at least 2".into()));
        }
        if self.trials < 1 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.noise.is_empty() {
            return Err(CliError::Config("no noise kinds configured".into()));
        }
        if self.controllers.is_empty() {
            return Err(CliError::Config("no controllers configured".into()));
        }
        if self.scenario != Scenario::Quadrotor && !self.rho.is_finite() {
            return Err(CliError::Config("rho must be finite".into()));
        }
        if !(self.w_bound > 0.0 && self.e_bound > 0.0) {
            return Err(CliError::Config("noise bounds must be positive".into()));
        }
        if self
            .x_bound
            .iter()
            .chain(self.u_bound.iter())
            .any(|&v| v <= 0.0)
        {
            return Err(CliError::Config("safety bounds must be positive".into()));
        }
        Ok(())
    }

    /// Instantiates the plant for one horizon.
    pub fn system(&self, horizon: usize) -> Result<LtvSystem> {
        let sys = match self.scenario {
            Scenario::Quadrotor => build_quadrotor_system(horizon)?,
            _ => build_synthetic_system(self.rho, horizon)?,
        };
        Ok(sys)
    }

    /// Builds the full problem data for one horizon.
    pub fn problem(&self, horizon: usize) -> Result<ProblemData> {
        let system = self.system(horizon)?;
        let lifted = lift(&system);
        let dims = lifted.dims();
        if self.x_bound.len() != dims.state || self.u_bound.len() != dims.input {
            return Err(CliError::Config(format!(
                "safety bounds must have {} state / {} input entries, got {} / {}",
                dims.state,
                dims.input,
                self.x_bound.len(),
                self.u_bound.len()
            )));
        }
        let cost = build_cost(
            &DMatrix::identity(dims.state, dims.state),
            &DMatrix::identity(dims.input, dims.input),
            dims,
        )?;
        let safety = SafetySpec::state_input_box(
            &DVector::from_row_slice(&self.x_bound),
            &DVector::from_row_slice(&self.u_bound),
            dims,
        )?;
        let bounds = uniform_box_bounds(self.w_bound, self.e_bound, dims)?;
        Ok(ProblemData {
            system,
            lifted,
            cost,
            safety,
            bounds,
        })
    }
}

/// Everything needed to synthesize and evaluate at one horizon.
pub struct ProblemData {
    pub system: LtvSystem,
    pub lifted: LiftedSystem,
    pub cost: CostOperator,
    pub safety: SafetySpec,
    pub bounds: NoiseBounds,
}

/// The TOML config file shape. Every field is optional; omitted fields
/// keep the scenario defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenario: Option<ScenarioSection>,
    sweep: Option<SweepSection>,
    bounds: Option<BoundsSection>,
    output: Option<OutputSection>,
    solver: Option<SolverSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    name: Option<String>,
    rho: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    horizon_min: Option<usize>,
    horizon_max: Option<usize>,
    trials: Option<usize>,
    noise: Option<Vec<String>>,
    controllers: Option<Vec<String>>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    state: Option<toml::Value>,
    input: Option<toml::Value>,
    process_noise: Option<f64>,
    measurement_noise: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    tol: Option<f64>,
}

fn bound_list(v: &toml::Value, what: &str) -> Result<Vec<f64>> {
    match v {
        toml::Value::Float(f) => Ok(vec![*f]),
        toml::Value::Integer(i) => Ok(vec![*i as f64]),
        toml::Value::Array(items) => items
            .iter()
            .map(|it| match it {
                toml::Value::Float(f) => Ok(*f),
                toml::Value::Integer(i) => Ok(*i as f64),
                _ => Err(CliError::Config(format!("{what} must be numeric"))),
            })
            .collect(),
        _ => Err(CliError::Config(format!(
            "{what} must be a number or array of numbers"
        ))),
    }
}

/// Loads a TOML config over scenario defaults. A scalar safety bound is
/// broadcast over the per-step coordinates.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let file: FileConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;

    let scenario = match file.scenario.as_ref().and_then(|s| s.name.as_deref()) {
        Some(name) => name.parse::<Scenario>()?,
        None => Scenario::SyntheticStable,
    };
    let mut cfg = ScenarioConfig::defaults(scenario);

    if let Some(s) = &file.scenario {
        if let Some(rho) = s.rho {
            cfg.rho = rho;
        }
    }
    if let Some(s) = &file.sweep {
        let min = s
            .horizon_min
            .unwrap_or_else(|| cfg.horizons.iter().copied().min().unwrap_or(2));
        let max = s
            .horizon_max
            .unwrap_or_else(|| cfg.horizons.iter().copied().max().unwrap_or(2));
        if min > max {
            return Err(CliError::Config(format!(
                "horizon_min {min} exceeds horizon_max {max}"
            )));
        }
        cfg.horizons = (min..=max).collect();
        if let Some(t) = s.trials {
            cfg.trials = t;
        }
        if let Some(n) = &s.noise {
            cfg.noise = parse_noise_list(n)?;
        }
        if let Some(c) = &s.controllers {
            cfg.controllers = parse_controller_list(c)?;
        }
        if let Some(seed) = s.seed {
            cfg.base_seed = seed;
        }
    }
    if let Some(b) = &file.bounds {
        if let Some(v) = &b.state {
            cfg.x_bound = broadcast(bound_list(v, "bounds.state")?, cfg.x_bound.len());
        }
        if let Some(v) = &b.input {
            cfg.u_bound = broadcast(bound_list(v, "bounds.input")?, cfg.u_bound.len());
        }
        if let Some(w) = b.process_noise {
            cfg.w_bound = w;
        }
        if let Some(e) = b.measurement_noise {
            cfg.e_bound = e;
        }
    }
    if let Some(o) = &file.output {
        if let Some(dir) = &o.dir {
            cfg.out_dir = PathBuf::from(dir);
        }
    }
    if let Some(s) = &file.solver {
        if let Some(tol) = s.tol {
            cfg.tol = tol;
        }
    }
    Ok(cfg)
}

fn broadcast(values: Vec<f64>, want: usize) -> Vec<f64> {
    if values.len() == 1 && want > 1 {
        vec![values[0]; want]
    } else {
        values
    }
}

pub fn parse_noise_list(items: &[String]) -> Result<Vec<NoiseKind>> {
    let mut out = Vec::new();
    for item in items {
        if item == "all" {
            out.extend(NoiseKind::ALL);
        } else {
            out.push(
                item.parse::<NoiseKind>()
                    .map_err(|e| CliError::Config(e.to_string()))?,
            );
        }
    }
    out.dedup();
    Ok(out)
}

pub fn parse_controller_list(items: &[String]) -> Result<Vec<ControllerKind>> {
    let mut out = Vec::new();
    for item in items {
        if item == "all" {
            out.extend(ControllerKind::ALL);
        } else {
            out.push(item.parse::<ControllerKind>()?);
        }
    }
    out.dedup();
    Ok(out)
}
