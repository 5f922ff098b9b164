//! TOML run configuration.
//!
//! Paths inside a config file are resolved relative to the file itself.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use privform_core::codesign::{CodesignProblem, SolverOptions, SweepAxis};
use privform_core::formation::{FormationSpec, SimulationOptions};
use privform_core::io::{read_graph_file, read_to_string};
use privform_core::privacy::{NoiseModel, PrivacySpec};
use privform_core::scenario::{NetworkScenario, StabilityRule};
use privform_core::{Error, Result};

/// A per-agent quantity given either once for everyone or as a list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerAgent {
    pub fn expand(&self, name: &str, n: usize) -> Result<Vec<f64>> {
        match self {
            Self::Uniform(v) => Ok(vec![*v; n]),
            Self::Each(v) if v.len() == n => Ok(v.clone()),
            Self::Each(v) => Err(Error::Parse(format!("{name} lists {} values for {n} agents", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    pub codesign: Option<CodesignConfig>,
    #[serde(default)]
    pub solver: SolverOptions,
    pub sweep: Option<SweepConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: PathBuf,
    /// Weight for graph edges listed without one.
    #[serde(default = "one")]
    pub default_weight: f64,
    pub gamma: f64,
    #[serde(default = "one_usize")]
    pub dimension: usize,
    #[serde(default)]
    pub stability_rule: StabilityRule,
    #[serde(default = "zero_per_agent")]
    pub process_sigmas: PerAgent,
    /// Either `epsilons` (with `deltas` and `adjacency_bounds`) or
    /// `privacy_sigmas`.
    pub epsilons: Option<PerAgent>,
    pub deltas: Option<PerAgent>,
    pub adjacency_bounds: Option<PerAgent>,
    pub privacy_sigmas: Option<PerAgent>,
    /// Formation reference points, one row per agent; zero if absent.
    pub reference_points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub trials: usize,
    pub burn_in: Option<usize>,
    pub initial_spread: f64,
    /// Write the per-step CSV of trial 0.
    pub trajectory: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let d = SimulationOptions::default();
        Self {
            horizon: d.horizon,
            trials: 20,
            burn_in: None,
            initial_spread: d.initial_spread,
            trajectory: true,
        }
    }
}

impl SimulationConfig {
    pub fn options(&self, record: bool) -> SimulationOptions {
        SimulationOptions {
            horizon: self.horizon,
            burn_in: self.burn_in,
            initial_spread: self.initial_spread,
            record_trajectory: record,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodesignConfig {
    pub graph: PathBuf,
    pub e_r: f64,
    pub lambda2_min: f64,
    pub vartheta: f64,
    pub eps_max: PerAgent,
    pub deltas: PerAgent,
    pub adjacency_bounds: PerAgent,
    #[serde(default = "zero_per_agent")]
    pub process_sigmas: PerAgent,
    pub gamma: f64,
    #[serde(default = "one_usize")]
    pub dimension: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default = "yes")]
    pub warm_start: bool,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn zero_per_agent() -> PerAgent {
    PerAgent::Uniform(0.0)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn network_scenario(&self) -> Result<NetworkScenario> {
        let sc = self
            .scenario
            .as_ref()
            .ok_or_else(|| Error::Parse("config has no [scenario] table".into()))?;
        let graph = read_graph_file(&self.resolve(&sc.graph))?.graph(sc.default_weight)?;
        let n = graph.n_agents();
        let process = sc.process_sigmas.expand("process_sigmas", n)?;
        let noise = match (&sc.privacy_sigmas, &sc.epsilons) {
            (Some(sig), None) => NoiseModel::explicit(sig.expand("privacy_sigmas", n)?, process)?,
            (None, Some(eps)) => {
                let eps = eps.expand("epsilons", n)?;
                let missing = |k: &str| Error::Parse(format!("[scenario] with epsilons also needs {k}"));
                let deltas = sc.deltas.as_ref().ok_or_else(|| missing("deltas"))?.expand("deltas", n)?;
                let bounds = sc
                    .adjacency_bounds
                    .as_ref()
                    .ok_or_else(|| missing("adjacency_bounds"))?
                    .expand("adjacency_bounds", n)?;
                let specs = (0..n)
                    .map(|i| PrivacySpec::new(eps[i], deltas[i], bounds[i]))
                    .collect::<Result<Vec<_>>>()?;
                NoiseModel::from_specs(&specs, process)?
            }
            _ => {
                return Err(Error::Parse(
                    "[scenario] needs exactly one of privacy_sigmas or epsilons".into(),
                ))
            }
        };
        let points = match &sc.reference_points {
            Some(p) => p.clone(),
            None => vec![vec![0.0; sc.dimension]; n],
        };
        if points.iter().any(|p| p.len() != sc.dimension) {
            return Err(Error::Parse(format!("reference points must have dimension {}", sc.dimension)));
        }
        let formation = FormationSpec::from_reference_points(points, graph.mask())?;
        NetworkScenario::with_stability_rule(graph, formation, sc.gamma, noise, sc.stability_rule)
    }

    pub fn codesign_problem(&self) -> Result<CodesignProblem> {
        let c = self
            .codesign
            .as_ref()
            .ok_or_else(|| Error::Parse("config has no [codesign] table".into()))?;
        let mask = read_graph_file(&self.resolve(&c.graph))?.mask()?;
        let n = mask.n_agents();
        let p = CodesignProblem {
            mask,
            e_r: c.e_r,
            lambda2_min: c.lambda2_min,
            vartheta: c.vartheta,
            eps_max: c.eps_max.expand("eps_max", n)?,
            deltas: c.deltas.expand("deltas", n)?,
            adjacency_bounds: c.adjacency_bounds.expand("adjacency_bounds", n)?,
            process_sigmas: c.process_sigmas.expand("process_sigmas", n)?,
            gamma: c.gamma,
            dimension: c.dimension,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn sweep_axis(&self) -> Result<(SweepAxis, Vec<f64>, bool)> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Parse("config has no [sweep] table".into()))?;
        if s.values.is_empty() {
            return Err(Error::Parse("[sweep] values is empty".into()));
        }
        Ok((s.parameter.parse()?, s.values.clone(), s.warm_start))
    }
}
