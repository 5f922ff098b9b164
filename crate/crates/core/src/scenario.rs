//! A complete description of one private formation-control network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::FormationSpec;
use crate::graph::{spectral_summary, WeightedGraph};
use crate::privacy::NoiseModel;

/// Which step-size condition a scenario must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityRule {
    /// `gamma * d_max < 1`: `I - gamma L` is nonnegative and doubly stochastic.
    #[default]
    DegreeBound,
    /// `gamma * lambda_max < 2`: the error dynamics are merely contractive.
    Spectral,
}

/// Check the step size against `rule`.
pub fn check_step_size(g: &WeightedGraph, gamma: f64, rule: StabilityRule) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidScenario(format!("step size must be positive, got {gamma}")));
    }
    let gamma_dmax = gamma * g.max_degree();
    let stable = match rule {
        StabilityRule::DegreeBound => gamma_dmax < 1.0,
        StabilityRule::Spectral => gamma * spectral_summary(g)?.lambda_max < 2.0,
    };
    if stable {
        Ok(())
    } else {
        let gamma_lmax = gamma * spectral_summary(g)?.lambda_max;
        Err(Error::UnstableStepSize {
            gamma_dmax,
            gamma_lmax,
        })
    }
}

#[derive(Debug, Clone)]
pub struct NetworkScenario {
    graph: WeightedGraph,
    formation: FormationSpec,
    gamma: f64,
    noise: NoiseModel,
    stability: StabilityRule,
}

impl NetworkScenario {
    pub fn new(
        graph: WeightedGraph,
        formation: FormationSpec,
        gamma: f64,
        noise: NoiseModel,
    ) -> Result<Self> {
        Self::with_stability_rule(graph, formation, gamma, noise, StabilityRule::DegreeBound)
    }

    pub fn with_stability_rule(
        graph: WeightedGraph,
        formation: FormationSpec,
        gamma: f64,
        noise: NoiseModel,
        stability: StabilityRule,
    ) -> Result<Self> {
        let n = graph.n_agents();
        if formation.n_agents() != n || noise.n_agents() != n {
            return Err(Error::DimensionMismatch(format!(
                "graph has {n} agents, formation {}, noise model {}",
                formation.n_agents(),
                noise.n_agents()
            )));
        }
        formation.check_covers(&graph)?;
        check_step_size(&graph, gamma, stability)?;
        Ok(Self {
            graph,
            formation,
            gamma,
            noise,
            stability,
        })
    }

    /// Scenario with the formation centred at the origin (all offsets zero).
    pub fn consensus(graph: WeightedGraph, dimension: usize, gamma: f64, noise: NoiseModel) -> Result<Self> {
        let formation = FormationSpec::from_reference_points(
            vec![vec![0.0; dimension]; graph.n_agents()],
            graph.mask(),
        )?;
        Self::new(graph, formation, gamma, noise)
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn formation(&self) -> &FormationSpec {
        &self.formation
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn dimension(&self) -> usize {
        self.formation.dimension()
    }

    pub fn n_agents(&self) -> usize {
        self.graph.n_agents()
    }

    pub fn stability_rule(&self) -> StabilityRule {
        self.stability
    }

    /// Relabel agents: agent `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let graph = self.graph.permuted(perm)?;
        let formation = self.formation.permuted(perm)?;
        Self::with_stability_rule(
            graph,
            formation,
            self.gamma,
            self.noise.permuted(perm),
            self.stability,
        )
    }
}
