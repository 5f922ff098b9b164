//! Joint design of edge weights and per-agent privacy levels.
//!
//! Given the edges that may be used, pick a weight for each and a privacy
//! level `epsilon_i` for each agent to minimize
//!
//! ```text
//! Tr(L) + vartheta * sum_i epsilon_i^2
//! ```
//!
//! subject to the steady-state error bound staying below `e_R`,
//! `epsilon_i <= epsilon_i^max`, and `lambda_2(L) >= lambda2_min`. Noise
//! scales follow the privacy levels through `sigma_i = kappa(delta_i, epsilon_i) b_i`.

mod eval;
mod model;
mod solver;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::analysis::steady_state;
use crate::error::{Error, Result};
use crate::graph::{spectral_summary, TopologyMask, WeightedGraph};
use crate::privacy::{NoiseModel, PrivacySpec};
use crate::scenario::{check_step_size, NetworkScenario, StabilityRule};

pub use eval::{constraint_values, objective, ConstraintValues};
pub use solver::{solve, solve_from};
pub use sweep::{sweep, SweepAxis};

/// Smallest privacy level the solver will assign.
pub const EPS_FLOOR: f64 = 1e-4;

/// One co-design instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CodesignProblem {
    pub mask: TopologyMask,
    pub e_r: f64,
    pub lambda2_min: f64,
    pub vartheta: f64,
    pub eps_max: Vec<f64>,
    pub deltas: Vec<f64>,
    pub adjacency_bounds: Vec<f64>,
    pub process_sigmas: Vec<f64>,
    pub gamma: f64,
    pub dimension: usize,
}

impl CodesignProblem {
    /// Check domains and lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.mask.n_agents();
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        for (name, len) in [
            ("eps_max", self.eps_max.len()),
            ("deltas", self.deltas.len()),
            ("adjacency_bounds", self.adjacency_bounds.len()),
            ("process_sigmas", self.process_sigmas.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch(format!("{name} has length {len}, expected {n}")));
            }
        }
        if !(self.e_r > 0.0 && self.e_r.is_finite()) {
            return bad(format!("e_R must be positive, got {}", self.e_r));
        }
        if !(self.lambda2_min > 0.0 && self.lambda2_min.is_finite()) {
            return bad(format!("lambda2_min must be positive, got {}", self.lambda2_min));
        }
        if !(self.vartheta > 0.0 && self.vartheta.is_finite()) {
            return bad(format!("vartheta must be positive, got {}", self.vartheta));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.dimension == 0 {
            return bad("dimension must be at least 1".into());
        }
        for i in 0..n {
            if !(self.eps_max[i] > EPS_FLOOR && self.eps_max[i].is_finite()) {
                return bad(format!("eps_max[{i}] = {} must exceed {EPS_FLOOR}", self.eps_max[i]));
            }
            PrivacySpec::new(self.eps_max[i], self.deltas[i], self.adjacency_bounds[i])?;
            if !(self.process_sigmas[i] >= 0.0 && self.process_sigmas[i].is_finite()) {
                return bad(format!("process sigma {i} must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.mask.n_agents()
    }

    pub fn n_edges(&self) -> usize {
        self.mask.n_edges()
    }

    /// Privacy specs at the given privacy levels.
    pub fn privacy_specs(&self, epsilons: &[f64]) -> Result<Vec<PrivacySpec>> {
        epsilons
            .iter()
            .enumerate()
            .map(|(i, &e)| PrivacySpec::new(e, self.deltas[i], self.adjacency_bounds[i]))
            .collect()
    }

    /// The formation-control scenario induced by a design point.
    pub fn scenario(&self, graph: &WeightedGraph, epsilons: &[f64]) -> Result<NetworkScenario> {
        let noise = NoiseModel::from_specs(&self.privacy_specs(epsilons)?, self.process_sigmas.clone())?;
        NetworkScenario::consensus(graph.clone(), self.dimension, self.gamma, noise)
    }
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    /// Projected-gradient stationarity target for the final subproblem.
    pub stat_tol: f64,
    /// Internal constraint tolerance (on the scaled constraints).
    pub constraint_tol: f64,
    /// Feasibility tolerance used for validation and reporting.
    pub tol_feas: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub multistarts: usize,
    /// Edges lighter than this are deleted from the returned design.
    pub prune_threshold: f64,
    /// Required slack in `gamma * d_max < 1`.
    pub stability_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 40,
            max_inner_iterations: 3000,
            stat_tol: 1e-6,
            constraint_tol: 1e-9,
            tol_feas: 1e-6,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e10,
            multistarts: 5,
            prune_threshold: 1e-4,
            stability_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    /// `bound - e_R`.
    pub error_bound_slack: f64,
    /// `lambda2_min - lambda2`.
    pub lambda2_slack: f64,
    /// `epsilon_i - epsilon_i^max`.
    pub eps_slacks: Vec<f64>,
    /// `gamma * d_max - 1`.
    pub stability_slack: f64,
}

/// Result of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodesignSolution {
    /// Designed graph after pruning light edges.
    pub graph: WeightedGraph,
    pub epsilons: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub objective_value: f64,
    pub constraint_residuals: ConstraintResiduals,
    pub lambda2: f64,
    pub error_bound: f64,
    pub converged: bool,
    /// Outer (multiplier) iterations of the selected start.
    pub iterations: usize,
    pub inner_iterations: usize,
    pub stationarity: f64,
    /// Index of the multistart that produced this design.
    pub start_index: usize,
    /// Objective of each feasible outer iterate accepted as incumbent.
    pub incumbent_history: Vec<f64>,
    /// The designed graph's algebraic connectivity eigenvalue is repeated.
    pub degenerate_fiedler: bool,
    /// Edges whose pruning was undone to keep the design feasible.
    pub rolled_back_edges: usize,
}

/// Independent re-check of a design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub feasible: bool,
    pub violations: Vec<String>,
    pub objective_recomputed: f64,
    pub objective_matches: bool,
    pub lambda2: f64,
    pub error_bound: f64,
    pub e_ss_exact: Option<f64>,
    pub constraints: ConstraintValues,
}

/// Recompute every constraint of `solution` from scratch, including an exact
/// Lyapunov solve for the steady-state error.
pub fn validate_solution(problem: &CodesignProblem, solution: &CodesignSolution, tol_feas: f64) -> ValidationReport {
    let mut violations = Vec::new();
    let n = problem.n_agents();
    let weights = solution.graph.mask_weights();

    if solution.graph.mask() != &problem.mask {
        violations.push("designed graph uses a different mask".into());
    }
    if solution.epsilons.len() != n {
        violations.push(format!("{} privacy levels for {n} agents", solution.epsilons.len()));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        violations.push("negative or non-finite edge weight".into());
    }
    if solution.epsilons.iter().any(|&e| !(e > 0.0)) {
        violations.push("non-positive privacy level".into());
    }

    let constraints = constraint_values(problem, &weights, &solution.epsilons);
    if constraints.g_err > tol_feas {
        violations.push(format!("error bound exceeds e_R by {:e}", constraints.g_err));
    }
    if constraints.g_lambda > tol_feas {
        violations.push(format!("lambda2 below minimum by {:e}", constraints.g_lambda));
    }
    for (i, g) in constraints.g_eps.iter().enumerate() {
        if *g > tol_feas {
            violations.push(format!("epsilon[{i}] exceeds its maximum by {g:e}"));
        }
    }
    if check_step_size(&solution.graph, problem.gamma, StabilityRule::DegreeBound).is_err() {
        violations.push("step size violates gamma * d_max < 1".into());
    }

    let lambda2 = spectral_summary(&solution.graph).map(|s| s.lambda2).unwrap_or(f64::NAN);
    let objective_recomputed = objective(&weights, &solution.epsilons, problem.vartheta);
    let objective_matches =
        (objective_recomputed - solution.objective_value).abs() <= 1e-9 * objective_recomputed.abs().max(1.0);
    if !objective_matches {
        violations.push("reported objective does not match the design".into());
    }

    let e_ss_exact = problem
        .scenario(&solution.graph, &solution.epsilons)
        .and_then(|sc| steady_state(&sc))
        .map(|r| r.e_ss_exact)
        .ok();
    match e_ss_exact {
        Some(e) if e > problem.e_r + tol_feas => {
            violations.push(format!("exact steady-state error {e} exceeds e_R = {}", problem.e_r))
        }
        None => violations.push("exact steady-state error could not be computed".into()),
        _ => {}
    }

    ValidationReport {
        feasible: violations.is_empty(),
        violations,
        objective_recomputed,
        objective_matches,
        lambda2,
        error_bound: constraints.bound,
        e_ss_exact,
        constraints,
    }
}
