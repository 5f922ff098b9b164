//! Private formation control, run forward in time.
//!
//! Every agent privatizes its own state once per step (Gaussian mechanism)
//! and broadcasts the same privatized value to all neighbours. Agent `i` then
//! updates
//!
//! ```text
//! x_i(k+1) = x_i(k) + gamma * sum_j w_ij (x~_j(k) - x_i(k) - Delta_ij) + n_i(k)
//! ```
//!
//! with `x~_j = x_j + v_j`, `v_j ~ N(0, sigma_j^2 I_d)` and process noise
//! `n_i ~ N(0, s_i^2 I_d)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::default_burn_in;
use crate::error::{Error, Result};
use crate::graph::{spectral_summary, TopologyMask, WeightedGraph, DEGENERACY_TOL};
use crate::privacy::sample_privacy_noise;
use crate::rng::{stream, StreamRng};
use crate::scenario::NetworkScenario;

/// Tolerance for formation feasibility checks.
pub const FORMATION_TOL: f64 = 1e-9;

/// Label used for the initial-condition stream of a trial.
const INIT_STREAM: u64 = u64::MAX;

/// Desired relative offsets and one formation realizing them.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    dimension: usize,
    reference_points: Vec<Vec<f64>>,
    /// Ordered pairs `(i, j)` to `Delta_ij = p_j - p_i`.
    offsets: BTreeMap<(usize, usize), Vec<f64>>,
}

impl FormationSpec {
    /// Validate user-supplied offsets against the reference points. A pair
    /// given in one direction only gets its antisymmetric partner filled in.
    pub fn new(
        reference_points: Vec<Vec<f64>>,
        offsets: impl IntoIterator<Item = ((usize, usize), Vec<f64>)>,
    ) -> Result<Self> {
        let dimension = Self::check_points(&reference_points)?;
        let n = reference_points.len();
        let mut stored: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for ((i, j), delta) in offsets {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidScenario(format!("offset pair ({i}, {j}) is invalid")));
            }
            if delta.len() != dimension {
                return Err(Error::DimensionMismatch(format!(
                    "offset ({i}, {j}) has dimension {}, expected {dimension}",
                    delta.len()
                )));
            }
            for l in 0..dimension {
                let implied = reference_points[j][l] - reference_points[i][l];
                if (implied - delta[l]).abs() > FORMATION_TOL {
                    return Err(Error::InvalidScenario(format!(
                        "offset ({i}, {j}) is inconsistent with the reference points \
                         (coordinate {l}: {} vs p_j - p_i = {implied})",
                        delta[l]
                    )));
                }
            }
            if let Some(reverse) = stored.get(&(j, i)) {
                if reverse.iter().zip(&delta).any(|(a, b)| (a + b).abs() > FORMATION_TOL) {
                    return Err(Error::InvalidScenario(format!(
                        "offsets ({i}, {j}) and ({j}, {i}) are not antisymmetric"
                    )));
                }
            }
            let negated: Vec<f64> = delta.iter().map(|x| -x).collect();
            stored.entry((j, i)).or_insert(negated);
            stored.insert((i, j), delta);
        }
        Ok(Self {
            dimension,
            reference_points,
            offsets: stored,
        })
    }

    /// Offsets `p_j - p_i` for every edge of `mask`.
    pub fn from_reference_points(reference_points: Vec<Vec<f64>>, mask: &TopologyMask) -> Result<Self> {
        Self::check_points(&reference_points)?;
        if reference_points.len() != mask.n_agents() {
            return Err(Error::DimensionMismatch(format!(
                "{} reference points for {} agents",
                reference_points.len(),
                mask.n_agents()
            )));
        }
        let offsets: Vec<_> = mask
            .edges()
            .map(|e| {
                let (i, j) = (e.lo(), e.hi());
                let delta = reference_points[j]
                    .iter()
                    .zip(&reference_points[i])
                    .map(|(a, b)| a - b)
                    .collect();
                ((i, j), delta)
            })
            .collect();
        Self::new(reference_points, offsets)
    }

    fn check_points(points: &[Vec<f64>]) -> Result<usize> {
        let dimension = points.first().map(Vec::len).unwrap_or(0);
        if dimension == 0 {
            return Err(Error::InvalidScenario("formation dimension must be at least 1".into()));
        }
        if let Some(bad) = points.iter().position(|p| p.len() != dimension) {
            return Err(Error::DimensionMismatch(format!(
                "reference point {bad} has dimension {}, expected {dimension}",
                points[bad].len()
            )));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidScenario("reference points must be finite".into()));
        }
        Ok(dimension)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_agents(&self) -> usize {
        self.reference_points.len()
    }

    pub fn reference_points(&self) -> &[Vec<f64>] {
        &self.reference_points
    }

    pub fn offset(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.offsets.get(&(i, j)).map(Vec::as_slice)
    }

    pub fn offsets(&self) -> impl Iterator<Item = ((usize, usize), &[f64])> {
        self.offsets.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Every weighted edge needs an offset.
    pub fn check_covers(&self, g: &WeightedGraph) -> Result<()> {
        for (e, _) in g.edges() {
            if !self.offsets.contains_key(&(e.lo(), e.hi())) {
                return Err(Error::InvalidScenario(format!(
                    "no formation offset for edge ({}, {})",
                    e.lo(),
                    e.hi()
                )));
            }
        }
        Ok(())
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut points = self.reference_points.clone();
        for (i, p) in self.reference_points.iter().enumerate() {
            points[perm[i]] = p.clone();
        }
        let offsets: Vec<_> = self
            .offsets
            .iter()
            .map(|(&(i, j), v)| ((perm[i], perm[j]), v.clone()))
            .collect();
        Self::new(points, offsets)
    }

    /// Stack the reference points as an `N x d` matrix.
    pub fn reference_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_agents(), self.dimension, |i, l| self.reference_points[i][l])
    }
}

/// Network state at one time step. Row `i` is agent `i`; column `l` is
/// coordinate `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub time_index: usize,
    pub states: DMatrix<f64>,
    pub shifted_states: DMatrix<f64>,
}

impl NetworkState {
    pub fn new(time_index: usize, states: DMatrix<f64>, formation: &FormationSpec) -> Result<Self> {
        let p = formation.reference_matrix();
        if states.shape() != p.shape() {
            return Err(Error::DimensionMismatch(format!(
                "state matrix is {:?}, formation expects {:?}",
                states.shape(),
                p.shape()
            )));
        }
        let shifted_states = &states - p;
        Ok(Self {
            time_index,
            states,
            shifted_states,
        })
    }

    /// State from the shifted coordinates `x - p`.
    pub fn from_shifted(time_index: usize, shifted: DMatrix<f64>, formation: &FormationSpec) -> Result<Self> {
        let p = formation.reference_matrix();
        if shifted.shape() != p.shape() {
            return Err(Error::DimensionMismatch(format!(
                "state matrix is {:?}, formation expects {:?}",
                shifted.shape(),
                p.shape()
            )));
        }
        Ok(Self {
            time_index,
            states: &shifted + p,
            shifted_states: shifted,
        })
    }
}

/// Per-dimension formation error: column `l` is `(I - 11^T/N) xbar_[l]`.
pub fn network_error(state: &NetworkState) -> DMatrix<f64> {
    let xbar = &state.shifted_states;
    let n = xbar.nrows() as f64;
    let mut e = xbar.clone();
    for mut col in e.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    e
}

/// Mean squared formation error `(1/N) sum_{i,l} e_{[l],i}^2` of one state.
fn instantaneous_mse(e: &DMatrix<f64>) -> f64 {
    e.norm_squared() / e.nrows() as f64
}

/// One synchronous step of the private protocol. `agent_rngs[j]` supplies
/// agent `j`'s privacy draw followed by its process-noise draw.
pub fn step_private(
    state: &NetworkState,
    scenario: &NetworkScenario,
    agent_rngs: &mut [StreamRng],
) -> Result<NetworkState> {
    let n = scenario.n_agents();
    let d = scenario.dimension();
    if agent_rngs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} random streams for {n} agents",
            agent_rngs.len()
        )));
    }
    let noise = scenario.noise();
    let mut shared = state.states.clone();
    let mut process = DMatrix::zeros(n, d);
    for (j, rng) in agent_rngs.iter_mut().enumerate() {
        let v = sample_privacy_noise(noise.privacy_sigmas()[j], d, rng);
        let w = sample_privacy_noise(noise.process_sigmas()[j], d, rng);
        for l in 0..d {
            shared[(j, l)] += v[l];
            process[(j, l)] = w[l];
        }
    }
    Ok(apply_update(state, scenario, &shared, &process))
}

fn apply_update(
    state: &NetworkState,
    scenario: &NetworkScenario,
    shared: &DMatrix<f64>,
    process: &DMatrix<f64>,
) -> NetworkState {
    let gamma = scenario.gamma();
    let formation = scenario.formation();
    let d = scenario.dimension();
    let x = &state.states;
    let mut next = x.clone();
    for (i, nbrs) in scenario.graph().neighbors().iter().enumerate() {
        for &(j, w) in nbrs {
            let delta = formation.offset(i, j).expect("offsets cover every edge");
            for l in 0..d {
                next[(i, l)] += gamma * w * (shared[(j, l)] - x[(i, l)] - delta[l]);
            }
        }
    }
    next += process;
    let p = formation.reference_matrix();
    NetworkState {
        time_index: state.time_index + 1,
        shifted_states: &next - p,
        states: next,
    }
}

/// Simulation settings. `burn_in = None` uses [`default_burn_in`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOptions {
    pub horizon: usize,
    pub burn_in: Option<usize>,
    /// Initial states are `p_i + U(-spread, spread)^d`.
    pub initial_spread: f64,
    /// Keep every state and error matrix (needed for trajectory export).
    pub record_trajectory: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            burn_in: None,
            initial_spread: 1.0,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub horizon: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub trial: u64,
    /// States for k = 0..=horizon when recorded.
    pub states: Vec<NetworkState>,
    /// Error matrices `e(k)` (columns are dimensions) when recorded.
    pub error_trajectory: Vec<DMatrix<f64>>,
    /// Mean of `(1/N) sum_{i,l} e_{[l],i}(k)^2` over `burn_in <= k <= horizon`.
    pub empirical_mse_tail: f64,
}

fn require_connected(scenario: &NetworkScenario) -> Result<()> {
    let spectrum = spectral_summary(scenario.graph())?;
    let scale = spectrum.lambda_max.abs().max(1.0);
    if spectrum.lambda2 <= DEGENERACY_TOL * scale {
        return Err(Error::Disconnected {
            lambda2: spectrum.lambda2,
        });
    }
    Ok(())
}

/// Per-agent noise streams for a trial.
pub fn agent_streams(seed: u64, trial: u64, n_agents: usize) -> Vec<StreamRng> {
    (0..n_agents as u64).map(|a| stream(seed, &[trial, a])).collect()
}

/// Initial state `p + U(-spread, spread)` drawn from the trial's init stream.
pub fn initial_state(scenario: &NetworkScenario, spread: f64, seed: u64, trial: u64) -> Result<NetworkState> {
    let mut rng = stream(seed, &[trial, INIT_STREAM]);
    let n = scenario.n_agents();
    let d = scenario.dimension();
    let perturbation = DMatrix::from_fn(n, d, |_, _| {
        if spread > 0.0 {
            rng.random_range(-spread..spread)
        } else {
            0.0
        }
    });
    NetworkState::from_shifted(0, perturbation, scenario.formation())
}

/// Run one trial with explicit initial state and agent streams.
pub fn simulate_from(
    scenario: &NetworkScenario,
    options: &SimulationOptions,
    initial: NetworkState,
    mut agent_rngs: Vec<StreamRng>,
    seed: u64,
    trial: u64,
) -> Result<SimulationResult> {
    require_connected(scenario)?;
    let burn_in = match options.burn_in {
        Some(b) => b,
        None => default_burn_in(scenario)?,
    };
    if options.horizon <= burn_in {
        return Err(Error::InvalidScenario(format!(
            "horizon {} must exceed burn-in {burn_in}",
            options.horizon
        )));
    }

    let mut states = Vec::new();
    let mut errors = Vec::new();
    let mut tail_sum = 0.0;
    let mut tail_count = 0usize;
    let mut state = initial;
    for k in 0..=options.horizon {
        if k > 0 {
            state = step_private(&state, scenario, &mut agent_rngs)?;
        }
        let e = network_error(&state);
        if k >= burn_in {
            tail_sum += instantaneous_mse(&e);
            tail_count += 1;
        }
        if options.record_trajectory {
            states.push(state.clone());
            errors.push(e);
        }
    }
    Ok(SimulationResult {
        horizon: options.horizon,
        burn_in,
        seed,
        trial,
        states,
        error_trajectory: errors,
        empirical_mse_tail: tail_sum / tail_count as f64,
    })
}

/// Run trial `trial` of the experiment seeded by `seed`.
pub fn simulate_trial(
    scenario: &NetworkScenario,
    options: &SimulationOptions,
    seed: u64,
    trial: u64,
) -> Result<SimulationResult> {
    let initial = initial_state(scenario, options.initial_spread, seed, trial)?;
    let rngs = agent_streams(seed, trial, scenario.n_agents());
    simulate_from(scenario, options, initial, rngs, seed, trial)
}

pub fn simulate(scenario: &NetworkScenario, options: &SimulationOptions, seed: u64) -> Result<SimulationResult> {
    simulate_trial(scenario, options, seed, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub horizon: usize,
    pub per_trial_mse: Vec<f64>,
    pub mean_mse: f64,
    /// Standard error of `mean_mse` across trials (zero for a single trial).
    pub standard_error: f64,
}

/// Independent trials in parallel; results are reduced in trial order so the
/// summary does not depend on thread scheduling.
pub fn monte_carlo(
    scenario: &NetworkScenario,
    options: &SimulationOptions,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloSummary> {
    if trials == 0 {
        return Err(Error::InvalidScenario("need at least one trial".into()));
    }
    let options = SimulationOptions {
        record_trajectory: false,
        ..options.clone()
    };
    let results: Vec<Result<SimulationResult>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| simulate_trial(scenario, &options, seed, t))
        .collect();
    let mut per_trial = Vec::with_capacity(trials);
    let mut burn_in = 0;
    for r in results {
        let r = r?;
        burn_in = r.burn_in;
        per_trial.push(r.empirical_mse_tail);
    }
    let mean = per_trial.iter().sum::<f64>() / trials as f64;
    let standard_error = if trials > 1 {
        let var = per_trial.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloSummary {
        trials,
        seed,
        burn_in,
        horizon: options.horizon,
        per_trial_mse: per_trial,
        mean_mse: mean,
        standard_error,
    })
}

/// Rows `(k, agent, dim, x, xbar, e)` of a recorded trajectory.
pub fn trajectory_rows(result: &SimulationResult) -> Vec<(usize, usize, usize, f64, f64, f64)> {
    let mut rows = Vec::new();
    for (state, e) in result.states.iter().zip(&result.error_trajectory) {
        for i in 0..state.states.nrows() {
            for l in 0..state.states.ncols() {
                rows.push((
                    state.time_index,
                    i,
                    l,
                    state.states[(i, l)],
                    state.shifted_states[(i, l)],
                    e[(i, l)],
                ));
            }
        }
    }
    rows
}
