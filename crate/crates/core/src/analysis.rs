//! Steady-state formation error of the private protocol.
//!
//! In every coordinate the shifted states follow
//! `xbar(k+1) = (I - gamma L) xbar(k) + z(k)` with
//! `z ~ N(0, Sigma_z)`, `Sigma_z = gamma^2 A Sigma_v A + Sigma_n`. The error
//! `e = (I - 11^T/N) xbar` then evolves through
//! `M = I - gamma L - 11^T/N`, and its stationary covariance solves
//! `Sigma_inf = Q + M Sigma_inf M` with `Q = P Sigma_z P`, `P = I - 11^T/N`.
//! The mean square error is `e_ss = (d/N) Tr(Sigma_inf)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{adjacency_and_degrees, laplacian, spectral_summary, SpectralSummary, WeightedGraph, DEGENERACY_TOL};
use crate::lyapunov::{lyapunov_residual, solve_discrete_lyapunov, LyapunovMethod};
use crate::privacy::NoiseModel;
use crate::scenario::NetworkScenario;

/// `I - 11^T / N`.
pub fn consensus_projector(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Covariance of the effective per-coordinate noise.
pub fn sigma_z(g: &WeightedGraph, gamma: f64, noise: &NoiseModel) -> DMatrix<f64> {
    let (a, _) = adjacency_and_degrees(g);
    let n = g.n_agents();
    let sigma_v = DMatrix::from_fn(n, n, |i, j| if i == j { noise.privacy_sigmas()[i].powi(2) } else { 0.0 });
    let sigma_n = DMatrix::from_fn(n, n, |i, j| if i == j { noise.process_sigmas()[i].powi(2) } else { 0.0 });
    let mut out = (&a * sigma_v * &a) * (gamma * gamma) + sigma_n;
    out = (&out + out.transpose()) * 0.5;
    out
}

/// Error-dynamics matrix `I - gamma L - 11^T/N`.
pub fn m_matrix(g: &WeightedGraph, gamma: f64) -> DMatrix<f64> {
    let n = g.n_agents();
    DMatrix::identity(n, n) - laplacian(g) * gamma - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// `P Sigma_z P`.
pub fn projected_noise(sigma_z: &DMatrix<f64>) -> DMatrix<f64> {
    let p = consensus_projector(sigma_z.nrows());
    &p * sigma_z * &p
}

/// One step of the error-covariance recursion
/// `Sigma_e(k+1) = M Sigma_e(k) M + P Sigma_z P`.
pub fn covariance_recursion(sigma_e: &DMatrix<f64>, m: &DMatrix<f64>, sigma_z: &DMatrix<f64>) -> DMatrix<f64> {
    m * sigma_e * m + projected_noise(sigma_z)
}

/// Largest singular value of `M`. `M` is symmetric with eigenvalue 0 on the
/// consensus direction and `1 - gamma lambda_k` on the rest, so this is
/// `max(|1 - gamma lambda_2|, |1 - gamma lambda_N|)`.
pub fn sigma_max_m(spectrum: &SpectralSummary, gamma: f64) -> f64 {
    let low = (1.0 - gamma * spectrum.lambda2).abs();
    let high = (1.0 - gamma * spectrum.lambda_max).abs();
    low.max(high)
}

/// True when `1 - gamma lambda_2` is the dominant singular value of `M`.
pub fn fiedler_mode_dominates(spectrum: &SpectralSummary, gamma: f64) -> bool {
    1.0 - gamma * spectrum.lambda2 >= (1.0 - gamma * spectrum.lambda_max).abs()
}

/// `Tr(P Sigma_z P)` without forming any matrix:
/// `gamma^2 sum_i (sum_j w_ij^2 - d_i^2/N) sigma_i^2 + (N-1)/N sum_i s_i^2`.
pub fn trace_q_closed_form(g: &WeightedGraph, gamma: f64, noise: &NoiseModel) -> f64 {
    let n = g.n_agents();
    let degrees = g.degrees();
    let mut squared = vec![0.0; n];
    for (e, w) in g.edges() {
        squared[e.lo()] += w * w;
        squared[e.hi()] += w * w;
    }
    let privacy: f64 = (0..n)
        .map(|i| (squared[i] - degrees[i] * degrees[i] / n as f64) * noise.privacy_sigmas()[i].powi(2))
        .sum();
    let process: f64 = noise.process_sigmas().iter().map(|s| s * s).sum();
    gamma * gamma * privacy + (n as f64 - 1.0) / n as f64 * process
}

/// Scalar upper bounds on `e_ss`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBound {
    /// `(d/N) Tr(Q) / (1 - sigma_max(M)^2)`; valid for every stable step size.
    pub bound: f64,
    /// Same expression with `sigma_max(M)` replaced by `1 - gamma lambda_2`.
    /// Equal to `bound` whenever the Fiedler mode dominates.
    pub fiedler_form: f64,
    /// The closed-form fraction as it is usually printed, with the
    /// process-noise term not divided by `gamma`. Reported for comparison.
    pub printed_form: f64,
    pub trace_q: f64,
    pub sigma_max_m: f64,
    pub lambda2: f64,
    pub fiedler_dominates: bool,
}

/// Bound from precomputed ingredients. Shared with the co-design solver.
pub(crate) fn bound_from_parts(
    dimension: usize,
    n: usize,
    gamma: f64,
    trace_q: f64,
    lambda2: f64,
    lambda_max: f64,
) -> (f64, f64) {
    let d_over_n = dimension as f64 / n as f64;
    let low = 1.0 - gamma * lambda2;
    let high = 1.0 - gamma * lambda_max;
    let smax = low.abs().max(high.abs());
    let bound = d_over_n * trace_q / (1.0 - smax * smax);
    let fiedler = d_over_n * trace_q / (1.0 - low * low);
    (bound, fiedler)
}

fn connected_spectrum(g: &WeightedGraph) -> Result<SpectralSummary> {
    let spectrum = spectral_summary(g)?;
    if spectrum.lambda2 <= DEGENERACY_TOL * spectrum.lambda_max.abs().max(1.0) {
        return Err(Error::Disconnected {
            lambda2: spectrum.lambda2,
        });
    }
    Ok(spectrum)
}

/// Upper bound on the steady-state mean square error.
pub fn error_bound(scenario: &NetworkScenario) -> Result<ErrorBound> {
    let g = scenario.graph();
    let spectrum = connected_spectrum(g)?;
    error_bound_with_spectrum(scenario, &spectrum)
}

fn error_bound_with_spectrum(scenario: &NetworkScenario, spectrum: &SpectralSummary) -> Result<ErrorBound> {
    let g = scenario.graph();
    let gamma = scenario.gamma();
    let n = g.n_agents();
    let d = scenario.dimension();
    let noise = scenario.noise();
    let trace_q = trace_q_closed_form(g, gamma, noise);
    let (bound, fiedler_form) = bound_from_parts(d, n, gamma, trace_q, spectrum.lambda2, spectrum.lambda_max);

    let degrees = g.degrees();
    let mut weighted = 0.0;
    for i in 0..n {
        let sq: f64 = g.neighbors()[i].iter().map(|&(_, w)| w * w).sum();
        weighted += (sq - degrees[i] * degrees[i] / n as f64) * noise.privacy_sigmas()[i].powi(2);
    }
    let process: f64 = noise.process_sigmas().iter().map(|s| s * s).sum();
    let lambda2 = spectrum.lambda2;
    let printed_form = (gamma * d as f64 * weighted + (n as f64 - 1.0) / n as f64 * process)
        / (n as f64 * lambda2 * (2.0 - gamma * lambda2));

    Ok(ErrorBound {
        bound,
        fiedler_form,
        printed_form,
        trace_q,
        sigma_max_m: sigma_max_m(spectrum, gamma),
        lambda2,
        fiedler_dominates: fiedler_mode_dominates(spectrum, gamma),
    })
}

/// Burn-in length: twice the smallest `k` with `sigma_max(M)^k < 1e-3`.
pub fn default_burn_in(scenario: &NetworkScenario) -> Result<usize> {
    let spectrum = connected_spectrum(scenario.graph())?;
    let rho = sigma_max_m(&spectrum, scenario.gamma());
    Ok(2 * burn_in_for_rate(rho))
}

fn burn_in_for_rate(rho: f64) -> usize {
    let mut k = 1;
    let mut decay = rho;
    while decay >= 1e-3 {
        k += 1;
        decay *= rho;
    }
    k
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Everything known about the steady state of one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceReport {
    pub n_agents: usize,
    pub dimension: usize,
    pub gamma: f64,
    pub sigma_z: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub sigma_inf: Vec<Vec<f64>>,
    pub trace_sigma_inf: f64,
    pub e_ss_exact: f64,
    pub e_ss_bound: f64,
    pub e_ss_bound_fiedler: f64,
    pub e_ss_bound_printed: f64,
    pub trace_q: f64,
    pub sigma_max_m: f64,
    pub lambda2: f64,
    pub lambda_max: f64,
    pub fiedler_dominates: bool,
    pub lyapunov_residual: f64,
    pub solver: LyapunovMethod,
}

impl CovarianceReport {
    pub fn sigma_inf_matrix(&self) -> DMatrix<f64> {
        let n = self.n_agents;
        DMatrix::from_fn(n, n, |i, j| self.sigma_inf[i][j])
    }
}

/// Solve for the stationary error covariance and the associated scalars.
pub fn steady_state(scenario: &NetworkScenario) -> Result<CovarianceReport> {
    let g = scenario.graph();
    let gamma = scenario.gamma();
    let n = g.n_agents();
    let d = scenario.dimension();
    let spectrum = connected_spectrum(g)?;

    let sz = sigma_z(g, gamma, scenario.noise());
    let m = m_matrix(g, gamma);
    let q = projected_noise(&sz);
    let (sigma_inf, solver) = solve_discrete_lyapunov(&m, &q)?;
    let residual = lyapunov_residual(&m, &q, &sigma_inf);
    let tolerance = 1e-10 * q.norm().max(1.0);
    if residual > tolerance {
        return Err(Error::NonConvergence {
            what: "steady-state Lyapunov solve",
            iterations: 0,
            residual,
        });
    }
    let trace = sigma_inf.trace();
    let bound = error_bound_with_spectrum(scenario, &spectrum)?;

    Ok(CovarianceReport {
        n_agents: n,
        dimension: d,
        gamma,
        sigma_z: rows(&sz),
        m: rows(&m),
        q: rows(&q),
        sigma_inf: rows(&sigma_inf),
        trace_sigma_inf: trace,
        e_ss_exact: d as f64 / n as f64 * trace,
        e_ss_bound: bound.bound,
        e_ss_bound_fiedler: bound.fiedler_form,
        e_ss_bound_printed: bound.printed_form,
        trace_q: bound.trace_q,
        sigma_max_m: bound.sigma_max_m,
        lambda2: spectrum.lambda2,
        lambda_max: spectrum.lambda_max,
        fiedler_dominates: bound.fiedler_dominates,
        lyapunov_residual: residual,
        solver,
    })
}
