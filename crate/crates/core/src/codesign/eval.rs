//! Objective and constraint values at a design point, in original units.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::CodesignProblem;
use crate::eigen::symmetric_eigen;
use crate::graph::DEGENERACY_TOL;
use crate::privacy::kappa;

/// `Tr(L) + vartheta * sum eps^2`, with `Tr(L) = 2 * sum w`.
pub fn objective(weights: &[f64], epsilons: &[f64], vartheta: f64) -> f64 {
    2.0 * weights.iter().sum::<f64>() + vartheta * epsilons.iter().map(|e| e * e).sum::<f64>()
}

/// Constraint values in original units; feasible when all are `<= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintValues {
    /// `bound - e_R`.
    pub g_err: f64,
    /// `lambda2_min - lambda2`.
    pub g_lambda: f64,
    /// `eps_i - eps_i^max`.
    pub g_eps: Vec<f64>,
    /// `gamma * d_max - 1`.
    pub g_stability: f64,
    pub bound: f64,
    pub lambda2: f64,
    pub lambda_max: f64,
    pub trace_q: f64,
}

impl ConstraintValues {
    pub fn max_violation(&self) -> f64 {
        let mut v = self.g_err.max(self.g_lambda).max(0.0);
        for g in &self.g_eps {
            v = v.max(*g);
        }
        v
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation() <= tol && self.g_stability < 0.0
    }

    /// Name of the most violated constraint.
    pub fn binding(&self) -> &'static str {
        let eps = self.g_eps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let candidates = [
            (self.g_err / (self.bound - self.g_err), "error_bound"),
            (self.g_lambda / (self.lambda2 + self.g_lambda), "lambda2_min"),
            (eps, "eps_max"),
            (self.g_stability, "step_size"),
        ];
        candidates
            .iter()
            .copied()
            .fold(("", f64::NEG_INFINITY), |acc, (v, name)| if v > acc.1 { (name, v) } else { acc })
            .0
    }
}

/// Constraint values in original units. A disconnected or unstable design
/// reports an infinite bound.
pub fn constraint_values(problem: &CodesignProblem, weights: &[f64], epsilons: &[f64]) -> ConstraintValues {
    let n = problem.n_agents();
    let nf = n as f64;
    let gamma = problem.gamma;
    let mut lap = DMatrix::<f64>::zeros(n, n);
    let mut sq = vec![0.0; n];
    for (e, &we) in problem.mask.edges().zip(weights) {
        let (a, b) = (e.lo(), e.hi());
        lap[(a, b)] -= we;
        lap[(b, a)] -= we;
        lap[(a, a)] += we;
        lap[(b, b)] += we;
        sq[a] += we * we;
        sq[b] += we * we;
    }
    let degrees: Vec<f64> = (0..n).map(|i| lap[(i, i)]).collect();
    let mut privacy = 0.0;
    for i in 0..n {
        let sigma = kappa(problem.deltas[i], epsilons[i]).unwrap_or(f64::INFINITY) * problem.adjacency_bounds[i];
        privacy += (sq[i] - degrees[i] * degrees[i] / nf) * sigma * sigma;
    }
    let process = problem.process_sigmas.iter().map(|s| s * s).sum::<f64>() * (nf - 1.0) / nf;
    let trace_q = gamma * gamma * privacy + process;

    let (lambda2, lambda_max) = match symmetric_eigen(&lap) {
        Ok(eig) => (eig.values[1], eig.values[n - 1]),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let low = 1.0 - gamma * lambda2;
    let high = 1.0 - gamma * lambda_max;
    let smax = low.abs().max(high.abs());
    let connected = lambda2 > DEGENERACY_TOL * lambda_max.abs().max(1.0);
    let bound = if connected && smax < 1.0 {
        problem.dimension as f64 / nf * trace_q / (1.0 - smax * smax)
    } else {
        f64::INFINITY
    };
    let d_max = degrees.iter().copied().fold(0.0, f64::max);
    ConstraintValues {
        g_err: bound - problem.e_r,
        g_lambda: problem.lambda2_min - lambda2,
        g_eps: epsilons.iter().zip(&problem.eps_max).map(|(e, m)| e - m).collect(),
        g_stability: gamma * d_max - 1.0,
        bound,
        lambda2,
        lambda_max,
        trace_q,
    }
}
