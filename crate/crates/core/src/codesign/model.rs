//! Smooth restriction of the co-design problem used by the optimizer.
//!
//! Variables are `z = [w_e (mask order), y_i = ln eps_i, t]` where `t` is a
//! lower bound on lambda2 enforced through the matrix inequality
//! `U^T L U - t I >= 0` on the subspace orthogonal to the all-ones vector.
//! With `gamma t <= 1` and `lambda_max <= 2/gamma - t` (a second matrix
//! inequality) the largest error-mode factor is at most `1 - gamma t`, so
//!
//! ```text
//! (d/N) Tr(Q) / (gamma t (2 - gamma t)) <= e_R
//! ```
//!
//! implies the true bound constraint. Both matrix constraints are handled by
//! a matrix augmented Lagrangian, which stays differentiable when lambda2 is
//! repeated.

use nalgebra::{DMatrix, DVector};

use super::CodesignProblem;
use crate::eigen::symmetric_eigen;
use crate::privacy::q_inverse;

/// Multipliers for the scalar constraints and the two matrix inequalities.
#[derive(Debug, Clone)]
pub(super) struct Multipliers {
    pub scalar: Vec<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

pub(super) struct Model<'a> {
    pub problem: &'a CodesignProblem,
    pub edges: Vec<(usize, usize)>,
    /// `u_a - u_b` for each mask edge, in the orthonormal basis of 1-perp.
    diffs: Vec<DVector<f64>>,
    k: Vec<f64>,
    margin: f64,
}

/// Orthonormal basis of the complement of the all-ones vector (Helmert).
pub(super) fn helmert_basis(n: usize) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(n, n - 1);
    for k in 1..n {
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            u[(i, k - 1)] = scale;
        }
        u[(k, k - 1)] = -(k as f64) * scale;
    }
    u
}

/// Projection onto the PSD cone and its squared Frobenius norm.
fn psd_part(y: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = symmetric_eigen(y).expect("finite symmetric matrix");
    let n = y.nrows();
    let mut p = DMatrix::zeros(n, n);
    let mut norm2 = 0.0;
    for k in 0..n {
        let l = eig.values[k];
        if l > 0.0 {
            let v = eig.vectors.column(k);
            p += v * v.transpose() * l;
            norm2 += l * l;
        }
    }
    (p, norm2)
}

fn min_eigenvalue(x: &DMatrix<f64>) -> f64 {
    symmetric_eigen(x).expect("finite symmetric matrix").values[0]
}

impl<'a> Model<'a> {
    pub fn new(problem: &'a CodesignProblem, margin: f64) -> Self {
        let n = problem.n_agents();
        let u = helmert_basis(n);
        let edges: Vec<(usize, usize)> = problem.mask.edges().map(|e| (e.lo(), e.hi())).collect();
        let diffs = edges
            .iter()
            .map(|&(a, b)| (u.row(a) - u.row(b)).transpose())
            .collect();
        let k = problem.deltas.iter().map(|&d| q_inverse(d).unwrap_or(f64::NAN)).collect();
        Self {
            problem,
            edges,
            diffs,
            k,
            margin,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_vars(&self) -> usize {
        self.edges.len() + self.problem.n_agents() + 1
    }

    /// Error bound plus one step-size constraint per agent.
    pub fn n_scalar(&self) -> usize {
        1 + self.problem.n_agents()
    }

    pub fn t_index(&self) -> usize {
        self.n_vars() - 1
    }

    pub fn initial_multipliers(&self) -> Multipliers {
        let n1 = self.problem.n_agents() - 1;
        Multipliers {
            scalar: vec![0.0; self.n_scalar()],
            lower: DMatrix::zeros(n1, n1),
            upper: DMatrix::zeros(n1, n1),
        }
    }

    /// Pack weights and privacy levels, with `t` as large as the current
    /// spectrum allows.
    pub fn pack(&self, weights: &[f64], epsilons: &[f64]) -> Vec<f64> {
        let mut z = weights.to_vec();
        z.extend(epsilons.iter().map(|e| e.ln()));
        let s = self.projected_laplacian(weights);
        let t = min_eigenvalue(&s);
        z.push(t);
        z
    }

    pub fn weights<'z>(&self, z: &'z [f64]) -> &'z [f64] {
        &z[..self.n_edges()]
    }

    pub fn epsilons(&self, z: &[f64]) -> Vec<f64> {
        z[self.n_edges()..self.t_index()].iter().map(|y| y.exp()).collect()
    }

    /// `U^T L U`.
    fn projected_laplacian(&self, w: &[f64]) -> DMatrix<f64> {
        let n1 = self.problem.n_agents() - 1;
        let mut s = DMatrix::zeros(n1, n1);
        for (d, &we) in self.diffs.iter().zip(w) {
            if we != 0.0 {
                s.ger(we, d, d, 1.0);
            }
        }
        s
    }

    /// `(X_lower, X_upper)`, both required to be PSD.
    fn matrix_constraints(&self, z: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = self.problem;
        let s = self.projected_laplacian(self.weights(z));
        let t = z[self.t_index()];
        let n1 = s.nrows();
        let eye = DMatrix::<f64>::identity(n1, n1);
        let lower = (&s - &eye * t) / p.lambda2_min;
        let upper = &eye * (1.0 - 0.5 * p.gamma * t) - &s * (0.5 * p.gamma);
        (lower, upper)
    }

    pub fn objective(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let m = self.n_edges();
        let ti = self.t_index();
        let vt = self.problem.vartheta;
        let mut f = 0.0;
        let mut g = vec![0.0; z.len()];
        for e in 0..m {
            f += 2.0 * z[e];
            g[e] = 2.0;
        }
        for v in m..ti {
            let e2 = (2.0 * z[v]).exp();
            f += vt * e2;
            g[v] = 2.0 * vt * e2;
        }
        (f, g)
    }

    /// Scaled scalar constraints `[log(bound_t / e_R), gamma d_i / (1 - margin) - 1]`
    /// and their gradients.
    pub fn scalar_constraints(&self, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let p = self.problem;
        let n = p.n_agents();
        let m = self.n_edges();
        let ti = self.t_index();
        let nf = n as f64;
        let gamma = p.gamma;
        let w = self.weights(z);
        let t = z[ti];

        let mut deg = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for (&(a, b), &we) in self.edges.iter().zip(w) {
            deg[a] += we;
            deg[b] += we;
            sq[a] += we * we;
            sq[b] += we * we;
        }
        // (sigma_i^2, d sigma_i^2 / d y_i)
        let sig: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let eps = z[m + i].exp();
                let k = self.k[i];
                let b = p.adjacency_bounds[i];
                let root = (k * k + 2.0 * eps).sqrt();
                let kappa = (k + root) / (2.0 * eps);
                let dkappa = (eps / root - (k + root)) / (2.0 * eps * eps);
                let s2 = kappa * kappa * b * b;
                (s2, 2.0 * kappa * dkappa * b * b * eps)
            })
            .collect();
        let c: Vec<f64> = (0..n).map(|i| sq[i] - deg[i] * deg[i] / nf).collect();
        let process = p.process_sigmas.iter().map(|s| s * s).sum::<f64>() * (nf - 1.0) / nf;
        let trace_q = (gamma * gamma * (0..n).map(|i| c[i] * sig[i].0).sum::<f64>() + process).max(1e-300);
        let denom = gamma * t * (2.0 - gamma * t);

        let mut h = Vec::with_capacity(self.n_scalar());
        let mut grads = Vec::with_capacity(self.n_scalar());

        h.push((p.dimension as f64 / nf * trace_q / denom / p.e_r).ln());
        let mut g = vec![0.0; z.len()];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let dtr = gamma
                * gamma
                * ((2.0 * w[e] - 2.0 * deg[a] / nf) * sig[a].0 + (2.0 * w[e] - 2.0 * deg[b] / nf) * sig[b].0);
            g[e] = dtr / trace_q;
        }
        for i in 0..n {
            g[m + i] = gamma * gamma * c[i] * sig[i].1 / trace_q;
        }
        g[ti] = -2.0 * (1.0 - gamma * t) / (t * (2.0 - gamma * t));
        grads.push(g);

        let cap = 1.0 - self.margin;
        for i in 0..n {
            h.push(gamma * deg[i] / cap - 1.0);
            let mut g = vec![0.0; z.len()];
            for (e, &(a, b)) in self.edges.iter().enumerate() {
                if a == i || b == i {
                    g[e] = gamma / cap;
                }
            }
            grads.push(g);
        }
        (h, grads)
    }

    /// Augmented Lagrangian value and gradient.
    pub fn merit(&self, z: &[f64], mult: &Multipliers, rho: f64) -> (f64, Vec<f64>) {
        let (mut f, mut g) = self.objective(z);
        let (h, grads) = self.scalar_constraints(z);
        for (k, (hk, gk)) in h.iter().zip(&grads).enumerate() {
            let mu = mult.scalar[k];
            let shifted = mu + rho * hk;
            if shifted > 0.0 {
                f += (shifted * shifted - mu * mu) / (2.0 * rho);
                for (gv, dh) in g.iter_mut().zip(gk) {
                    *gv += shifted * dh;
                }
            } else {
                f -= mu * mu / (2.0 * rho);
            }
        }

        let p = self.problem;
        let ti = self.t_index();
        let (lower, upper) = self.matrix_constraints(z);
        // d X_lower / d w_e = d_e d_e^T / l2min, d / dt = -I / l2min
        // d X_upper / d w_e = -(gamma/2) d_e d_e^T, d / dt = -(gamma/2) I
        for (x, lam, dw, dt) in [
            (&lower, &mult.lower, 1.0 / p.lambda2_min, -1.0 / p.lambda2_min),
            (&upper, &mult.upper, -0.5 * p.gamma, -0.5 * p.gamma),
        ] {
            let (proj, norm2) = psd_part(&(lam - x * rho));
            f += (norm2 - lam.norm_squared()) / (2.0 * rho);
            for (e, d) in self.diffs.iter().enumerate() {
                g[e] -= dw * (d.transpose() * &proj * d)[(0, 0)];
            }
            g[ti] -= dt * proj.trace();
        }
        (f, g)
    }

    /// First-order multiplier update. Returns the largest change in any
    /// multiplier divided by `rho` (the usual feasibility/complementarity
    /// measure) and the largest plain constraint violation.
    pub fn update_multipliers(&self, z: &[f64], mult: &mut Multipliers, rho: f64) -> (f64, f64) {
        let (h, _) = self.scalar_constraints(z);
        let mut kkt = 0.0_f64;
        let mut violation = 0.0_f64;
        for (mu, hk) in mult.scalar.iter_mut().zip(&h) {
            let next = (*mu + rho * hk).max(0.0);
            kkt = kkt.max((next - *mu).abs() / rho);
            violation = violation.max(*hk);
            *mu = next;
        }
        let (lower, upper) = self.matrix_constraints(z);
        for (x, lam) in [(&lower, &mut mult.lower), (&upper, &mut mult.upper)] {
            let (next, _) = psd_part(&(&*lam - x * rho));
            kkt = kkt.max((&next - &*lam).norm() / rho);
            violation = violation.max(-min_eigenvalue(x));
            *lam = next;
        }
        (kkt, violation)
    }
}
