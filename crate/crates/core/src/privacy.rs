//! Gaussian mechanism calibration and sampling.
//!
//! An agent privatizes its state trajectory by adding i.i.d. `N(0, sigma^2 I_d)`
//! noise at every step. For `(epsilon, delta)`-privacy under the adjacency
//! relation `||v - w||_2 <= b`, sigma must be at least `kappa(delta, epsilon) * b`
//! where
//!
//! ```text
//! kappa(delta, epsilon) = (K + sqrt(K^2 + 2 epsilon)) / (2 epsilon),   K = Q^{-1}(delta)
//! ```
//!
//! and `Q` is the standard normal tail function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard normal tail probability `Q(y) = P[Z > y]`.
pub fn q_function(y: f64) -> f64 {
    0.5 * libm::erfc(y * FRAC_1_SQRT_2)
}

fn normal_density(y: f64) -> f64 {
    (-0.5 * y * y).exp() / (2.0 * PI).sqrt()
}

/// Acklam's rational approximation of the standard normal quantile
/// (relative error about 1e-9). Used as a starting point only.
fn normal_quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Inverse of [`q_function`]: the `y` with `Q(y) = p`.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("Q^-1 needs p in (0, 1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut y = -normal_quantile_guess(p);
    for _ in 0..20 {
        let density = normal_density(y);
        if density == 0.0 {
            break;
        }
        let step = (q_function(y) - p) / density;
        y += step;
        if step.abs() <= 1e-15 * y.abs().max(1.0) {
            break;
        }
    }
    Ok(y)
}

fn check_delta_epsilon(delta: f64, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidPrivacy(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidPrivacy(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    Ok(())
}

/// Noise multiplier `kappa(delta, epsilon)`.
pub fn kappa(delta: f64, epsilon: f64) -> Result<f64> {
    check_delta_epsilon(delta, epsilon)?;
    let k = q_inverse(delta)?;
    Ok((k + (k * k + 2.0 * epsilon).sqrt()) / (2.0 * epsilon))
}

/// `d kappa / d epsilon` at fixed delta.
pub fn kappa_epsilon_derivative(delta: f64, epsilon: f64) -> Result<f64> {
    check_delta_epsilon(delta, epsilon)?;
    let k = q_inverse(delta)?;
    let root = (k * k + 2.0 * epsilon).sqrt();
    Ok((epsilon / root - (k + root)) / (2.0 * epsilon * epsilon))
}

/// Per-agent privacy parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    epsilon: f64,
    delta: f64,
    adjacency_bound: f64,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64, adjacency_bound: f64) -> Result<Self> {
        check_delta_epsilon(delta, epsilon)?;
        if !(adjacency_bound > 0.0 && adjacency_bound.is_finite()) {
            return Err(Error::InvalidPrivacy(format!(
                "adjacency bound b must be positive, got {adjacency_bound}"
            )));
        }
        Ok(Self {
            epsilon,
            delta,
            adjacency_bound,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn adjacency_bound(&self) -> f64 {
        self.adjacency_bound
    }
}

/// Smallest noise standard deviation giving the spec's guarantee.
pub fn min_sigma(spec: &PrivacySpec) -> f64 {
    // Construction already validated the domain.
    kappa(spec.delta, spec.epsilon).expect("validated privacy spec") * spec.adjacency_bound
}

/// Privacy and process noise scales for every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    privacy_sigmas: Vec<f64>,
    process_sigmas: Vec<f64>,
    specs: Vec<Option<PrivacySpec>>,
}

impl NoiseModel {
    /// Calibrate each agent's privacy noise to equality with its minimum.
    pub fn from_specs(specs: &[PrivacySpec], process_sigmas: Vec<f64>) -> Result<Self> {
        let sigmas = specs.iter().map(min_sigma).collect();
        Self::build(sigmas, process_sigmas, specs.iter().copied().map(Some).collect())
    }

    /// Use explicitly chosen privacy sigmas with no privacy spec attached.
    pub fn explicit(privacy_sigmas: Vec<f64>, process_sigmas: Vec<f64>) -> Result<Self> {
        let n = privacy_sigmas.len();
        Self::build(privacy_sigmas, process_sigmas, vec![None; n])
    }

    /// Explicit sigmas checked against attached specs (`sigma_i >= kappa b`).
    pub fn with_specs(
        privacy_sigmas: Vec<f64>,
        process_sigmas: Vec<f64>,
        specs: Vec<Option<PrivacySpec>>,
    ) -> Result<Self> {
        Self::build(privacy_sigmas, process_sigmas, specs)
    }

    fn build(
        privacy_sigmas: Vec<f64>,
        process_sigmas: Vec<f64>,
        specs: Vec<Option<PrivacySpec>>,
    ) -> Result<Self> {
        let n = privacy_sigmas.len();
        if process_sigmas.len() != n || specs.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} privacy sigmas, {} process sigmas, {} specs",
                process_sigmas.len(),
                specs.len()
            )));
        }
        for (i, (&sigma, &s)) in privacy_sigmas.iter().zip(&process_sigmas).enumerate() {
            if !(sigma >= 0.0 && sigma.is_finite()) || !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidPrivacy(format!(
                    "agent {i}: noise scales must be finite and nonnegative (sigma={sigma}, s={s})"
                )));
            }
            if let Some(spec) = &specs[i] {
                let floor = min_sigma(spec);
                if sigma < floor {
                    return Err(Error::InvalidPrivacy(format!(
                        "agent {i}: sigma {sigma} is below the calibrated minimum {floor}"
                    )));
                }
            }
        }
        Ok(Self {
            privacy_sigmas,
            process_sigmas,
            specs,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.privacy_sigmas.len()
    }

    pub fn privacy_sigmas(&self) -> &[f64] {
        &self.privacy_sigmas
    }

    pub fn process_sigmas(&self) -> &[f64] {
        &self.process_sigmas
    }

    pub fn specs(&self) -> &[Option<PrivacySpec>] {
        &self.specs
    }

    /// Reorder agents: agent `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_agents();
        let mut out = self.clone();
        for i in 0..n {
            out.privacy_sigmas[perm[i]] = self.privacy_sigmas[i];
            out.process_sigmas[perm[i]] = self.process_sigmas[i];
            out.specs[perm[i]] = self.specs[i];
        }
        out
    }
}

/// One draw of `N(0, sigma^2 I_d)`.
pub fn sample_privacy_noise<R: Rng + ?Sized>(sigma: f64, d: usize, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; d];
    }
    (0..d)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Adjacency relation on finite-horizon trajectories: `||v - w||_2 <= b`,
/// where the norm sums squared Euclidean distances over every stored step.
pub fn check_adjacency(v: &[Vec<f64>], w: &[Vec<f64>], b: f64) -> Result<bool> {
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "trajectories of length {} and {}",
            v.len(),
            w.len()
        )));
    }
    let mut total = 0.0;
    for (k, (a, c)) in v.iter().zip(w).enumerate() {
        if a.len() != c.len() {
            return Err(Error::DimensionMismatch(format!(
                "step {k}: state dimensions {} and {}",
                a.len(),
                c.len()
            )));
        }
        total += a.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total <= b * b)
}
