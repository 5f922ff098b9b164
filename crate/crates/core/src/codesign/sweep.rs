//! Repeated co-design over one varying parameter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{solve_from, CodesignProblem, CodesignSolution, SolverOptions};
use crate::error::{Error, Result};

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "e_R")]
    ErrorBudget,
    #[serde(rename = "eps_max_uniform")]
    EpsMaxUniform,
    #[serde(rename = "lambda2_min")]
    Lambda2Min,
    #[serde(rename = "vartheta")]
    Vartheta,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [Self::ErrorBudget, Self::EpsMaxUniform, Self::Lambda2Min, Self::Vartheta];

    pub fn name(self) -> &'static str {
        match self {
            Self::ErrorBudget => "e_R",
            Self::EpsMaxUniform => "eps_max_uniform",
            Self::Lambda2Min => "lambda2_min",
            Self::Vartheta => "vartheta",
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &CodesignProblem, value: f64) -> CodesignProblem {
        let mut p = base.clone();
        match self {
            Self::ErrorBudget => p.e_r = value,
            Self::EpsMaxUniform => p.eps_max = vec![value; p.n_agents()],
            Self::Lambda2Min => p.lambda2_min = value,
            Self::Vartheta => p.vartheta = value,
        }
        p
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            Error::Parse(format!(
                "unknown sweep parameter {s:?}; expected one of e_R, eps_max_uniform, lambda2_min, vartheta"
            ))
        })
    }
}

/// Solve once per value, in order. When `warm_start` is set the previous
/// design (if any) is added as an extra start for the next value.
pub fn sweep(
    base: &CodesignProblem,
    axis: SweepAxis,
    values: &[f64],
    options: &SolverOptions,
    seed: u64,
    warm_start: bool,
) -> Vec<(f64, Result<CodesignSolution>)> {
    let mut out: Vec<(f64, Result<CodesignSolution>)> = Vec::with_capacity(values.len());
    for &value in values {
        let problem = axis.apply(base, value);
        let previous = out.iter().rev().find_map(|(_, r)| r.as_ref().ok());
        let warm = match previous {
            Some(s) if warm_start => Some((s.graph.mask_weights(), s.epsilons.clone())),
            _ => None,
        };
        // The previous design may violate this point's privacy caps.
        let warm = warm.map(|(w, e)| {
            let e: Vec<f64> = e.iter().zip(&problem.eps_max).map(|(x, m)| x.min(*m)).collect();
            (w, e)
        });
        let result = solve_from(&problem, options, seed, warm.as_ref().map(|(w, e)| (&w[..], &e[..])));
        out.push((value, result));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_names_round_trip() {
        for a in SweepAxis::ALL {
            assert_eq!(a.name().parse::<SweepAxis>().unwrap(), a);
        }
        assert!("gamma".parse::<SweepAxis>().is_err());
    }
}
