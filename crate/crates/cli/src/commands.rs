use std::path::Path;

use log::info;
use serde::Serialize;

use privform_core::analysis::{error_bound, steady_state};
use privform_core::codesign::{solve, sweep, validate_solution, CodesignProblem, CodesignSolution};
use privform_core::formation::{monte_carlo, simulate};
use privform_core::io::{
    dot_string, sweep_csv, sweep_rows, to_json, trajectory_csv, write_atomic, ProblemFile, SolutionFile,
};
use privform_core::{Error, Result};

use crate::config::RunConfig;

/// What a command produced, for the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
    Infeasible,
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    let path = out.join(name);
    write_atomic(&path, contents.as_bytes())?;
    info!("wrote {}", path.display());
    Ok(())
}

pub fn analyze(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let scenario = cfg.network_scenario()?;
    let report = steady_state(&scenario)?;
    write(out, "analysis.json", &to_json(&report))?;
    println!(
        "e_ss = {:.6e} (bound {:.6e}, lambda2 {:.6e})",
        report.e_ss_exact, report.e_ss_bound, report.lambda2
    );
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct Comparison {
    trials: usize,
    horizon: usize,
    burn_in: usize,
    seed: u64,
    empirical_e_ss: f64,
    standard_error: f64,
    e_ss_exact: f64,
    e_ss_bound: f64,
    relative_error: f64,
    per_trial_e_ss: Vec<f64>,
}

pub fn simulate_cmd(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let scenario = cfg.network_scenario()?;
    let exact = steady_state(&scenario)?;
    let bound = error_bound(&scenario)?;
    let sim = &cfg.simulation;
    if sim.trajectory {
        let result = simulate(&scenario, &sim.options(true), cfg.seed)?;
        write(out, "trajectory.csv", &trajectory_csv(&result)?)?;
    }
    let mc = monte_carlo(&scenario, &sim.options(false), sim.trials, cfg.seed)?;
    let comparison = Comparison {
        trials: mc.trials,
        horizon: mc.horizon,
        burn_in: mc.burn_in,
        seed: mc.seed,
        empirical_e_ss: mc.mean_mse,
        standard_error: mc.standard_error,
        e_ss_exact: exact.e_ss_exact,
        e_ss_bound: bound.bound,
        relative_error: (mc.mean_mse - exact.e_ss_exact).abs() / exact.e_ss_exact,
        per_trial_e_ss: mc.per_trial_mse,
    };
    write(out, "comparison.json", &to_json(&comparison))?;
    println!(
        "empirical e_ss = {:.6e} +- {:.2e}, exact {:.6e} ({:.2}% off)",
        comparison.empirical_e_ss,
        comparison.standard_error,
        comparison.e_ss_exact,
        100.0 * comparison.relative_error
    );
    Ok(Outcome::Done)
}

fn write_solution(out: &Path, stem: &str, problem: &CodesignProblem, sol: &CodesignSolution, tol: f64) -> Result<()> {
    write(out, &format!("{stem}.json"), &to_json(&SolutionFile::from_solution(sol)))?;
    write(out, &format!("{stem}.dot"), &dot_string(&sol.graph, &sol.epsilons)?)?;
    write(out, &format!("{stem}_validation.json"), &to_json(&validate_solution(problem, sol, tol)))?;
    Ok(())
}

pub fn codesign(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let problem = cfg.codesign_problem()?;
    write(out, "problem.json", &to_json(&ProblemFile::from_problem(&problem)))?;
    let sol = solve(&problem, &cfg.solver, cfg.seed)?;
    write_solution(out, "solution", &problem, &sol, cfg.solver.tol_feas)?;
    println!(
        "objective {:.6}, Tr(L) {:.6}, lambda2 {:.6}, bound {:.6} (e_R {}), converged {}",
        sol.objective_value,
        2.0 * sol.graph.total_weight(),
        sol.lambda2,
        sol.error_bound,
        problem.e_r,
        sol.converged
    );
    Ok(if sol.converged { Outcome::Done } else { Outcome::NotConverged })
}

pub fn sweep_cmd(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let problem = cfg.codesign_problem()?;
    let (axis, values, warm) = cfg.sweep_axis()?;
    let points = sweep(&problem, axis, &values, &cfg.solver, cfg.seed, warm);
    let mut outcome = Outcome::Done;
    for (k, (value, result)) in points.iter().enumerate() {
        match result {
            Ok(sol) => {
                let p = axis.apply(&problem, *value);
                write_solution(out, &format!("sweep_{k:02}"), &p, sol, cfg.solver.tol_feas)?;
                if !sol.converged && outcome == Outcome::Done {
                    outcome = Outcome::NotConverged;
                }
                println!("{axis} = {value}: objective {:.6}, converged {}", sol.objective_value, sol.converged);
            }
            Err(Error::Infeasible { binding, detail }) => {
                println!("{axis} = {value}: infeasible ({binding}: {detail})");
                outcome = Outcome::Infeasible;
            }
            Err(e) => return Err(e.clone()),
        }
    }
    let rows = sweep_rows(axis.name(), &points, problem.n_agents());
    write(out, "sweep.csv", &sweep_csv(&rows)?)?;
    Ok(outcome)
}
