//! Augmented-Lagrangian solver with a projected spectral-gradient inner loop.

use log::{debug, info};
use rand::Rng;
use rayon::prelude::*;

use super::eval::{constraint_values, objective, ConstraintValues};
use super::model::Model;
use super::{CodesignProblem, CodesignSolution, ConstraintResiduals, SolverOptions, EPS_FLOOR};
use crate::error::{Error, Result};
use crate::graph::{spectral_summary, WeightedGraph};
use crate::privacy::min_sigma;
use crate::rng::stream;

const MULTISTART_LABEL: u64 = 0xC0DE_5161;
const NONMONOTONE_WINDOW: usize = 10;
const ARMIJO: f64 = 1e-4;
const SCALE_GRID: usize = 400;

/// Solve with the default multistart set.
pub fn solve(problem: &CodesignProblem, options: &SolverOptions, seed: u64) -> Result<CodesignSolution> {
    solve_from(problem, options, seed, None)
}

/// Solve, optionally adding `warm = (weights, epsilons)` as an extra start.
pub fn solve_from(
    problem: &CodesignProblem,
    options: &SolverOptions,
    seed: u64,
    warm: Option<(&[f64], &[f64])>,
) -> Result<CodesignSolution> {
    problem.validate()?;
    let scale = uniform_scale_search(problem, options)?;
    let m = problem.n_edges();
    let n = problem.n_agents();

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut first: Vec<f64> = vec![1.0; m];
    first.extend_from_slice(&problem.eps_max);
    if !constraint_values(problem, &first[..m], &first[m..]).is_feasible(0.0) {
        first[..m].iter_mut().for_each(|w| *w = scale);
    }
    starts.push(first);
    for s in 1..options.multistarts.max(1) {
        let mut rng = stream(seed, &[MULTISTART_LABEL, s as u64]);
        let mut z: Vec<f64> = (0..m).map(|_| scale * rng.random_range(0.5..1.5)).collect();
        z.extend((0..n).map(|i| (problem.eps_max[i] * rng.random_range(0.3..1.0)).max(EPS_FLOOR)));
        starts.push(z);
    }
    if let Some((w, e)) = warm {
        if w.len() == m && e.len() == n {
            let mut z = w.to_vec();
            z.extend_from_slice(e);
            starts.push(z);
        }
    }

    let runs: Vec<RunResult> = starts.par_iter().map(|z0| run_start(problem, options, z0)).collect();

    let mut best: Option<(usize, &RunResult)> = None;
    for (idx, run) in runs.iter().enumerate() {
        if !run.feasible {
            continue;
        }
        if best.is_none_or(|(_, b)| run.objective < b.objective) {
            best = Some((idx, run));
        }
    }
    let Some((start_index, run)) = best else {
        let worst = runs
            .iter()
            .map(|r| constraint_values(problem, &r.z[..m], &r.z[m..]))
            .min_by(|a, b| a.max_violation().total_cmp(&b.max_violation()))
            .expect("at least one start");
        return Err(Error::Infeasible {
            binding: worst.binding().to_string(),
            detail: format!(
                "no start reached a feasible design (bound {:.6e}, lambda2 {:.6e})",
                worst.bound, worst.lambda2
            ),
        });
    };

    let (weights, rolled_back) = prune(problem, &run.z[..m], &run.z[m..], options);
    let epsilons = run.z[m..].to_vec();
    let graph = WeightedGraph::from_mask_weights(problem.mask.clone(), &weights)?;
    let cv = constraint_values(problem, &weights, &epsilons);
    let sigmas = problem.privacy_specs(&epsilons)?.iter().map(min_sigma).collect();
    let spectrum = spectral_summary(&graph)?;
    if spectrum.degenerate_fiedler {
        info!("designed graph has a repeated algebraic connectivity eigenvalue");
    }
    Ok(CodesignSolution {
        objective_value: objective(&weights, &epsilons, problem.vartheta),
        constraint_residuals: residuals(&cv),
        lambda2: spectrum.lambda2,
        degenerate_fiedler: spectrum.degenerate_fiedler,
        error_bound: cv.bound,
        graph,
        epsilons,
        sigmas,
        converged: run.converged && cv.is_feasible(options.tol_feas),
        iterations: run.outer,
        inner_iterations: run.inner,
        stationarity: run.stationarity,
        start_index,
        incumbent_history: run.incumbents.clone(),
        rolled_back_edges: rolled_back,
    })
}

fn residuals(cv: &ConstraintValues) -> ConstraintResiduals {
    ConstraintResiduals {
        error_bound_slack: cv.g_err,
        lambda2_slack: cv.g_lambda,
        eps_slacks: cv.g_eps.clone(),
        stability_slack: cv.g_stability,
    }
}

/// Scan uniform weights `alpha` on every mask edge with `eps = eps_max`.
/// Returns the scale with the smallest bound, or an infeasibility error when
/// no scale meets all constraints.
fn uniform_scale_search(problem: &CodesignProblem, options: &SolverOptions) -> Result<f64> {
    let unit = WeightedGraph::uniform(problem.mask.clone(), 1.0)?;
    let spectrum = spectral_summary(&unit)?;
    let scale = spectrum.lambda_max.max(1.0);
    if spectrum.lambda2 <= 1e-9 * scale {
        return Err(Error::Infeasible {
            binding: "lambda2_min".into(),
            detail: "the allowed edges do not connect all agents".into(),
        });
    }
    let lo = problem.lambda2_min / spectrum.lambda2 * (1.0 + 1e-12);
    let hi = (1.0 - options.stability_margin) / (problem.gamma * unit.max_degree());
    if lo > hi {
        return Err(Error::Infeasible {
            binding: "lambda2_min".into(),
            detail: format!(
                "lambda2 >= {} needs weight scale {lo:.6e} but gamma * d_max < 1 caps it at {hi:.6e}",
                problem.lambda2_min
            ),
        });
    }
    let bound_at = |alpha: f64| {
        let w = vec![alpha; problem.n_edges()];
        constraint_values(problem, &w, &problem.eps_max).bound
    };
    let mut best = (lo, bound_at(lo));
    for k in 1..=SCALE_GRID {
        let alpha = lo * (hi / lo).powf(k as f64 / SCALE_GRID as f64);
        let b = bound_at(alpha);
        if b < best.1 {
            best = (alpha, b);
        }
    }
    if best.1 > problem.e_r {
        return Err(Error::Infeasible {
            binding: "error_bound".into(),
            detail: format!(
                "smallest bound over uniform weights at maximal privacy levels is {:.6e} > e_R = {}",
                best.1, problem.e_r
            ),
        });
    }
    Ok(best.0)
}

struct RunResult {
    z: Vec<f64>,
    objective: f64,
    feasible: bool,
    converged: bool,
    outer: usize,
    inner: usize,
    stationarity: f64,
    incumbents: Vec<f64>,
}

struct Box_ {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Box_ {
    fn project(&self, z: &mut [f64]) {
        for ((v, l), h) in z.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(*l, *h);
        }
    }
}

fn run_start(problem: &CodesignProblem, options: &SolverOptions, start: &[f64]) -> RunResult {
    let model = Model::new(problem, options.stability_margin);
    let m = model.n_edges();
    let n = problem.n_agents();
    let nv = model.n_vars();
    let ti = model.t_index();
    let mut lo = vec![0.0; nv];
    let mut hi = vec![f64::INFINITY; nv];
    for i in 0..n {
        lo[m + i] = EPS_FLOOR.ln();
        hi[m + i] = problem.eps_max[i].ln();
    }
    lo[ti] = problem.lambda2_min;
    hi[ti] = 1.0 / problem.gamma;
    let bx = Box_ { lo, hi };
    let mut z = model.pack(&start[..m], &start[m..]);
    bx.project(&mut z);

    let mut mult = model.initial_multipliers();
    let mut rho = options.initial_penalty;
    let mut inner_tol = 1e-2_f64.max(options.stat_tol);
    let mut prev_kkt = f64::INFINITY;
    let mut prev_f = f64::INFINITY;
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut incumbents = Vec::new();
    let mut inner_total = 0;
    let mut converged = false;
    let mut stationarity = f64::INFINITY;
    let mut outer = 0;

    let consider = |w: &[f64], eps: &[f64], incumbent: &mut Option<(Vec<f64>, f64)>, incumbents: &mut Vec<f64>| {
        if let Some(zr) = restore(problem, w, eps, options) {
            let f = objective(&zr[..m], &zr[m..], problem.vartheta);
            if incumbent.as_ref().is_none_or(|(_, fb)| f < *fb) {
                *incumbent = Some((zr, f));
            }
        }
        if let Some((_, f)) = incumbent {
            incumbents.push(*f);
        }
    };
    consider(&start[..m], &start[m..], &mut incumbent, &mut incumbents);

    while outer < options.max_outer_iterations {
        outer += 1;
        let merit = |x: &[f64]| model.merit(x, &mult, rho);
        let inner = spg(&merit, &bx, &z, inner_tol, options.max_inner_iterations);
        z = inner.z;
        inner_total += inner.iterations;
        stationarity = inner.pg_norm;

        let (kkt, violation) = model.update_multipliers(&z, &mut mult, rho);
        let (f, _) = model.objective(&z);
        debug!(
            "outer {outer}: f = {f:.10}, violation = {violation:.3e}, kkt = {kkt:.3e}, pg = {:.3e}, rho = {rho:.1e}",
            inner.pg_norm
        );
        consider(model.weights(&z), &model.epsilons(&z), &mut incumbent, &mut incumbents);

        if kkt <= options.constraint_tol && inner.pg_norm <= options.stat_tol {
            converged = true;
            break;
        }
        if kkt <= options.constraint_tol && outer >= 3 && (f - prev_f).abs() <= 1e-12 * (1.0 + f.abs()) {
            debug!("objective stalled at a feasible point; stopping");
            converged = true;
            break;
        }
        if kkt > 0.25 * prev_kkt {
            rho = (rho * options.penalty_growth).min(options.max_penalty);
        }
        prev_kkt = kkt;
        prev_f = f;
        inner_tol = (inner_tol * 0.1).max(options.stat_tol);
    }

    match incumbent {
        Some((zb, fb)) => RunResult {
            z: zb,
            objective: fb,
            feasible: true,
            converged,
            outer,
            inner: inner_total,
            stationarity,
            incumbents,
        },
        None => {
            let mut zf = model.weights(&z).to_vec();
            zf.extend(model.epsilons(&z));
            RunResult {
                objective: objective(&zf[..m], &zf[m..], problem.vartheta),
                z: zf,
                feasible: false,
                converged: false,
                outer,
                inner: inner_total,
                stationarity,
                incumbents,
            }
        }
    }
}

struct InnerResult {
    z: Vec<f64>,
    pg_norm: f64,
    iterations: usize,
}

fn pg_norm(bx: &Box_, z: &[f64], g: &[f64]) -> f64 {
    let mut p: Vec<f64> = z.iter().zip(g).map(|(a, b)| a - b).collect();
    bx.project(&mut p);
    p.iter().zip(z).fold(0.0_f64, |a, (pi, zi)| a.max((pi - zi).abs()))
}

/// Nonmonotone spectral projected gradient over the box.
fn spg<F>(merit: &F, bx: &Box_, z0: &[f64], tol: f64, max_iter: usize) -> InnerResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut z = z0.to_vec();
    let (mut f, mut g) = merit(&z);
    let mut history = vec![f];
    let gmax = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut alpha = 1.0 / gmax.max(1.0);
    let mut pg = pg_norm(bx, &z, &g);
    let mut it = 0;
    while it < max_iter && pg > tol {
        it += 1;
        let mut trial: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
        bx.project(&mut trial);
        let d: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let f_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let accepted = loop {
            let cand: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let (fc, gc) = merit(&cand);
            if fc.is_finite() && fc <= f_ref + ARMIJO * t * slope {
                break Some((cand, fc, gc));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((zn, fn_, gn)) = accepted else { break };
        let s: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1e3 * alpha.min(1.0) };
        z = zn;
        f = fn_;
        g = gn;
        history.push(f);
        if history.len() > NONMONOTONE_WINDOW {
            history.remove(0);
        }
        pg = pg_norm(bx, &z, &g);
    }
    InnerResult {
        z,
        pg_norm: pg,
        iterations: it,
    }
}

/// Push a nearly feasible point into the feasible set: scale weights up to
/// meet the connectivity floor, then raise privacy levels toward their
/// maxima until the bound holds.
fn restore(problem: &CodesignProblem, w: &[f64], eps: &[f64], options: &SolverOptions) -> Option<Vec<f64>> {
    let m = problem.n_edges();
    let mut z = w.to_vec();
    z.extend_from_slice(eps);
    for v in &mut z[..m] {
        *v = v.max(0.0);
    }
    for (i, v) in z[m..].iter_mut().enumerate() {
        *v = v.clamp(EPS_FLOOR, problem.eps_max[i]);
    }
    let cv = constraint_values(problem, &z[..m], &z[m..]);
    if !(cv.lambda2 > 0.0) || (!cv.bound.is_finite() && cv.g_lambda <= 0.0) {
        return None;
    }
    if cv.g_lambda > 0.0 {
        let factor = problem.lambda2_min / cv.lambda2 * (1.0 + 1e-12);
        for v in &mut z[..m] {
            *v *= factor;
        }
    }
    let cv = constraint_values(problem, &z[..m], &z[m..]);
    if cv.g_stability >= -options.stability_margin * 0.5 || cv.g_lambda > 0.0 {
        return None;
    }
    if cv.g_err > 0.0 {
        let base = z[m..].to_vec();
        let at = |t: f64| -> Vec<f64> {
            base.iter().zip(&problem.eps_max).map(|(e, mx)| e + t * (mx - e)).collect()
        };
        if constraint_values(problem, &z[..m], &at(1.0)).g_err > 0.0 {
            return None;
        }
        let (mut t_lo, mut t_hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (t_lo + t_hi);
            if constraint_values(problem, &z[..m], &at(mid)).g_err > 0.0 {
                t_lo = mid;
            } else {
                t_hi = mid;
            }
        }
        z[m..].copy_from_slice(&at(t_hi));
    }
    constraint_values(problem, &z[..m], &z[m..])
        .is_feasible(0.0)
        .then_some(z)
}

/// Zero out edges below the prune threshold. If that breaks a constraint,
/// put edges back (heaviest first) until it holds again.
fn prune(problem: &CodesignProblem, weights: &[f64], eps: &[f64], options: &SolverOptions) -> (Vec<f64>, usize) {
    let mut light: Vec<usize> = (0..weights.len())
        .filter(|&e| weights[e] > 0.0 && weights[e] < options.prune_threshold)
        .collect();
    let mut w = weights.to_vec();
    for &e in &light {
        w[e] = 0.0;
    }
    light.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut restored = 0;
    for &e in &light {
        if constraint_values(problem, &w, eps).is_feasible(options.tol_feas) {
            break;
        }
        w[e] = weights[e];
        restored += 1;
    }
    if !constraint_values(problem, &w, eps).is_feasible(options.tol_feas) {
        return (weights.to_vec(), light.len());
    }
    (w, restored)
}
