//! File formats: graph JSON, problem and solution JSON, DOT export and CSV
//! tables. Agent labels in files are one-based.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codesign::{CodesignProblem, CodesignSolution, ConstraintResiduals};
use crate::error::{Error, Result};
use crate::formation::{trajectory_rows, SimulationResult};
use crate::graph::{Edge, TopologyMask, WeightedGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub i: usize,
    pub j: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
}

/// `{"n": .., "edges": [{"i": .., "j": .., "w": ..}]}`; an edge without `w`
/// is allowed but carries no weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<EdgeEntry>,
}

impl GraphFile {
    pub fn from_mask(mask: &TopologyMask) -> Self {
        Self {
            n: mask.n_agents(),
            edges: mask
                .edges()
                .map(|e| EdgeEntry {
                    i: e.lo() + 1,
                    j: e.hi() + 1,
                    w: None,
                })
                .collect(),
        }
    }

    /// Every mask edge with its weight (zero for unused edges).
    pub fn from_graph(g: &WeightedGraph) -> Self {
        Self {
            n: g.n_agents(),
            edges: g
                .mask()
                .edges()
                .map(|e| EdgeEntry {
                    i: e.lo() + 1,
                    j: e.hi() + 1,
                    w: Some(g.weight(e.lo(), e.hi())),
                })
                .collect(),
        }
    }

    fn zero_based_pairs(&self) -> Result<Vec<(usize, usize)>> {
        self.edges
            .iter()
            .map(|e| {
                if e.i == 0 || e.j == 0 {
                    Err(Error::Parse(format!("agent labels are one-based, got edge ({}, {})", e.i, e.j)))
                } else {
                    Ok((e.i - 1, e.j - 1))
                }
            })
            .collect()
    }

    pub fn mask(&self) -> Result<TopologyMask> {
        TopologyMask::new(self.n, self.zero_based_pairs()?)
    }

    /// Weighted graph over the file's mask; edges without `w` get `default_weight`.
    pub fn graph(&self, default_weight: f64) -> Result<WeightedGraph> {
        let mask = self.mask()?;
        let mut weights = Vec::with_capacity(self.edges.len());
        for (e, (a, b)) in self.edges.iter().zip(self.zero_based_pairs()?) {
            weights.push((Edge::new(a, b)?, e.w.unwrap_or(default_weight)));
        }
        WeightedGraph::new(mask, weights)
    }

    pub fn has_weights(&self) -> bool {
        self.edges.iter().any(|e| e.w.is_some())
    }
}

pub fn parse_graph_json(text: &str) -> Result<GraphFile> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("graph JSON: {e}")))
}

pub fn graph_to_json(g: &WeightedGraph) -> String {
    to_json(&GraphFile::from_graph(g))
}

pub fn mask_to_json(mask: &TopologyMask) -> String {
    to_json(&GraphFile::from_mask(mask))
}

pub fn read_graph_file(path: &Path) -> Result<GraphFile> {
    parse_graph_json(&read_to_string(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub graph: GraphFile,
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

impl ProblemFile {
    pub fn from_problem(p: &CodesignProblem) -> Self {
        Self {
            graph: GraphFile::from_mask(&p.mask),
            e_r: p.e_r,
            lambda2_min: p.lambda2_min,
            vartheta: p.vartheta,
            eps_max: p.eps_max.clone(),
            deltas: p.deltas.clone(),
            adjacency_bounds: p.adjacency_bounds.clone(),
            process_sigmas: p.process_sigmas.clone(),
            gamma: p.gamma,
            dimension: p.dimension,
        }
    }

    pub fn problem(&self) -> Result<CodesignProblem> {
        let p = CodesignProblem {
            mask: self.graph.mask()?,
            e_r: self.e_r,
            lambda2_min: self.lambda2_min,
            vartheta: self.vartheta,
            eps_max: self.eps_max.clone(),
            deltas: self.deltas.clone(),
            adjacency_bounds: self.adjacency_bounds.clone(),
            process_sigmas: self.process_sigmas.clone(),
            gamma: self.gamma,
            dimension: self.dimension,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub graph: GraphFile,
    pub epsilons: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub objective_value: f64,
    pub trace_l: f64,
    pub lambda2: f64,
    pub error_bound: f64,
    pub converged: bool,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub stationarity: f64,
    pub start_index: usize,
    pub constraint_residuals: ConstraintResiduals,
    pub incumbent_history: Vec<f64>,
    pub degenerate_fiedler: bool,
    pub rolled_back_edges: usize,
}

impl SolutionFile {
    pub fn from_solution(s: &CodesignSolution) -> Self {
        Self {
            graph: GraphFile::from_graph(&s.graph),
            epsilons: s.epsilons.clone(),
            sigmas: s.sigmas.clone(),
            objective_value: s.objective_value,
            trace_l: 2.0 * s.graph.total_weight(),
            lambda2: s.lambda2,
            error_bound: s.error_bound,
            converged: s.converged,
            iterations: s.iterations,
            inner_iterations: s.inner_iterations,
            stationarity: s.stationarity,
            start_index: s.start_index,
            constraint_residuals: s.constraint_residuals.clone(),
            incumbent_history: s.incumbent_history.clone(),
            degenerate_fiedler: s.degenerate_fiedler,
            rolled_back_edges: s.rolled_back_edges,
        }
    }
}

/// Graphviz rendering: edge pen width proportional to weight, node width
/// growing with epsilon (less private agents are drawn larger).
pub fn dot_string(g: &WeightedGraph, epsilons: &[f64]) -> Result<String> {
    let n = g.n_agents();
    if epsilons.len() != n {
        return Err(Error::DimensionMismatch(format!("{} privacy levels for {n} agents", epsilons.len())));
    }
    let eps_max = epsilons.iter().copied().fold(0.0, f64::max);
    let w_max = g.edges().map(|(_, w)| w).fold(0.0, f64::max);
    let mut out = String::from("graph codesign {\n  node [shape=circle, fixedsize=true];\n");
    for (i, &e) in epsilons.iter().enumerate() {
        let width = if eps_max > 0.0 { 0.3 + 0.7 * e / eps_max } else { 1.0 };
        writeln!(out, "  {} [width={width:.4}, label=\"{}\\neps={e:.4}\"];", i + 1, i + 1).unwrap();
    }
    for (edge, w) in g.edges() {
        let pen = 5.0 * w / w_max;
        writeln!(out, "  {} -- {} [penwidth={pen:.4}, label=\"{w:.4}\"];", edge.lo() + 1, edge.hi() + 1).unwrap();
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn export_dot(g: &WeightedGraph, epsilons: &[f64], path: &Path) -> Result<()> {
    write_atomic(path, dot_string(g, epsilons)?.as_bytes())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Columns `k,agent,dim,x,xbar,e`; agents and dimensions one-based.
pub fn trajectory_csv(result: &SimulationResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "agent", "dim", "x", "xbar", "e"]).map_err(csv_err)?;
    for (k, i, l, x, xbar, e) in trajectory_rows(result) {
        w.serialize((k, i + 1, l + 1, x, xbar, e)).map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Row of the sweep summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub status: String,
    pub agent: usize,
    pub epsilon: Option<f64>,
    pub degree: Option<f64>,
    pub lambda2: Option<f64>,
    pub bound: Option<f64>,
    pub objective: Option<f64>,
    pub trace_l: Option<f64>,
}

/// One row per sweep value per agent.
pub fn sweep_rows(parameter: &str, points: &[(f64, Result<CodesignSolution>)], n_agents: usize) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for (value, outcome) in points {
        for i in 0..n_agents {
            rows.push(match outcome {
                Ok(s) => SweepRow {
                    parameter: parameter.to_string(),
                    value: *value,
                    status: if s.converged { "converged" } else { "not_converged" }.into(),
                    agent: i + 1,
                    epsilon: Some(s.epsilons[i]),
                    degree: Some(s.graph.degrees()[i]),
                    lambda2: Some(s.lambda2),
                    bound: Some(s.error_bound),
                    objective: Some(s.objective_value),
                    trace_l: Some(2.0 * s.graph.total_weight()),
                },
                Err(e) => SweepRow {
                    parameter: parameter.to_string(),
                    value: *value,
                    status: if matches!(e, Error::Infeasible { .. }) { "infeasible" } else { "error" }.into(),
                    agent: i + 1,
                    epsilon: None,
                    degree: None,
                    lambda2: None,
                    bound: None,
                    objective: None,
                    trace_l: None,
                },
            });
        }
    }
    rows
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    if rows.is_empty() {
        w.write_record([
            "parameter", "value", "status", "agent", "epsilon", "degree", "lambda2", "bound", "objective", "trace_l",
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<SweepRow>, _>>()
        .map_err(|e| Error::Parse(format!("sweep CSV: {e}")))
}
