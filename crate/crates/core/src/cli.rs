//! Experiment harness: config parsing, validation, solver grids and reports.
//!
//! A config is flat `key = value` text split into sections. `[experiment]`
//! describes the instance family; every `[solver NAME]` section is one solver
//! cell, and a comma-separated value expands it into a parameter grid.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::applications::{
    check_erm_condition, erm_sigma_bound, gen_entropy_ls, gen_erm_hinge, gen_lin_ineq_qp, solve_erm_incremental,
    solve_nlp, solve_nlp_condat_vu, solve_nlp_tseng, NlpProblem,
};
use crate::distributed::{
    complete_graph, path_graph, ring_graph, run_distributed, star_graph, DistributedConfig, DistributedProblem,
    GraphSequence, MuSchedule, QuadraticAgent,
};
use crate::fbhf::{fbhf_delta_step, tseng_delta_step, LineSearch, SolveConfig, SolveReport, StepPolicy};
use crate::primal_dual::{solve_corollary, CorollaryParams};
use crate::{Error, Result, Vector};

/// Column order of `report.csv`.
pub const CSV_COLUMNS: [&str; 12] = [
    "solver",
    "params-json",
    "seed",
    "objective",
    "max-constraint",
    "iterations",
    "time-ms",
    "b1-evals",
    "b2-evals",
    "resolvent-evals",
    "backtracks",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    LinIneq,
    Entropy,
    Erm,
    Distributed,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lin-ineq" => Ok(Self::LinIneq),
            "entropy" => Ok(Self::Entropy),
            "erm" => Ok(Self::Erm),
            "distributed" => Ok(Self::Distributed),
            other => Err(Error::Config(format!("unknown experiment kind '{other}' (expected lin-ineq, entropy, erm or distributed)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LinIneq => "lin-ineq",
            Self::Entropy => "entropy",
            Self::Erm => "erm",
            Self::Distributed => "distributed",
        }
    }

    fn solvers(&self) -> &'static [&'static str] {
        match self {
            Self::LinIneq | Self::Entropy => &["fbhf", "tseng", "fbhf-ls", "tseng-ls", "cv"],
            Self::Erm => &["erm-incremental", "corollary"],
            Self::Distributed => &["consensus"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphChoice {
    Path,
    Ring,
    Star,
    Complete,
    /// Path and ring in turn.
    Alternating,
    Random { extra: f64 },
}

/// A fully resolved solver with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Solver {
    Fbhf { delta: f64 },
    Tseng { delta: f64 },
    FbhfLs(LineSearch),
    TsengLs(LineSearch),
    CondatVu { sigma_bar: f64 },
    ErmIncremental { sigma: f64, lambda: Option<f64> },
    Corollary { theta: f64, sigma: f64 },
    Consensus { graph: GraphChoice, gamma: Option<f64>, tau: Option<f64>, mu: Option<f64> },
}

/// One point of a solver's parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverCell {
    pub name: String,
    pub solver: Solver,
    /// The cell's parameters, defaults included.
    pub params: Map<String, Value>,
    /// Line of the section header.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Primal dimension (`n` for lin-ineq/entropy, `d` for ERM, block size for distributed).
    pub dim: usize,
    /// Constraints (lin-ineq), samples (ERM) or agents (distributed).
    pub count: usize,
    /// Entropy bounds `r = fraction * n`.
    pub r_fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub out: Option<PathBuf>,
    pub cells: Vec<SolverCell>,
}

struct Section {
    header: String,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

fn config_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(h) = body.strip_prefix('[') {
            let h = h.strip_suffix(']').ok_or_else(|| config_err(line, "unterminated section header"))?;
            sections.push(Section { header: h.trim().to_string(), line, entries: Vec::new() });
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| config_err(line, format!("expected 'key = value', got '{body}'")))?;
        let sec = sections.last_mut().ok_or_else(|| config_err(line, "entry before the first section"))?;
        let key = k.trim().to_string();
        if sec.entries.iter().any(|(seen, _, _)| *seen == key) {
            return Err(config_err(line, format!("duplicate key '{key}'")));
        }
        sec.entries.push((key, v.trim().to_string(), line));
    }
    Ok(sections)
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    v.parse().map_err(|_| config_err(line, format!("field '{key}': cannot parse '{v}'")))
}

/// Parses config text; grids are expanded in key order, last key fastest.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let sections = split_sections(text)?;
    let exp = sections
        .iter()
        .find(|s| s.header == "experiment")
        .ok_or_else(|| Error::Config("missing [experiment] section".into()))?;
    if sections.iter().filter(|s| s.header == "experiment").count() > 1 {
        return Err(Error::Config("more than one [experiment] section".into()));
    }
    let get = |k: &str| exp.entries.iter().find(|(key, _, _)| key == k).map(|(_, v, l)| (v.as_str(), *l));
    let (kind_s, kind_line) = get("kind").ok_or_else(|| config_err(exp.line, "[experiment] needs 'kind'"))?;
    let kind = ExperimentKind::parse(kind_s).map_err(|e| config_err(kind_line, e))?;

    let allowed: &[&str] = match kind {
        ExperimentKind::LinIneq => &["n", "p"],
        ExperimentKind::Entropy => &["n", "r_fractions"],
        ExperimentKind::Erm => &["d", "m"],
        ExperimentKind::Distributed => &["agents", "dim"],
    };
    for (k, _, l) in &exp.entries {
        let common = ["kind", "seeds", "tolerance", "max_iterations", "out"];
        if !common.contains(&k.as_str()) && !allowed.contains(&k.as_str()) {
            return Err(config_err(*l, format!("unknown field '{k}' for kind {}", kind.name())));
        }
    }
    let num = |k: &str, default: usize| -> Result<usize> {
        match get(k) {
            Some((v, l)) => parse_num(k, v, l),
            None => Ok(default),
        }
    };
    let (dim, count) = match kind {
        ExperimentKind::LinIneq => (num("n", 200)?, num("p", 20)?),
        ExperimentKind::Entropy => (num("n", 20)?, 1),
        ExperimentKind::Erm => (num("d", 20)?, num("m", 50)?),
        ExperimentKind::Distributed => (num("dim", 2)?, num("agents", 5)?),
    };
    let r_fractions = match get("r_fractions") {
        Some((v, l)) => list(v).iter().map(|s| parse_num("r_fractions", s, l)).collect::<Result<Vec<f64>>>()?,
        None if kind == ExperimentKind::Entropy => vec![-0.4],
        None => Vec::new(),
    };
    let seeds = match get("seeds") {
        Some((v, l)) => list(v).iter().map(|s| parse_num("seeds", s, l)).collect::<Result<Vec<u64>>>()?,
        None => return Err(config_err(exp.line, "[experiment] needs 'seeds'")),
    };
    let tolerance = match get("tolerance") {
        Some((v, l)) => parse_num("tolerance", v, l)?,
        None => 1e-7,
    };
    let max_iterations = num("max_iterations", 100_000)?;
    let out = get("out").map(|(v, _)| PathBuf::from(v));

    let mut cells = Vec::new();
    for sec in sections.iter().filter(|s| s.header != "experiment") {
        let name = sec
            .header
            .strip_prefix("solver")
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .ok_or_else(|| config_err(sec.line, format!("unknown section '[{}]'", sec.header)))?;
        if !kind.solvers().contains(&name) {
            return Err(config_err(
                sec.line,
                format!("solver '{name}' is not available for {} (choose from {})", kind.name(), kind.solvers().join(", ")),
            ));
        }
        let grid: Vec<(String, Vec<String>, usize)> = sec.entries.iter().map(|(k, v, l)| (k.clone(), list(v), *l)).collect();
        if let Some((k, _, l)) = grid.iter().find(|(_, vs, _)| vs.is_empty()) {
            return Err(config_err(*l, format!("field '{k}' has no value")));
        }
        let mut combos: Vec<Vec<(String, String, usize)>> = vec![Vec::new()];
        for (k, vs, l) in &grid {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    vs.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((k.clone(), v.clone(), *l));
                        c
                    })
                })
                .collect();
        }
        for combo in combos {
            cells.push(build_cell(name, &combo, sec.line, count)?);
        }
    }
    let cfg = ExperimentConfig { kind, dim, count, r_fractions, seeds, tolerance, max_iterations, out, cells };
    check_shape(&cfg)?;
    Ok(cfg)
}

fn build_cell(name: &str, entries: &[(String, String, usize)], line: usize, count: usize) -> Result<SolverCell> {
    let allowed: &[&str] = match name {
        "fbhf" | "tseng" => &["delta"],
        "fbhf-ls" | "tseng-ls" => &["epsilon", "sigma", "theta", "max_backtracks"],
        "cv" => &["sigma_bar"],
        "erm-incremental" => &["sigma", "lambda"],
        "corollary" => &["theta", "sigma"],
        "consensus" => &["graph", "extra", "gamma", "tau", "mu"],
        _ => &[],
    };
    for (k, _, l) in entries {
        if !allowed.contains(&k.as_str()) {
            return Err(config_err(*l, format!("unknown field '{k}' for solver {name}")));
        }
    }
    let find = |k: &str| entries.iter().find(|(key, _, _)| key == k);
    let real = |k: &str, default: f64| -> Result<f64> {
        match find(k) {
            Some((_, v, l)) => parse_num(k, v, *l),
            None => Ok(default),
        }
    };
    let opt = |k: &str| -> Result<Option<f64>> { find(k).map(|(_, v, l)| parse_num(k, v, *l)).transpose() };
    let mut params = Map::new();
    let mut put = |k: &str, v: Value| {
        params.insert(k.to_string(), v);
    };
    let solver = match name {
        "fbhf" | "tseng" => {
            let delta = real("delta", if name == "fbhf" { 3.99 } else { 0.99 })?;
            put("delta", delta.into());
            if name == "fbhf" {
                Solver::Fbhf { delta }
            } else {
                Solver::Tseng { delta }
            }
        }
        "fbhf-ls" | "tseng-ls" => {
            let d = LineSearch::default();
            let ls = LineSearch {
                epsilon: real("epsilon", d.epsilon)?,
                sigma: real("sigma", d.sigma)?,
                theta: real("theta", d.theta)?,
                max_backtracks: match find("max_backtracks") {
                    Some((_, v, l)) => parse_num("max_backtracks", v, *l)?,
                    None => d.max_backtracks,
                },
                initial: None,
            };
            put("epsilon", ls.epsilon.into());
            put("sigma", ls.sigma.into());
            put("theta", ls.theta.into());
            put("max_backtracks", ls.max_backtracks.into());
            if name == "fbhf-ls" {
                Solver::FbhfLs(ls)
            } else {
                Solver::TsengLs(ls)
            }
        }
        "cv" => {
            let sigma_bar = real("sigma_bar", 1.0)?;
            put("sigma_bar", sigma_bar.into());
            Solver::CondatVu { sigma_bar }
        }
        "erm-incremental" => {
            let sigma = real("sigma", 0.9 * erm_sigma_bound(count.max(1)))?;
            let lambda = opt("lambda")?;
            put("sigma", sigma.into());
            if let Some(l) = lambda {
                put("lambda", l.into());
            }
            Solver::ErmIncremental { sigma, lambda }
        }
        "corollary" => {
            let theta = real("theta", 1.0)?;
            let sigma = real("sigma", 0.9 / (count.max(1) as f64).sqrt())?;
            put("theta", theta.into());
            put("sigma", sigma.into());
            Solver::Corollary { theta, sigma }
        }
        "consensus" => {
            let (gname, gline) = find("graph").map(|(_, v, l)| (v.as_str(), *l)).unwrap_or(("path", line));
            let graph = match gname {
                "path" => GraphChoice::Path,
                "ring" => GraphChoice::Ring,
                "star" => GraphChoice::Star,
                "complete" => GraphChoice::Complete,
                "alternating" => GraphChoice::Alternating,
                "random" => {
                    let extra = real("extra", 0.3)?;
                    put("extra", extra.into());
                    GraphChoice::Random { extra }
                }
                other => return Err(config_err(gline, format!("unknown graph '{other}'"))),
            };
            put("graph", gname.into());
            let (gamma, tau, mu) = (opt("gamma")?, opt("tau")?, opt("mu")?);
            for (k, v) in [("gamma", gamma), ("tau", tau), ("mu", mu)] {
                if let Some(v) = v {
                    put(k, v.into());
                }
            }
            Solver::Consensus { graph, gamma, tau, mu }
        }
        other => return Err(config_err(line, format!("unknown solver '{other}'"))),
    };
    Ok(SolverCell { name: name.to_string(), solver, params, line })
}

fn check_shape(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("seeds must not be empty".into()));
    }
    if cfg.cells.is_empty() {
        return Err(Error::Config("no [solver ...] sections".into()));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", cfg.tolerance)));
    }
    if cfg.max_iterations == 0 {
        return Err(Error::Config("max_iterations must be at least 1".into()));
    }
    if cfg.dim == 0 || cfg.count == 0 {
        return Err(Error::Config("dimensions must be positive".into()));
    }
    if matches!(cfg.kind, ExperimentKind::LinIneq | ExperimentKind::Entropy) && !cfg.dim.is_multiple_of(2) {
        return Err(Error::Config(format!("n must be even, got {}", cfg.dim)));
    }
    if let Some(r) = cfg.r_fractions.iter().find(|r| !(**r > -1.0 && **r < 0.0)) {
        return Err(Error::Config(format!("r fractions must lie in ]-1, 0[, got {r}")));
    }
    Ok(())
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn cell_label(cell: &SolverCell) -> String {
    format!("[solver {}] (line {}) {}", cell.name, cell.line, Value::Object(cell.params.clone()))
}

/// Pre-checks every cell's parameter conditions. Returns warnings (violations
/// tolerated under `unsafe_stepsize`); fails listing each violated
/// inequality with both sides.
pub fn validate_config(cfg: &ExperimentConfig, unsafe_stepsize: bool) -> Result<Vec<String>> {
    check_shape(cfg)?;
    let mut hard = Vec::new();
    let mut soft = Vec::new();
    for cell in &cfg.cells {
        let (h, s) = validate_cell(cfg, cell)?;
        hard.extend(h.into_iter().map(|m| format!("{}: {m}", cell_label(cell))));
        soft.extend(s.into_iter().map(|m| format!("{}: {m}", cell_label(cell))));
    }
    if unsafe_stepsize {
        let warnings = soft.into_iter().map(|m| format!("unchecked: {m}")).collect();
        if hard.is_empty() {
            return Ok(warnings);
        }
        return Err(Error::Config(hard.join("\n")));
    }
    hard.extend(soft);
    if hard.is_empty() {
        Ok(Vec::new())
    } else {
        Err(Error::Config(hard.join("\n")))
    }
}

/// `(hard, step)` violations; step violations can be overridden.
fn validate_cell(cfg: &ExperimentConfig, cell: &SolverCell) -> Result<(Vec<String>, Vec<String>)> {
    let mut hard = Vec::new();
    let mut step = Vec::new();
    let positive = |name: &str, v: f64, out: &mut Vec<String>| {
        if !(v > 0.0) || !v.is_finite() {
            out.push(format!("{name} = {v} must be positive"));
        }
    };
    let nonaffine = cfg.kind == ExperimentKind::Entropy;
    match &cell.solver {
        Solver::Fbhf { delta } => {
            positive("delta", *delta, &mut hard);
            if !(*delta < 4.0) {
                step.push(format!("gamma = (delta/4) chi(beta, L) needs gamma < chi, i.e. delta < 4: delta = {delta}, bound = 4"));
            }
            if nonaffine {
                hard.push("a constant step needs a Lipschitz constant; the entropy constraint is not affine (use fbhf-ls)".into());
            }
        }
        Solver::Tseng { delta } => {
            positive("delta", *delta, &mut hard);
            if !(*delta < 1.0) {
                step.push(format!("gamma = delta/(1/beta + L) needs gamma < 1/(1/beta + L), i.e. delta < 1: delta = {delta}, bound = 1"));
            }
            if nonaffine {
                hard.push("a constant step needs a Lipschitz constant; the entropy constraint is not affine (use tseng-ls)".into());
            }
        }
        Solver::FbhfLs(ls) | Solver::TsengLs(ls) => {
            for (n, v) in [("epsilon", ls.epsilon), ("sigma", ls.sigma)] {
                if !(v > 0.0 && v < 1.0) {
                    hard.push(format!("{n} = {v} must lie in ]0, 1["));
                }
            }
            positive("theta", ls.theta, &mut hard);
            if ls.max_backtracks == 0 {
                hard.push("max_backtracks must be at least 1".into());
            }
            let top = if matches!(cell.solver, Solver::FbhfLs(_)) { (1.0 - ls.epsilon).max(0.0).sqrt() } else { 1.0 };
            if !(ls.theta < top) {
                step.push(format!("theta = {} must be below {top}", ls.theta));
            }
        }
        Solver::CondatVu { sigma_bar } => {
            positive("sigma_bar", *sigma_bar, &mut hard);
            if nonaffine {
                hard.push("Condat-Vu handles affine constraints only".into());
            }
        }
        Solver::ErmIncremental { sigma, lambda } => {
            positive("sigma", *sigma, &mut hard);
            let bound = erm_sigma_bound(cfg.count);
            if !(*sigma < bound) {
                step.push(format!("sigma = {sigma} must be below (sqrt(5) - 1)/(2 sqrt(m)) = {bound} for m = {}", cfg.count));
            }
            if hard.is_empty() {
                let p = gen_erm_hinge(cfg.dim, cfg.count, cfg.seeds[0])?;
                let chk = check_erm_condition(&p, &vec![*sigma; cfg.count + 1])?;
                if !chk.holds {
                    step.push(format!(
                        "sqrt(sum |a_i|^2) + sigma_0 sum |a_i|^2 + (sigma_0/2)(max |a_i|^2 - min |a_i|^2) = {} must be below 1/max sigma_i = {}",
                        chk.lhs, chk.rhs
                    ));
                }
                if let Some(l) = lambda {
                    positive("lambda", *l, &mut hard);
                    if !(*l * chk.m_bound < 1.0) {
                        step.push(format!("lambda = {l} must be below 1/M = {}", 1.0 / chk.m_bound));
                    }
                }
            }
        }
        Solver::Corollary { theta, sigma } => {
            positive("sigma", *sigma, &mut hard);
            if !(-1.0..=1.0).contains(theta) {
                hard.push(format!("theta = {theta} must lie in [-1, 1]"));
            }
            if hard.is_empty() {
                let pdp = gen_erm_hinge(cfg.dim, cfg.count, cfg.seeds[0])?.to_primal_dual()?;
                let chk = CorollaryParams::new(*theta, vec![*sigma; cfg.count + 1]).check(&pdp)?;
                if !chk.verdict {
                    step.push(format!(
                        "(delta + ((1 - theta)/2) sqrt(sum |L_i|^2))^2 = {} must be below rho (rho - 1/(2 beta)) = {} (rho = {})",
                        chk.lhs, chk.rhs, chk.rho
                    ));
                }
            }
        }
        Solver::Consensus { graph, gamma, tau, mu } => {
            let gs = graph_sequence(graph, cfg.count, cfg.seeds[0]);
            let dc = consensus_config(&gs, *gamma, *tau, *mu);
            positive("gamma", dc.gamma, &mut hard);
            positive("tau", dc.tau, &mut hard);
            if let Some(m) = mu {
                positive("mu", *m, &mut hard);
            }
            let bound = (2.0 * gs.degree_bound() as f64).powi(2);
            let lhs = 1.0 / (dc.gamma * dc.tau);
            if !(lhs > bound) {
                step.push(format!("1/(gamma tau) = {lhs} must exceed (2 max degree)^2 = {bound}"));
            }
        }
    }
    Ok((hard, step))
}

fn graph_sequence(graph: &GraphChoice, n: usize, seed: u64) -> GraphSequence {
    match graph {
        GraphChoice::Path => GraphSequence::fixed(n, path_graph(n)),
        GraphChoice::Ring => GraphSequence::fixed(n, ring_graph(n)),
        GraphChoice::Star => GraphSequence::fixed(n, star_graph(n)),
        GraphChoice::Complete => GraphSequence::fixed(n, complete_graph(n)),
        GraphChoice::Alternating => GraphSequence::alternating(n, path_graph(n), ring_graph(n)),
        GraphChoice::Random { extra } => GraphSequence::random_connected(n, seed, *extra),
    }
}

fn consensus_config(gs: &GraphSequence, gamma: Option<f64>, tau: Option<f64>, mu: Option<f64>) -> DistributedConfig {
    let mut dc = DistributedConfig::for_graphs(gs);
    dc.gamma = gamma.unwrap_or(dc.gamma);
    dc.tau = tau.unwrap_or(dc.tau);
    if let Some(m) = mu {
        dc.mu = MuSchedule::Constant(m);
    }
    dc
}

/// Seeded quadratic agents `(w_i/2)|x - c_i|^2`, `w_i ~ U[0.5, 2]`, `c_i` standard normal.
pub fn gen_quadratic_agents(n: usize, h: usize, seed: u64) -> Vec<QuadraticAgent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Uniform::new(0.5, 2.0).expect("valid range");
    (0..n)
        .map(|_| {
            let weight = w.sample(&mut rng);
            let center = Vector::from_fn(h, |_, _| {
                let s: f64 = StandardNormal.sample(&mut rng);
                s
            });
            QuadraticAgent { weight, center }
        })
        .collect()
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub solver: String,
    pub params_json: String,
    pub seed: u64,
    pub objective: Option<f64>,
    pub max_constraint: Option<f64>,
    pub iterations: usize,
    pub time_ms: f64,
    pub b1_evals: u64,
    pub b2_evals: u64,
    pub resolvent_evals: u64,
    pub backtracks: u64,
    pub status: String,
    /// Not written to the CSV.
    pub message: Option<String>,
}

impl ReportRow {
    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.solver.clone(),
            self.params_json.clone(),
            self.seed.to_string(),
            opt(self.objective),
            opt(self.max_constraint),
            self.iterations.to_string(),
            format!("{:.3}", self.time_ms),
            self.b1_evals.to_string(),
            self.b2_evals.to_string(),
            self.resolvent_evals.to_string(),
            self.backtracks.to_string(),
            self.status.clone(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub threads: usize,
    /// Replaces the config's seeds.
    pub seeds: Option<Vec<u64>>,
    pub unsafe_stepsize: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("splitmono-out"), threads: 1, seeds: None, unsafe_stepsize: false }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<ReportRow>,
    pub errors: usize,
    pub warnings: Vec<String>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

struct Job<'a> {
    cell: &'a SolverCell,
    r_fraction: Option<f64>,
    seed: u64,
}

/// Runs every (cell, r, seed) combination on a pool of `threads` workers and
/// writes `report.csv` and `summary.md` into `out_dir`. Rows keep config order.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    if let Some(s) = &opts.seeds {
        cfg.seeds = s.clone();
    }
    let warnings = validate_config(&cfg, opts.unsafe_stepsize)?;
    let rs: Vec<Option<f64>> =
        if cfg.kind == ExperimentKind::Entropy { cfg.r_fractions.iter().map(|r| Some(*r)).collect() } else { vec![None] };
    let mut jobs = Vec::new();
    for cell in &cfg.cells {
        for r in &rs {
            for &seed in &cfg.seeds {
                jobs.push(Job { cell, r_fraction: *r, seed });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    let rows: Vec<ReportRow> = pool.install(|| jobs.par_iter().map(|j| run_job(&cfg, j, opts.unsafe_stepsize)).collect());

    fs::create_dir_all(&opts.out_dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", opts.out_dir.display())))?;
    let csv_path = opts.out_dir.join("report.csv");
    write_csv(&csv_path, &rows)?;
    let summary_path = opts.out_dir.join("summary.md");
    let summary = summarize_csv(&csv_path, cfg.kind)?;
    fs::write(&summary_path, summary).map_err(|e| Error::Config(format!("cannot write {}: {e}", summary_path.display())))?;
    let errors = rows.iter().filter(|r| r.status == "error").count();
    Ok(RunOutcome { rows, errors, warnings, csv_path, summary_path })
}

fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let io = |e: csv::Error| Error::Config(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record(r.record()).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn run_job(cfg: &ExperimentConfig, job: &Job, unchecked: bool) -> ReportRow {
    let mut params = job.cell.params.clone();
    if let Some(r) = job.r_fraction {
        params.insert("r_fraction".into(), r.into());
    }
    let mut row = ReportRow {
        solver: job.cell.name.clone(),
        params_json: Value::Object(params).to_string(),
        seed: job.seed,
        objective: None,
        max_constraint: None,
        iterations: 0,
        time_ms: 0.0,
        b1_evals: 0,
        b2_evals: 0,
        resolvent_evals: 0,
        backtracks: 0,
        status: "error".into(),
        message: None,
    };
    let scfg = SolveConfig {
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
        seed: job.seed,
        unchecked_stepsize: unchecked,
        ..Default::default()
    };
    let start = Instant::now();
    let outcome = solve_job(cfg, job, &scfg);
    row.time_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((rep, obj, cons)) => {
            row.iterations = rep.iterations;
            row.b1_evals = rep.counters.b1;
            row.b2_evals = rep.counters.b2;
            row.resolvent_evals = rep.counters.resolvent;
            row.backtracks = rep.counters.backtracks;
            row.status = rep.termination.label().to_string();
            if let crate::fbhf::Termination::Error(m) = &rep.termination {
                row.message = Some(m.clone());
            } else {
                row.objective = Some(obj);
                row.max_constraint = cons;
            }
        }
        Err(e) => row.message = Some(e.to_string()),
    }
    row
}

type JobResult = (SolveReport, f64, Option<f64>);

fn nlp_result(p: &NlpProblem, rep: SolveReport) -> Result<JobResult> {
    let x = p.split(&rep.z).0;
    let obj = p.objective(&x);
    let g = p.max_constraint(&x)?;
    Ok((rep, obj, Some(g)))
}

fn solve_job(cfg: &ExperimentConfig, job: &Job, scfg: &SolveConfig) -> Result<JobResult> {
    let seed = job.seed;
    match cfg.kind {
        ExperimentKind::LinIneq | ExperimentKind::Entropy => {
            let p = match job.r_fraction {
                Some(r) => gen_entropy_ls(cfg.dim, r, seed)?,
                None => gen_lin_ineq_qp(cfg.dim, cfg.count, seed)?,
            };
            let rep = match &job.cell.solver {
                Solver::Fbhf { delta } => {
                    let l = p.lipschitz()?.ok_or_else(|| Error::Config("no Lipschitz constant".into()))?;
                    solve_nlp(&p, &StepPolicy::Constant(fbhf_delta_step(p.beta(), l, *delta)?), scfg)?
                }
                Solver::Tseng { delta } => {
                    let l = p.lipschitz()?.ok_or_else(|| Error::Config("no Lipschitz constant".into()))?;
                    solve_nlp_tseng(&p, &StepPolicy::Constant(tseng_delta_step(p.beta(), l, *delta)?), scfg)?
                }
                Solver::FbhfLs(ls) => solve_nlp(&p, &StepPolicy::LineSearch(*ls), scfg)?,
                Solver::TsengLs(ls) => solve_nlp_tseng(&p, &StepPolicy::LineSearch(*ls), scfg)?,
                Solver::CondatVu { sigma_bar } => solve_nlp_condat_vu(&p, *sigma_bar, scfg)?,
                other => return Err(Error::Config(format!("{other:?} does not apply to {}", cfg.kind.name()))),
            };
            nlp_result(&p, rep)
        }
        ExperimentKind::Erm => {
            let p = gen_erm_hinge(cfg.dim, cfg.count, seed)?;
            let rep = match &job.cell.solver {
                Solver::ErmIncremental { sigma, lambda } => {
                    solve_erm_incremental(&p, &vec![*sigma; cfg.count + 1], *lambda, scfg)?
                }
                Solver::Corollary { theta, sigma } => {
                    solve_corollary(&p.to_primal_dual()?, &CorollaryParams::new(*theta, vec![*sigma; cfg.count + 1]), scfg)?
                }
                other => return Err(Error::Config(format!("{other:?} does not apply to erm"))),
            };
            let obj = p.objective(&rep.z.rows(0, cfg.dim).into_owned());
            Ok((rep, obj, None))
        }
        ExperimentKind::Distributed => {
            let Solver::Consensus { graph, gamma, tau, mu } = &job.cell.solver else {
                return Err(Error::Config("distributed runs use the consensus solver".into()));
            };
            let agents = gen_quadratic_agents(cfg.count, cfg.dim, seed);
            let p = DistributedProblem::quadratic(agents.clone())?;
            let gs = graph_sequence(graph, cfg.count, seed);
            let dc = consensus_config(&gs, *gamma, *tau, *mu);
            let run = run_distributed(&p, &gs, &dc, scfg)?;
            let avg = p.average(&run.report.z);
            let obj: f64 = agents.iter().map(|a| 0.5 * a.weight * (&avg - &a.center).norm_squared()).sum();
            let cons = p.consensus_error(&run.report.z);
            Ok((run.report, obj, Some(cons)))
        }
    }
}

/// Markdown summary computed from a written `report.csv`: per-cell means over
/// seeds, one table per `r_fraction` when present.
pub fn summarize_csv(path: &Path, kind: ExperimentKind) -> Result<String> {
    let io = |e: csv::Error| Error::Config(format!("cannot read {}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(io)?;
    let headers = rdr.headers().map_err(io)?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_COLUMNS {
        return Err(Error::Config(format!("{} does not have the report columns", path.display())));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        records.push(rec.map_err(io)?);
    }
    // group key -> (first index, rows)
    let mut tables: Vec<(String, Vec<(String, String, Vec<usize>)>)> = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let params: Map<String, Value> = serde_json::from_str(&rec[1]).unwrap_or_default();
        let table = params.get("r_fraction").map(|r| format!("r = {r} n")).unwrap_or_default();
        let t = match tables.iter().position(|(k, _)| *k == table) {
            Some(t) => t,
            None => {
                tables.push((table, Vec::new()));
                tables.len() - 1
            }
        };
        let groups = &mut tables[t].1;
        match groups.iter_mut().find(|(s, p, _)| s == &rec[0] && p == &rec[1]) {
            Some(g) => g.2.push(i),
            None => groups.push((rec[0].to_string(), rec[1].to_string(), vec![i])),
        }
    }
    let mut out = format!("# {} experiment\n\nMeans over seeds, computed from `report.csv`.\n", kind.name());
    let numeric = [3usize, 4, 5, 6, 7, 8, 9, 10];
    for (title, groups) in &tables {
        out.push('\n');
        if !title.is_empty() {
            out.push_str(&format!("## {title}\n\n"));
        }
        out.push_str("| solver | params | seeds | ");
        out.push_str(&numeric.iter().map(|&c| CSV_COLUMNS[c]).collect::<Vec<_>>().join(" | "));
        out.push_str(" | status |\n|");
        out.push_str(&"---|".repeat(numeric.len() + 4));
        out.push('\n');
        for (solver, params, idx) in groups {
            let mut cells = vec![solver.clone(), format!("`{params}`"), idx.len().to_string()];
            for &c in &numeric {
                let vals: Vec<f64> = idx.iter().filter_map(|&i| records[i][c].parse::<f64>().ok()).collect();
                cells.push(if vals.is_empty() { "-".into() } else { format!("{:.6e}", mean(&vals)) });
            }
            let mut statuses: BTreeMap<&str, usize> = BTreeMap::new();
            for &i in idx {
                *statuses.entry(&records[i][11]).or_default() += 1;
            }
            cells.push(statuses.iter().map(|(s, n)| format!("{s} x{n}")).collect::<Vec<_>>().join(", "));
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
    }
    Ok(out)
}

/// Arithmetic mean.
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Built-in configs for `splitmono demo <kind>`.
pub fn demo_config(kind: &str) -> Result<&'static str> {
    match kind {
        "lin-ineq" => Ok(DEMO_LIN_INEQ),
        "entropy" => Ok(DEMO_ENTROPY),
        "erm" => Ok(DEMO_ERM),
        "distributed" => Ok(DEMO_DISTRIBUTED),
        other => Err(Error::Config(format!("unknown demo '{other}' (expected lin-ineq, entropy, erm or distributed)"))),
    }
}

const DEMO_LIN_INEQ: &str = "\
[experiment]
kind = lin-ineq
n = 200
p = 20
seeds = 0, 1, 2
tolerance = 1e-7

[solver fbhf]
delta = 3.99

[solver tseng]
delta = 0.99

[solver fbhf-ls]

[solver tseng-ls]

[solver cv]
sigma_bar = 0.01, 1
";

const DEMO_ENTROPY: &str = "\
[experiment]
kind = entropy
n = 20
r_fractions = -0.2, -0.4, -0.6, -0.8
seeds = 0, 1, 2
tolerance = 1e-8
max_iterations = 200000

[solver fbhf-ls]

[solver tseng-ls]
";

const DEMO_ERM: &str = "\
[experiment]
kind = erm
d = 20
m = 50
seeds = 0, 1
tolerance = 1e-6
max_iterations = 50000

[solver erm-incremental]

[solver corollary]
theta = 1
";

const DEMO_DISTRIBUTED: &str = "\
[experiment]
kind = distributed
agents = 5
dim = 2
seeds = 0, 1
tolerance = 1e-10
max_iterations = 20000

[solver consensus]
graph = path, alternating, random
";
