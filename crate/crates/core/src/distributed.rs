//! Decentralized minimization of `sum_i f_i(x)` over time-varying
//! undirected graphs, simulated in-process with synchronous rounds.
//!
//! The state stacks agent primal blocks `x_i` and dual blocks `y_i`. One
//! round of the base scheme `S_t` is
//! `x_i+ = prox_{gamma f_i}(x_i - gamma (L_t y)_i)`,
//! `y+ = y + tau L_t (2 x+ - x)`, and the relaxed round is
//! `Q_t = Id - mu_t P_t (Id - S_t)` with `P_t = [[Id/gamma, -L_t], [-L_t, Id/tau]]`.

use std::collections::BTreeSet;

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::fbhf::{run_iterations, solve_fbhf, SolveConfig, SolveReport, Step, StepPolicy};
use crate::linalg::{self, Matrix, Vector};
use crate::operators::{ClosedConvexSet, CocoerciveMap, MaximalMonotone, MonotoneMap, ProblemSpec};

/// Smallest second Laplacian eigenvalue accepted as connected.
pub const CONNECTIVITY_TOL: f64 = 1e-10;

/// Undirected edge list on agents `0..n`.
pub type EdgeSet = Vec<(usize, usize)>;

pub fn path_graph(n: usize) -> EdgeSet {
    (1..n).map(|i| (i - 1, i)).collect()
}

pub fn ring_graph(n: usize) -> EdgeSet {
    let mut e = path_graph(n);
    if n > 2 {
        e.push((n - 1, 0));
    }
    e
}

pub fn star_graph(n: usize) -> EdgeSet {
    (1..n).map(|i| (0, i)).collect()
}

pub fn complete_graph(n: usize) -> EdgeSet {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphKind {
    Fixed(EdgeSet),
    /// `E_t` alternates between the two sets, starting with the first.
    Alternating(EdgeSet, EdgeSet),
    /// A fresh random spanning tree plus extra edges with probability
    /// `extra` at every `t`, reproducible from the seed.
    RandomConnected { seed: u64, extra: f64 },
}

/// `t -> E_t` on `n` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSequence {
    pub n: usize,
    pub kind: GraphKind,
}

impl GraphSequence {
    pub fn fixed(n: usize, edges: EdgeSet) -> Self {
        Self { n, kind: GraphKind::Fixed(edges) }
    }

    pub fn alternating(n: usize, a: EdgeSet, b: EdgeSet) -> Self {
        Self { n, kind: GraphKind::Alternating(a, b) }
    }

    pub fn random_connected(n: usize, seed: u64, extra: f64) -> Self {
        Self { n, kind: GraphKind::RandomConnected { seed, extra } }
    }

    pub fn edges(&self, t: usize) -> EdgeSet {
        match &self.kind {
            GraphKind::Fixed(e) => e.clone(),
            GraphKind::Alternating(a, b) => {
                if t.is_multiple_of(2) {
                    a.clone()
                } else {
                    b.clone()
                }
            }
            GraphKind::RandomConnected { seed, extra } => random_connected_edges(self.n, *seed, t, *extra),
        }
    }

    /// `L_t = D_t - A_t`, assembled in integers; errors when the graph is not
    /// connected or an edge is invalid.
    pub fn laplacian(&self, t: usize) -> Result<Matrix> {
        let lap = integer_laplacian(self.n, &self.edges(t))?;
        if self.n > 1 {
            let l2 = second_eigenvalue(&lap);
            if !(l2 > CONNECTIVITY_TOL) {
                return Err(Error::InvalidArgument(format!("graph at t = {t} is disconnected (second eigenvalue {l2:e})")));
            }
        }
        Ok(lap)
    }

    /// Largest degree of `E_t`.
    pub fn max_degree(&self, t: usize) -> usize {
        let mut deg = vec![0usize; self.n];
        for (a, b) in self.edges(t) {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    /// Upper bound on `max_t max-degree`: exact for fixed and alternating
    /// sequences, `n - 1` for random ones.
    pub fn degree_bound(&self) -> usize {
        match &self.kind {
            GraphKind::Fixed(_) => self.max_degree(0),
            GraphKind::Alternating(..) => self.max_degree(0).max(self.max_degree(1)),
            GraphKind::RandomConnected { .. } => self.n.saturating_sub(1),
        }
    }
}

fn integer_laplacian(n: usize, edges: &[(usize, usize)]) -> Result<Matrix> {
    let mut seen = BTreeSet::new();
    let mut m = vec![0i64; n * n];
    for &(a, b) in edges {
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidArgument(format!("invalid edge ({a}, {b}) on {n} agents")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        m[a * n + b] -= 1;
        m[b * n + a] -= 1;
        m[a * n + a] += 1;
        m[b * n + b] += 1;
    }
    Ok(Matrix::from_fn(n, n, |i, j| m[i * n + j] as f64))
}

fn second_eigenvalue(lap: &Matrix) -> f64 {
    let mut ev: Vec<f64> = SymmetricEigen::new(lap.clone()).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev[1]
}

fn random_connected_edges(n: usize, seed: u64, t: usize, extra: f64) -> EdgeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let r: f64 = unit.sample(&mut rng);
        let j = ((r * (i + 1) as f64) as usize).min(i);
        order.swap(i, j);
    }
    let mut edges = BTreeSet::new();
    for k in 1..n {
        let r: f64 = unit.sample(&mut rng);
        let parent = order[((r * k as f64) as usize).min(k - 1)];
        let child = order[k];
        edges.insert((parent.min(child), parent.max(child)));
    }
    for i in 0..n {
        for j in i + 1..n {
            let r: f64 = unit.sample(&mut rng);
            if r < extra {
                edges.insert((i, j));
            }
        }
    }
    edges.into_iter().collect()
}

/// `f_i(x) = (w_i/2) |x - c_i|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticAgent {
    pub weight: f64,
    pub center: Vector,
}

/// Agents' local costs, each given by its proximity operator on `R^h`.
#[derive(Clone)]
pub struct DistributedProblem {
    pub block_dim: usize,
    pub agents: Vec<MaximalMonotone>,
    quadratics: Option<Vec<QuadraticAgent>>,
}

impl DistributedProblem {
    pub fn new(block_dim: usize, agents: Vec<MaximalMonotone>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::InvalidArgument("at least one agent is required".into()));
        }
        if let Some(a) = agents.iter().find(|a| a.dim() != block_dim) {
            return Err(Error::Dimension(format!("agent operator of dimension {}, blocks have {block_dim}", a.dim())));
        }
        Ok(Self { block_dim, agents, quadratics: None })
    }

    pub fn quadratic(agents: Vec<QuadraticAgent>) -> Result<Self> {
        let h = agents.first().map(|a| a.center.len()).unwrap_or(0);
        let ops = agents
            .iter()
            .map(|q| {
                if !(q.weight > 0.0) || q.center.len() != h {
                    return Err(Error::InvalidArgument("quadratic agents need positive weights and equal dimensions".into()));
                }
                let (w, c) = (q.weight, q.center.clone());
                Ok(MaximalMonotone::separable(h, "quadratic", move |i, g, t| (t + g * w * c[i]) / (1.0 + g * w)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut p = Self::new(h, ops)?;
        p.quadratics = Some(agents);
        Ok(p)
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Length of the stacked state `(x, y)`.
    pub fn state_len(&self) -> usize {
        2 * self.num_agents() * self.block_dim
    }

    pub fn quadratics(&self) -> Option<&[QuadraticAgent]> {
        self.quadratics.as_deref()
    }

    /// Agent `i`'s primal block.
    pub fn primal(&self, state: &Vector, i: usize) -> Vector {
        state.rows(i * self.block_dim, self.block_dim).into_owned()
    }

    /// `max_{i,j} |x_i - x_j|`.
    pub fn consensus_error(&self, state: &Vector) -> f64 {
        let xs: Vec<Vector> = (0..self.num_agents()).map(|i| self.primal(state, i)).collect();
        let mut worst = 0.0f64;
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                worst = worst.max((&xs[i] - &xs[j]).norm());
            }
        }
        worst
    }

    /// Mean of the agents' primal blocks.
    pub fn average(&self, state: &Vector) -> Vector {
        let mut s = Vector::zeros(self.block_dim);
        for i in 0..self.num_agents() {
            s += self.primal(state, i);
        }
        s / self.num_agents() as f64
    }
}

/// `(L (x) Id_h) v` on stacked agent blocks; agent `i` reads only blocks `j`
/// with `L_ij != 0`.
pub fn laplacian_apply(lap: &Matrix, v: &Vector, h: usize) -> Vector {
    let n = lap.nrows();
    let mut out = Vector::zeros(n * h);
    for i in 0..n {
        for j in 0..n {
            let lij = lap[(i, j)];
            if lij != 0.0 {
                for k in 0..h {
                    out[i * h + k] += lij * v[j * h + k];
                }
            }
        }
    }
    out
}

fn check_steps(lap: &Matrix, gamma: f64, tau: f64) -> Result<()> {
    if !(gamma > 0.0) || !(tau > 0.0) {
        return Err(Error::Config(format!("steps must be positive, got gamma = {gamma}, tau = {tau}")));
    }
    let deg = (0..lap.nrows()).map(|i| lap[(i, i)]).fold(0.0, f64::max);
    let bound = (2.0 * deg).powi(2);
    if !(1.0 / (gamma * tau) > bound) {
        return Err(Error::Config(format!("1/(gamma tau) = {} must exceed (2 max-degree)^2 = {bound}", 1.0 / (gamma * tau))));
    }
    Ok(())
}

/// One round of `S_t`.
pub fn consensus_step(p: &DistributedProblem, state: &Vector, lap: &Matrix, gamma: f64, tau: f64) -> Result<Vector> {
    check_steps(lap, gamma, tau)?;
    base_round(p, state, lap, gamma, tau)
}

fn base_round(p: &DistributedProblem, state: &Vector, lap: &Matrix, gamma: f64, tau: f64) -> Result<Vector> {
    let h = p.block_dim;
    let nh = p.num_agents() * h;
    if state.len() != 2 * nh || lap.nrows() != p.num_agents() {
        return Err(Error::Dimension(format!("state of length {} for {} agents of dimension {h}", state.len(), p.num_agents())));
    }
    let x = state.rows(0, nh).into_owned();
    let y = state.rows(nh, nh).into_owned();
    let ly = laplacian_apply(lap, &y, h);
    let mut xn = Vector::zeros(nh);
    for (i, f) in p.agents.iter().enumerate() {
        let xi = x.rows(i * h, h) - ly.rows(i * h, h) * gamma;
        xn.rows_mut(i * h, h).copy_from(&f.resolvent(gamma, &xi)?);
    }
    let yn = &y + laplacian_apply(lap, &(&xn * 2.0 - &x), h) * tau;
    let mut out = Vector::zeros(2 * nh);
    out.rows_mut(0, nh).copy_from(&xn);
    out.rows_mut(nh, nh).copy_from(&yn);
    Ok(out)
}

/// `P_t v` with `P_t = [[Id/gamma, -L], [-L, Id/tau]]`.
pub fn apply_metric(lap: &Matrix, v: &Vector, h: usize, gamma: f64, tau: f64) -> Vector {
    let nh = lap.nrows() * h;
    let x = v.rows(0, nh).into_owned();
    let y = v.rows(nh, nh).into_owned();
    let mut out = Vector::zeros(2 * nh);
    out.rows_mut(0, nh).copy_from(&(&x / gamma - laplacian_apply(lap, &y, h)));
    out.rows_mut(nh, nh).copy_from(&(&y / tau - laplacian_apply(lap, &x, h)));
    out
}

/// `|P_t|` by power iteration on the `2n x 2n` scalar pattern.
pub fn metric_norm(lap: &Matrix, gamma: f64, tau: f64) -> Result<f64> {
    let n = lap.nrows();
    let mut p = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        p[(i, i)] = 1.0 / gamma;
        p[(n + i, n + i)] = 1.0 / tau;
        for j in 0..n {
            p[(i, n + j)] = -lap[(i, j)];
            p[(n + i, j)] = -lap[(i, j)];
        }
    }
    linalg::norm2(&p)
}

/// One round of `Q_t = Id - mu P_t (Id - S_t)`; requires `0 < mu <= 1/|P_t|`.
pub fn t_class_consensus_step(
    p: &DistributedProblem,
    state: &Vector,
    lap: &Matrix,
    gamma: f64,
    tau: f64,
    mu: f64,
) -> Result<Vector> {
    check_steps(lap, gamma, tau)?;
    let pn = metric_norm(lap, gamma, tau)?;
    if !(mu > 0.0) || mu * pn > 1.0 + 1e-10 {
        return Err(Error::Config(format!("mu = {mu} must lie in ]0, 1/|P_t|] = ]0, {}]", 1.0 / pn)));
    }
    relaxed_round(p, state, lap, gamma, tau, mu)
}

fn relaxed_round(p: &DistributedProblem, state: &Vector, lap: &Matrix, gamma: f64, tau: f64, mu: f64) -> Result<Vector> {
    let s = base_round(p, state, lap, gamma, tau)?;
    let r = state - s;
    Ok(state - apply_metric(lap, &r, p.block_dim, gamma, tau) * mu)
}

/// Relaxation per round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuSchedule {
    /// `0.99 / |P_t|`.
    Auto,
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct DistributedConfig {
    pub gamma: f64,
    pub tau: f64,
    pub mu: MuSchedule,
    /// Reference consensus point for the distance trace.
    pub reference: Option<Vector>,
}

impl DistributedConfig {
    /// Steps with `1/(gamma tau) = 2 (2 d)^2` for degree bound `d` and
    /// `gamma = tau`.
    pub fn for_graphs(gs: &GraphSequence) -> Self {
        let d = gs.degree_bound().max(1) as f64;
        let g = 1.0 / (2.0 * d * 2f64.sqrt());
        Self { gamma: g, tau: g, mu: MuSchedule::Auto, reference: None }
    }
}

#[derive(Debug, Clone)]
pub struct DistributedReport {
    pub report: SolveReport,
    /// `max_{i,j} |x_i - x_j|` after every round.
    pub consensus: Vec<f64>,
    /// `|x_i - x*|` maximized over agents, when a reference is given.
    pub distance: Vec<f64>,
}

/// Iterates `Q_t` with `t = k`.
pub fn run_distributed(
    p: &DistributedProblem,
    gs: &GraphSequence,
    dc: &DistributedConfig,
    cfg: &SolveConfig,
) -> Result<DistributedReport> {
    if gs.n != p.num_agents() {
        return Err(Error::Dimension(format!("graph on {} agents, problem has {}", gs.n, p.num_agents())));
    }
    if let Some(r) = &dc.reference {
        if r.len() != p.block_dim {
            return Err(Error::Dimension(format!("reference of length {}, blocks have {}", r.len(), p.block_dim)));
        }
    }
    if let MuSchedule::Constant(mu) = dc.mu {
        if !(mu > 0.0) {
            return Err(Error::Config(format!("mu must be positive, got {mu}")));
        }
    }
    let z0 = cfg.start(p.state_len())?;
    let mut consensus = Vec::new();
    let mut distance = Vec::new();
    let report = run_iterations(cfg, z0, |t, state, counters, _| {
        let lap = gs.laplacian(t)?;
        check_steps(&lap, dc.gamma, dc.tau)?;
        let pn = metric_norm(&lap, dc.gamma, dc.tau)?;
        let mu = match dc.mu {
            MuSchedule::Auto => 0.99 / pn,
            MuSchedule::Constant(mu) => {
                if mu * pn > 1.0 + 1e-10 {
                    return Err(Error::Config(format!("mu = {mu} exceeds 1/|P_t| = {} at t = {t}", 1.0 / pn)));
                }
                mu
            }
        };
        counters.resolvent += p.num_agents() as u64;
        let next = relaxed_round(p, state, &lap, dc.gamma, dc.tau, mu)?;
        consensus.push(p.consensus_error(&next));
        if let Some(r) = &dc.reference {
            let d = (0..p.num_agents()).map(|i| (p.primal(&next, i) - r).norm()).fold(0.0, f64::max);
            distance.push(d);
        }
        Ok(Step { x: next.clone(), z: next, gamma: Some(mu) })
    });
    Ok(DistributedReport { report, consensus, distance })
}

/// Minimizer of `sum_i (w_i/2)|x - c_i|^2` computed by FBHF on the
/// aggregated gradient.
pub fn centralized_fbhf(agents: &[QuadraticAgent], cfg: &SolveConfig) -> Result<SolveReport> {
    let h = agents.first().map(|a| a.center.len()).ok_or_else(|| Error::InvalidArgument("no agents".into()))?;
    let wsum: f64 = agents.iter().map(|a| a.weight).sum();
    let mut c = Vector::zeros(h);
    for a in agents {
        c -= &a.center * a.weight;
    }
    let b1 = CocoerciveMap::affine_symmetric(Matrix::identity(h, h) * wsum, c)?;
    let gamma = 1.0 / wsum;
    let spec = ProblemSpec::new(MaximalMonotone::zero(h), b1, MonotoneMap::zero(h), ClosedConvexSet::whole(h))?;
    solve_fbhf(&spec, &StepPolicy::Constant(gamma), cfg)
}
