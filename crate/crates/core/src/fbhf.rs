//! Forward-backward-half-forward iterations with constant or backtracked
//! steps, and the forward-backward and Tseng baselines.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::operators::{Modulus, ProblemSpec};

/// Accepted steps below this value raise a diagnostic.
pub const TINY_STEP: f64 = 1e-12;
/// Threshold below which the stopping rule switches to absolute change.
const TINY_NORM: f64 = 1e-30;

/// Largest admissible constant step `4 beta / (1 + sqrt(1 + 16 beta^2 L^2))`.
pub fn chi(beta: Modulus, l: f64) -> Result<f64> {
    if !(l >= 0.0) || !l.is_finite() {
        return Err(Error::InvalidArgument(format!("Lipschitz constant must be finite and nonnegative, got {l}")));
    }
    match beta {
        Modulus::Finite(b) => {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::InvalidArgument(format!("beta must be positive, got {b}")));
            }
            if l == 0.0 {
                Ok(2.0 * b)
            } else {
                Ok(4.0 * b / (1.0 + (1.0 + 16.0 * b * b * l * l).sqrt()))
            }
        }
        Modulus::Infinite => {
            if l == 0.0 {
                Err(Error::InvalidArgument("chi is unbounded when beta is infinite and L = 0".into()))
            } else {
                Ok(1.0 / l)
            }
        }
    }
}

/// The constant step `delta beta / (1 + sqrt(1 + 16 beta^2 L^2))`, i.e.
/// `(delta / 4) chi`; admissible for `delta < 4`.
pub fn fbhf_delta_step(beta: Modulus, l: f64, delta: f64) -> Result<f64> {
    Ok(0.25 * delta * chi(beta, l)?)
}

/// Tseng's constant step `delta / (1/beta + L)`; admissible for `delta < 1`.
pub fn tseng_delta_step(beta: Modulus, l: f64, delta: f64) -> Result<f64> {
    let denom = beta.inverse() + l;
    if denom == 0.0 {
        return Err(Error::InvalidArgument("Tseng step is unbounded when B is zero".into()));
    }
    Ok(delta / denom)
}

/// Backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub epsilon: f64,
    pub sigma: f64,
    pub theta: f64,
    pub max_backtracks: usize,
    /// Replaces `2 beta epsilon` as the base of the candidate set
    /// `{base sigma, base sigma^2, ...}`; required when `beta` is infinite.
    pub initial: Option<f64>,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { epsilon: 0.88, sigma: 0.9, theta: 0.316, max_backtracks: 60, initial: None }
    }
}

impl LineSearch {
    fn validate(&self, theta_max: f64, unchecked: bool) -> Result<()> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        if !open01(self.epsilon) {
            return Err(Error::Config(format!("line-search epsilon must lie in ]0, 1[, got {}", self.epsilon)));
        }
        if !open01(self.sigma) {
            return Err(Error::Config(format!("line-search sigma must lie in ]0, 1[, got {}", self.sigma)));
        }
        if !(self.theta > 0.0) {
            return Err(Error::Config(format!("line-search theta must be positive, got {}", self.theta)));
        }
        if !unchecked && !(self.theta < theta_max) {
            return Err(Error::Config(format!(
                "line-search theta = {} must be below {theta_max} (sqrt(1 - epsilon) = sqrt(1 - {}))",
                self.theta, self.epsilon
            )));
        }
        if self.max_backtracks == 0 {
            return Err(Error::Config("max_backtracks must be at least 1".into()));
        }
        if let Some(g) = self.initial {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Config(format!("initial line-search step must be positive, got {g}")));
            }
        }
        Ok(())
    }

    fn base(&self, beta: Modulus) -> Result<f64> {
        match (self.initial, beta) {
            (Some(g), _) => Ok(g),
            (None, Modulus::Finite(b)) => Ok(2.0 * b * self.epsilon),
            (None, Modulus::Infinite) => {
                Err(Error::Config("line search needs an initial step when the cocoercive term is absent".into()))
            }
        }
    }
}

pub type StepFn = dyn Fn(usize) -> f64 + Send + Sync;

/// How the step `gamma_k` is chosen.
#[derive(Clone)]
pub enum StepPolicy {
    Constant(f64),
    /// `gamma_k = f(k)`; each value is checked when used.
    Varying(Arc<StepFn>),
    LineSearch(LineSearch),
}

impl fmt::Debug for StepPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepPolicy::Constant(g) => write!(f, "Constant({g})"),
            StepPolicy::Varying(_) => write!(f, "Varying"),
            StepPolicy::LineSearch(ls) => write!(f, "LineSearch({ls:?})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum History {
    #[default]
    ResidualOnly,
    Full,
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub max_iterations: usize,
    /// Relative-change stopping tolerance.
    pub tolerance: f64,
    pub history: History,
    pub seed: u64,
    /// Starting point; zero when absent.
    pub initial: Option<Vector>,
    /// Skip step-size admissibility checks (runs without guarantees).
    pub unchecked_stepsize: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { max_iterations: 10_000, tolerance: 1e-7, history: History::ResidualOnly, seed: 0, initial: None, unchecked_stepsize: false }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }

    pub(crate) fn start(&self, dim: usize) -> Result<Vector> {
        self.validate()?;
        match &self.initial {
            None => Ok(Vector::zeros(dim)),
            Some(z) if z.len() == dim => Ok(z.clone()),
            Some(z) => Err(Error::Dimension(format!("initial point has length {}, problem has dimension {dim}", z.len()))),
        }
    }
}

/// Exact event counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub resolvent: u64,
    pub b1: u64,
    pub b2: u64,
    pub projections: u64,
    pub backtracks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Tolerance,
    MaxIterations,
    Error(String),
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::MaxIterations => "max-iter",
            Termination::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Final iterate.
    pub z: Vector,
    /// Last auxiliary (resolvent) point.
    pub x_last: Vector,
    pub iterations: usize,
    /// Relative change per iteration.
    pub residuals: Vec<f64>,
    /// `z^0, z^1, ...` when full history was requested.
    pub history: Vec<Vector>,
    pub step_sizes: Vec<f64>,
    pub counters: Counters,
    pub termination: Termination,
    pub wall_time: Duration,
    pub diagnostics: Vec<String>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Tolerance
    }

    pub fn is_error(&self) -> bool {
        matches!(self.termination, Termination::Error(_))
    }
}

/// One iteration's output for [`run_iterations`].
pub(crate) struct Step {
    pub z: Vector,
    pub x: Vector,
    pub gamma: Option<f64>,
}

/// Shared outer loop: relative-change stopping, history, counters, timing.
pub(crate) fn run_iterations<F>(cfg: &SolveConfig, z0: Vector, mut step: F) -> SolveReport
where
    F: FnMut(usize, &Vector, &mut Counters, &mut Vec<String>) -> Result<Step>,
{
    let started = Instant::now();
    let mut counters = Counters::default();
    let mut diagnostics = Vec::new();
    let mut residuals = Vec::new();
    let mut step_sizes = Vec::new();
    let mut history = Vec::new();
    if cfg.history == History::Full {
        history.push(z0.clone());
    }
    let mut z = z0;
    let mut x_last = z.clone();
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    for k in 0..cfg.max_iterations {
        let next = match step(k, &z, &mut counters, &mut diagnostics) {
            Ok(s) => s,
            Err(e) => {
                termination = Termination::Error(format!("iteration {k}: {e}"));
                break;
            }
        };
        if !linalg::all_finite(&next.z) {
            termination = Termination::Error(format!("iteration {k}: {}", Error::NonFinite("iterate".into())));
            break;
        }
        let change = (&next.z - &z).norm();
        let nz = z.norm();
        let residual = if nz < TINY_NORM { change } else { change / nz };
        residuals.push(residual);
        if let Some(g) = next.gamma {
            step_sizes.push(g);
        }
        z = next.z;
        x_last = next.x;
        iterations += 1;
        if cfg.history == History::Full {
            history.push(z.clone());
        }
        if residual < cfg.tolerance {
            termination = Termination::Tolerance;
            break;
        }
    }

    SolveReport {
        z,
        x_last,
        iterations,
        residuals,
        history,
        step_sizes,
        counters,
        termination,
        wall_time: started.elapsed(),
        diagnostics,
    }
}

fn b1_eval(spec: &ProblemSpec, z: &Vector, c: &mut Counters) -> Option<Vector> {
    if spec.b1.is_absent() {
        None
    } else {
        c.b1 += 1;
        Some(spec.b1.eval(z))
    }
}

fn b2_eval(spec: &ProblemSpec, z: &Vector, c: &mut Counters) -> Result<Option<Vector>> {
    if spec.b2.is_zero() {
        Ok(None)
    } else {
        c.b2 += 1;
        spec.b2.eval(z).map(Some)
    }
}

fn sum_opt(a: &Option<Vector>, b: &Option<Vector>, dim: usize) -> Vector {
    match (a, b) {
        (Some(a), Some(b)) => a + b,
        (Some(a), None) => a.clone(),
        (None, Some(b)) => b.clone(),
        (None, None) => Vector::zeros(dim),
    }
}

/// `J_{gamma A}(z - gamma w)`.
fn backward(spec: &ProblemSpec, z: &Vector, w: &Vector, gamma: f64, c: &mut Counters) -> Result<Vector> {
    c.resolvent += 1;
    spec.a.resolvent(gamma, &(z - w * gamma))
}

/// `P_X(x - gamma (bx - bz))`, skipping the correction when both are absent.
fn correct(spec: &ProblemSpec, x: Vector, bx: &Option<Vector>, bz: &Option<Vector>, gamma: f64, c: &mut Counters) -> Vector {
    let y = match (bx, bz) {
        (Some(bx), Some(bz)) => &x - (bx - bz) * gamma,
        _ => x,
    };
    if spec.x_set.is_whole() {
        y
    } else {
        c.projections += 1;
        spec.x_set.project(&y)
    }
}

fn fbhf_step_counted(spec: &ProblemSpec, z: &Vector, gamma: f64, c: &mut Counters) -> Result<(Vector, Vector)> {
    let b1z = b1_eval(spec, z, c);
    let b2z = b2_eval(spec, z, c)?;
    let x = backward(spec, z, &sum_opt(&b1z, &b2z, z.len()), gamma, c)?;
    let b2x = b2_eval(spec, &x, c)?;
    let z_next = correct(spec, x.clone(), &b2x, &b2z, gamma, c);
    Ok((x, z_next))
}

/// One step: `x = J_{gamma A}(z - gamma (B1 + B2) z)`,
/// `z+ = P_X(x - gamma (B2 x - B2 z))`. Returns `(x, z+)`.
pub fn fbhf_step(spec: &ProblemSpec, z: &Vector, gamma: f64) -> Result<(Vector, Vector)> {
    fbhf_step_counted(spec, z, gamma, &mut Counters::default())
}

struct Accepted {
    gamma: f64,
    x: Vector,
    bx: Option<Vector>,
}

/// Tries `base sigma^j`, `j = 1, 2, ...` until
/// `gamma |bz - bx| <= theta |z - x|`.
fn backtrack<F>(ls: &LineSearch, base: f64, z: &Vector, bz: &Option<Vector>, c: &mut Counters, mut trial: F) -> Result<Accepted>
where
    F: FnMut(f64, &mut Counters) -> Result<(Vector, Option<Vector>)>,
{
    let mut gamma = base;
    let mut ratio = f64::NAN;
    for j in 1..=ls.max_backtracks {
        gamma *= ls.sigma;
        let (x, bx) = trial(gamma, c)?;
        let lhs = match (bz, &bx) {
            (Some(bz), Some(bx)) => gamma * (bz - bx).norm(),
            _ => 0.0,
        };
        let rhs = ls.theta * (z - &x).norm();
        if lhs <= rhs {
            c.backtracks += (j - 1) as u64;
            return Ok(Accepted { gamma, x, bx });
        }
        ratio = lhs / rhs;
    }
    c.backtracks += (ls.max_backtracks - 1) as u64;
    Err(Error::LineSearch { backtracks: ls.max_backtracks, gamma, ratio })
}

fn fbhf_line_search(spec: &ProblemSpec, z: &Vector, ls: &LineSearch, base: f64, c: &mut Counters) -> Result<(Accepted, Option<Vector>)> {
    let b1z = b1_eval(spec, z, c);
    let b2z = b2_eval(spec, z, c)?;
    let fwd = sum_opt(&b1z, &b2z, z.len());
    let acc = backtrack(ls, base, z, &b2z, c, |gamma, c| {
        let x = backward(spec, z, &fwd, gamma, c)?;
        let b2x = b2_eval(spec, &x, c)?;
        Ok((x, b2x))
    })?;
    Ok((acc, b2z))
}

/// The backtracked step at `z` and its resolvent point `x_z(gamma)`.
pub fn line_search_gamma(spec: &ProblemSpec, z: &Vector, ls: &LineSearch) -> Result<(f64, Vector)> {
    ls.validate(f64::INFINITY, true)?;
    let base = ls.base(spec.beta())?;
    let (acc, _) = fbhf_line_search(spec, z, ls, base, &mut Counters::default())?;
    Ok((acc.gamma, acc.x))
}

fn b2_lipschitz(spec: &ProblemSpec) -> Option<f64> {
    if spec.b2.is_zero() {
        Some(0.0)
    } else {
        spec.b2.lipschitz()
    }
}

fn check_step(gamma: f64, bound: Option<f64>, what: &str, unchecked: bool, diags: &mut Vec<String>) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!("step size must be positive and finite, got {gamma}")));
    }
    if let Some(b) = bound {
        if !linalg::strictly_less(gamma, b) {
            let msg = format!("step size {gamma} violates gamma < {what} = {b}");
            if unchecked {
                diags.push(format!("unchecked: {msg}"));
            } else {
                return Err(Error::Config(msg));
            }
        }
    }
    Ok(())
}

enum Resolved {
    Fixed(Box<dyn Fn(usize) -> f64>),
    Search(LineSearch, f64),
}

fn resolve_policy(policy: &StepPolicy, bound: Option<f64>, what: &str, theta_max: f64, beta: Modulus, cfg: &SolveConfig, diags: &mut Vec<String>) -> Result<Resolved> {
    match policy {
        StepPolicy::Constant(g) => {
            check_step(*g, bound, what, cfg.unchecked_stepsize, diags)?;
            let g = *g;
            Ok(Resolved::Fixed(Box::new(move |_| g)))
        }
        StepPolicy::Varying(f) => {
            // validate lazily per iteration (see the step closure)
            let f = f.clone();
            Ok(Resolved::Fixed(Box::new(move |k| f(k))))
        }
        StepPolicy::LineSearch(ls) => {
            ls.validate(theta_max, cfg.unchecked_stepsize)?;
            Ok(Resolved::Search(*ls, ls.base(beta)?))
        }
    }
}

fn note_tiny(gamma: f64, k: usize, diags: &mut Vec<String>) {
    if gamma < TINY_STEP {
        diags.push(format!("iteration {k}: accepted step {gamma:e} is below {TINY_STEP:e}"));
    }
}

/// Forward-backward-half-forward iteration.
pub fn solve_fbhf(spec: &ProblemSpec, policy: &StepPolicy, cfg: &SolveConfig) -> Result<SolveReport> {
    let z0 = cfg.start(spec.dim())?;
    let lip = b2_lipschitz(spec);
    let mut setup_diags = Vec::new();
    let bound = match (spec.beta(), lip) {
        (_, None) => {
            if !matches!(policy, StepPolicy::LineSearch(_)) {
                return Err(Error::Config("B2 has no Lipschitz constant: a line-search policy is required".into()));
            }
            None
        }
        (Modulus::Infinite, Some(l)) if l == 0.0 => None,
        (beta, Some(l)) => Some(chi(beta, l)?),
    };
    let theta_max = match policy {
        StepPolicy::LineSearch(ls) => (1.0 - ls.epsilon).max(0.0).sqrt(),
        _ => 1.0,
    };
    let resolved = resolve_policy(policy, bound, "chi", theta_max, spec.beta(), cfg, &mut setup_diags)?;
    let unchecked = cfg.unchecked_stepsize;
    let mut report = run_iterations(cfg, z0, |k, z, c, diags| match &resolved {
        Resolved::Fixed(f) => {
            let gamma = f(k);
            if matches!(policy, StepPolicy::Varying(_)) {
                check_step(gamma, bound, "chi", unchecked, diags)?;
            }
            let (x, zn) = fbhf_step_counted(spec, z, gamma, c)?;
            Ok(Step { z: zn, x, gamma: Some(gamma) })
        }
        Resolved::Search(ls, base) => {
            let (acc, b2z) = fbhf_line_search(spec, z, ls, *base, c)?;
            note_tiny(acc.gamma, k, diags);
            let zn = correct(spec, acc.x.clone(), &acc.bx, &b2z, acc.gamma, c);
            Ok(Step { z: zn, x: acc.x, gamma: Some(acc.gamma) })
        }
    });
    setup_diags.append(&mut report.diagnostics);
    report.diagnostics = setup_diags;
    Ok(report)
}

fn tseng_b(spec: &ProblemSpec, z: &Vector, c: &mut Counters) -> Result<Option<Vector>> {
    let b1 = b1_eval(spec, z, c);
    let b2 = b2_eval(spec, z, c)?;
    Ok(match (b1, b2) {
        (None, None) => None,
        (a, b) => Some(sum_opt(&a, &b, z.len())),
    })
}

/// Tseng's forward-backward-forward iteration on `B = B1 + B2`:
/// `x = J_{gamma A}(z - gamma Bz)`, `z+ = P_X(x - gamma (Bx - Bz))`.
pub fn solve_tseng_fbf(spec: &ProblemSpec, policy: &StepPolicy, cfg: &SolveConfig) -> Result<SolveReport> {
    let z0 = cfg.start(spec.dim())?;
    let lip = b2_lipschitz(spec);
    let mut setup_diags = Vec::new();
    let bound = match lip {
        None => {
            if !matches!(policy, StepPolicy::LineSearch(_)) {
                return Err(Error::Config("B2 has no Lipschitz constant: a line-search policy is required".into()));
            }
            None
        }
        Some(l) => {
            let denom = spec.beta().inverse() + l;
            if denom == 0.0 {
                None
            } else {
                Some(1.0 / denom)
            }
        }
    };
    let resolved = resolve_policy(policy, bound, "1/(1/beta + L)", 1.0, spec.beta(), cfg, &mut setup_diags)?;
    let unchecked = cfg.unchecked_stepsize;
    let mut report = run_iterations(cfg, z0, |k, z, c, diags| {
        let bz = tseng_b(spec, z, c)?;
        let wz = bz.clone().unwrap_or_else(|| Vector::zeros(z.len()));
        match &resolved {
            Resolved::Fixed(f) => {
                let gamma = f(k);
                if matches!(policy, StepPolicy::Varying(_)) {
                    check_step(gamma, bound, "1/(1/beta + L)", unchecked, diags)?;
                }
                let x = backward(spec, z, &wz, gamma, c)?;
                let bx = tseng_b(spec, &x, c)?;
                let zn = correct(spec, x.clone(), &bx, &bz, gamma, c);
                Ok(Step { z: zn, x, gamma: Some(gamma) })
            }
            Resolved::Search(ls, base) => {
                let acc = backtrack(ls, *base, z, &bz, c, |gamma, c| {
                    let x = backward(spec, z, &wz, gamma, c)?;
                    let bx = tseng_b(spec, &x, c)?;
                    Ok((x, bx))
                })?;
                note_tiny(acc.gamma, k, diags);
                let zn = correct(spec, acc.x.clone(), &acc.bx, &bz, acc.gamma, c);
                Ok(Step { z: zn, x: acc.x, gamma: Some(acc.gamma) })
            }
        }
    });
    setup_diags.append(&mut report.diagnostics);
    report.diagnostics = setup_diags;
    Ok(report)
}

/// Classical forward-backward `z+ = J_{gamma A}(z - gamma B1 z)` for
/// `gamma in ]0, 2 beta[`; requires `B2 = 0` and `X` the whole space.
pub fn solve_forward_backward(spec: &ProblemSpec, gamma: f64, cfg: &SolveConfig) -> Result<SolveReport> {
    if !spec.b2.is_zero() {
        return Err(Error::Config("forward-backward requires B2 = 0".into()));
    }
    if !spec.x_set.is_whole() {
        return Err(Error::Config("forward-backward requires X to be the whole space".into()));
    }
    let z0 = cfg.start(spec.dim())?;
    let bound = spec.beta().value().map(|b| 2.0 * b);
    let mut setup_diags = Vec::new();
    check_step(gamma, bound, "2 beta", cfg.unchecked_stepsize, &mut setup_diags)?;
    let mut report = run_iterations(cfg, z0, |_, z, c, _| {
        let b1z = b1_eval(spec, z, c).unwrap_or_else(|| Vector::zeros(z.len()));
        let zn = backward(spec, z, &b1z, gamma, c)?;
        Ok(Step { z: zn.clone(), x: zn, gamma: Some(gamma) })
    });
    setup_diags.append(&mut report.diagnostics);
    report.diagnostics = setup_diags;
    Ok(report)
}

/// `phi_z(gamma) = |z - x_z(gamma)| / gamma` on a grid, where
/// `x_z(gamma) = J_{gamma A}(z - gamma (B1 + B2) z)`.
pub fn phi_z_profile(spec: &ProblemSpec, z: &Vector, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty step grid".into()));
    }
    if grid.iter().any(|&g| !(g > 0.0)) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("step grid must be positive and increasing".into()));
    }
    let mut c = Counters::default();
    let b1z = b1_eval(spec, z, &mut c);
    let b2z = b2_eval(spec, z, &mut c)?;
    let fwd = sum_opt(&b1z, &b2z, z.len());
    grid.iter()
        .map(|&gamma| {
            let x = backward(spec, z, &fwd, gamma, &mut c)?;
            Ok((z - x).norm() / gamma)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::operators::{CocoerciveMap, ClosedConvexSet, MaximalMonotone, MonotoneMap};
    use approx::assert_relative_eq;

    fn scalar_problem() -> ProblemSpec {
        // A = N_[0, inf), B1 = x - 1 (beta = 1)
        let a = MaximalMonotone::normal_cone_nonneg(1);
        let b1 = CocoerciveMap::new(1, "shift", 1.0, |x| x.map(|t| t - 1.0)).unwrap();
        ProblemSpec::new(a, b1, MonotoneMap::zero(1), ClosedConvexSet::whole(1)).unwrap()
    }

    fn rotation_problem() -> ProblemSpec {
        let rot = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        ProblemSpec::new(MaximalMonotone::zero(2), CocoerciveMap::absent(2), MonotoneMap::linear(rot).unwrap(), ClosedConvexSet::whole(2)).unwrap()
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi(Modulus::Finite(1.0), 0.0).unwrap(), 2.0);
        assert_eq!(chi(Modulus::Infinite, 2.0).unwrap(), 0.5);
        assert_relative_eq!(chi(Modulus::Finite(1.0), 1.0).unwrap(), 4.0 / (1.0 + 17f64.sqrt()), epsilon = 1e-15);
        assert_relative_eq!(chi(Modulus::Finite(1.0), 1.0).unwrap(), 0.780_776_406_404_415_1, epsilon = 1e-12);
        assert!(chi(Modulus::Infinite, 0.0).is_err());
        assert!(chi(Modulus::Finite(-1.0), 1.0).is_err());
    }

    #[test]
    fn step_examples() {
        let spec = scalar_problem();
        let (x, zn) = fbhf_step(&spec, &Vector::zeros(1), 1.0).unwrap();
        assert_eq!(x[0], 1.0);
        assert_eq!(zn[0], 1.0);

        let spec = rotation_problem();
        let z = Vector::from_vec(vec![0.3, -1.2]);
        let (_, zn) = fbhf_step(&spec, &z, 0.5).unwrap();
        assert_relative_eq!(zn.norm_squared(), 0.8125 * z.norm_squared(), epsilon = 1e-14);
        let bz = Vector::from_vec(vec![z[1], -z[0]]);
        assert_relative_eq!(zn, &z * 0.75 - bz * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_is_fixed() {
        let spec = scalar_problem();
        let z = Vector::from_element(1, 1.0);
        for gamma in [0.1, 1.0, 1.9] {
            assert_eq!(fbhf_step(&spec, &z, gamma).unwrap().1, z);
        }
    }

    #[test]
    fn line_search_without_b2_accepts_first_candidate() {
        let spec = scalar_problem();
        let ls = LineSearch::default();
        let (gamma, _) = line_search_gamma(&spec, &Vector::zeros(1), &ls).unwrap();
        assert_relative_eq!(gamma, 2.0 * 0.88 * 0.9, epsilon = 1e-15);
    }

    #[test]
    fn line_search_failure_carries_ratio() {
        let spec = rotation_problem();
        let ls = LineSearch { theta: 1e-9, max_backtracks: 3, initial: Some(1.0), ..LineSearch::default() };
        match line_search_gamma(&spec, &Vector::from_vec(vec![1.0, 0.0]), &ls) {
            Err(Error::LineSearch { backtracks, gamma, ratio }) => {
                assert_eq!(backtracks, 3);
                assert_relative_eq!(gamma, 0.9f64.powi(3), epsilon = 1e-15);
                assert!(ratio > 1.0);
            }
            other => panic!("expected line-search failure, got {other:?}"),
        }
    }

    #[test]
    fn phi_examples() {
        let spec = scalar_problem();
        let grid = [0.01, 0.1, 0.5, 1.0, 3.0];
        for v in phi_z_profile(&spec, &Vector::zeros(1), &grid).unwrap() {
            assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        }
        for v in phi_z_profile(&spec, &Vector::from_element(1, 1.0), &grid).unwrap() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn policy_pairing_is_checked() {
        let spec = ProblemSpec::new(
            MaximalMonotone::zero(1),
            CocoerciveMap::absent(1),
            MonotoneMap::new(1, "cubic", None, |x| Ok(x.map(|t| t * t * t))).unwrap(),
            ClosedConvexSet::whole(1),
        )
        .unwrap();
        let cfg = SolveConfig::default();
        assert!(matches!(solve_fbhf(&spec, &StepPolicy::Constant(0.1), &cfg), Err(Error::Config(_))));
        assert!(matches!(solve_tseng_fbf(&spec, &StepPolicy::Constant(0.1), &cfg), Err(Error::Config(_))));

        let spec = rotation_problem();
        assert!(matches!(solve_fbhf(&spec, &StepPolicy::Constant(1.0), &cfg), Err(Error::Config(_))));
        assert!(solve_fbhf(&spec, &StepPolicy::Constant(0.99), &cfg).is_ok());
        assert!(matches!(solve_forward_backward(&spec, 0.1, &cfg), Err(Error::Config(_))));

        let spec = scalar_problem();
        assert!(matches!(solve_forward_backward(&spec, 2.0, &cfg), Err(Error::Config(_))));
        assert!(solve_forward_backward(&spec, 1.99, &cfg).is_ok());
        let unchecked = SolveConfig { unchecked_stepsize: true, ..SolveConfig::default() };
        let rep = solve_forward_backward(&spec, 2.0, &unchecked).unwrap();
        assert!(rep.diagnostics.iter().any(|d| d.contains("unchecked")));
    }

    #[test]
    fn forward_backward_one_step() {
        let spec = scalar_problem();
        let rep = solve_forward_backward(&spec, 1.0, &SolveConfig { history: History::Full, ..SolveConfig::default() }).unwrap();
        assert_eq!(rep.history[1][0], 1.0);
        assert!(rep.converged());
        assert_eq!(rep.iterations, 2);
    }

    #[test]
    fn rotation_converges_to_origin() {
        let spec = rotation_problem();
        let cfg = SolveConfig { initial: Some(Vector::from_vec(vec![1.0, 1.0])), max_iterations: 10_000, tolerance: 1e-12, ..SolveConfig::default() };
        let rep = solve_fbhf(&spec, &StepPolicy::Constant(0.5), &cfg).unwrap();
        assert!(rep.z.norm() < 1e-9);
        assert_eq!(rep.counters.b1, 0);
        assert_eq!(rep.counters.b2, 2 * rep.iterations as u64);
    }

    #[test]
    fn zero_start_uses_absolute_change() {
        let spec = scalar_problem();
        let rep = solve_fbhf(&spec, &StepPolicy::Constant(1.0), &SolveConfig::default()).unwrap();
        assert_eq!(rep.residuals[0], 1.0);
    }

    #[test]
    fn varying_policy_is_checked_per_iteration() {
        let spec = rotation_problem();
        let policy = StepPolicy::Varying(Arc::new(|k| if k < 3 { 0.5 } else { 2.0 }));
        let cfg = SolveConfig { initial: Some(Vector::from_vec(vec![1.0, 0.0])), ..SolveConfig::default() };
        let rep = solve_fbhf(&spec, &policy, &cfg).unwrap();
        assert!(rep.is_error());
        assert_eq!(rep.iterations, 3);
    }
}
