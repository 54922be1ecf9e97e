//! Non-self-adjoint preconditioning: resolvents `J_{P^{-1}A}`, the
//! preconditioned FBHF iteration, the class-T transform and the
//! inversion-free variable-metric scheme.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fbhf::{run_iterations, Counters, SolveConfig, SolveReport, Step};
use crate::linalg::{self, LuFactor, Matrix, SpdFactor, Vector};
use crate::operators::{MaximalMonotone, Modulus, MonotoneMap, ProblemSpec};

/// Number of random pairs used to validate a user-supplied Lipschitz bound.
pub const K_SAMPLES: usize = 1000;

/// `P = U + S` with its cached factorizations and spectral constants.
#[derive(Clone)]
pub struct Preconditioner {
    p: Matrix,
    u: Matrix,
    s: Matrix,
    rho: f64,
    u_norm: f64,
    p_norm: f64,
    u_factor: SpdFactor,
    p_factor: LuFactor,
    /// `Some(gamma)` when `P = Id / gamma` exactly.
    scale: Option<f64>,
    skew_free: bool,
    lower_triangular: bool,
}

impl fmt::Debug for Preconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Preconditioner")
            .field("dim", &self.dim())
            .field("rho", &self.rho)
            .field("u_norm", &self.u_norm)
            .field("scale", &self.scale)
            .finish()
    }
}

impl Preconditioner {
    pub fn new(p: Matrix) -> Result<Self> {
        let (u, s) = linalg::split_symmetric_skew(&p)?;
        let rho = linalg::symmetric_min_eig(&u, linalg::SPECTRAL_TOL)?;
        if !(rho > 0.0) {
            return Err(Error::Condition(format!("symmetric part of P is not positive definite (smallest eigenvalue {rho:e})")));
        }
        let u_norm = linalg::norm2(&u)?;
        let p_norm = linalg::norm2(&p)?;
        let u_factor = SpdFactor::new(&u)?;
        let p_factor = LuFactor::new(&p)?;
        let skew_free = s.iter().all(|&x| x == 0.0);
        let lower_triangular = linalg::is_lower_triangular(&p);
        Ok(Self { p, u, s, rho, u_norm, p_norm, u_factor, p_factor, scale: None, skew_free, lower_triangular })
    }

    /// `P = Id / gamma`.
    pub fn scaled_identity(dim: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {gamma}")));
        }
        let mut pre = Self::new(Matrix::identity(dim, dim) / gamma)?;
        pre.scale = Some(gamma);
        Ok(pre)
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }
    pub fn p(&self) -> &Matrix {
        &self.p
    }
    pub fn u(&self) -> &Matrix {
        &self.u
    }
    pub fn s(&self) -> &Matrix {
        &self.s
    }
    /// Strong-monotonicity modulus: the smallest eigenvalue of `U`.
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn u_norm(&self) -> f64 {
        self.u_norm
    }
    pub fn p_norm(&self) -> f64 {
        self.p_norm
    }
    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    /// `P^{-1} v`.
    pub fn solve_p(&self, v: &Vector) -> Result<Vector> {
        match self.scale {
            Some(g) => Ok(v * g),
            None => self.p_factor.solve(v),
        }
    }

    /// `U^{-1} v`.
    pub fn solve_u(&self, v: &Vector) -> Vector {
        match self.scale {
            Some(g) => v * g,
            None => self.u_factor.solve(v),
        }
    }

    /// `P v`.
    pub fn apply(&self, v: &Vector) -> Vector {
        match self.scale {
            Some(g) => v / g,
            None => &self.p * v,
        }
    }
}

/// The point `x` with `P(z - x) in Ax`, i.e. `J_{P^{-1}A}(z)`.
///
/// Supported: `A = 0`; `P = Id / gamma` (any `A`); linear `A`; separable `A`
/// with lower-triangular `P`, by forward substitution.
pub fn resolvent_via_p(a: &MaximalMonotone, pre: &Preconditioner, z: &Vector) -> Result<Vector> {
    let n = pre.dim();
    if a.dim() != n || z.len() != n {
        return Err(Error::Dimension(format!("operator of dimension {}, metric {n}, point {}", a.dim(), z.len())));
    }
    if a.is_zero() {
        return Ok(z.clone());
    }
    if let Some(g) = pre.scale {
        return a.resolvent(g, z);
    }
    if let Some(m) = a.linear_matrix() {
        // J_{U^{-1}(A+S)}(z + U^{-1}Sz): with w = z + U^{-1}Sz the point
        // solves (U + M + S)x = Uw = Pz.
        let w = z + pre.solve_u(&(&pre.s * z));
        let rhs = &pre.u * &w;
        return linalg::solve_linear(&(&pre.p + m), &rhs);
    }
    if a.is_separable() && pre.lower_triangular {
        let p = &pre.p;
        let mut x = Vector::zeros(n);
        for i in 0..n {
            let pii = p[(i, i)];
            let mut acc = 0.0;
            for j in 0..i {
                acc += p[(i, j)] * (z[j] - x[j]);
            }
            x[i] = a.scalar_resolvent(i, 1.0 / pii, z[i] + acc / pii).expect("separable operator");
        }
        return Ok(x);
    }
    Err(Error::NoCompositeResolvent(format!(
        "{} under a {}x{} metric that is neither scalar nor lower triangular",
        a.tag(),
        n,
        n
    )))
}

/// Lipschitz constant of `B2 - S`: `|D - S|` for linear `B2 = D`, otherwise
/// the user bound `k`, checked on [`K_SAMPLES`] random pairs.
pub fn lipschitz_b2_minus_s(b2: &MonotoneMap, pre: &Preconditioner, k: Option<f64>, seed: u64) -> Result<f64> {
    if let Some(d) = b2.linear_matrix() {
        return linalg::norm2(&(d - &pre.s));
    }
    let k = k.ok_or_else(|| Error::Config("B2 is nonlinear: a Lipschitz bound for B2 - S must be supplied".into()))?;
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::Config(format!("Lipschitz bound must be finite and nonnegative, got {k}")));
    }
    let n = pre.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| Vector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let mut tested = 0;
    for _ in 0..K_SAMPLES {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        if !b2.in_domain(&x) || !b2.in_domain(&y) {
            continue;
        }
        let fx = b2.eval(&x)? - &pre.s * &x;
        let fy = b2.eval(&y)? - &pre.s * &y;
        let lhs = (fx - fy).norm();
        let rhs = k * (&x - &y).norm();
        if lhs > rhs + 1e-10 {
            return Err(Error::Config(format!("supplied bound K = {k} is violated: |F x - F y| = {lhs} > K |x - y| = {rhs}")));
        }
        tested += 1;
    }
    if tested == 0 {
        return Err(Error::Config("no sampled pair fell inside the domain of B2; cannot validate K".into()));
    }
    Ok(k)
}

/// `K^2 < rho (rho - 1/(2 beta))` with the crate margin.
pub fn check_metric_condition(k: f64, rho: f64, beta: Modulus) -> Result<()> {
    let rhs = rho * (rho - beta.half_inverse());
    let lhs = k * k;
    if !(rho > beta.half_inverse()) || !linalg::strictly_less(lhs, rhs) {
        return Err(Error::Condition(format!(
            "K^2 = {lhs} must be < rho (rho - 1/(2 beta)) = {rhs} (K = {k}, rho = {rho}, beta = {beta})"
        )));
    }
    Ok(())
}

/// Preconditioned FBHF:
/// `x = J_{P^{-1}A}(z - P^{-1}(B1 + B2)z)`,
/// `z+ = P_X^U(x + U^{-1}(B2 z - B2 x - S(z - x)))`.
///
/// `k` is required only when `B2` is nonlinear.
pub fn solve_precond_fbhf(spec: &ProblemSpec, pre: &Preconditioner, k: Option<f64>, cfg: &SolveConfig) -> Result<SolveReport> {
    if pre.dim() != spec.dim() {
        return Err(Error::Dimension(format!("metric of dimension {}, problem {}", pre.dim(), spec.dim())));
    }
    let z0 = cfg.start(spec.dim())?;
    let kk = if spec.b2.is_zero() && pre.skew_free { 0.0 } else { lipschitz_b2_minus_s(&spec.b2, pre, k, cfg.seed)? };
    check_metric_condition(kk, pre.rho, spec.beta())?;
    if !spec.x_set.supports_metric(&pre.u) {
        return Err(Error::Config("X has no closed-form projection in the metric of U (needs X = H or a box with diagonal U)".into()));
    }
    let whole = spec.x_set.is_whole();
    Ok(run_iterations(cfg, z0, |_, z, c, _| {
        let b2z = eval_b2(spec, z, c)?;
        let fwd = forward_sum(spec, z, &b2z, c);
        let w = match &fwd {
            Some(f) => z - pre.solve_p(f)?,
            None => z.clone(),
        };
        c.resolvent += 1;
        let x = resolvent_via_p(&spec.a, pre, &w)?;
        let b2x = eval_b2(spec, &x, c)?;
        let mut corr = match (&b2z, &b2x) {
            (Some(bz), Some(bx)) => Some(bz - bx),
            _ => None,
        };
        if !pre.skew_free {
            let sk = &pre.s * (z - &x);
            corr = Some(match corr {
                Some(v) => v - sk,
                None => -sk,
            });
        }
        let y = match corr {
            Some(v) => &x + pre.solve_u(&v),
            None => x.clone(),
        };
        let zn = if whole {
            y
        } else {
            c.projections += 1;
            spec.x_set.project_in_metric(&pre.u, &y)?
        };
        Ok(Step { z: zn, x, gamma: None })
    }))
}

fn eval_b2(spec: &ProblemSpec, z: &Vector, c: &mut Counters) -> Result<Option<Vector>> {
    if spec.b2.is_zero() {
        return Ok(None);
    }
    c.b2 += 1;
    spec.b2.eval(z).map(Some)
}

/// `B1 z + B2 z` (one B1 evaluation), `None` when both vanish.
fn forward_sum(spec: &ProblemSpec, z: &Vector, b2z: &Option<Vector>, c: &mut Counters) -> Option<Vector> {
    let b1z = if spec.b1.is_absent() {
        None
    } else {
        c.b1 += 1;
        Some(spec.b1.eval(z))
    };
    match (b1z, b2z) {
        (Some(a), Some(b)) => Some(a + b),
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(b.clone()),
        (None, None) => None,
    }
}

pub type OperatorFn = dyn Fn(&Vector) -> Result<Vector> + Send + Sync;

/// `Q = Id - mu U (Id - T)`, which stays in class T and keeps `Fix T`.
#[derive(Clone)]
pub struct TClassTransform {
    op: Arc<OperatorFn>,
    u: Matrix,
    mu: f64,
}

impl TClassTransform {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn apply(&self, z: &Vector) -> Result<Vector> {
        let tz = (self.op)(z)?;
        Ok(z - &self.u * (z - tz) * self.mu)
    }
}

/// Builds `Q = Id - mu U (Id - T)` for `mu in ]0, 1/|U|]`.
pub fn t_class_transform(op: Arc<OperatorFn>, u: Matrix, mu: f64) -> Result<TClassTransform> {
    let norm = linalg::norm2(&u)?;
    if !(mu > 0.0) || mu * norm > 1.0 + linalg::SPECTRAL_TOL {
        return Err(Error::InvalidArgument(format!("mu = {mu} must lie in ]0, 1/|U|] = ]0, {}]", 1.0 / norm)));
    }
    Ok(TClassTransform { op, u, mu })
}

pub type MetricFn = dyn Fn(usize) -> Matrix + Send + Sync;

#[derive(Clone)]
pub enum ScheduleKind {
    Constant(Matrix),
    /// `P_k = list[k mod len]`.
    Cyclic(Vec<Matrix>),
    FromFn(Arc<MetricFn>),
}

/// Relaxation `lambda_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relaxation {
    Fixed(f64),
    /// `lambda_k = 1/|U_k| - epsilon`, the top of the admissible interval.
    Largest,
}

/// A sequence of metrics `P_k` with margin `epsilon` and relaxations.
#[derive(Clone)]
pub struct MetricSchedule {
    pub kind: ScheduleKind,
    /// Defaults to `min(0.01, 1/(4M))`, `M = sup |U_k|`; required for
    /// [`ScheduleKind::FromFn`].
    pub epsilon: Option<f64>,
    pub relaxation: Relaxation,
    /// Lipschitz bound of `B2 - S_k` for nonlinear `B2`.
    pub k_bound: Option<f64>,
}

impl MetricSchedule {
    pub fn constant(p: Matrix) -> Self {
        Self { kind: ScheduleKind::Constant(p), epsilon: None, relaxation: Relaxation::Largest, k_bound: None }
    }

    pub fn cyclic(ps: Vec<Matrix>) -> Self {
        Self { kind: ScheduleKind::Cyclic(ps), epsilon: None, relaxation: Relaxation::Largest, k_bound: None }
    }

    pub fn from_fn(f: Arc<MetricFn>, epsilon: f64) -> Self {
        Self { kind: ScheduleKind::FromFn(f), epsilon: Some(epsilon), relaxation: Relaxation::Largest, k_bound: None }
    }

    pub fn with_relaxation(mut self, r: Relaxation) -> Self {
        self.relaxation = r;
        self
    }

    pub fn matrix(&self, k: usize) -> Result<Matrix> {
        match &self.kind {
            ScheduleKind::Constant(p) => Ok(p.clone()),
            ScheduleKind::Cyclic(ps) if ps.is_empty() => Err(Error::Config("empty cyclic schedule".into())),
            ScheduleKind::Cyclic(ps) => Ok(ps[k % ps.len()].clone()),
            ScheduleKind::FromFn(f) => Ok(f(k)),
        }
    }

    fn epsilon(&self) -> Result<f64> {
        let eps = match (self.epsilon, &self.kind) {
            (Some(e), _) => e,
            (None, ScheduleKind::FromFn(_)) => return Err(Error::Config("a functional metric schedule needs an explicit epsilon".into())),
            (None, ScheduleKind::Constant(p)) => default_epsilon(std::slice::from_ref(p))?,
            (None, ScheduleKind::Cyclic(ps)) => default_epsilon(ps)?,
        };
        if !(eps > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
        }
        Ok(eps)
    }
}

fn default_epsilon(ps: &[Matrix]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for p in ps {
        let (u, _) = linalg::split_symmetric_skew(p)?;
        m = m.max(linalg::norm2(&u)?);
    }
    Ok(0.01f64.min(0.25 / m))
}

/// Verified data for one metric of a schedule.
#[derive(Debug, Clone)]
pub struct MetricCheck {
    pub pre: Preconditioner,
    pub k: f64,
    pub lambda: f64,
}

/// Checks, for iteration `k`,
/// `K_k^2 <= (rho_k/(1+eps)) (rho_k/(1+eps) - 1/(2 beta))` and
/// `lambda_k in [eps, 1/|U_k| - eps]`.
pub fn check_metric_at(spec: &ProblemSpec, sched: &MetricSchedule, k: usize, seed: u64) -> Result<MetricCheck> {
    let eps = sched.epsilon()?;
    let p = sched.matrix(k)?;
    check_metric_matrix(spec, sched, p, eps, k, seed)
}

fn check_metric_matrix(spec: &ProblemSpec, sched: &MetricSchedule, p: Matrix, eps: f64, k: usize, seed: u64) -> Result<MetricCheck> {
    if p.nrows() != spec.dim() {
        return Err(Error::Dimension(format!("metric at k = {k} has dimension {}, problem {}", p.nrows(), spec.dim())));
    }
    let pre = Preconditioner::new(p).map_err(|e| Error::Condition(format!("k = {k}: {e}")))?;
    let kk = if spec.b2.is_zero() && pre.skew_free { 0.0 } else { lipschitz_b2_minus_s(&spec.b2, &pre, sched.k_bound, seed)? };
    let r = pre.rho / (1.0 + eps);
    let rhs = r * (r - spec.beta().half_inverse());
    if !(r > spec.beta().half_inverse()) || !(kk * kk <= rhs) {
        return Err(Error::Condition(format!(
            "k = {k}: K_k^2 = {} must be <= (rho_k/(1+eps))(rho_k/(1+eps) - 1/(2 beta)) = {rhs} (rho_k = {}, eps = {eps})",
            kk * kk,
            pre.rho
        )));
    }
    let top = 1.0 / pre.u_norm - eps;
    let lambda = match sched.relaxation {
        Relaxation::Fixed(l) => l,
        Relaxation::Largest => top,
    };
    if !(lambda >= eps && lambda <= top) {
        return Err(Error::Condition(format!("k = {k}: lambda_k = {lambda} must lie in [eps, 1/|U_k| - eps] = [{eps}, {top}]")));
    }
    Ok(MetricCheck { pre, k: kk, lambda })
}

/// Variable-metric FBHF without inverting `U_k` in the correction:
/// `x = J_{P_k^{-1}A}(z - P_k^{-1}(B1 + B2)z)`,
/// `z+ = z + lambda_k (P_k(x - z) + B2 z - B2 x)`. Requires `X = H`.
pub fn solve_variable_metric(spec: &ProblemSpec, sched: &MetricSchedule, cfg: &SolveConfig) -> Result<SolveReport> {
    if !spec.x_set.is_whole() {
        return Err(Error::Config("the variable-metric scheme requires X to be the whole space".into()));
    }
    let z0 = cfg.start(spec.dim())?;
    let eps = sched.epsilon()?;
    // Finite schedules are validated up front; functional ones per iteration.
    let mut cache: HashMap<usize, MetricCheck> = HashMap::new();
    let period = match &sched.kind {
        ScheduleKind::Constant(_) => Some(1),
        ScheduleKind::Cyclic(ps) => Some(ps.len()),
        ScheduleKind::FromFn(_) => None,
    };
    if let Some(n) = period {
        if n == 0 {
            return Err(Error::Config("empty cyclic schedule".into()));
        }
        for k in 0..n {
            cache.insert(k, check_metric_matrix(spec, sched, sched.matrix(k)?, eps, k, cfg.seed)?);
        }
    }
    Ok(run_iterations(cfg, z0, |k, z, c, _| {
        let fresh;
        let check = match period {
            Some(n) => &cache[&(k % n)],
            None => {
                fresh = check_metric_matrix(spec, sched, sched.matrix(k)?, eps, k, cfg.seed)?;
                &fresh
            }
        };
        let pre = &check.pre;
        let b2z = eval_b2(spec, z, c)?;
        let fwd = forward_sum(spec, z, &b2z, c);
        let w = match &fwd {
            Some(f) => z - pre.solve_p(f)?,
            None => z.clone(),
        };
        c.resolvent += 1;
        let x = resolvent_via_p(&spec.a, pre, &w)?;
        let b2x = eval_b2(spec, &x, c)?;
        let mut dir = pre.apply(&(&x - z));
        if let (Some(bz), Some(bx)) = (&b2z, &b2x) {
            dir += bz - bx;
        }
        let zn = z + dir * check.lambda;
        Ok(Step { z: zn, x, gamma: Some(check.lambda) })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbhf::{solve_fbhf, StepPolicy};
    use crate::operators::{ClosedConvexSet, CocoerciveMap};
    use approx::assert_relative_eq;

    fn m(r: usize, c: usize, d: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, d)
    }

    #[test]
    fn resolvent_examples() {
        let a = MaximalMonotone::linear(Matrix::identity(2, 2)).unwrap();
        let pre = Preconditioner::new(m(2, 2, &[2.0, 1.0, 0.0, 2.0])).unwrap();
        let x = resolvent_via_p(&a, &pre, &Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_relative_eq!(x, Vector::from_vec(vec![2.0 / 3.0, 0.0]), epsilon = 1e-14);

        let boxed = MaximalMonotone::normal_cone_box(Vector::from_element(2, 0.0), Vector::from_element(2, 1.0)).unwrap();
        let pre = Preconditioner::scaled_identity(2, 0.3).unwrap();
        let z = Vector::from_vec(vec![1.7, -0.2]);
        assert_eq!(resolvent_via_p(&boxed, &pre, &z).unwrap(), boxed.resolvent(0.3, &z).unwrap());

        // 0 in Az (z inside the box) and Sz = 0 (S = 0 here)
        let pre = Preconditioner::new(m(2, 2, &[2.0, 0.0, 0.0, 3.0])).unwrap();
        let z = Vector::from_vec(vec![0.4, 0.6]);
        assert_eq!(resolvent_via_p(&boxed, &pre, &z).unwrap(), z);
    }

    #[test]
    fn triangular_forward_substitution_solves_inclusion() {
        // A = N_{[0, inf)^2}, P lower triangular: check P(z - x) in A x
        let a = MaximalMonotone::normal_cone_nonneg(2);
        let pre = Preconditioner::new(m(2, 2, &[2.0, 0.0, -1.0, 2.0])).unwrap();
        let z = Vector::from_vec(vec![-1.0, 0.3]);
        let x = resolvent_via_p(&a, &pre, &z).unwrap();
        let r = pre.p() * (&z - &x);
        for i in 0..2 {
            assert!(x[i] >= 0.0);
            if x[i] > 0.0 {
                assert!(r[i].abs() < 1e-14);
            } else {
                assert!(r[i] <= 1e-14);
            }
        }
    }

    #[test]
    fn unsupported_composite_resolvent() {
        let a = MaximalMonotone::normal_cone_nonneg(2);
        let pre = Preconditioner::new(m(2, 2, &[2.0, 1.0, 0.0, 2.0])).unwrap();
        assert!(matches!(resolvent_via_p(&a, &pre, &Vector::zeros(2)), Err(Error::NoCompositeResolvent(_))));
    }

    #[test]
    fn condition_boundary_is_rejected() {
        // rho = 1, beta = 1: rho (rho - 1/2) = 1/2
        let k = 0.5f64.sqrt();
        assert!(check_metric_condition(k, 1.0, Modulus::Finite(1.0)).is_err());
        assert!(check_metric_condition(k * 0.999, 1.0, Modulus::Finite(1.0)).is_ok());
        assert!(check_metric_condition(0.0, 0.4, Modulus::Finite(1.0)).is_err());
    }

    #[test]
    fn t_class_examples() {
        let op: Arc<OperatorFn> = Arc::new(|z: &Vector| Ok(z.map(|t| t.max(0.0))));
        let q = t_class_transform(op.clone(), Matrix::identity(2, 2), 1.0).unwrap();
        let z = Vector::from_vec(vec![-1.0, 2.0]);
        assert_eq!(q.apply(&z).unwrap(), op(&z).unwrap());
        let u = m(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let norm = linalg::norm2(&u).unwrap();
        assert!(t_class_transform(op.clone(), u.clone(), 1.01 / norm).is_err());
        assert!(t_class_transform(op.clone(), u.clone(), 0.0).is_err());
        let q = t_class_transform(op, u, 1.0 / norm).unwrap();
        let fixed = Vector::from_vec(vec![0.5, 3.0]);
        assert_eq!(q.apply(&fixed).unwrap(), fixed);
    }

    #[test]
    fn scaled_identity_reproduces_fbhf_bitwise() {
        let d = m(2, 2, &[0.5, 1.0, -1.0, 0.2]);
        let q = m(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let spec = ProblemSpec::new(
            MaximalMonotone::normal_cone_box(Vector::from_element(2, -0.3), Vector::from_element(2, 0.4)).unwrap(),
            CocoerciveMap::affine_symmetric(q, Vector::from_vec(vec![1.0, -2.0])).unwrap(),
            MonotoneMap::linear(d).unwrap(),
            ClosedConvexSet::whole(2),
        )
        .unwrap();
        let gamma = 0.3;
        let cfg = SolveConfig { max_iterations: 50, tolerance: 1e-300, initial: Some(Vector::from_vec(vec![1.0, 1.0])), ..SolveConfig::default() };
        let a = solve_fbhf(&spec, &StepPolicy::Constant(gamma), &cfg).unwrap();
        let pre = Preconditioner::scaled_identity(2, gamma).unwrap();
        let b = solve_precond_fbhf(&spec, &pre, None, &cfg).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn violating_schedule_is_rejected() {
        let spec = ProblemSpec::new(
            MaximalMonotone::zero(2),
            CocoerciveMap::absent(2),
            MonotoneMap::linear(m(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap(),
            ClosedConvexSet::whole(2),
        )
        .unwrap();
        let good = Matrix::identity(2, 2) * 3.0;
        let bad = Matrix::identity(2, 2) * 0.5;
        let sched = MetricSchedule::cyclic(vec![good.clone(), bad]);
        assert!(check_metric_at(&spec, &sched, 0, 0).is_ok());
        let err = check_metric_at(&spec, &sched, 1, 0).unwrap_err();
        assert!(err.to_string().contains("k = 1"));
        assert!(matches!(solve_variable_metric(&spec, &sched, &SolveConfig::default()), Err(Error::Condition(_))));
        let fixed = MetricSchedule::constant(good).with_relaxation(Relaxation::Fixed(1.0));
        assert!(solve_variable_metric(&spec, &fixed, &SolveConfig::default()).is_err());
    }
}
