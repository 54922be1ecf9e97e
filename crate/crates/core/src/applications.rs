//! Incremental empirical risk minimization, smooth-constrained convex
//! programs and the seeded instance generators used by the experiments.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fbhf::{solve_fbhf, solve_tseng_fbf, SolveConfig, SolveReport, Step, StepPolicy};
use crate::linalg::{self, Matrix, Vector};
use crate::operators::{
    entropy_constraint, lagrangian_saddle_map, quadratic_gradient, ClosedConvexSet, CocoerciveMap, Constraint,
    MaximalMonotone, Modulus, ProblemSpec, ScalarLoss,
};
use crate::precond::Preconditioner;
use crate::primal_dual::{solve_condat_vu, BlockPreconditioner, DualBlock, PrimalDualProblem};

pub type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let s: f64 = StandardNormal.sample(rng);
        s
    })
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| {
        let s: f64 = StandardNormal.sample(rng);
        s
    })
}

// ---------------------------------------------------------------------------
// Empirical risk minimization

/// `min (1/m) sum_i f_i(a_i^T x)` over `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmProblem {
    pub samples: Vec<Vector>,
    pub losses: Vec<ScalarLoss>,
}

impl ErmProblem {
    pub fn new(samples: Vec<Vector>, losses: Vec<ScalarLoss>) -> Result<Self> {
        if samples.is_empty() || samples.len() != losses.len() {
            return Err(Error::InvalidArgument(format!("{} samples and {} losses", samples.len(), losses.len())));
        }
        let d = samples[0].len();
        for (i, a) in samples.iter().enumerate() {
            if a.len() != d {
                return Err(Error::Dimension(format!("sample {i} has length {}, expected {d}", a.len())));
            }
            if a.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidArgument(format!("sample {i} is zero")));
            }
        }
        Ok(Self { samples, losses })
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when every sample has unit norm (to 1e-12).
    pub fn unit_norm(&self) -> bool {
        self.samples.iter().all(|a| (a.norm() - 1.0).abs() <= 1e-12)
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        let total: f64 = self.samples.iter().zip(&self.losses).map(|(a, f)| f.value(a.dot(x))).sum();
        total / self.len() as f64
    }

    /// The same problem as a composite inclusion: `A = 0`, `L_i = a_i^T`,
    /// `B_i = partial f_i`.
    pub fn to_primal_dual(&self) -> Result<PrimalDualProblem> {
        let d = self.dim();
        let blocks = self
            .samples
            .iter()
            .zip(&self.losses)
            .map(|(a, &f)| {
                let b = MaximalMonotone::separable(1, "loss", move |_, g, t| f.prox(g, t));
                DualBlock::simple(b, Matrix::from_row_slice(1, a.len(), a.as_slice()))
            })
            .collect::<Result<Vec<_>>>()?;
        PrimalDualProblem::new(
            MaximalMonotone::zero(d),
            CocoerciveMap::absent(d),
            crate::operators::MonotoneMap::zero(d),
            blocks,
        )
    }

    /// Blocks `P_00 = Id/sigma_0`, `P_ii = 1/sigma_i`, `P_i0 = -a_i^T`,
    /// `P_ij = sigma_0 a_i^T a_j`.
    pub fn block_preconditioner(&self, sigmas: &[f64]) -> Result<BlockPreconditioner> {
        self.check_sigmas(sigmas)?;
        let d = self.dim();
        let mut diag = vec![Preconditioner::scaled_identity(d, sigmas[0])?];
        for &s in &sigmas[1..] {
            diag.push(Preconditioner::scaled_identity(1, s)?);
        }
        let mut lower = vec![Vec::new()];
        for (i, a) in self.samples.iter().enumerate() {
            let mut row = vec![-Matrix::from_row_slice(1, d, a.as_slice())];
            for aj in &self.samples[..i] {
                row.push(Matrix::from_element(1, 1, sigmas[0] * a.dot(aj)));
            }
            lower.push(row);
        }
        BlockPreconditioner::new(diag, lower)
    }

    fn check_sigmas(&self, sigmas: &[f64]) -> Result<()> {
        if sigmas.len() != self.len() + 1 {
            return Err(Error::Config(format!("{} step sizes for {} samples (need m + 1)", sigmas.len(), self.len())));
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!("step sizes must be positive and finite, got {s}")));
        }
        Ok(())
    }
}

/// Both sides of the incremental step condition and the relaxation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub m_bound: f64,
    pub holds: bool,
}

/// `sqrt(S) + sigma_0 S + (sigma_0/2)(max|a_i|^2 - min|a_i|^2) < 1/max sigma_i`
/// with `S = sum |a_i|^2`.
pub fn check_erm_condition(p: &ErmProblem, sigmas: &[f64]) -> Result<ErmCheck> {
    p.check_sigmas(sigmas)?;
    let sq: Vec<f64> = p.samples.iter().map(|a| a.norm_squared()).collect();
    let total: f64 = sq.iter().sum();
    let max_sq = sq.iter().cloned().fold(0.0, f64::max);
    let min_sq = sq.iter().cloned().fold(f64::INFINITY, f64::min);
    let s0 = sigmas[0];
    let lhs = total.sqrt() + s0 * total + 0.5 * s0 * (max_sq - min_sq);
    let rhs = 1.0 / sigmas.iter().cloned().fold(0.0, f64::max);
    let min_sigma = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    let m_bound = 1.0 / min_sigma + 0.5 * total.sqrt() + 0.5 * s0 * (total + max_sq);
    Ok(ErmCheck { lhs, rhs, m_bound, holds: linalg::strictly_less(lhs, rhs) })
}

/// Largest admissible common step for unit-norm samples, `(sqrt 5 - 1)/(2 sqrt m)`
/// (exclusive).
pub fn erm_sigma_bound(m: usize) -> f64 {
    (5f64.sqrt() - 1.0) / (2.0 * (m as f64).sqrt())
}

/// Incremental proximal sweep. Each dual `v_i` sees `v_1..v_{i-1}` and
/// `u_i..u_m` through the running sum `w`. The state is `(x, u_1, ..., u_m)`.
pub fn solve_erm_incremental(p: &ErmProblem, sigmas: &[f64], lambda: Option<f64>, cfg: &SolveConfig) -> Result<SolveReport> {
    let chk = check_erm_condition(p, sigmas)?;
    let mut diags = Vec::new();
    if !chk.holds {
        let msg = format!(
            "sqrt(sum |a_i|^2) + sigma_0 sum |a_i|^2 + (sigma_0/2)(max |a_i|^2 - min |a_i|^2) = {} is not below 1/max sigma_i = {}",
            chk.lhs, chk.rhs
        );
        if cfg.unchecked_stepsize {
            diags.push(format!("unchecked: {msg}"));
        } else {
            return Err(Error::Config(msg));
        }
    }
    let lam = lambda.unwrap_or(0.99 / chk.m_bound);
    if !(lam > 0.0) || !(lam * chk.m_bound < 1.0) {
        let msg = format!("relaxation {lam} is not in ]0, 1/M[ with 1/M = {}", 1.0 / chk.m_bound);
        if cfg.unchecked_stepsize && lam > 0.0 {
            diags.push(format!("unchecked: {msg}"));
        } else {
            return Err(Error::Config(msg));
        }
    }

    let d = p.dim();
    let m = p.len();
    let s0 = sigmas[0];
    let z0 = cfg.start(d + m)?;
    let mut report = crate::fbhf::run_iterations(cfg, z0, |_, state, counters, _| {
        let x = state.rows(0, d).into_owned();
        let u = state.rows(d, m).into_owned();
        let mut s = Vector::zeros(d);
        for (a, &ui) in p.samples.iter().zip(u.iter()) {
            s.axpy(ui, a, 1.0);
        }
        // dsum = sum_{j < i} a_j (v_j - u_j)
        let mut dsum = Vector::zeros(d);
        let mut next = Vector::zeros(d + m);
        let mut aux = Vector::zeros(d + m);
        for i in 0..m {
            let a = &p.samples[i];
            let w = &s + &dsum;
            let t = u[i] + sigmas[i + 1] * (a.dot(&x) - s0 * a.dot(&w));
            counters.resolvent += 1;
            let v = p.losses[i].prox_conjugate(sigmas[i + 1], t);
            next[d + i] = u[i] + lam * ((v - u[i]) / sigmas[i + 1] + s0 * a.dot(&dsum));
            aux[d + i] = v;
            dsum.axpy(v - u[i], a, 1.0);
        }
        let xn = &x - (&s + &dsum) * lam;
        next.rows_mut(0, d).copy_from(&xn);
        aux.rows_mut(0, d).copy_from(&x);
        Ok(Step { z: next, x: aux, gamma: Some(lam) })
    });
    report.diagnostics.splice(0..0, diags);
    Ok(report)
}

/// Unit-norm Gaussian samples with independent fair `+-1` labels and hinge
/// losses `max(0, 1 - b_i t)`. Once `m` exceeds `2d` the data are almost
/// surely not linearly separable, so the optimal value is positive.
pub fn gen_erm_hinge(d: usize, m: usize, seed: u64) -> Result<ErmProblem> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidArgument("ERM instance needs d >= 1 and m >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coin = rand_distr::Bernoulli::new(0.5).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut samples = Vec::with_capacity(m);
    let mut losses = Vec::with_capacity(m);
    for _ in 0..m {
        let mut a = gaussian_vector(&mut rng, d);
        let norm = a.norm();
        if norm == 0.0 {
            a[0] = 1.0;
        } else {
            a /= norm;
        }
        let b = if coin.sample(&mut rng) { 1.0 } else { -1.0 };
        samples.push(a);
        losses.push(ScalarLoss::Hinge { b });
    }
    ErmProblem::new(samples, losses)
}

// ---------------------------------------------------------------------------
// Smooth-constrained programs

/// Matrices drawn by a generator, kept for reproducibility checks.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub a: Matrix,
    pub b: Vector,
    /// Constraint rows, for linear-inequality instances.
    pub d: Option<Matrix>,
    pub r: Option<f64>,
}

/// `min_{x in C} f(x) + h(x)`, `C = {x : g_i(x) <= 0}`, with iterates kept in
/// `Y`.
#[derive(Clone)]
pub struct NlpProblem {
    /// `partial f`, accessed through its proximity operator.
    pub f: MaximalMonotone,
    /// `grad h`.
    pub h: CocoerciveMap,
    pub h_value: Arc<ValueFn>,
    pub constraints: Vec<Constraint>,
    pub y_set: ClosedConvexSet,
    pub data: Option<GeneratedData>,
}

/// Componentwise optimality measures at a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// `|x - prox_f(x - grad h(x) - sum u_i grad g_i(x))|`.
    pub stationarity: f64,
    /// `max(0, max_i g_i(x))`.
    pub primal: f64,
    /// `max(0, -min_i u_i)`.
    pub dual: f64,
    /// `max_i |u_i g_i(x)|`.
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

impl NlpProblem {
    pub fn new(
        f: MaximalMonotone,
        h: CocoerciveMap,
        h_value: Arc<ValueFn>,
        constraints: Vec<Constraint>,
        y_set: ClosedConvexSet,
    ) -> Result<Self> {
        let n = f.dim();
        if h.dim() != n || y_set.dim() != n {
            return Err(Error::Dimension(format!("f acts on {n}, h on {}, Y lives in {}", h.dim(), y_set.dim())));
        }
        if constraints.is_empty() {
            return Err(Error::InvalidArgument("at least one constraint is required".into()));
        }
        Ok(Self { f, h, h_value, constraints, y_set, data: None })
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn all_affine(&self) -> bool {
        self.constraints.iter().all(|g| g.affine_data().is_some())
    }

    pub fn beta(&self) -> Modulus {
        self.h.beta()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        (self.h_value)(x)
    }

    pub fn constraint_values(&self, x: &Vector) -> Result<Vec<f64>> {
        self.constraints.iter().map(|g| g.value(x)).collect()
    }

    pub fn max_constraint(&self, x: &Vector) -> Result<f64> {
        Ok(self.constraint_values(x)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Splits a lifted point `(x, u)`.
    pub fn split(&self, w: &Vector) -> (Vector, Vector) {
        let n = self.dim();
        (w.rows(0, n).into_owned(), w.rows(n, w.len() - n).into_owned())
    }

    /// Starting point `(P_Y(0), 0)`.
    pub fn start(&self) -> Vector {
        let n = self.dim();
        let mut w = Vector::zeros(n + self.num_constraints());
        w.rows_mut(0, n).copy_from(&self.y_set.project(&Vector::zeros(n)));
        w
    }

    /// The inclusion on `(x, u)`: `A = partial f x N_{u >= 0}`,
    /// `B1 = (grad h, 0)`, `B2 = (sum u_i grad g_i, -g)`,
    /// `X = Y x [0, inf)^p`.
    pub fn lifted(&self) -> Result<ProblemSpec> {
        let n = self.dim();
        let p = self.num_constraints();
        let a = MaximalMonotone::product(vec![self.f.clone(), MaximalMonotone::normal_cone_nonneg(p)])?;
        let b1 = match self.h.beta().value() {
            None => CocoerciveMap::absent(n + p),
            Some(beta) => {
                let h = self.h.clone();
                CocoerciveMap::new(n + p, format!("lift({})", self.h.tag()), beta, move |w: &Vector| {
                    let mut out = Vector::zeros(w.len());
                    out.rows_mut(0, n).copy_from(&h.eval(&w.rows(0, n).into_owned()));
                    out
                })?
            }
        };
        let b2 = lagrangian_saddle_map(n, self.constraints.clone())?;
        let x_set = ClosedConvexSet::product(vec![self.y_set.clone(), ClosedConvexSet::nonneg(p)])?;
        ProblemSpec::new(a, b1, b2, x_set)
    }

    /// Lipschitz constant of the saddle map when all constraints are affine.
    pub fn lipschitz(&self) -> Result<Option<f64>> {
        Ok(lagrangian_saddle_map(self.dim(), self.constraints.clone())?.lipschitz())
    }

    pub fn kkt_residual(&self, x: &Vector, u: &Vector) -> Result<KktResidual> {
        let mut grad = self.h.eval(x);
        let mut primal = 0.0f64;
        let mut complementarity = 0.0f64;
        for (g, &ui) in self.constraints.iter().zip(u.iter()) {
            let gv = g.value(x)?;
            primal = primal.max(gv);
            complementarity = complementarity.max((ui * gv).abs());
            if ui != 0.0 {
                grad.axpy(ui, &g.gradient(x)?, 1.0);
            }
        }
        let stationarity = (x - self.f.resolvent(1.0, &(x - grad))?).norm();
        let dual = u.iter().fold(0.0f64, |acc, &ui| acc.max(-ui));
        Ok(KktResidual { stationarity, primal, dual, complementarity })
    }

    fn config_with_start(&self, cfg: &SolveConfig) -> SolveConfig {
        let mut c = cfg.clone();
        if c.initial.is_none() {
            c.initial = Some(self.start());
        }
        c
    }

    fn check_policy(&self, policy: &StepPolicy) -> Result<()> {
        if !self.all_affine() && !matches!(policy, StepPolicy::LineSearch(_)) {
            return Err(Error::Config("nonaffine constraints make the saddle map non-Lipschitz: use a line search".into()));
        }
        Ok(())
    }
}

/// FBHF on the lifted inclusion: `y = prox_{gamma f}(x - gamma(grad h(x) +
/// sum u_i grad g_i(x)))`, `eta = max(0, u + gamma g(x))`,
/// `u+ = max(0, eta - gamma(g(x) - g(y)))`,
/// `x+ = P_Y(y + gamma sum(u_i grad g_i(x) - eta_i grad g_i(y)))`.
pub fn solve_nlp(p: &NlpProblem, policy: &StepPolicy, cfg: &SolveConfig) -> Result<SolveReport> {
    p.check_policy(policy)?;
    solve_fbhf(&p.lifted()?, policy, &p.config_with_start(cfg))
}

/// Tseng's forward-backward-forward method on the same lifted inclusion,
/// with `grad h` folded into the forward operator.
pub fn solve_nlp_tseng(p: &NlpProblem, policy: &StepPolicy, cfg: &SolveConfig) -> Result<SolveReport> {
    p.check_policy(policy)?;
    solve_tseng_fbf(&p.lifted()?, policy, &p.config_with_start(cfg))
}

/// Condat-Vu for affine constraints `Dx + c <= 0` with
/// `tau = 1/(1/(2 beta) + sigma_bar |D|^2)`. The set `Y` is not used: the
/// primal step stays in `dom f`, which contains `Y`'s solutions by assumption.
pub fn solve_nlp_condat_vu(p: &NlpProblem, sigma_bar: f64, cfg: &SolveConfig) -> Result<SolveReport> {
    if !p.all_affine() {
        return Err(Error::Config("Condat-Vu handles affine constraints only".into()));
    }
    let n = p.dim();
    let q = p.num_constraints();
    let mut dm = Matrix::zeros(q, n);
    let mut r = Vector::zeros(q);
    for (i, g) in p.constraints.iter().enumerate() {
        let (row, c) = g.affine_data().expect("affine");
        dm.row_mut(i).copy_from(&row.transpose());
        r[i] = -c;
    }
    let l = linalg::norm2(&dm)?;
    let tau = 1.0 / (p.beta().half_inverse() + sigma_bar * l * l);
    let b = MaximalMonotone::normal_cone_box(Vector::from_element(q, f64::NEG_INFINITY), Vector::zeros(q))?;
    let blk = DualBlock::new(b, CocoerciveMap::absent(q), dm, r)?;
    let pdp = PrimalDualProblem::new(p.f.clone(), p.h.clone(), crate::operators::MonotoneMap::zero(n), vec![blk])?;
    solve_condat_vu(&pdp, tau, &[sigma_bar], &p.config_with_start(cfg))
}

/// Linear-inequality least squares: `h(x) = |Ax - b|^2/2` with `A` of size
/// `(n/2) x n`, `f` the indicator of `[0, 1]^n`, `g_i(x) = d_i^T x`, and
/// `Y = [0, 1]^n`. All entries standard normal.
pub fn gen_lin_ineq_qp(n: usize, p: usize, seed: u64) -> Result<NlpProblem> {
    if n < 2 || !n.is_multiple_of(2) || p == 0 {
        return Err(Error::InvalidArgument(format!("need even n >= 2 and p >= 1, got n = {n}, p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, n / 2, n);
    let b = gaussian_vector(&mut rng, n / 2);
    let d = gaussian_matrix(&mut rng, p, n);
    let constraints = (0..p).map(|i| Constraint::affine(d.row(i).transpose(), 0.0)).collect();
    let mut prob = least_squares_problem(a, b, 0.0, constraints)?;
    if let Some(data) = prob.data.as_mut() {
        data.d = Some(d);
    }
    Ok(prob)
}

/// Entropy-constrained least squares: `h(x) = |Ax - b|^2/2`,
/// `f` the indicator of `[0.001, 1]^n`, and
/// `g(x) = sum x_i (ln x_i - 1) - r` with `r = r_fraction * n`.
pub fn gen_entropy_ls(n: usize, r_fraction: f64, seed: u64) -> Result<NlpProblem> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("need even n >= 2, got {n}")));
    }
    if !(r_fraction > -1.0 && r_fraction < 0.0) {
        return Err(Error::InvalidArgument(format!("r fraction must lie in ]-1, 0[, got {r_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, n / 2, n);
    let b = gaussian_vector(&mut rng, n / 2);
    let r = r_fraction * n as f64;
    let g = entropy_constraint(Vector::from_element(n, 1.0), r)?;
    let mut prob = least_squares_problem(a, b, 0.001, vec![g])?;
    if let Some(data) = prob.data.as_mut() {
        data.r = Some(r);
    }
    Ok(prob)
}

fn least_squares_problem(a: Matrix, b: Vector, lo: f64, constraints: Vec<Constraint>) -> Result<NlpProblem> {
    let n = a.ncols();
    let lo_v = Vector::from_element(n, lo);
    let hi_v = Vector::from_element(n, 1.0);
    let f = MaximalMonotone::normal_cone_box(lo_v.clone(), hi_v.clone())?;
    let y_set = ClosedConvexSet::boxed(lo_v, hi_v)?;
    let h = quadratic_gradient(a.clone(), b.clone())?;
    let (a2, b2) = (a.clone(), b.clone());
    let h_value: Arc<ValueFn> = Arc::new(move |x: &Vector| 0.5 * (&a2 * x - &b2).norm_squared());
    let mut prob = NlpProblem::new(f, h, h_value, constraints, y_set)?;
    prob.data = Some(GeneratedData { a, b, d: None, r: None });
    Ok(prob)
}

/// Relative difference `|a - b| / max(|a|, |b|, 1)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbhf::{fbhf_delta_step, fbhf_step};

    #[test]
    fn erm_bound_accepts_inside_rejects_boundary() {
        let m = 8;
        let samples: Vec<Vector> = (0..m).map(|i| Vector::from_fn(3, |j, _| if j == i % 3 { 1.0 } else { 0.0 })).collect();
        let p = ErmProblem::new(samples, vec![ScalarLoss::Absolute { b: 0.0 }; m]).unwrap();
        assert!(p.unit_norm());
        let bound = erm_sigma_bound(m);
        assert!(check_erm_condition(&p, &vec![0.99 * bound; m + 1]).unwrap().holds);
        assert!(!check_erm_condition(&p, &vec![bound; m + 1]).unwrap().holds);
    }

    #[test]
    fn erm_separable_absolute_values() {
        let samples = vec![Vector::from_vec(vec![1.0, 0.0]), Vector::from_vec(vec![0.0, 1.0])];
        let losses = vec![ScalarLoss::Absolute { b: 0.7 }, ScalarLoss::Absolute { b: -1.3 }];
        let p = ErmProblem::new(samples, losses).unwrap();
        let s = 0.9 * erm_sigma_bound(2);
        let cfg = SolveConfig { max_iterations: 100_000, tolerance: 1e-13, ..Default::default() };
        let rep = solve_erm_incremental(&p, &[s, s, s], None, &cfg).unwrap();
        assert!((rep.z[0] - 0.7).abs() < 1e-6 && (rep.z[1] + 1.3).abs() < 1e-6, "{:?}", rep.z);
    }

    #[test]
    fn erm_incremental_matches_block_engine() {
        let p = gen_erm_hinge(4, 6, 3).unwrap();
        let s = 0.9 * erm_sigma_bound(6);
        let sigmas = vec![s; 7];
        let cfg = SolveConfig { max_iterations: 50, tolerance: 1e-300, ..Default::default() };
        let a = solve_erm_incremental(&p, &sigmas, None, &cfg).unwrap();
        let bp = p.block_preconditioner(&sigmas).unwrap();
        let lam = 0.99 / check_erm_condition(&p, &sigmas).unwrap().m_bound;
        let b = crate::primal_dual::solve_block_triangular(&p.to_primal_dual().unwrap(), &bp, Some(lam), &cfg).unwrap();
        assert!(!b.is_error(), "{:?}", b.termination);
        assert!((&a.z - &b.z).amax() < 1e-10);
    }

    #[test]
    fn nlp_unconstrained_minimizer_is_fixed() {
        let f = MaximalMonotone::zero(1);
        let h = CocoerciveMap::affine_symmetric(Matrix::identity(1, 1), Vector::from_element(1, 1.0)).unwrap();
        let hv: Arc<ValueFn> = Arc::new(|x: &Vector| 0.5 * (x[0] + 1.0).powi(2));
        let p = NlpProblem::new(f, h, hv, vec![Constraint::affine(Vector::from_element(1, 1.0), 0.0)], ClosedConvexSet::whole(1))
            .unwrap();
        let spec = p.lifted().unwrap();
        let z = Vector::from_vec(vec![-1.0, 0.0]);
        let (x, zn) = fbhf_step(&spec, &z, 0.3).unwrap();
        assert_eq!(x, z);
        assert_eq!(zn, z);
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_lin_ineq_qp(8, 3, 5).unwrap();
        let b = gen_lin_ineq_qp(8, 3, 5).unwrap();
        assert_eq!(a.data, b.data);
        let c = gen_entropy_ls(8, -0.4, 5).unwrap();
        let d = gen_entropy_ls(8, -0.4, 5).unwrap();
        assert_eq!(c.data, d.data);
        assert_eq!(gen_erm_hinge(5, 7, 2).unwrap(), gen_erm_hinge(5, 7, 2).unwrap());
    }

    #[test]
    fn lin_ineq_beta_and_feasible_origin() {
        let p = gen_lin_ineq_qp(4, 1, 0).unwrap();
        let a = &p.data.as_ref().unwrap().a;
        let beta = p.beta().value().unwrap();
        assert!((beta * linalg::norm2(a).unwrap().powi(2) - 1.0).abs() < 1e-10);
        assert!(p.max_constraint(&Vector::zeros(4)).unwrap() <= 0.0);
    }

    #[test]
    fn entropy_center_value() {
        let n = 10;
        let p = gen_entropy_ls(n, -0.4, 1).unwrap();
        let g = p.constraints[0].value(&Vector::from_element(n, 1.0)).unwrap();
        assert!((g - (-(n as f64) + 0.4 * n as f64)).abs() < 1e-12);
        assert!(g < 0.0);
    }

    #[test]
    fn nonaffine_needs_line_search() {
        let p = gen_entropy_ls(4, -0.4, 0).unwrap();
        let err = solve_nlp(&p, &StepPolicy::Constant(0.1), &SolveConfig::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn lin_ineq_fbhf_and_condat_vu_agree() {
        let p = gen_lin_ineq_qp(20, 4, 7).unwrap();
        let beta = p.beta();
        let l = p.lipschitz().unwrap().unwrap();
        let gamma = fbhf_delta_step(beta, l, 3.99).unwrap();
        let cfg = SolveConfig { max_iterations: 200_000, tolerance: 1e-10, ..Default::default() };
        let rep = solve_nlp(&p, &StepPolicy::Constant(gamma), &cfg).unwrap();
        assert!(rep.converged());
        let (x, u) = p.split(&rep.z);
        assert!(u.iter().all(|&v| v >= 0.0));
        let kkt = p.kkt_residual(&x, &u).unwrap();
        assert!(kkt.max() < 1e-6, "{kkt:?}");
        let cv = solve_nlp_condat_vu(&p, 0.1, &cfg).unwrap();
        assert!(cv.converged());
        let (xc, _) = p.split(&cv.z);
        assert!(relative_gap(p.objective(&x), p.objective(&xc)) < 1e-6);
    }
}
