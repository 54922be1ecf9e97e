//! Composite primal-dual inclusions
//! `z in Ax + sum L_i^T (B_i [] D_i)(L_i x - r_i) + C1 x + C2 x`, solved by a
//! block lower-triangular preconditioned sweep, its scalar-step
//! specialization and the Condat-Vu baseline.

use crate::error::{Error, Result};
use crate::fbhf::{run_iterations, Counters, SolveConfig, SolveReport, Step};
use crate::linalg::{self, BlockLayout, Matrix, Vector};
use crate::operators::{CocoerciveMap, MaximalMonotone, Modulus, MonotoneMap};
use crate::precond::{resolvent_via_p, Preconditioner};

/// One dual term `L_i^T (B_i [] D_i)(L_i x - r_i)`.
#[derive(Clone)]
pub struct DualBlock {
    /// `B_i`; its inverse resolvent comes from the Moreau identity.
    pub b: MaximalMonotone,
    /// `D_i^{-1}`, cocoercive; absent stands for `D_i^{-1} = 0`.
    pub d_inv: CocoerciveMap,
    pub l: Matrix,
    pub r: Vector,
    b_inv: MaximalMonotone,
    lt: Matrix,
}

impl DualBlock {
    pub fn new(b: MaximalMonotone, d_inv: CocoerciveMap, l: Matrix, r: Vector) -> Result<Self> {
        let g = l.nrows();
        if b.dim() != g || d_inv.dim() != g || r.len() != g {
            return Err(Error::Dimension(format!(
                "dual block: L has {g} rows, B acts on {}, D^-1 on {}, r has length {}",
                b.dim(),
                d_inv.dim(),
                r.len()
            )));
        }
        if l.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument("linking operator L must be nonzero".into()));
        }
        let b_inv = b.prox_conjugate();
        let lt = l.transpose();
        Ok(Self { b, d_inv, l, r, b_inv, lt })
    }

    /// Dual block with `D_i^{-1} = 0` and `r_i = 0`.
    pub fn simple(b: MaximalMonotone, l: Matrix) -> Result<Self> {
        let g = l.nrows();
        Self::new(b, CocoerciveMap::absent(g), l, Vector::zeros(g))
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// The operator `B_i^{-1}`.
    pub fn b_inverse(&self) -> &MaximalMonotone {
        &self.b_inv
    }
}

#[derive(Clone)]
pub struct PrimalDualProblem {
    pub a: MaximalMonotone,
    pub c1: CocoerciveMap,
    pub c2: MonotoneMap,
    pub blocks: Vec<DualBlock>,
    /// Left-hand side of the primal inclusion.
    pub z: Vector,
    layout: BlockLayout,
}

impl PrimalDualProblem {
    pub fn new(a: MaximalMonotone, c1: CocoerciveMap, c2: MonotoneMap, blocks: Vec<DualBlock>) -> Result<Self> {
        let n = a.dim();
        if c1.dim() != n || c2.dim() != n {
            return Err(Error::Dimension(format!("A acts on {n}, C1 on {}, C2 on {}", c1.dim(), c2.dim())));
        }
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("at least one dual block is required".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.l.ncols() != n {
                return Err(Error::Dimension(format!("L_{} has {} columns, primal dimension is {n}", i + 1, b.l.ncols())));
            }
        }
        let mut sizes = vec![n];
        sizes.extend(blocks.iter().map(DualBlock::dim));
        let layout = BlockLayout::new(&sizes)?;
        Ok(Self { a, c1, c2, blocks, z: Vector::zeros(n), layout })
    }

    pub fn with_z(mut self, z: Vector) -> Result<Self> {
        if z.len() != self.a.dim() {
            return Err(Error::Dimension(format!("z has length {}, primal dimension is {}", z.len(), self.a.dim())));
        }
        self.z = z;
        Ok(self)
    }

    pub fn primal_dim(&self) -> usize {
        self.a.dim()
    }

    pub fn num_duals(&self) -> usize {
        self.blocks.len()
    }

    /// Layout of the stacked state `(x, u_1, ..., u_m)`.
    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    /// `min {mu, nu_1, ..., nu_m}`.
    pub fn beta(&self) -> Modulus {
        self.blocks.iter().fold(self.c1.beta(), |acc, b| acc.min(b.d_inv.beta()))
    }

    /// Lipschitz constant of `C2`.
    pub fn delta(&self) -> Result<f64> {
        self.c2
            .lipschitz()
            .ok_or_else(|| Error::Config("C2 needs a known Lipschitz constant for the primal-dual solvers".into()))
    }

    pub fn l_norms(&self) -> Result<Vec<f64>> {
        self.blocks.iter().map(|b| linalg::norm2(&b.l)).collect()
    }

    /// Splits a stacked state into `(x, [u_1, ..., u_m])`.
    pub fn split(&self, state: &Vector) -> (Vector, Vec<Vector>) {
        let x = self.layout.block(state, 0);
        let us = (1..self.layout.num_blocks()).map(|i| self.layout.block(state, i)).collect();
        (x, us)
    }
}

/// Lower block triangle `(P_ij)_{0 <= j <= i <= m}`.
#[derive(Clone, Debug)]
pub struct BlockPreconditioner {
    diag: Vec<Preconditioner>,
    lower: Vec<Vec<Matrix>>,
    zero: Vec<Vec<bool>>,
}

impl BlockPreconditioner {
    /// `diag[i] = P_ii`; `lower[i][j] = P_ij` for `j < i`, so `lower[0]` is
    /// empty and `lower[i]` has `i` entries.
    pub fn new(diag: Vec<Preconditioner>, lower: Vec<Vec<Matrix>>) -> Result<Self> {
        if diag.len() < 2 {
            return Err(Error::InvalidArgument("need a primal block and at least one dual block".into()));
        }
        if lower.len() != diag.len() {
            return Err(Error::InvalidArgument(format!("{} rows of off-diagonal blocks for {} diagonal blocks", lower.len(), diag.len())));
        }
        for (i, row) in lower.iter().enumerate() {
            if row.len() != i {
                return Err(Error::InvalidArgument(format!("block row {i} has {} off-diagonal blocks, expected {i}", row.len())));
            }
            for (j, p) in row.iter().enumerate() {
                if p.nrows() != diag[i].dim() || p.ncols() != diag[j].dim() {
                    return Err(Error::Dimension(format!(
                        "P_{i}{j} is {}x{}, expected {}x{}",
                        p.nrows(),
                        p.ncols(),
                        diag[i].dim(),
                        diag[j].dim()
                    )));
                }
            }
        }
        let zero = lower.iter().map(|row| row.iter().map(|p| p.iter().all(|&v| v == 0.0)).collect()).collect();
        Ok(Self { diag, lower, zero })
    }

    /// Blocks `P_ii = Id / sigma_i`, `P_i0 = -(1 + theta) L_i`, `P_ij = 0`.
    pub fn corollary(pdp: &PrimalDualProblem, params: &CorollaryParams) -> Result<Self> {
        params.validate_shape(pdp)?;
        let layout = pdp.layout();
        let diag = params
            .sigmas
            .iter()
            .enumerate()
            .map(|(i, &s)| Preconditioner::scaled_identity(layout.size(i), s))
            .collect::<Result<Vec<_>>>()?;
        let mut lower = vec![Vec::new()];
        for (i, b) in pdp.blocks.iter().enumerate() {
            let mut row = vec![&b.l * -(1.0 + params.theta)];
            for j in 1..=i {
                row.push(Matrix::zeros(b.dim(), layout.size(j)));
            }
            lower.push(row);
        }
        Self::new(diag, lower)
    }

    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self, i: usize) -> &Preconditioner {
        &self.diag[i]
    }

    /// `P_ij` for `j < i`.
    pub fn lower(&self, i: usize, j: usize) -> &Matrix {
        &self.lower[i][j]
    }

    fn check_against(&self, pdp: &PrimalDualProblem) -> Result<()> {
        let layout = pdp.layout();
        if self.num_blocks() != layout.num_blocks() {
            return Err(Error::Dimension(format!("{} preconditioner blocks for {} state blocks", self.num_blocks(), layout.num_blocks())));
        }
        for i in 0..self.num_blocks() {
            if self.diag[i].dim() != layout.size(i) {
                return Err(Error::Dimension(format!("P_{i}{i} has dimension {}, block {i} has {}", self.diag[i].dim(), layout.size(i))));
            }
        }
        Ok(())
    }
}

/// The `(m+1) x (m+1)` matrices `(Upsilon, Sigma, Delta)` built from the block
/// norms; `ls[i - 1] = L_i`.
pub fn build_upsilon_sigma_delta(bp: &BlockPreconditioner, ls: &[Matrix]) -> Result<(Matrix, Matrix, Matrix)> {
    let k = bp.num_blocks();
    if ls.len() + 1 != k {
        return Err(Error::InvalidArgument(format!("{} linking operators for {k} blocks", ls.len())));
    }
    let mut upsilon = Matrix::zeros(k, k);
    let mut sigma = Matrix::zeros(k, k);
    let mut delta = Matrix::zeros(k, k);
    for i in 0..k {
        let pii = bp.diag[i].p();
        sigma[(i, i)] = linalg::norm2(&(pii - pii.transpose()))? / 2.0;
        delta[(i, i)] = bp.diag[i].rho();
        for j in 0..i {
            let pij = &bp.lower[i][j];
            let half = linalg::norm2(pij)? / 2.0;
            upsilon[(i, j)] = half;
            upsilon[(j, i)] = half;
            let s = if j == 0 {
                let li = &ls[i - 1];
                if li.shape() != pij.shape() {
                    return Err(Error::Dimension(format!("L_{i} and P_{i}0 differ in shape")));
                }
                linalg::norm2(&(li + pij / 2.0))?
            } else {
                half
            };
            sigma[(i, j)] = s;
            sigma[(j, i)] = s;
        }
    }
    Ok((upsilon, sigma, delta))
}

/// Outcome of a metric condition check; `verdict` is false with `detail` set
/// when it fails.
#[derive(Debug, Clone)]
pub struct PdConditions {
    pub rho: f64,
    /// Bound with admissible relaxations `]0, 1/m_bound[`.
    pub m_bound: f64,
    pub sigma_norm: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub verdict: bool,
    pub detail: String,
}

impl PdConditions {
    fn from_parts(rho: f64, m_bound: f64, sigma_norm: f64, delta: f64, beta: Modulus, what: &str) -> Self {
        let lhs = (sigma_norm + delta).powi(2);
        let rhs = rho * (rho - beta.half_inverse());
        let (verdict, detail) = if !(rho > 0.0) {
            (false, format!("{what} is not positive definite: smallest eigenvalue {rho:e}"))
        } else if !linalg::strictly_less(lhs, rhs) {
            (false, format!("(|Sigma| + delta)^2 = {lhs:e} is not below rho (rho - 1/(2 beta)) = {rhs:e}"))
        } else {
            (true, String::new())
        };
        Self { rho, m_bound, sigma_norm, lhs, rhs, verdict, detail }
    }

    fn require(&self) -> Result<()> {
        if self.verdict {
            Ok(())
        } else {
            Err(Error::Config(self.detail.clone()))
        }
    }
}

/// Checks `Delta - Upsilon > 0` and `(|Sigma| + delta)^2 < rho (rho - 1/(2 beta))`
/// with `rho = lambda_min(Delta - Upsilon)`.
pub fn check_pd_conditions(bp: &BlockPreconditioner, ls: &[Matrix], delta: f64, beta: Modulus) -> Result<PdConditions> {
    let (upsilon, sigma, big_delta) = build_upsilon_sigma_delta(bp, ls)?;
    let rho = linalg::symmetric_min_eig(&(&big_delta - &upsilon), linalg::SPECTRAL_TOL)?;
    let sigma_norm = linalg::norm2(&sigma)?;
    let max_diag = bp.diag.iter().map(Preconditioner::p_norm).fold(0.0, f64::max);
    let m_bound = max_diag + linalg::norm2(&upsilon)?;
    Ok(PdConditions::from_parts(rho, m_bound, sigma_norm, delta, beta, "Delta - Upsilon"))
}

/// Step parameters of the scalar-step scheme: extrapolation `theta` and
/// per-block steps `sigma_0, ..., sigma_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryParams {
    pub theta: f64,
    pub sigmas: Vec<f64>,
    /// Relaxation; `0.99 / M` when absent.
    pub lambda: Option<f64>,
}

impl CorollaryParams {
    pub fn new(theta: f64, sigmas: Vec<f64>) -> Self {
        Self { theta, sigmas, lambda: None }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    fn validate_shape(&self, pdp: &PrimalDualProblem) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must lie in [-1, 1], got {}", self.theta)));
        }
        if self.sigmas.len() != pdp.num_duals() + 1 {
            return Err(Error::Config(format!("{} step sizes for {} blocks", self.sigmas.len(), pdp.num_duals() + 1)));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!("step sizes must be positive and finite, got {s}")));
        }
        Ok(())
    }

    /// `Omega`: diagonal `1/sigma_i`, first row and column
    /// `-((1 + theta)/2) |L_i|`.
    pub fn omega(&self, l_norms: &[f64]) -> Matrix {
        let k = self.sigmas.len();
        let mut om = Matrix::zeros(k, k);
        for i in 0..k {
            om[(i, i)] = 1.0 / self.sigmas[i];
        }
        for (i, ln) in l_norms.iter().enumerate() {
            let v = -0.5 * (1.0 + self.theta) * ln;
            om[(0, i + 1)] = v;
            om[(i + 1, 0)] = v;
        }
        om
    }

    /// Checks positivity of `Omega` and
    /// `(delta + ((1 - theta)/2) sqrt(sum |L_i|^2))^2 < rho (rho - 1/(2 beta))`.
    pub fn check(&self, pdp: &PrimalDualProblem) -> Result<PdConditions> {
        self.validate_shape(pdp)?;
        let norms = pdp.l_norms()?;
        let root = norms.iter().map(|n| n * n).sum::<f64>().sqrt();
        let rho = linalg::symmetric_min_eig(&self.omega(&norms), linalg::SPECTRAL_TOL)?;
        let min_sigma = self.sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
        let m_bound = 1.0 / min_sigma + 0.5 * (1.0 + self.theta) * root;
        let sigma_norm = 0.5 * (1.0 - self.theta) * root;
        Ok(PdConditions::from_parts(rho, m_bound, sigma_norm, pdp.delta()?, pdp.beta(), "Omega"))
    }
}

/// `max{sigma_i}^{-1} (1 - ((1 + theta)/2) sqrt(sigma_0 sum_j sigma_j |L_j|^2))`,
/// the lower bound on `rho` from the variable-metric analysis; `sigmas[0]` is
/// the primal step and `l_norms[j - 1]` pairs with `sigmas[j]`.
pub fn rho_v(theta: f64, sigmas: &[f64], l_norms: &[f64]) -> f64 {
    let max_sigma = sigmas.iter().cloned().fold(0.0, f64::max);
    let weighted: f64 = sigmas[1..].iter().zip(l_norms).map(|(s, l)| s * l * l).sum();
    (1.0 - 0.5 * (1.0 + theta) * (sigmas[0] * weighted).sqrt()) / max_sigma
}

fn resolve_lambda(lambda: Option<f64>, m_bound: f64, cfg: &SolveConfig, diags: &mut Vec<String>) -> Result<f64> {
    let lam = lambda.unwrap_or(0.99 / m_bound);
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(Error::Config(format!("relaxation must be positive, got {lam}")));
    }
    if !(lam * m_bound < 1.0) {
        let msg = format!("relaxation {lam} is not below 1/M = {}", 1.0 / m_bound);
        if cfg.unchecked_stepsize {
            diags.push(format!("unchecked: {msg}"));
        } else {
            return Err(Error::Config(msg));
        }
    }
    Ok(lam)
}

/// Runs the block sweep; `lambda = None` selects `0.99 / M`.
pub fn solve_block_triangular(
    pdp: &PrimalDualProblem,
    bp: &BlockPreconditioner,
    lambda: Option<f64>,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    bp.check_against(pdp)?;
    let ls: Vec<Matrix> = pdp.blocks.iter().map(|b| b.l.clone()).collect();
    let cond = check_pd_conditions(bp, &ls, pdp.delta()?, pdp.beta())?;
    let mut diags = Vec::new();
    if !cond.verdict {
        if cfg.unchecked_stepsize {
            diags.push(format!("unchecked: {}", cond.detail));
        } else {
            cond.require()?;
        }
    }
    let lam = resolve_lambda(lambda, cond.m_bound, cfg, &mut diags)?;
    run_sweep(pdp, bp, lam, cfg, diags)
}

/// Runs the scalar-step scheme with extrapolation `theta` as the block sweep
/// with `P_ii = Id/sigma_i`, `P_i0 = -(1 + theta) L_i` and no other coupling.
pub fn solve_corollary(pdp: &PrimalDualProblem, params: &CorollaryParams, cfg: &SolveConfig) -> Result<SolveReport> {
    let cond = params.check(pdp)?;
    let mut diags = Vec::new();
    if !cond.verdict {
        if cfg.unchecked_stepsize {
            diags.push(format!("unchecked: {}", cond.detail));
        } else {
            cond.require()?;
        }
    }
    let lam = resolve_lambda(params.lambda, cond.m_bound, cfg, &mut diags)?;
    let bp = BlockPreconditioner::corollary(pdp, params)?;
    run_sweep(pdp, &bp, lam, cfg, diags)
}

fn run_sweep(
    pdp: &PrimalDualProblem,
    bp: &BlockPreconditioner,
    lam: f64,
    cfg: &SolveConfig,
    initial_diags: Vec<String>,
) -> Result<SolveReport> {
    let layout = pdp.layout().clone();
    let m = pdp.num_duals();
    let z0 = cfg.start(layout.total())?;
    let mut report = run_iterations(cfg, z0, |_, state, counters, _| {
        let (x, us) = pdp.split(state);

        let c1x = eval_c1(pdp, &x, counters);
        let c2x = eval_c2(pdp, &x, counters)?;
        let mut g = -&pdp.z;
        if let Some(v) = &c1x {
            g += v;
        }
        if let Some(v) = &c2x {
            g += v;
        }
        for (b, u) in pdp.blocks.iter().zip(&us) {
            g += &b.lt * u;
        }
        counters.resolvent += 1;
        let y = resolvent_via_p(&pdp.a, &bp.diag[0], &(&x - bp.diag[0].solve_p(&g)?))?;
        let x_minus_y = &x - &y;

        let mut vs: Vec<Vector> = Vec::with_capacity(m);
        let mut u_minus_v: Vec<Vector> = Vec::with_capacity(m);
        for i in 1..=m {
            let blk = &pdp.blocks[i - 1];
            let u = &us[i - 1];
            let mut inner = &blk.r - &blk.l * &x - &bp.lower[i][0] * &x_minus_y;
            if !blk.d_inv.is_absent() {
                counters.b1 += 1;
                inner += blk.d_inv.eval(u);
            }
            for j in 1..i {
                if !bp.zero[i][j] {
                    inner -= &bp.lower[i][j] * &u_minus_v[j - 1];
                }
            }
            counters.resolvent += 1;
            let v = resolvent_via_p(&blk.b_inv, &bp.diag[i], &(u - bp.diag[i].solve_p(&inner)?))?;
            u_minus_v.push(u - &v);
            vs.push(v);
        }

        let mut dx = bp.diag[0].apply(&(-&x_minus_y));
        if let Some(c2x) = &c2x {
            counters.b2 += 1;
            dx += c2x - pdp.c2.eval(&y)?;
        }
        for (b, d) in pdp.blocks.iter().zip(&u_minus_v) {
            dx += &b.lt * d;
        }
        let mut next = Vector::zeros(layout.total());
        layout.set_block(&mut next, 0, &(&x + dx * lam));
        let mut aux = Vector::zeros(layout.total());
        layout.set_block(&mut aux, 0, &y);
        for i in 1..=m {
            let blk = &pdp.blocks[i - 1];
            let mut du = &bp.lower[i][0] * (-&x_minus_y) - &blk.l * &x_minus_y;
            for j in 1..i {
                if !bp.zero[i][j] {
                    du -= &bp.lower[i][j] * &u_minus_v[j - 1];
                }
            }
            du -= bp.diag[i].apply(&u_minus_v[i - 1]);
            layout.set_block(&mut next, i, &(&us[i - 1] + du * lam));
            layout.set_block(&mut aux, i, &vs[i - 1]);
        }
        Ok(Step { z: next, x: aux, gamma: Some(lam) })
    });
    report.diagnostics.splice(0..0, initial_diags);
    Ok(report)
}

fn eval_c1(pdp: &PrimalDualProblem, x: &Vector, c: &mut Counters) -> Option<Vector> {
    if pdp.c1.is_absent() {
        None
    } else {
        c.b1 += 1;
        Some(pdp.c1.eval(x))
    }
}

fn eval_c2(pdp: &PrimalDualProblem, x: &Vector, c: &mut Counters) -> Result<Option<Vector>> {
    if pdp.c2.is_zero() {
        Ok(None)
    } else {
        c.b2 += 1;
        pdp.c2.eval(x).map(Some)
    }
}

/// Condat-Vu: `x+ = J_{tau A}(x - tau(C1 x + sum L_i^T u_i - z))`,
/// `u_i+ = J_{sigma_i B_i^{-1}}(u_i + sigma_i(L_i(2x+ - x) - r_i))`.
///
/// Requires `C2 = 0`, `D_i^{-1} = 0` and
/// `tau (1/(2 beta) + |sum sigma_i L_i^T L_i|) <= 1`.
pub fn solve_condat_vu(pdp: &PrimalDualProblem, tau: f64, sigmas: &[f64], cfg: &SolveConfig) -> Result<SolveReport> {
    if !pdp.c2.is_zero() {
        return Err(Error::Config(format!("Condat-Vu does not handle a nonzero monotone term ({})", pdp.c2.tag())));
    }
    if pdp.blocks.iter().any(|b| !b.d_inv.is_absent()) {
        return Err(Error::Config("Condat-Vu baseline supports D_i^{-1} = 0 only".into()));
    }
    if sigmas.len() != pdp.num_duals() {
        return Err(Error::Config(format!("{} dual steps for {} dual blocks", sigmas.len(), pdp.num_duals())));
    }
    if !(tau > 0.0) || sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Config("Condat-Vu steps must be positive".into()));
    }
    let n = pdp.primal_dim();
    let mut coupling = Matrix::zeros(n, n);
    for (b, s) in pdp.blocks.iter().zip(sigmas) {
        coupling += (&b.lt * &b.l) * *s;
    }
    let lhs = tau * (pdp.c1.beta().half_inverse() + linalg::norm2(&coupling)?);
    let mut diags = Vec::new();
    if lhs > 1.0 + linalg::STRICT_MARGIN {
        let msg = format!("tau (1/(2 beta) + |sum sigma_i L_i^T L_i|) = {lhs} exceeds 1");
        if cfg.unchecked_stepsize {
            diags.push(format!("unchecked: {msg}"));
        } else {
            return Err(Error::Config(msg));
        }
    }

    let layout = pdp.layout().clone();
    let z0 = cfg.start(layout.total())?;
    let mut report = run_iterations(cfg, z0, |_, state, counters, _| {
        let (x, us) = pdp.split(state);
        let mut g = -&pdp.z;
        if let Some(v) = eval_c1(pdp, &x, counters) {
            g += v;
        }
        for (b, u) in pdp.blocks.iter().zip(&us) {
            g += &b.lt * u;
        }
        counters.resolvent += 1;
        let xn = pdp.a.resolvent(tau, &(&x - g * tau))?;
        let bar = &xn * 2.0 - &x;
        let mut next = Vector::zeros(layout.total());
        layout.set_block(&mut next, 0, &xn);
        for (i, ((b, u), s)) in pdp.blocks.iter().zip(&us).zip(sigmas).enumerate() {
            counters.resolvent += 1;
            let w = u + (&b.l * &bar - &b.r) * *s;
            layout.set_block(&mut next, i + 1, &b.b_inv.resolvent(*s, &w)?);
        }
        Ok(Step { x: next.clone(), z: next, gamma: Some(tau) })
    });
    report.diagnostics.splice(0..0, diags);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbhf::History;

    fn scalar_problem() -> PrimalDualProblem {
        let a = MaximalMonotone::normal_cone_nonneg(1);
        let c1 = CocoerciveMap::new(1, "x - 2", 1.0, |x| x.map(|t| t - 2.0)).unwrap();
        let b = MaximalMonotone::normal_cone_box(Vector::from_element(1, f64::NEG_INFINITY), Vector::zeros(1)).unwrap();
        let blk = DualBlock::simple(b, Matrix::identity(1, 1)).unwrap();
        PrimalDualProblem::new(a, c1, MonotoneMap::zero(1), vec![blk]).unwrap()
    }

    #[test]
    fn corollary_blocks_give_closed_form_sigma() {
        let pdp = scalar_problem();
        for theta in [-1.0, 0.0, 0.5, 1.0] {
            let params = CorollaryParams::new(theta, vec![0.3, 0.4]);
            let bp = BlockPreconditioner::corollary(&pdp, &params).unwrap();
            let (ups, sig, del) = build_upsilon_sigma_delta(&bp, &[Matrix::identity(1, 1)]).unwrap();
            assert!((sig[(1, 0)] - 0.5 * (1.0 - theta)).abs() < 1e-9);
            assert_eq!(sig[(0, 0)], 0.0);
            assert_eq!(sig[(1, 1)], 0.0);
            assert!((ups[(1, 0)] - 0.5 * (1.0 + theta)).abs() < 1e-9);
            let omega = params.omega(&[1.0]);
            assert!((&del - &ups - omega).amax() < 1e-9);
        }
    }

    #[test]
    fn identity_primal_block_only() {
        let i2 = Matrix::identity(2, 2);
        let diag = vec![Preconditioner::new(i2.clone()).unwrap(), Preconditioner::new(i2.clone()).unwrap()];
        let lower = vec![vec![], vec![Matrix::zeros(2, 2)]];
        let bp = BlockPreconditioner::new(diag, lower).unwrap();
        let (ups, _, del) = build_upsilon_sigma_delta(&bp, &[i2]).unwrap();
        assert_eq!(ups, Matrix::zeros(2, 2));
        assert!((del[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_block_is_rejected() {
        let i1 = Matrix::identity(1, 1);
        let diag = vec![Preconditioner::new(i1.clone()).unwrap(), Preconditioner::new(i1).unwrap()];
        assert!(BlockPreconditioner::new(diag, vec![vec![], vec![]]).is_err());
    }

    #[test]
    fn trivial_condition_holds() {
        let i1 = Matrix::identity(1, 1);
        let diag = vec![Preconditioner::new(i1.clone()).unwrap(), Preconditioner::new(i1.clone()).unwrap()];
        let bp = BlockPreconditioner::new(diag, vec![vec![], vec![Matrix::zeros(1, 1)]]).unwrap();
        // L + P_10 / 2 = 0 keeps Sigma zero.
        let l = Matrix::zeros(1, 1);
        let c = check_pd_conditions(&bp, &[l], 0.0, Modulus::Infinite).unwrap();
        assert!(c.verdict);
        assert!((c.rho - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rho_v_edges() {
        assert!((rho_v(-1.0, &[0.5, 0.25], &[3.0]) - 2.0).abs() < 1e-15);
        assert!(rho_v(1.0, &[1.0, 1.0], &[1.0]).abs() < 1e-15);
    }

    #[test]
    fn condition_at_theta_one_is_two_beta_rho() {
        let pdp = scalar_problem();
        for sigma in [0.2, 0.4, 0.45, 0.49, 0.5, 0.55] {
            let params = CorollaryParams::new(1.0, vec![sigma, sigma]);
            let c = params.check(&pdp).unwrap();
            let rho = 1.0 / sigma - 1.0;
            assert!((c.rho - rho).abs() < 1e-8);
            if (2.0 * rho - 1.0).abs() > 1e-6 {
                assert_eq!(c.verdict, 2.0 * rho > 1.0, "sigma {sigma}");
            }
        }
    }

    #[test]
    fn theta_zero_bound_without_cocoercive_terms() {
        let b = MaximalMonotone::normal_cone_box(Vector::from_element(1, f64::NEG_INFINITY), Vector::zeros(1)).unwrap();
        let l = Matrix::from_element(1, 1, 2.0);
        let pdp = PrimalDualProblem::new(
            MaximalMonotone::zero(1),
            CocoerciveMap::absent(1),
            MonotoneMap::zero(1),
            vec![DualBlock::simple(b, l).unwrap()],
        )
        .unwrap();
        // sigma_0 + sigma_1 < 2/|L| = 1.
        assert!(CorollaryParams::new(0.0, vec![0.3, 0.69]).check(&pdp).unwrap().verdict);
        assert!(!CorollaryParams::new(0.0, vec![0.3, 0.71]).check(&pdp).unwrap().verdict);
    }

    #[test]
    fn scalar_instance_converges_to_zero() {
        let pdp = scalar_problem();
        let cfg = SolveConfig { max_iterations: 20_000, tolerance: 1e-12, ..Default::default() };
        let rep = solve_corollary(&pdp, &CorollaryParams::new(1.0, vec![0.4, 0.4]), &cfg).unwrap();
        assert!(rep.converged());
        let (x, u) = pdp.split(&rep.z);
        assert!(x[0].abs() < 1e-8);
        assert!(u[0][0] >= 2.0 - 1e-8);
        let cv = solve_condat_vu(&pdp, 1.0 / (0.5 + 0.4), &[0.4], &cfg).unwrap();
        assert!(cv.converged());
        assert!((pdp.split(&cv.z).0[0] - x[0]).abs() < 1e-6);
    }

    #[test]
    fn solution_is_stationary() {
        let pdp = scalar_problem();
        let start = Vector::from_vec(vec![0.0, 3.0]);
        let cfg = SolveConfig { max_iterations: 5, tolerance: 1e-300, initial: Some(start.clone()), history: History::Full, ..Default::default() };
        let params = CorollaryParams::new(0.5, vec![0.3, 0.3]);
        let rep = solve_corollary(&pdp, &params, &cfg).unwrap();
        for z in &rep.history {
            assert!((z - &start).amax() < 1e-12);
        }
        let rep = solve_condat_vu(&pdp, 1.0, &[0.4], &cfg).unwrap();
        assert!((rep.z - start).amax() < 1e-12);
    }

    #[test]
    fn condat_vu_rejects_nonzero_c2() {
        let mut pdp = scalar_problem();
        pdp.c2 = MonotoneMap::linear(Matrix::identity(1, 1)).unwrap();
        assert!(matches!(solve_condat_vu(&pdp, 0.1, &[0.1], &SolveConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn violated_condition_is_a_config_error() {
        let pdp = scalar_problem();
        let err = solve_corollary(&pdp, &CorollaryParams::new(1.0, vec![0.7, 0.7]), &SolveConfig::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
