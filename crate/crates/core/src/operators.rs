//! Building blocks for monotone inclusions `0 in Ax + B1x + B2x` over a closed
//! convex set `X`.
//!
//! Each operator exposes exactly the oracle the solvers consume: resolvents
//! for `A`, forward evaluations for `B1` and `B2`, projections for `X`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, BlockLayout, LuFactor, Matrix, Vector};

pub type ResolventFn = dyn Fn(f64, &Vector) -> Result<Vector> + Send + Sync;
/// Coordinate-wise resolvent `(i, gamma, t) -> J_{gamma A_i}(t)`.
pub type ScalarResolventFn = dyn Fn(usize, f64, f64) -> f64 + Send + Sync;
pub type EvalFn = dyn Fn(&Vector) -> Vector + Send + Sync;
pub type FallibleEvalFn = dyn Fn(&Vector) -> Result<Vector> + Send + Sync;
pub type DomainFn = dyn Fn(&Vector) -> bool + Send + Sync;

fn check_len(what: &str, expected: usize, v: &Vector) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension(format!("{what}: expected length {expected}, got {}", v.len())));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("resolvent parameter must be positive and finite, got {gamma}")));
    }
    Ok(())
}

/// A maximally monotone operator, accessed through its resolvent
/// `J_{gamma A} = (Id + gamma A)^{-1}`.
#[derive(Clone)]
pub struct MaximalMonotone {
    tag: String,
    dim: usize,
    resolvent: Arc<ResolventFn>,
    separable: Option<Arc<ScalarResolventFn>>,
    linear: Option<Matrix>,
    zero: bool,
}

impl fmt::Debug for MaximalMonotone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MaximalMonotone")
            .field("tag", &self.tag)
            .field("dim", &self.dim)
            .field("separable", &self.separable.is_some())
            .field("linear", &self.linear.is_some())
            .finish()
    }
}

impl MaximalMonotone {
    /// Wraps an arbitrary resolvent oracle.
    pub fn from_resolvent<F>(dim: usize, tag: impl Into<String>, resolvent: F) -> Self
    where
        F: Fn(f64, &Vector) -> Result<Vector> + Send + Sync + 'static,
    {
        Self { tag: tag.into(), dim, resolvent: Arc::new(resolvent), separable: None, linear: None, zero: false }
    }

    /// `A = diag(A_1, ..., A_n)` acting coordinate-wise; `prox(i, gamma, t)`
    /// must return `J_{gamma A_i}(t)`.
    pub fn separable<F>(dim: usize, tag: impl Into<String>, prox: F) -> Self
    where
        F: Fn(usize, f64, f64) -> f64 + Send + Sync + 'static,
    {
        let prox: Arc<ScalarResolventFn> = Arc::new(prox);
        let p = prox.clone();
        let resolvent = move |gamma: f64, y: &Vector| Ok(Vector::from_fn(y.len(), |i, _| p(i, gamma, y[i])));
        Self { tag: tag.into(), dim, resolvent: Arc::new(resolvent), separable: Some(prox), linear: None, zero: false }
    }

    /// `A = 0`, whose resolvent is the identity.
    pub fn zero(dim: usize) -> Self {
        let mut op = Self::separable(dim, "zero", |_, _, t| t);
        op.zero = true;
        op.linear = Some(Matrix::zeros(dim, dim));
        op
    }

    /// Normal cone of the box `[lo, hi]`; the resolvent is the clamp for any
    /// `gamma`. Infinite bounds are allowed.
    pub fn normal_cone_box(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension(format!("box bounds have lengths {} and {}", lo.len(), hi.len())));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(Error::InvalidArgument(format!("empty box: lo[{i}] = {} > hi[{i}] = {}", lo[i], hi[i])));
        }
        let dim = lo.len();
        Ok(Self::separable(dim, "normal-cone-box", move |i, _, t| t.max(lo[i]).min(hi[i])))
    }

    /// Normal cone of the nonnegative orthant.
    pub fn normal_cone_nonneg(dim: usize) -> Self {
        Self::separable(dim, "normal-cone-nonneg", |_, _, t| t.max(0.0))
    }

    /// A monotone linear operator `x -> M x` (symmetric part positive
    /// semidefinite); the resolvent solves `(Id + gamma M) x = y`.
    pub fn linear(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        let (u, _) = linalg::split_symmetric_skew(&m)?;
        if u.iter().any(|&x| x != 0.0) {
            let lmin = linalg::symmetric_min_eig(&u, linalg::SPECTRAL_TOL)?;
            if lmin < -1e-10 * u.amax().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "linear operator is not monotone: smallest eigenvalue of its symmetric part is {lmin:e}"
                )));
            }
        }
        let dim = m.nrows();
        let mat = m.clone();
        let resolvent = move |gamma: f64, y: &Vector| {
            let sys = Matrix::identity(dim, dim) + &mat * gamma;
            LuFactor::new(&sys)?.solve(y)
        };
        let mut op = Self::from_resolvent(dim, "linear", resolvent);
        op.linear = Some(m);
        Ok(op)
    }

    /// Block-diagonal operator `A = A_1 x ... x A_k` on the given layout.
    pub fn product(blocks: Vec<MaximalMonotone>) -> Result<Self> {
        let sizes: Vec<usize> = blocks.iter().map(|b| b.dim).collect();
        let layout = BlockLayout::new(&sizes)?;
        let dim = layout.total();
        let tag = format!("product({})", blocks.iter().map(|b| b.tag.as_str()).collect::<Vec<_>>().join(", "));
        let zero = blocks.iter().all(|b| b.zero);

        let mut op = if blocks.iter().all(|b| b.separable.is_some()) {
            // owner[i] = (block, local index)
            let mut owner = Vec::with_capacity(dim);
            for (b, s) in sizes.iter().enumerate() {
                owner.extend((0..*s).map(|j| (b, j)));
            }
            let proxes: Vec<Arc<ScalarResolventFn>> = blocks.iter().map(|b| b.separable.clone().unwrap()).collect();
            Self::separable(dim, tag, move |i, gamma, t| {
                let (b, j) = owner[i];
                proxes[b](j, gamma, t)
            })
        } else {
            let blocks2 = blocks.clone();
            let layout2 = layout.clone();
            Self::from_resolvent(dim, tag, move |gamma, y| {
                let mut out = Vector::zeros(y.len());
                for (b, op) in blocks2.iter().enumerate() {
                    let yb = layout2.block(y, b);
                    layout2.set_block(&mut out, b, &op.resolvent(gamma, &yb)?);
                }
                Ok(out)
            })
        };
        if blocks.iter().all(|b| b.linear.is_some()) {
            let mut m = Matrix::zeros(dim, dim);
            for (b, op) in blocks.iter().enumerate() {
                let r = layout.range(b);
                m.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(op.linear.as_ref().unwrap());
            }
            op.linear = Some(m);
        }
        op.zero = zero;
        Ok(op)
    }

    /// The operator `(partial f)^{-1} = partial f*` built from this operator
    /// (taken as `partial f`) by the Moreau identity
    /// `prox_{gamma f*}(y) = y - gamma prox_{f / gamma}(y / gamma)`.
    pub fn prox_conjugate(&self) -> Self {
        let tag = format!("conj({})", self.tag);
        let mut op = if let Some(p) = self.separable.clone() {
            Self::separable(self.dim, tag, move |i, gamma, t| t - gamma * p(i, 1.0 / gamma, t / gamma))
        } else {
            let inner = self.clone();
            Self::from_resolvent(self.dim, tag, move |gamma, y| {
                let r = inner.resolvent(1.0 / gamma, &(y / gamma))?;
                Ok(y - r * gamma)
            })
        };
        // The inverse of the zero operator is the normal cone of {0}; nothing
        // linear survives conjugation except through an explicit inverse.
        op.zero = false;
        op.linear = None;
        op
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Matrix of the operator when it is linear.
    pub fn linear_matrix(&self) -> Option<&Matrix> {
        self.linear.as_ref()
    }

    pub fn is_separable(&self) -> bool {
        self.separable.is_some()
    }

    /// `J_{gamma A_i}(t)` for a separable operator.
    pub fn scalar_resolvent(&self, i: usize, gamma: f64, t: f64) -> Option<f64> {
        self.separable.as_ref().map(|p| p(i, gamma, t))
    }

    /// `J_{gamma A}(y)`.
    pub fn resolvent(&self, gamma: f64, y: &Vector) -> Result<Vector> {
        check_gamma(gamma)?;
        check_len(&self.tag, self.dim, y)?;
        (self.resolvent)(gamma, y)
    }
}

/// Per-sample losses of empirical risk minimization, `f(t)` on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarLoss {
    /// `|t - b|`
    Absolute { b: f64 },
    /// `max(0, 1 - b t)`
    Hinge { b: f64 },
    /// `(t - b)^2 / 2`
    Squared { b: f64 },
}

impl ScalarLoss {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ScalarLoss::Absolute { b } => (t - b).abs(),
            ScalarLoss::Hinge { b } => (1.0 - b * t).max(0.0),
            ScalarLoss::Squared { b } => 0.5 * (t - b) * (t - b),
        }
    }

    /// `prox_{gamma f}(t)`.
    pub fn prox(&self, gamma: f64, t: f64) -> f64 {
        match *self {
            ScalarLoss::Absolute { b } => {
                let s = t - b;
                b + s.signum() * (s.abs() - gamma).max(0.0)
            }
            ScalarLoss::Hinge { b } => {
                if b == 0.0 || b * t >= 1.0 {
                    t
                } else if b * t <= 1.0 - gamma * b * b {
                    t + gamma * b
                } else {
                    1.0 / b
                }
            }
            ScalarLoss::Squared { b } => (t + gamma * b) / (1.0 + gamma),
        }
    }

    /// `prox_{gamma f*}(t)` by the Moreau identity.
    pub fn prox_conjugate(&self, gamma: f64, t: f64) -> f64 {
        t - gamma * self.prox(1.0 / gamma, t / gamma)
    }
}

/// Cocoercivity modulus; `Infinite` encodes the absent operator `B1 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Modulus {
    Finite(f64),
    Infinite,
}

impl Modulus {
    pub fn finite(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("cocoercivity modulus must be positive and finite, got {beta}")));
        }
        Ok(Modulus::Finite(beta))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Modulus::Finite(b) => Some(*b),
            Modulus::Infinite => None,
        }
    }

    /// `1 / (2 beta)`, zero for the infinite modulus.
    pub fn half_inverse(&self) -> f64 {
        match self {
            Modulus::Finite(b) => 1.0 / (2.0 * b),
            Modulus::Infinite => 0.0,
        }
    }

    /// `1 / beta`, zero for the infinite modulus.
    pub fn inverse(&self) -> f64 {
        match self {
            Modulus::Finite(b) => 1.0 / b,
            Modulus::Infinite => 0.0,
        }
    }

    pub fn min(self, other: Modulus) -> Modulus {
        match (self, other) {
            (Modulus::Finite(a), Modulus::Finite(b)) => Modulus::Finite(a.min(b)),
            (Modulus::Finite(a), Modulus::Infinite) | (Modulus::Infinite, Modulus::Finite(a)) => Modulus::Finite(a),
            (Modulus::Infinite, Modulus::Infinite) => Modulus::Infinite,
        }
    }
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modulus::Finite(b) => write!(f, "{b}"),
            Modulus::Infinite => write!(f, "inf"),
        }
    }
}

/// A `beta`-cocoercive single-valued map.
#[derive(Clone)]
pub struct CocoerciveMap {
    tag: String,
    dim: usize,
    eval: Option<Arc<EvalFn>>,
    beta: Modulus,
    linear: Option<Matrix>,
}

impl fmt::Debug for CocoerciveMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CocoerciveMap").field("tag", &self.tag).field("dim", &self.dim).field("beta", &self.beta).finish()
    }
}

impl CocoerciveMap {
    pub fn new<F>(dim: usize, tag: impl Into<String>, beta: f64, eval: F) -> Result<Self>
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Ok(Self { tag: tag.into(), dim, eval: Some(Arc::new(eval)), beta: Modulus::finite(beta)?, linear: None })
    }

    /// The absent operator `B1 = 0` with `beta = +inf`.
    pub fn absent(dim: usize) -> Self {
        Self { tag: "absent".into(), dim, eval: None, beta: Modulus::Infinite, linear: None }
    }

    /// Linear map `x -> Q x + c` with `Q` symmetric positive semidefinite;
    /// `beta = 1 / |Q|`.
    pub fn affine_symmetric(q: Matrix, c: Vector) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() != c.len() {
            return Err(Error::Dimension("affine map needs a square matrix matching the offset".into()));
        }
        let norm = linalg::norm2(&q)?;
        if norm == 0.0 {
            return Err(Error::InvalidArgument("zero matrix: use CocoerciveMap::absent".into()));
        }
        let qc = q.clone();
        let mut map = Self::new(q.nrows(), "affine", 1.0 / norm, move |x| &qc * x + &c)?;
        map.linear = Some(q);
        Ok(map)
    }

    pub fn is_absent(&self) -> bool {
        self.eval.is_none()
    }

    pub fn beta(&self) -> Modulus {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Linear part when the map is affine.
    pub fn linear_matrix(&self) -> Option<&Matrix> {
        self.linear.as_ref()
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        match &self.eval {
            Some(f) => f(x),
            None => Vector::zeros(x.len()),
        }
    }
}

/// Gradient of `h(x) = |Ax - b|^2 / 2`, cocoercive with `beta = |A|^{-2}`.
pub fn quadratic_gradient(a: Matrix, b: Vector) -> Result<CocoerciveMap> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!("A has {} rows, b has length {}", a.nrows(), b.len())));
    }
    let norm = linalg::norm2(&a)?;
    if norm == 0.0 {
        return Err(Error::InvalidArgument("quadratic with zero matrix".into()));
    }
    let dim = a.ncols();
    let at_a = a.tr_mul(&a);
    let mut map = CocoerciveMap::new(dim, "quadratic-gradient", 1.0 / (norm * norm), move |x| a.tr_mul(&(&a * x - &b)))?;
    map.linear = Some(at_a);
    Ok(map)
}

/// A monotone single-valued map, optionally Lipschitz.
#[derive(Clone)]
pub struct MonotoneMap {
    tag: String,
    dim: usize,
    eval: Option<Arc<FallibleEvalFn>>,
    lipschitz: Option<f64>,
    domain: Option<Arc<DomainFn>>,
    linear: Option<Matrix>,
}

impl fmt::Debug for MonotoneMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotoneMap")
            .field("tag", &self.tag)
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl MonotoneMap {
    /// A general map. `lipschitz = None` means continuity only, which forces a
    /// line-search solver.
    pub fn new<F>(dim: usize, tag: impl Into<String>, lipschitz: Option<f64>, eval: F) -> Result<Self>
    where
        F: Fn(&Vector) -> Result<Vector> + Send + Sync + 'static,
    {
        if let Some(l) = lipschitz {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::InvalidArgument(format!("Lipschitz constant must be finite and nonnegative, got {l}")));
            }
        }
        Ok(Self { tag: tag.into(), dim, eval: Some(Arc::new(eval)), lipschitz, domain: None, linear: None })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            tag: "zero".into(),
            dim,
            eval: None,
            lipschitz: Some(0.0),
            domain: None,
            linear: Some(Matrix::zeros(dim, dim)),
        }
    }

    /// `x -> D x` for a monotone (positive semidefinite symmetric part) `D`;
    /// `L = |D|`.
    pub fn linear(d: Matrix) -> Result<Self> {
        if d.nrows() != d.ncols() {
            return Err(Error::NotSquare { rows: d.nrows(), cols: d.ncols() });
        }
        let (u, _) = linalg::split_symmetric_skew(&d)?;
        if u.iter().any(|&x| x != 0.0) && linalg::symmetric_min_eig(&u, linalg::SPECTRAL_TOL)? < -1e-10 * u.amax().max(1.0) {
            return Err(Error::InvalidArgument("linear map is not monotone".into()));
        }
        let l = linalg::norm2(&d)?;
        let dc = d.clone();
        let mut map = Self::new(d.nrows(), "linear", Some(l), move |x| Ok(&dc * x))?;
        map.linear = Some(d);
        Ok(map)
    }

    pub fn with_domain<F>(mut self, domain: F) -> Self
    where
        F: Fn(&Vector) -> bool + Send + Sync + 'static,
    {
        self.domain = Some(Arc::new(domain));
        self
    }

    pub fn is_zero(&self) -> bool {
        self.eval.is_none()
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn linear_matrix(&self) -> Option<&Matrix> {
        self.linear.as_ref()
    }

    pub fn in_domain(&self, x: &Vector) -> bool {
        self.domain.as_ref().is_none_or(|d| d(x))
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        check_len(&self.tag, self.dim, x)?;
        match &self.eval {
            None => Ok(Vector::zeros(x.len())),
            Some(f) => {
                if !self.in_domain(x) {
                    return Err(Error::DomainViolation(format!("{} evaluated outside its domain", self.tag)));
                }
                f(x)
            }
        }
    }
}

/// A smooth convex constraint `g(x) <= 0`.
#[derive(Clone)]
pub struct Constraint {
    pub tag: String,
    value: Arc<dyn Fn(&Vector) -> Result<f64> + Send + Sync>,
    gradient: Arc<FallibleEvalFn>,
    domain: Arc<DomainFn>,
    /// `(d, c)` when `g(x) = d^T x + c`.
    affine: Option<(Vector, f64)>,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint").field("tag", &self.tag).field("affine", &self.affine.is_some()).finish()
    }
}

impl Constraint {
    pub fn new<V, G, D>(tag: impl Into<String>, value: V, gradient: G, domain: D) -> Self
    where
        V: Fn(&Vector) -> Result<f64> + Send + Sync + 'static,
        G: Fn(&Vector) -> Result<Vector> + Send + Sync + 'static,
        D: Fn(&Vector) -> bool + Send + Sync + 'static,
    {
        Self { tag: tag.into(), value: Arc::new(value), gradient: Arc::new(gradient), domain: Arc::new(domain), affine: None }
    }

    /// `g(x) = d^T x + c`.
    pub fn affine(d: Vector, c: f64) -> Self {
        let d1 = d.clone();
        let d2 = d.clone();
        let mut g = Self::new("affine", move |x: &Vector| Ok(d1.dot(x) + c), move |_| Ok(d2.clone()), |_| true);
        g.affine = Some((d, c));
        g
    }

    pub fn affine_data(&self) -> Option<&(Vector, f64)> {
        self.affine.as_ref()
    }

    pub fn in_domain(&self, x: &Vector) -> bool {
        (self.domain)(x)
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        if !self.in_domain(x) {
            return Err(Error::DomainViolation(format!("gradient of {} requested outside its domain", self.tag)));
        }
        (self.gradient)(x)
    }
}

/// `g(x) = sum_i x_i (ln(x_i / a_i) - 1) - r`, with `0 ln 0 = 0`.
pub fn entropy_constraint(a: Vector, r: f64) -> Result<Constraint> {
    if a.iter().any(|&ai| !(ai > 0.0)) {
        return Err(Error::InvalidArgument("entropy reference vector must be strictly positive".into()));
    }
    let total: f64 = a.sum();
    if !(-total < r && r < 0.0) {
        return Err(Error::InvalidArgument(format!("entropy radius must lie in ]{}, 0[, got {r}", -total)));
    }
    let a1 = a.clone();
    let a2 = a;
    let value = move |x: &Vector| {
        if x.len() != a1.len() {
            return Err(Error::Dimension(format!("entropy constraint on length {}, got {}", a1.len(), x.len())));
        }
        let mut s = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi < 0.0 {
                return Err(Error::DomainViolation(format!("entropy constraint at x[{i}] = {xi} < 0")));
            }
            if xi > 0.0 {
                s += xi * ((xi / a1[i]).ln() - 1.0);
            }
        }
        Ok(s - r)
    };
    let gradient = move |x: &Vector| {
        if let Some(i) = x.iter().position(|&xi| !(xi > 0.0)) {
            return Err(Error::DomainViolation(format!("entropy gradient at x[{i}] = {} <= 0", x[i])));
        }
        Ok(Vector::from_fn(x.len(), |i, _| (x[i] / a2[i]).ln()))
    };
    let domain = |x: &Vector| x.iter().all(|&xi| xi > 0.0);
    Ok(Constraint::new("entropy", value, gradient, domain))
}

/// The saddle map `(x, u) -> (sum_i u_i grad g_i(x), -g_1(x), ..., -g_p(x))`
/// on `R^n x R^p`. Lipschitz with constant `|D|` when all constraints are
/// affine (`D` stacks their coefficient rows); continuous only otherwise.
pub fn lagrangian_saddle_map(n: usize, constraints: Vec<Constraint>) -> Result<MonotoneMap> {
    let p = constraints.len();
    if p == 0 {
        return Err(Error::InvalidArgument("at least one constraint is required".into()));
    }
    let all_affine = constraints.iter().all(|g| g.affine.is_some());
    let (lipschitz, linear) = if all_affine {
        let mut d = Matrix::zeros(p, n);
        for (i, g) in constraints.iter().enumerate() {
            let (row, _) = g.affine.as_ref().unwrap();
            if row.len() != n {
                return Err(Error::Dimension(format!("constraint {i} has {} coefficients, expected {n}", row.len())));
            }
            d.row_mut(i).copy_from(&row.transpose());
        }
        let norm = linalg::norm2(&d)?;
        let mut skew = Matrix::zeros(n + p, n + p);
        skew.view_mut((0, n), (n, p)).copy_from(&d.transpose());
        skew.view_mut((n, 0), (p, n)).copy_from(&(-&d));
        (Some(norm), Some(skew))
    } else {
        (None, None)
    };
    let cs = constraints.clone();
    let eval = move |w: &Vector| {
        let x = w.rows(0, n).into_owned();
        let mut out = Vector::zeros(n + p);
        for (i, g) in cs.iter().enumerate() {
            if !g.in_domain(&x) {
                return Err(Error::DomainViolation(format!("constraint {i} ({}) is not defined at the current point", g.tag)));
            }
            let ui = w[n + i];
            if ui != 0.0 {
                let grad = g.gradient(&x)?;
                let mut top = out.rows_mut(0, n);
                top.axpy(ui, &grad, 1.0);
            }
            out[n + i] = -g.value(&x)?;
        }
        Ok(out)
    };
    let cs2 = constraints;
    let mut map = MonotoneMap::new(n + p, "lagrangian-saddle", lipschitz, eval)?
        .with_domain(move |w: &Vector| {
            let x = w.rows(0, n).into_owned();
            cs2.iter().all(|g| g.in_domain(&x))
        });
    map.linear = linear;
    Ok(map)
}

/// A nonempty closed convex set with its projection.
#[derive(Clone)]
pub enum ClosedConvexSet {
    Whole(usize),
    /// `[lo, hi]`, infinite bounds allowed.
    Box { lo: Vector, hi: Vector },
    Custom {
        dim: usize,
        tag: String,
        project: Arc<EvalFn>,
        contains: Arc<dyn Fn(&Vector, f64) -> bool + Send + Sync>,
    },
}

impl fmt::Debug for ClosedConvexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClosedConvexSet::Whole(n) => write!(f, "Whole({n})"),
            ClosedConvexSet::Box { lo, .. } => write!(f, "Box(dim {})", lo.len()),
            ClosedConvexSet::Custom { dim, tag, .. } => write!(f, "Custom({tag}, dim {dim})"),
        }
    }
}

impl ClosedConvexSet {
    pub fn whole(dim: usize) -> Self {
        ClosedConvexSet::Whole(dim)
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if (0..lo.len()).any(|i| !(lo[i] <= hi[i])) {
            return Err(Error::InvalidArgument("empty box".into()));
        }
        Ok(ClosedConvexSet::Box { lo, hi })
    }

    pub fn nonneg(dim: usize) -> Self {
        ClosedConvexSet::Box { lo: Vector::zeros(dim), hi: Vector::from_element(dim, f64::INFINITY) }
    }

    /// Cartesian product; boxes and whole spaces fuse into a single box.
    pub fn product(sets: Vec<ClosedConvexSet>) -> Result<Self> {
        let sizes: Vec<usize> = sets.iter().map(|s| s.dim()).collect();
        let layout = BlockLayout::new(&sizes)?;
        if sets.iter().all(|s| matches!(s, ClosedConvexSet::Whole(_))) {
            return Ok(ClosedConvexSet::Whole(layout.total()));
        }
        if sets.iter().all(|s| !matches!(s, ClosedConvexSet::Custom { .. })) {
            let mut lo = Vec::with_capacity(layout.total());
            let mut hi = Vec::with_capacity(layout.total());
            for s in &sets {
                match s {
                    ClosedConvexSet::Whole(n) => {
                        lo.extend(std::iter::repeat_n(f64::NEG_INFINITY, *n));
                        hi.extend(std::iter::repeat_n(f64::INFINITY, *n));
                    }
                    ClosedConvexSet::Box { lo: l, hi: h } => {
                        lo.extend(l.iter());
                        hi.extend(h.iter());
                    }
                    ClosedConvexSet::Custom { .. } => unreachable!(),
                }
            }
            return Ok(ClosedConvexSet::Box { lo: Vector::from_vec(lo), hi: Vector::from_vec(hi) });
        }
        let s1 = sets.clone();
        let l1 = layout.clone();
        let project = move |y: &Vector| {
            let mut out = Vector::zeros(y.len());
            for (b, s) in s1.iter().enumerate() {
                l1.set_block(&mut out, b, &s.project(&l1.block(y, b)));
            }
            out
        };
        let contains = move |x: &Vector, tol: f64| sets.iter().enumerate().all(|(b, s)| s.contains(&layout.block(x, b), tol));
        Ok(ClosedConvexSet::Custom { dim: sizes.iter().sum(), tag: "product".into(), project: Arc::new(project), contains: Arc::new(contains) })
    }

    pub fn dim(&self) -> usize {
        match self {
            ClosedConvexSet::Whole(n) => *n,
            ClosedConvexSet::Box { lo, .. } => lo.len(),
            ClosedConvexSet::Custom { dim, .. } => *dim,
        }
    }

    pub fn is_whole(&self) -> bool {
        match self {
            ClosedConvexSet::Whole(_) => true,
            ClosedConvexSet::Box { lo, hi } => lo.iter().all(|l| *l == f64::NEG_INFINITY) && hi.iter().all(|h| *h == f64::INFINITY),
            ClosedConvexSet::Custom { .. } => false,
        }
    }

    /// Euclidean projection.
    pub fn project(&self, y: &Vector) -> Vector {
        match self {
            ClosedConvexSet::Whole(_) => y.clone(),
            ClosedConvexSet::Box { lo, hi } => Vector::from_fn(y.len(), |i, _| y[i].max(lo[i]).min(hi[i])),
            ClosedConvexSet::Custom { project, .. } => project(y),
        }
    }

    /// Projection in the metric `<U., .>`. Closed-form only for the whole
    /// space (any `U`) and for boxes under diagonal `U`, where it coincides
    /// with the clamp.
    pub fn project_in_metric(&self, u: &Matrix, y: &Vector) -> Result<Vector> {
        if self.is_whole() {
            return Ok(y.clone());
        }
        match self {
            ClosedConvexSet::Box { .. } if linalg::is_diagonal(u) => Ok(self.project(y)),
            _ => Err(Error::InvalidArgument("metric projection is only available for the whole space or a box under a diagonal metric".into())),
        }
    }

    pub fn supports_metric(&self, u: &Matrix) -> bool {
        self.is_whole() || (matches!(self, ClosedConvexSet::Box { .. }) && linalg::is_diagonal(u))
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        match self {
            ClosedConvexSet::Whole(_) => true,
            ClosedConvexSet::Box { lo, hi } => (0..x.len()).all(|i| x[i] >= lo[i] - tol && x[i] <= hi[i] + tol),
            ClosedConvexSet::Custom { contains, .. } => contains(x, tol),
        }
    }
}

/// The inclusion `find x in X with 0 in Ax + B1x + B2x`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub a: MaximalMonotone,
    pub b1: CocoerciveMap,
    pub b2: MonotoneMap,
    pub x_set: ClosedConvexSet,
    pub known_solution: Option<Vector>,
}

impl ProblemSpec {
    pub fn new(a: MaximalMonotone, b1: CocoerciveMap, b2: MonotoneMap, x_set: ClosedConvexSet) -> Result<Self> {
        let n = a.dim();
        for (what, d) in [("B1", b1.dim()), ("B2", b2.dim()), ("X", x_set.dim())] {
            if d != n {
                return Err(Error::Dimension(format!("{what} acts on dimension {d}, A on {n}")));
            }
        }
        Ok(Self { a, b1, b2, x_set, known_solution: None })
    }

    pub fn with_solution(mut self, z: Vector) -> Self {
        self.known_solution = Some(z);
        self
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn beta(&self) -> Modulus {
        self.b1.beta()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vector {
        Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
    }

    fn firmly_nonexpansive(op: &MaximalMonotone, rng: &mut ChaCha8Rng) {
        for &gamma in &[0.1, 1.0, 10.0] {
            for _ in 0..100 {
                let x = randn(rng, op.dim()) * 3.0;
                let y = randn(rng, op.dim()) * 3.0;
                let jx = op.resolvent(gamma, &x).unwrap();
                let jy = op.resolvent(gamma, &y).unwrap();
                let d = &jx - &jy;
                assert!(d.norm_squared() <= d.dot(&(&x - &y)) + 1e-10, "{} at gamma {gamma}", op.tag());
            }
        }
    }

    #[test]
    fn box_examples() {
        let op = MaximalMonotone::normal_cone_box(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        for gamma in [0.01, 1.0, 100.0] {
            assert_eq!(op.resolvent(gamma, &v(&[2.0, -1.0])).unwrap(), v(&[1.0, 0.0]));
            assert_eq!(op.resolvent(gamma, &v(&[0.3, 0.7])).unwrap(), v(&[0.3, 0.7]));
        }
        let n = 6;
        let op = MaximalMonotone::normal_cone_box(Vector::from_element(n, 0.001), Vector::from_element(n, 1.0)).unwrap();
        assert_eq!(op.resolvent(1.0, &Vector::zeros(n)).unwrap(), Vector::from_element(n, 0.001));
        assert!(MaximalMonotone::normal_cone_box(v(&[1.0]), v(&[0.0])).is_err());
    }

    #[test]
    fn conjugate_examples() {
        // f = indicator of {0}: prox_f = 0, f* = 0, prox_{gamma f*} = Id
        let point = MaximalMonotone::separable(3, "point", |_, _, _| 0.0);
        let conj = point.prox_conjugate();
        let y = v(&[1.5, -2.0, 0.25]);
        assert_eq!(conj.resolvent(0.7, &y).unwrap(), y);

        // f = |.|: f* is the indicator of [-1, 1]
        let abs = MaximalMonotone::separable(1, "abs", |_, g, t: f64| t.signum() * (t.abs() - g).max(0.0));
        let conj = abs.prox_conjugate();
        for gamma in [0.1, 1.0, 5.0] {
            for t in [-3.0, -1.0, -0.2, 0.0, 0.6, 2.5] {
                let p = conj.resolvent(gamma, &v(&[t])).unwrap()[0];
                assert_relative_eq!(p, t.max(-1.0).min(1.0), epsilon = 1e-14);
            }
        }

        // f = indicator of R_+: f* is the indicator of R_-
        let conj = MaximalMonotone::normal_cone_nonneg(1).prox_conjugate();
        for t in [-2.0, -0.1, 0.0, 0.4, 3.0] {
            assert_relative_eq!(conj.resolvent(2.0, &v(&[t])).unwrap()[0], t.min(0.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn moreau_identity_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gamma_dist = Uniform::new(0.05, 5.0).unwrap();
        let ops = vec![
            MaximalMonotone::normal_cone_box(Vector::from_element(4, -0.5), Vector::from_element(4, 0.8)).unwrap(),
            MaximalMonotone::separable(4, "abs", |_, g, t: f64| t.signum() * (t.abs() - g).max(0.0)),
            MaximalMonotone::linear(Matrix::from_row_slice(4, 4, &[
                2.0, 1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0,
            ]))
            .unwrap(),
        ];
        for op in &ops {
            let conj = op.prox_conjugate();
            for _ in 0..50 {
                let gamma: f64 = gamma_dist.sample(&mut rng);
                let y = randn(&mut rng, 4) * 2.0;
                let lhs = op.resolvent(gamma, &y).unwrap() + conj.resolvent(1.0 / gamma, &(&y / gamma)).unwrap() * gamma;
                assert_relative_eq!(lhs, y, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn catalog_is_firmly_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let boxed = MaximalMonotone::normal_cone_box(Vector::from_element(3, -1.0), Vector::from_element(3, 2.0)).unwrap();
        let lin = MaximalMonotone::linear(Matrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -2.0, 0.5, 0.0, 0.0, 0.0, 0.0])).unwrap();
        let losses = [ScalarLoss::Absolute { b: 0.3 }, ScalarLoss::Hinge { b: -1.5 }, ScalarLoss::Squared { b: 2.0 }];
        let loss_op = MaximalMonotone::separable(3, "losses", move |i, g, t| losses[i].prox(g, t));
        let ops = vec![
            MaximalMonotone::zero(3),
            boxed.clone(),
            MaximalMonotone::normal_cone_nonneg(3),
            lin.clone(),
            loss_op.clone(),
            loss_op.prox_conjugate(),
            boxed.prox_conjugate(),
            lin.prox_conjugate(),
            MaximalMonotone::product(vec![boxed, lin]).unwrap(),
        ];
        for op in &ops {
            firmly_nonexpansive(op, &mut rng);
        }
    }

    #[test]
    fn scalar_losses_match_subgradient_optimality() {
        // p = prox_{g f}(t) iff (t - p) / g is a subgradient of f at p
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for loss in [ScalarLoss::Absolute { b: 0.4 }, ScalarLoss::Hinge { b: 1.3 }, ScalarLoss::Hinge { b: -0.7 }, ScalarLoss::Squared { b: -1.0 }] {
            for _ in 0..200 {
                let s: f64 = StandardNormal.sample(&mut rng);
                let t = 3.0 * s;
                let g = 0.7;
                let p = loss.prox(g, t);
                let s = (t - p) / g;
                // subgradient check via convexity inequality on a grid
                for q in [-3.0, -1.0, -0.3, 0.0, 0.2, 0.9, 2.0, 4.0] {
                    assert!(loss.value(q) >= loss.value(p) + s * (q - p) - 1e-12, "{loss:?} t={t}");
                }
            }
        }
    }

    #[test]
    fn product_dispatches_blocks() {
        let a = MaximalMonotone::normal_cone_box(v(&[0.0]), v(&[1.0])).unwrap();
        let b = MaximalMonotone::normal_cone_nonneg(2);
        let prod = MaximalMonotone::product(vec![a, b]).unwrap();
        assert!(prod.is_separable());
        assert_eq!(prod.resolvent(1.0, &v(&[3.0, -1.0, 2.0])).unwrap(), v(&[1.0, 0.0, 2.0]));
    }

    #[test]
    fn quadratic_gradient_examples() {
        let g = quadratic_gradient(Matrix::identity(3, 3), Vector::zeros(3)).unwrap();
        assert_relative_eq!(g.beta().value().unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(g.eval(&v(&[1.0, 2.0, 3.0])), v(&[1.0, 2.0, 3.0]));

        let g = quadratic_gradient(Matrix::from_element(1, 1, 2.0), Vector::zeros(1)).unwrap();
        assert_relative_eq!(g.beta().value().unwrap(), 0.25, epsilon = 1e-12);
        assert_eq!(g.eval(&v(&[1.5])), v(&[6.0]));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Matrix::from_fn(5, 10, |_, _| StandardNormal.sample(&mut rng));
        let b = randn(&mut rng, 5);
        let g = quadratic_gradient(a, b).unwrap();
        let beta = g.beta().value().unwrap();
        for _ in 0..100 {
            let x = randn(&mut rng, 10);
            let y = randn(&mut rng, 10);
            let d = g.eval(&x) - g.eval(&y);
            let lhs = d.dot(&(&x - &y));
            assert!(lhs >= beta * d.norm_squared() - 1e-10 * (1.0 + (&x - &y).norm_squared()));
        }
    }

    #[test]
    fn entropy_examples() {
        let n = 8;
        let a = Vector::from_element(n, 1.0);
        let r = -0.4 * n as f64;
        let g = entropy_constraint(a.clone(), r).unwrap();
        // x = a: every term is a_i (ln 1 - 1) = -a_i
        assert_relative_eq!(g.value(&a).unwrap(), -(n as f64) - r, epsilon = 1e-12);
        assert_relative_eq!(g.value(&a).unwrap(), -0.6 * n as f64, epsilon = 1e-12);
        assert_eq!(g.gradient(&a).unwrap(), Vector::zeros(n));

        // 0 ln 0 = 0 at the boundary, gradient undefined there
        let mut x = a.clone();
        x[0] = 0.0;
        assert_relative_eq!(g.value(&x).unwrap(), -((n - 1) as f64) - r, epsilon = 1e-12);
        assert!(matches!(g.gradient(&x), Err(Error::DomainViolation(_))));
        x[0] = -0.1;
        assert!(matches!(g.value(&x), Err(Error::DomainViolation(_))));

        assert!(entropy_constraint(a.clone(), 0.0).is_err());
        assert!(entropy_constraint(a, -(n as f64)).is_err());
    }

    #[test]
    fn entropy_gradient_matches_central_differences() {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let unif = Uniform::new(0.5, 1.5).unwrap();
        let a = Vector::from_fn(n, |_, _| unif.sample(&mut rng));
        let g = entropy_constraint(a, -1.0).unwrap();
        let h = 1e-6;
        for _ in 0..100 {
            let x = Vector::from_fn(n, |_, _| unif.sample(&mut rng));
            let grad = g.gradient(&x).unwrap();
            for i in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (g.value(&xp).unwrap() - g.value(&xm).unwrap()) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1.0), "fd {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn saddle_map_examples() {
        let d = v(&[1.0, -2.0, 0.5]);
        let map = lagrangian_saddle_map(3, vec![Constraint::affine(d.clone(), 0.0)]).unwrap();
        let w = v(&[0.3, 1.0, -2.0, 1.7]);
        let out = map.eval(&w).unwrap();
        let expected_top = &d * 1.7;
        assert_relative_eq!(out.rows(0, 3).into_owned(), expected_top, epsilon = 1e-15);
        assert_relative_eq!(out[3], -d.dot(&w.rows(0, 3).into_owned()), epsilon = 1e-15);
        assert_relative_eq!(map.lipschitz().unwrap(), d.norm(), epsilon = 1e-9);

        // u = 0: only the constraint values survive
        let w0 = v(&[0.3, 1.0, -2.0, 0.0]);
        let out = map.eval(&w0).unwrap();
        assert_eq!(out.rows(0, 3).into_owned(), Vector::zeros(3));

        // entropy at x = a = 1, u = 1
        let n = 4;
        let r = -1.2;
        let ent = entropy_constraint(Vector::from_element(n, 1.0), r).unwrap();
        let map = lagrangian_saddle_map(n, vec![ent]).unwrap();
        assert!(map.lipschitz().is_none());
        let mut w = Vector::from_element(n + 1, 1.0);
        let out = map.eval(&w).unwrap();
        assert_relative_eq!(out.rows(0, n).into_owned(), Vector::zeros(n), epsilon = 1e-15);
        assert_relative_eq!(out[n], n as f64 + r, epsilon = 1e-12);
        w[0] = -0.5;
        assert!(matches!(map.eval(&w), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn saddle_map_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let unif = Uniform::new(0.05, 2.0).unwrap();
        let n = 5;
        let ent = entropy_constraint(Vector::from_element(n, 1.0), -2.0).unwrap();
        let aff = Constraint::affine(randn(&mut rng, n), 0.3);
        let map = lagrangian_saddle_map(n, vec![ent, aff]).unwrap();
        for _ in 0..200 {
            let w1 = Vector::from_fn(n + 2, |_, _| unif.sample(&mut rng));
            let w2 = Vector::from_fn(n + 2, |_, _| unif.sample(&mut rng));
            let d = map.eval(&w1).unwrap() - map.eval(&w2).unwrap();
            assert!(d.dot(&(&w1 - &w2)) >= -1e-8);
        }
    }

    #[test]
    fn sets_project_idempotently() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sets = vec![
            ClosedConvexSet::whole(4),
            ClosedConvexSet::boxed(Vector::from_element(4, -1.0), Vector::from_element(4, 0.5)).unwrap(),
            ClosedConvexSet::nonneg(4),
            ClosedConvexSet::product(vec![ClosedConvexSet::whole(2), ClosedConvexSet::nonneg(2)]).unwrap(),
        ];
        for s in &sets {
            for _ in 0..50 {
                let y = randn(&mut rng, 4) * 3.0;
                let p = s.project(&y);
                assert!(s.contains(&p, 1e-10));
                assert!((s.project(&p) - &p).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn problem_spec_checks_dimensions() {
        let spec = ProblemSpec::new(MaximalMonotone::zero(3), CocoerciveMap::absent(3), MonotoneMap::zero(2), ClosedConvexSet::whole(3));
        assert!(matches!(spec, Err(Error::Dimension(_))));
    }
}
