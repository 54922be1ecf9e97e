//! Dense vector/matrix kernels and the spectral estimates used by every
//! step-size and metric condition in the crate.
//!
//! Storage is backed by `nalgebra`'s dynamically sized types. The spectral
//! routines are plain power iterations with deterministic start vectors so
//! that every derived constant is reproducible run to run.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// A point of the ambient (finite-dimensional) Hilbert space.
pub type Vector = DVector<f64>;
/// Dense real matrix.
pub type Matrix = DMatrix<f64>;

/// Default tolerance for the spectral estimates.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Default iteration cap for [`operator_norm`].
pub const SPECTRAL_MAX_ITER: usize = 200_000;
/// Margin applied on top of the strict step-size inequalities.
pub const STRICT_MARGIN: f64 = 1e-12;

/// `lhs < rhs` with the crate-wide safety margin, scaled by `max(1, |rhs|)`.
pub fn strictly_less(lhs: f64, rhs: f64) -> bool {
    lhs < rhs - STRICT_MARGIN * rhs.abs().max(1.0)
}

/// Offsets of the blocks of a product-space vector `(x_0, x_1, ..., x_m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidArgument("block layout needs at least one block".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument("block sizes must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Ok(Self { offsets })
    }

    pub fn num_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn size(&self, block: usize) -> usize {
        self.offsets[block + 1] - self.offsets[block]
    }

    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    /// Copies block `i` of `v` out.
    pub fn block(&self, v: &Vector, block: usize) -> Vector {
        v.rows(self.offsets[block], self.size(block)).into_owned()
    }

    pub fn set_block(&self, v: &mut Vector, block: usize, value: &Vector) {
        v.rows_mut(self.offsets[block], self.size(block)).copy_from(value);
    }

    /// Concatenates blocks laid out according to `self`.
    pub fn join(&self, blocks: &[Vector]) -> Result<Vector> {
        if blocks.len() != self.num_blocks() {
            return Err(Error::Dimension(format!(
                "expected {} blocks, got {}",
                self.num_blocks(),
                blocks.len()
            )));
        }
        let mut out = Vector::zeros(self.total());
        for (i, b) in blocks.iter().enumerate() {
            if b.len() != self.size(i) {
                return Err(Error::Dimension(format!(
                    "block {i} has length {}, expected {}",
                    b.len(),
                    self.size(i)
                )));
            }
            self.set_block(&mut out, i, b);
        }
        Ok(out)
    }
}

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// A fixed, "generic" start vector: deterministic but not aligned with any
/// structured subspace (constants, alternating signs, coordinate axes).
fn generic_start(n: usize) -> Vector {
    let v = Vector::from_fn(n, |i, _| 1.0 + 0.5 * (1.0 + 2.399_963_229_728_653 * i as f64).sin());
    let norm = v.norm();
    v / norm
}

fn ones_start(n: usize) -> Vector {
    Vector::from_element(n, 1.0 / (n as f64).sqrt())
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration. Stops when the eigen-residual `|Gv - mu v|` drops below
/// `tol_of(mu)`.
fn power_top<G, T>(apply: G, start: Vector, tol_of: T, max_iter: usize) -> Result<f64>
where
    G: Fn(&Vector) -> Vector,
    T: Fn(f64) -> f64,
{
    let mut v = start;
    let mut mu = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v);
        mu = v.dot(&w);
        let residual = (&w - &v * mu).norm();
        if residual <= tol_of(mu) {
            return Ok(mu);
        }
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        v = w / wn;
    }
    Err(Error::NoConvergence { iterations: max_iter, estimate: mu })
}

/// Spectral norm `|M|_2` by power iteration on `M^T M`.
///
/// The primary start vector is the normalized all-ones vector (its first
/// entry bumped by one when it lies in the kernel of `M`). A second run from a
/// fixed generic vector guards against the all-ones vector being orthogonal to
/// the top singular subspace; the larger estimate is returned.
pub fn operator_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if m.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let gram = |v: &Vector| m.tr_mul(&(m * v));
    // |sigma^2 - mu| <= r  gives  |sigma - sqrt(mu)| <~ r / (2 sigma).
    let tol_of = |mu: f64| 2.0 * tol * mu;

    let mut start = ones_start(n);
    if (m * &start).norm() == 0.0 {
        start[0] += 1.0;
        let nrm = start.norm();
        start /= nrm;
    }
    let first = power_top(gram, start, tol_of, max_iter)?;
    let second = power_top(gram, generic_start(n), tol_of, max_iter)?;
    Ok(first.max(second).max(0.0).sqrt())
}

/// [`operator_norm`] with the crate defaults.
pub fn norm2(m: &Matrix) -> Result<f64> {
    operator_norm(m, SPECTRAL_TOL, SPECTRAL_MAX_ITER)
}

fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(())
}

/// Largest entrywise asymmetry `max |M_ij - M_ji|`.
pub fn asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of a symmetric matrix, via power iteration on
/// `c Id - M` with `c = |M|_2 + 1`.
pub fn symmetric_min_eig(m: &Matrix, tol: f64) -> Result<f64> {
    check_square(m)?;
    let scale = m.amax().max(1.0);
    let asym = asymmetry(m);
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let shift = norm2(m)? + 1.0;
    let n = m.nrows();
    let shifted = |v: &Vector| v * shift - m * v;
    // Iteration cap grows with the conditioning of the shifted operator.
    let max_iter = 2_000_000;
    let a = power_top(shifted, ones_start(n), |_| tol, max_iter)?;
    let b = power_top(shifted, generic_start(n), |_| tol, max_iter)?;
    Ok(shift - a.max(b))
}

/// Symmetric and skew parts `U = (P + P^T)/2`, `S = (P - P^T)/2`.
pub fn split_symmetric_skew(p: &Matrix) -> Result<(Matrix, Matrix)> {
    check_square(p)?;
    let n = p.nrows();
    let mut u = Matrix::zeros(n, n);
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = p[(i, j)];
            let b = p[(j, i)];
            u[(i, j)] = 0.5 * (a + b);
            s[(i, j)] = 0.5 * (a - b);
        }
    }
    Ok((u, s))
}

/// Cholesky factor of a symmetric positive definite matrix, kept for
/// repeated solves.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(u: &Matrix) -> Result<Self> {
        check_square(u)?;
        Cholesky::new(u.clone())
            .map(|chol| Self { chol })
            .ok_or(Error::NotPositiveDefinite)
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        self.chol.solve(b)
    }
}

/// Solves `U x = b` for symmetric positive definite `U`.
pub fn solve_spd(u: &Matrix, b: &Vector) -> Result<Vector> {
    if u.nrows() != b.len() {
        return Err(Error::Dimension(format!("{}x{} system with rhs of length {}", u.nrows(), u.ncols(), b.len())));
    }
    Ok(SpdFactor::new(u)?.solve(b))
}

/// LU factor of a general square matrix, kept for repeated solves.
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: LU<f64, Dyn, Dyn>,
}

impl LuFactor {
    pub fn new(m: &Matrix) -> Result<Self> {
        check_square(m)?;
        let lu = LU::new(m.clone());
        if !lu.is_invertible() {
            return Err(Error::Singular);
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        self.lu.solve(b).ok_or(Error::Singular)
    }
}

/// Solves a general square system `M x = b`.
pub fn solve_linear(m: &Matrix, b: &Vector) -> Result<Vector> {
    if m.nrows() != b.len() {
        return Err(Error::Dimension(format!("{}x{} system with rhs of length {}", m.nrows(), m.ncols(), b.len())));
    }
    LuFactor::new(m)?.solve(b)
}

/// True when every strictly-upper entry is exactly zero.
pub fn is_lower_triangular(m: &Matrix) -> bool {
    (0..m.nrows()).all(|i| ((i + 1)..m.ncols()).all(|j| m[(i, j)] == 0.0))
}

pub fn is_diagonal(m: &Matrix) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    /// Closed-form largest singular value of a 2x2 matrix.
    fn svd2_max(a: &Matrix) -> f64 {
        let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
        let t = p * p + q * q + r * r + s * s;
        let d = (p * s - q * r).abs();
        ((t + (t * t - 4.0 * d * d).max(0.0).sqrt()) / 2.0).sqrt()
    }

    #[test]
    fn operator_norm_examples() {
        assert_relative_eq!(norm2(&Matrix::identity(3, 3)).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(norm2(&m(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap(), 3.0, epsilon = 1e-9);
        let rot = m(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!(norm2(&rot).unwrap(), svd2_max(&rot), epsilon = 1e-12);
        assert_relative_eq!(svd2_max(&rot), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn operator_norm_start_in_kernel() {
        // all-ones lies in the kernel of this row vector
        let a = m(1, 2, &[1.0, -1.0]);
        assert_relative_eq!(norm2(&a).unwrap(), 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn operator_norm_ones_orthogonal_to_top_direction() {
        // M^T M = [[2,-1],[-1,2]]: ones is the eigenvector of the *small* eigenvalue
        let g = m(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let chol = g.clone().cholesky().unwrap().l().transpose();
        assert_relative_eq!(norm2(&chol).unwrap(), 3f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn operator_norm_reports_non_convergence() {
        let a = m(2, 2, &[1.0, 0.3, 0.2, 0.9]);
        match operator_norm(&a, 1e-15, 1) {
            Err(Error::NoConvergence { estimate, .. }) => assert!(estimate > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn min_eig_examples() {
        assert_relative_eq!(symmetric_min_eig(&m(2, 2, &[2.0, 0.0, 0.0, 5.0]), 1e-10).unwrap(), 2.0, epsilon = 1e-9);
        assert_relative_eq!(symmetric_min_eig(&m(2, 2, &[2.0, 1.0, 1.0, 2.0]), 1e-10).unwrap(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(symmetric_min_eig(&Matrix::identity(4, 4), 1e-10).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn min_eig_rejects_asymmetric() {
        assert!(matches!(
            symmetric_min_eig(&m(2, 2, &[1.0, 2.0, 0.0, 1.0]), 1e-10),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn split_examples() {
        let (u, s) = split_symmetric_skew(&m(2, 2, &[2.0, 1.0, 0.0, 2.0])).unwrap();
        assert_eq!(u, m(2, 2, &[2.0, 0.5, 0.5, 2.0]));
        assert_eq!(s, m(2, 2, &[0.0, 0.5, -0.5, 0.0]));

        let sym = m(2, 2, &[1.0, 3.0, 3.0, 4.0]);
        let (u, s) = split_symmetric_skew(&sym).unwrap();
        assert_eq!(u, sym);
        assert_eq!(s, Matrix::zeros(2, 2));

        let skew = m(2, 2, &[0.0, 3.0, -3.0, 0.0]);
        let (u, s) = split_symmetric_skew(&skew).unwrap();
        assert_eq!(u, Matrix::zeros(2, 2));
        assert_eq!(s, skew);

        assert!(matches!(split_symmetric_skew(&Matrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn solve_spd_examples() {
        let x = solve_spd(&Matrix::identity(2, 2), &Vector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(x, Vector::from_vec(vec![1.0, 2.0]));
        let x = solve_spd(&m(2, 2, &[2.0, 0.0, 0.0, 4.0]), &Vector::from_vec(vec![2.0, 4.0])).unwrap();
        assert_relative_eq!(x, Vector::from_vec(vec![1.0, 1.0]), epsilon = 1e-15);
        // hand inverse of [[2, .5], [.5, 2]] is [[2, -.5], [-.5, 2]] / 3.75
        let x = solve_spd(&m(2, 2, &[2.0, 0.5, 0.5, 2.0]), &Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_relative_eq!(x, Vector::from_vec(vec![8.0 / 15.0, -2.0 / 15.0]), epsilon = 1e-14);
    }

    #[test]
    fn solve_spd_rejects_indefinite() {
        let err = solve_spd(&m(2, 2, &[1.0, 2.0, 2.0, 1.0]), &Vector::from_vec(vec![1.0, 0.0])).unwrap_err();
        assert_eq!(err, Error::NotPositiveDefinite);
        assert_eq!(err.to_string(), "not positive definite");
    }

    #[test]
    fn block_layout_round_trip() {
        let layout = BlockLayout::new(&[2, 1, 3]).unwrap();
        assert_eq!(layout.offsets(), &[0, 2, 3, 6]);
        assert_eq!(layout.total(), 6);
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let blocks: Vec<_> = (0..3).map(|i| layout.block(&v, i)).collect();
        assert_eq!(blocks[2], Vector::from_vec(vec![4.0, 5.0, 6.0]));
        assert_eq!(layout.join(&blocks).unwrap(), v);
        assert!(BlockLayout::new(&[]).is_err());
        assert!(BlockLayout::new(&[2, 0]).is_err());
    }
}
