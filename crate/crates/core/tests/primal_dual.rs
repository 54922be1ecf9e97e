//! The block engine against a direct transcription of the scalar-step
//! primal-dual scheme, plus the ERM special case.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use splitmono::applications::{erm_sigma_bound, solve_erm_incremental, ErmProblem};
use splitmono::fbhf::{History, SolveConfig};
use splitmono::linalg::{Matrix, Vector};
use splitmono::operators::{quadratic_gradient, CocoerciveMap, MaximalMonotone, MonotoneMap, ScalarLoss};
use splitmono::primal_dual::{solve_corollary, CorollaryParams, DualBlock, PrimalDualProblem};

fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| {
        let s: f64 = StandardNormal.sample(rng);
        s
    })
}

struct Instance {
    pdp: PrimalDualProblem,
    a: Matrix,
    b: Vector,
    k: Matrix,
    l1: Matrix,
    l2: Matrix,
    q: Matrix,
}

/// Box-constrained least squares with a skew coupling, an l1 block
/// (`B_1^{-1}` = projection onto `[-1/2, 1/2]`) and a nonnegativity block with
/// `D_2^{-1} = Q` (`B_2^{-1}` = projection onto the nonpositive orthant).
fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 5;
    let a = gauss(&mut rng, 8, n);
    let b = gauss(&mut rng, 8, 1).column(0).into_owned();
    let g = gauss(&mut rng, n, n);
    let k = (&g - g.transpose()) * 0.2;
    let l1 = gauss(&mut rng, 3, n);
    let l2 = gauss(&mut rng, 2, n);
    let h = gauss(&mut rng, 2, 2);
    let q = h.transpose() * &h + Matrix::identity(2, 2);

    let prim = MaximalMonotone::normal_cone_box(Vector::from_element(n, -1.0), Vector::from_element(n, 1.0)).unwrap();
    let soft = MaximalMonotone::separable(3, "half-l1", |_, g, t: f64| t.signum() * (t.abs() - 0.5 * g).max(0.0));
    let nonneg = MaximalMonotone::normal_cone_nonneg(2);
    let blocks = vec![
        DualBlock::simple(soft, l1.clone()).unwrap(),
        DualBlock::new(nonneg, CocoerciveMap::affine_symmetric(q.clone(), Vector::zeros(2)).unwrap(), l2.clone(), Vector::zeros(2))
            .unwrap(),
    ];
    let pdp = PrimalDualProblem::new(
        prim,
        quadratic_gradient(a.clone(), b.clone()).unwrap(),
        MonotoneMap::linear(k.clone()).unwrap(),
        blocks,
    )
    .unwrap();
    Instance { pdp, a, b, k, l1, l2, q }
}

/// One pass of the scalar-step scheme written out by hand.
fn reference_step(inst: &Instance, theta: f64, s: &[f64], lambda: f64, x: &Vector, u1: &Vector, u2: &Vector) -> (Vector, Vector, Vector) {
    let c1 = |v: &Vector| inst.a.transpose() * (&inst.a * v - &inst.b);
    let c2 = |v: &Vector| &inst.k * v;
    let fwd = c1(x) + c2(x) + inst.l1.transpose() * u1 + inst.l2.transpose() * u2;
    let y = (x - fwd * s[0]).map(|t| t.clamp(-1.0, 1.0));
    let bar = &y + (&y - x) * theta;
    let v1 = (u1 + (&inst.l1 * &bar) * s[1]).map(|t| t.clamp(-0.5, 0.5));
    let v2 = (u2 - (&inst.q * u2 - &inst.l2 * &bar) * s[2]).map(|t| t.min(0.0));
    let xn = x + (&y - x + (c2(x) - c2(&y) + inst.l1.transpose() * (u1 - &v1) + inst.l2.transpose() * (u2 - &v2)) * s[0]) * (lambda / s[0]);
    let u1n = u1 + (&v1 - u1 - (&inst.l1 * (&y - x)) * (s[1] * theta)) * (lambda / s[1]);
    let u2n = u2 + (&v2 - u2 - (&inst.l2 * (&y - x)) * (s[2] * theta)) * (lambda / s[2]);
    (xn, u1n, u2n)
}

fn admissible(inst: &Instance, theta: f64) -> Vec<f64> {
    let mut s = 1.0;
    loop {
        let sig = vec![s, 0.8 * s, 1.2 * s];
        if CorollaryParams::new(theta, sig.clone()).check(&inst.pdp).unwrap().verdict {
            return sig;
        }
        s /= 2.0;
        assert!(s > 1e-9);
    }
}

#[test]
fn engine_matches_hand_written_scheme() {
    for seed in 0..4 {
        let inst = instance(seed);
        for theta in [-1.0, 0.0, 0.5, 1.0] {
            let sig = admissible(&inst, theta);
            let chk = CorollaryParams::new(theta, sig.clone()).check(&inst.pdp).unwrap();
            let lambda = 0.9 / chk.m_bound;
            let cfg = SolveConfig { max_iterations: 150, tolerance: 1e-300, history: History::Full, ..Default::default() };
            let rep = solve_corollary(&inst.pdp, &CorollaryParams::new(theta, sig.clone()).with_lambda(lambda), &cfg).unwrap();
            assert_eq!(rep.history.len(), 151);
            let (mut x, mut u1, mut u2) = (Vector::zeros(5), Vector::zeros(3), Vector::zeros(2));
            for (k, z) in rep.history.iter().enumerate().skip(1) {
                (x, u1, u2) = reference_step(&inst, theta, &sig, lambda, &x, &u1, &u2);
                let mut want = Vector::zeros(10);
                want.rows_mut(0, 5).copy_from(&x);
                want.rows_mut(5, 3).copy_from(&u1);
                want.rows_mut(8, 2).copy_from(&u2);
                let err = (z - &want).norm() / want.norm().max(1.0);
                assert!(err <= 1e-12, "seed {seed}, theta {theta}, iteration {k}: relative gap {err:e}");
            }
        }
    }
}

#[test]
fn single_sample_erm_matches_the_scalar_scheme() {
    let a = Vector::from_vec(vec![0.6, -0.8, 0.0]);
    let p = ErmProblem::new(vec![a], vec![ScalarLoss::Hinge { b: -1.0 }]).unwrap();
    let s = 0.9 * erm_sigma_bound(1);
    let cfg = SolveConfig { max_iterations: 60, tolerance: 1e-300, history: History::Full, ..Default::default() };
    let inc = solve_erm_incremental(&p, &[s, s], Some(0.3), &cfg).unwrap();
    // With one sample the sweep is the scalar scheme at theta = 0.
    let cor = solve_corollary(&p.to_primal_dual().unwrap(), &CorollaryParams::new(0.0, vec![s, s]).with_lambda(0.3), &cfg).unwrap();
    for (a, b) in inc.history.iter().zip(&cor.history) {
        assert!((a - b).norm() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn violated_condition_is_reported_with_both_sides() {
    let inst = instance(9);
    let err = solve_corollary(&inst.pdp, &CorollaryParams::new(0.0, vec![10.0, 10.0, 10.0]), &SolveConfig::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("rho") || msg.contains("Omega"), "{msg}");
}
