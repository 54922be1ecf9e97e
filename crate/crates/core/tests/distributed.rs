//! Consensus rounds: fixed points, Fejer monotonicity, summability, and the
//! behaviour under time-varying graphs.

use splitmono::cli::gen_quadratic_agents;
use splitmono::distributed::{
    centralized_fbhf, consensus_step, path_graph, ring_graph, run_distributed, t_class_consensus_step, DistributedConfig,
    DistributedProblem, GraphSequence,
};
use splitmono::fbhf::{History, SolveConfig};
use splitmono::linalg::{Matrix, Vector};

fn converged(p: &DistributedProblem, gs: &GraphSequence) -> Vector {
    let dc = DistributedConfig::for_graphs(gs);
    let cfg = SolveConfig { max_iterations: 200_000, tolerance: 1e-15, ..Default::default() };
    run_distributed(p, gs, &dc, &cfg).unwrap().report.z
}

#[test]
fn relaxed_and_plain_rounds_share_fixed_points() {
    let p = DistributedProblem::quadratic(gen_quadratic_agents(4, 2, 3)).unwrap();
    let gs = GraphSequence::fixed(4, ring_graph(4));
    let z = converged(&p, &gs);
    let lap = gs.laplacian(0).unwrap();
    let dc = DistributedConfig::for_graphs(&gs);
    let s = consensus_step(&p, &z, &lap, dc.gamma, dc.tau).unwrap();
    let q = t_class_consensus_step(&p, &z, &lap, dc.gamma, dc.tau, 0.5 * dc.gamma).unwrap();
    assert!((&s - &z).norm() <= 1e-10, "S moved a fixed point by {}", (&s - &z).norm());
    assert!((&q - &z).norm() <= 1e-10, "Q moved a fixed point by {}", (&q - &z).norm());
}

#[test]
fn fixed_graph_iterates_are_fejer_and_summable() {
    let p = DistributedProblem::quadratic(gen_quadratic_agents(4, 2, 8)).unwrap();
    let gs = GraphSequence::fixed(4, path_graph(4));
    let star = converged(&p, &gs);
    let dc = DistributedConfig::for_graphs(&gs);
    let cfg = SolveConfig { max_iterations: 3000, tolerance: 1e-300, history: History::Full, ..Default::default() };
    let run = run_distributed(&p, &gs, &dc, &cfg).unwrap();
    let dist: Vec<f64> = run.report.history.iter().map(|z| (z - &star).norm()).collect();
    for (k, w) in dist.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-10, "round {k}: distance grew from {} to {}", w[0], w[1]);
    }
    let partial: Vec<f64> = run
        .report
        .history
        .windows(2)
        .scan(0.0, |acc, w| {
            *acc += (&w[1] - &w[0]).norm_squared();
            Some(*acc)
        })
        .collect();
    let n = partial.len();
    assert!(partial[n - 1] - partial[n - 101] < 1e-12, "partial sums still growing");
}

#[test]
fn consensus_matches_centralized_solution_on_a_fixed_graph() {
    let agents = gen_quadratic_agents(5, 3, 21);
    let p = DistributedProblem::quadratic(agents.clone()).unwrap();
    let gs = GraphSequence::fixed(5, path_graph(5));
    let z = converged(&p, &gs);
    let central = centralized_fbhf(&agents, &SolveConfig { tolerance: 1e-15, ..Default::default() }).unwrap().z;
    assert!(p.consensus_error(&z) < 1e-9);
    assert!((p.average(&z) - central).norm() < 1e-9);
}

/// The dual equations `L_t y = g` for a path and a ring on three nodes have no
/// common solution, so the rounds do not share a fixed point and the
/// iteration cycles instead of settling.
#[test]
fn alternating_graphs_lack_a_common_dual_fixed_point() {
    let agents = gen_quadratic_agents(3, 1, 5);
    let p = DistributedProblem::quadratic(agents.clone()).unwrap();
    let central = centralized_fbhf(&agents, &SolveConfig { tolerance: 1e-15, ..Default::default() }).unwrap().z[0];
    let g = Vector::from_iterator(3, agents.iter().map(|a| -a.weight * (central - a.center[0])));
    let alt = GraphSequence::alternating(3, path_graph(3), ring_graph(3));
    let (l0, l1) = (alt.laplacian(0).unwrap(), alt.laplacian(1).unwrap());
    let mut stacked = Matrix::zeros(6, 3);
    stacked.rows_mut(0, 3).copy_from(&l0);
    stacked.rows_mut(3, 3).copy_from(&l1);
    let mut rhs = Vector::zeros(6);
    rhs.rows_mut(0, 3).copy_from(&g);
    rhs.rows_mut(3, 3).copy_from(&g);
    let y = stacked.clone().svd(true, true).solve(&rhs, 1e-12).unwrap();
    let residual = (&stacked * &y - &rhs).norm();
    assert!(residual > 1e-3, "unexpected common dual solution (residual {residual:e})");

    let dc = DistributedConfig::for_graphs(&alt);
    let cfg = SolveConfig { max_iterations: 20_000, tolerance: 1e-13, ..Default::default() };
    let run = run_distributed(&p, &alt, &dc, &cfg).unwrap();
    assert!(*run.consensus.last().unwrap() > 1e-3);
}
