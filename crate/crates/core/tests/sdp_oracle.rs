mod common;

use dpgmm_core::linalg::SymMatrix;
use dpgmm_core::sdp::{self, SdpProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(rng: &mut ChaCha8Rng, d: usize, m: usize) -> SdpProblem {
    let w: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let a = SymMatrix::from_fn(d, |i, j| {
        (0..d).map(|k| w[i][k] * w[j][k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }
    });
    let constraints = (0..m)
        .map(|_| (0..d).map(|_| rng.random_range(-0.3..0.3)).collect())
        .collect();
    SdpProblem::new(a, constraints, rng.random_range(1.0..50.0))
}

#[test]
fn barrier_solution_matches_dual_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &(d, m) in &[(2, 3), (2, 20), (3, 10), (3, 60), (4, 30)] {
        let p = random_problem(&mut rng, d, m);
        let sol = sdp::solve(&p, 1e-9).unwrap();
        assert!(p.max_violation(&sol.x).unwrap() <= 1e-12);
        let dual = common::sdp_dual_bound(&p.objective, &p.constraints, p.bound_c, 20_000);
        let rel = (sol.objective - dual) / dual;
        assert!(rel >= -1e-9, "primal below dual bound: d={d} m={m} rel={rel}");
        assert!(rel <= 1e-6, "gap too large: d={d} m={m} rel={rel}");
    }
}

#[test]
fn active_set_matches_full_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &(d, m) in &[(2, 200), (3, 400)] {
        let p = random_problem(&mut rng, d, m);
        let full = sdp::solve(&p, 1e-9).unwrap();
        let pruned = sdp::solve_active_set(&p, 1e-9, 12).unwrap();
        assert!(p.max_violation(&pruned.x).unwrap() <= 1e-12);
        assert!(((full.objective - pruned.objective) / full.objective).abs() <= 1e-6);
    }
}

#[test]
fn fifty_instances_match_projected_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let d = 2 + case % 2;
        let m = rng.random_range(1..=20);
        let p = random_problem(&mut rng, d, m);
        let sol = sdp::solve(&p, 1e-9).unwrap();
        let oracle = common::sdp_projected_gradient_bound(&p.objective, &p.constraints, p.bound_c, 1_000_000);
        let rel = (sol.objective - oracle) / oracle;
        assert!(rel >= -1e-9, "case {case}: primal {} below dual {oracle}", sol.objective);
        assert!(rel <= 1e-3, "case {case}: d={d} m={m} rel gap {rel}");
    }
}

#[test]
fn objective_is_invariant_under_permutation() {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let p = random_problem(&mut rng, 3, 15);
        let base = sdp::solve(&p, 1e-10).unwrap().objective;
        let mut shuffled = p.clone();
        shuffled.constraints.shuffle(&mut rng);
        let other = sdp::solve(&shuffled, 1e-10).unwrap().objective;
        assert!(((base - other) / base).abs() <= 1e-8, "{base} vs {other}");
    }
}

#[test]
fn appending_a_constraint_never_decreases_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let p = random_problem(&mut rng, 3, 8);
        let base = sdp::solve(&p, 1e-10).unwrap().objective;
        let mut more = p.clone();
        more.constraints.push((0..3).map(|_| rng.random_range(-0.3..0.3)).collect());
        let extended = sdp::solve(&more, 1e-10).unwrap().objective;
        assert!(extended >= base * (1.0 - 1e-9), "{extended} < {base}");
    }
}
