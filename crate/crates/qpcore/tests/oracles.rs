mod common;

use common::{random_lp, random_qp, vertex_enumeration};
use qpcore::{solve_qp, CscMatrix, QuadraticProgram, Residuals, Settings, Solver, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn methods() -> [Settings; 2] {
    [Settings::default(), Settings::interior_point()]
}

#[test]
fn strong_duality_on_random_qps() {
    for settings in methods() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..200 {
            let n = rng.gen_range(1..=30);
            let m = rng.gen_range(0..=(60 - n));
            let prob = random_qp(&mut rng, n, m);
            let sol = solve_qp(&prob, &settings).unwrap();
            assert_eq!(sol.status, Status::Optimal, "case {case} {:?}", settings.method);
            let rel = sol.duality_gap / (1.0 + sol.objective.abs());
            assert!(rel <= 1e-5, "case {case} {:?}: gap {rel:e}", settings.method);
        }
    }
}

#[test]
fn lp_matches_vertex_enumeration() {
    for settings in methods() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..50 {
            let n = rng.gen_range(1..=4);
            let prob = random_lp(&mut rng, n);
            let expect = vertex_enumeration(&prob);
            let sol = solve_qp(&prob, &settings).unwrap();
            assert_eq!(sol.status, Status::Optimal, "case {case}");
            assert!(
                (sol.objective - expect).abs() <= 1e-6 * (1.0 + expect.abs()),
                "case {case} {:?}: {} vs {}",
                settings.method,
                sol.objective,
                expect
            );
        }
    }
}

#[test]
fn row_scaling_rescales_duals_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.gen_range(2..=8);
        let mut prob = random_qp(&mut rng, n, 6);
        // strictly convex so x is unique
        let mut p = prob.p.to_dense();
        for (j, row) in p.iter_mut().enumerate() {
            row[j] += 1.0;
        }
        prob.p = CscMatrix::from_dense(&p);
        let settings = Settings::default();
        let base = solve_qp(&prob, &settings).unwrap();

        let row = rng.gen_range(0..prob.num_constraints());
        let alpha = rng.gen_range(0.01..100.0);
        let mut dense = prob.a.to_dense();
        dense[row].iter_mut().for_each(|v| *v *= alpha);
        let mut scaled = prob.clone();
        scaled.a = CscMatrix::from_dense(&dense);
        scaled.lower[row] *= alpha;
        scaled.upper[row] *= alpha;
        let sol = solve_qp(&scaled, &settings).unwrap();
        for j in 0..n {
            assert!((sol.x[j] - base.x[j]).abs() <= 1e-6, "{} vs {}", sol.x[j], base.x[j]);
        }
        // multipliers may be non-unique on degenerate vertices, so check that
        // the rescaled y is a valid multiplier for the original problem
        let mut y = sol.y.clone();
        y[row] *= alpha;
        let r = Residuals::evaluate(&prob, &sol.x, &y);
        assert!(r.dual <= 1e-6 * (1.0 + r.dual_scale), "{}", r.dual);
        assert!(r.gap <= 1e-6 * (1.0 + r.objective.abs()), "{}", r.gap);
    }
}

#[test]
fn solves_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let prob = random_qp(&mut rng, 20, 30);
    for settings in methods() {
        let a = solve_qp(&prob, &settings).unwrap();
        let b = solve_qp(&prob, &settings).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn strictly_convex_solution_ignores_warm_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let n = 10;
        let mut prob = random_qp(&mut rng, n, 10);
        let mut p = prob.p.to_dense();
        for (j, row) in p.iter_mut().enumerate() {
            row[j] += 0.5;
        }
        prob.p = CscMatrix::from_dense(&p);
        let settings = Settings::default();
        let cold = solve_qp(&prob, &settings).unwrap();
        let mut solver = Solver::new(&prob, &settings).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let y0: Vec<f64> = (0..prob.num_constraints()).map(|_| rng.gen_range(-50.0..50.0)).collect();
        solver.warm_start(&x0, &y0).unwrap();
        let warm = solver.solve().unwrap();
        for j in 0..n {
            assert!((cold.x[j] - warm.x[j]).abs() <= 1e-6);
        }
    }
}

#[test]
fn reused_solver_tracks_linear_cost_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let prob = random_qp(&mut rng, 12, 12);
    for settings in methods() {
        let mut solver = Solver::new(&prob, &settings).unwrap();
        for _ in 0..5 {
            let q: Vec<f64> = (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect();
            solver.update_q(&q).unwrap();
            let reused = solver.solve().unwrap();
            let mut fresh = prob.clone();
            fresh.q = q;
            let direct = solve_qp(&fresh, &settings).unwrap();
            assert!((reused.objective - direct.objective).abs() <= 1e-5 * (1.0 + direct.objective.abs()));
        }
    }
}

#[test]
fn infeasible_equality_system_is_reported() {
    // x + y = 1 and x + y = 3
    let a = CscMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
    let prob = QuadraticProgram::lp(vec![1.0, 1.0], a, vec![1.0, 3.0], vec![1.0, 3.0]).unwrap();
    for settings in methods() {
        let sol = solve_qp(&prob, &settings).unwrap();
        assert_eq!(sol.status, Status::PrimalInfeasible, "{:?}", settings.method);
        let cert = sol.certificate.unwrap();
        let aty = prob.a.mul_t_vec(&cert);
        assert!(aty.iter().all(|v| v.abs() < 1e-5));
    }
}
