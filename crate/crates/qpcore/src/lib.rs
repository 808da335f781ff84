//! Sparse convex QP/LP solver.
//!
//! Problems take the form `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u`. Two
//! algorithms are available: operator splitting with an active-set polish
//! (default) and a primal-dual interior point method. Both return duals
//! with the sign convention `Px + q + Aᵀy = 0`.

pub mod ipm;
pub mod ldl;
pub mod mm;
pub mod ordering;
mod polish;
pub mod problem;
pub mod scaling;
pub mod settings;
pub mod solution;
pub mod sparse;
pub mod splitting;

pub use ipm::InteriorPointSolver;
pub use problem::QuadraticProgram;
pub use settings::{Method, Settings};
pub use solution::{QpSolution, Residuals, Status};
pub use sparse::{CscMatrix, TripletBuilder};
pub use splitting::SplittingSolver;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("problem data contains NaN or infinite cost/matrix entries")]
    NonFinite,
    #[error("row {row}: lower bound {lower} exceeds upper bound {upper}")]
    Bounds { row: usize, lower: f64, upper: f64 },
    #[error("P is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("P is not positive semidefinite")]
    NonConvex,
}

/// A reusable solver for one problem structure. Only the linear cost may
/// change between solves.
#[derive(Debug, Clone)]
pub enum Solver {
    Splitting(Box<SplittingSolver>),
    InteriorPoint(Box<InteriorPointSolver>),
}

impl Solver {
    pub fn new(prob: &QuadraticProgram, settings: &Settings) -> Result<Self, QpError> {
        Ok(match settings.method {
            Method::OperatorSplitting => Solver::Splitting(Box::new(SplittingSolver::new(prob, settings)?)),
            Method::InteriorPoint => Solver::InteriorPoint(Box::new(InteriorPointSolver::new(prob, settings)?)),
        })
    }

    pub fn update_q(&mut self, q: &[f64]) -> Result<(), QpError> {
        match self {
            Solver::Splitting(s) => s.update_q(q),
            Solver::InteriorPoint(s) => s.update_q(q),
        }
    }

    /// Warm start is honoured by the splitting method and ignored by the
    /// interior point method.
    pub fn warm_start(&mut self, x: &[f64], y: &[f64]) -> Result<(), QpError> {
        match self {
            Solver::Splitting(s) => s.warm_start(x, y),
            Solver::InteriorPoint(_) => Ok(()),
        }
    }

    pub fn solve(&mut self) -> Result<QpSolution, QpError> {
        match self {
            Solver::Splitting(s) => s.solve(),
            Solver::InteriorPoint(s) => s.solve(),
        }
    }
}

pub fn solve_qp(prob: &QuadraticProgram, settings: &Settings) -> Result<QpSolution, QpError> {
    Solver::new(prob, settings)?.solve()
}

pub fn solve_lp(
    q: Vec<f64>,
    a: CscMatrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
    settings: &Settings,
) -> Result<QpSolution, QpError> {
    let prob = QuadraticProgram::lp(q, a, lower, upper)?;
    solve_qp(&prob, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn both() -> [Settings; 2] {
        [Settings::default(), Settings::interior_point()]
    }

    #[test]
    fn interior_optimum() {
        // (x-1)^2 = x^2 - 2x + 1
        for s in both() {
            let prob = QuadraticProgram::new(
                CscMatrix::from_dense(&[vec![2.0]]),
                vec![-2.0],
                CscMatrix::identity(1),
                vec![0.0],
                vec![2.0],
            )
            .unwrap();
            let sol = solve_qp(&prob, &s).unwrap();
            assert!(sol.is_optimal());
            assert!((sol.x[0] - 1.0).abs() < 1e-6, "{:?}", sol.x);
            assert!(sol.y[0].abs() < 1e-6);
        }
    }

    #[test]
    fn active_lower_bound_dual() {
        for s in both() {
            let sol = solve_lp(vec![1.0], CscMatrix::identity(1), vec![3.0], vec![f64::INFINITY], &s).unwrap();
            assert!(sol.is_optimal());
            assert!((sol.x[0] - 3.0).abs() < 1e-6);
            assert!((sol.y[0] + 1.0).abs() < 1e-6, "{}", sol.y[0]);
        }
    }

    #[test]
    fn equality_dual() {
        for s in both() {
            let prob = QuadraticProgram::new(
                CscMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 2.0]]),
                vec![0.0, 0.0],
                CscMatrix::from_dense(&[vec![1.0, 1.0]]),
                vec![2.0],
                vec![2.0],
            )
            .unwrap();
            let sol = solve_qp(&prob, &s).unwrap();
            assert!(sol.is_optimal());
            assert!((sol.x[0] - 1.0).abs() < 1e-6 && (sol.x[1] - 1.0).abs() < 1e-6);
            assert!((sol.y[0] + 2.0).abs() < 1e-5, "{}", sol.y[0]);
        }
    }

    #[test]
    fn lp_upper_bound_and_equality() {
        for s in both() {
            let a = CscMatrix::from_dense(&[vec![1.0], vec![1.0]]);
            let sol = solve_lp(vec![-1.0], a, vec![f64::NEG_INFINITY, 0.0], vec![4.0, f64::INFINITY], &s).unwrap();
            assert!((sol.x[0] - 4.0).abs() < 1e-6);
            let sol = solve_lp(vec![0.0], CscMatrix::identity(1), vec![7.0], vec![7.0], &s).unwrap();
            assert!((sol.x[0] - 7.0).abs() < 1e-6);
        }
    }

    #[test]
    fn detects_primal_infeasibility() {
        for s in both() {
            let a = CscMatrix::from_dense(&[vec![1.0], vec![1.0]]);
            let sol = solve_lp(vec![0.0], a, vec![2.0, f64::NEG_INFINITY], vec![f64::INFINITY, 1.0], &s).unwrap();
            assert_eq!(sol.status, Status::PrimalInfeasible, "{s:?}");
        }
    }

    #[test]
    fn detects_unboundedness() {
        for s in both() {
            let sol = solve_lp(vec![-1.0], CscMatrix::identity(1), vec![0.0], vec![f64::INFINITY], &s).unwrap();
            assert_eq!(sol.status, Status::DualInfeasible, "{s:?}");
        }
    }
}
