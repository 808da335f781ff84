use crate::problem::{support, QuadraticProgram};
use crate::sparse::{dot, inf_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    MaxIter,
    PrimalInfeasible,
    DualInfeasible,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::MaxIter => "max_iter",
            Status::PrimalInfeasible => "primal_infeasible",
            Status::DualInfeasible => "dual_infeasible",
        }
    }
}

/// Primal/dual pair with residuals measured on the unscaled problem.
///
/// Duals follow the stationarity convention `P x + q + Aᵀ y = 0`: a
/// multiplier is non-positive on an active lower bound and non-negative on
/// an active upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub status: Status,
    pub objective: f64,
    /// `‖A x − Π[l,u](A x)‖∞`
    pub primal_residual: f64,
    /// `‖P x + q + Aᵀ y‖∞`
    pub dual_residual: f64,
    /// `|primal objective − dual objective|`
    pub duality_gap: f64,
    pub iterations: usize,
    pub polished: bool,
    /// Infeasibility certificate (`y` direction for primal infeasibility,
    /// `x` direction for dual infeasibility).
    pub certificate: Option<Vec<f64>>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Residual norms plus the scales used to make them relative.
#[derive(Debug, Clone, Copy)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub primal_scale: f64,
    pub dual_scale: f64,
    pub objective: f64,
    pub dual_objective: f64,
}

impl Residuals {
    pub fn evaluate(prob: &QuadraticProgram, x: &[f64], y: &[f64]) -> Self {
        let ax = prob.a.mul_vec(x);
        let mut primal: f64 = 0.0;
        let mut proj_norm: f64 = 0.0;
        for i in 0..ax.len() {
            let z = ax[i].clamp(prob.lower[i], prob.upper[i]);
            primal = primal.max((ax[i] - z).abs());
            proj_norm = proj_norm.max(z.abs());
        }
        let px = prob.p.mul_vec(x);
        let aty = prob.a.mul_t_vec(y);
        let mut dual: f64 = 0.0;
        for j in 0..x.len() {
            dual = dual.max((px[j] + prob.q[j] + aty[j]).abs());
        }
        let xpx = dot(x, &px);
        let objective = 0.5 * xpx + dot(&prob.q, x);
        let dual_objective = -0.5 * xpx - support(&prob.lower, &prob.upper, y);
        Self {
            primal,
            dual,
            gap: (objective - dual_objective).abs(),
            primal_scale: inf_norm(&ax).max(proj_norm),
            dual_scale: inf_norm(&px).max(inf_norm(&prob.q)).max(inf_norm(&aty)),
            objective,
            dual_objective,
        }
    }

    pub fn primal_ok(&self, eps_abs: f64, eps_rel: f64) -> bool {
        self.primal <= eps_abs + eps_rel * self.primal_scale
    }

    pub fn dual_ok(&self, eps_abs: f64, eps_rel: f64) -> bool {
        self.dual <= eps_abs + eps_rel * self.dual_scale
    }

    pub fn gap_ok(&self, eps_abs: f64, eps_rel: f64) -> bool {
        self.gap <= eps_abs + eps_rel * self.objective.abs().max(self.dual_objective.abs())
    }
}
