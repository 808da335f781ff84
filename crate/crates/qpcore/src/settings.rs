/// Which algorithm [`crate::solve_qp`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// ADMM operator splitting on the KKT system, followed by an optional
    /// active-set polish.
    #[default]
    OperatorSplitting,
    /// Primal-dual interior point (Mehrotra predictor-corrector).
    InteriorPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub method: Method,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    /// Iteration cap for the splitting method.
    pub max_iter: usize,
    /// Iteration cap for the interior-point method.
    pub ipm_max_iter: usize,
    /// Initial step size; rescaled from the data when `adaptive_rho` is set.
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation in (0, 2).
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    pub adaptive_rho_tolerance: f64,
    /// Ruiz equilibration passes (0 disables scaling).
    pub scaling_iters: usize,
    pub polish: bool,
    pub polish_refine_iter: usize,
    pub check_interval: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            method: Method::OperatorSplitting,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-7,
            eps_dual_inf: 1e-7,
            max_iter: 200_000,
            ipm_max_iter: 200,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            adaptive_rho_tolerance: 5.0,
            scaling_iters: 10,
            polish: true,
            polish_refine_iter: 5,
            check_interval: 5,
        }
    }
}

impl Settings {
    pub fn interior_point() -> Self {
        Self { method: Method::InteriorPoint, eps_abs: 1e-7, eps_rel: 1e-7, ..Self::default() }
    }

    pub fn with_tolerance(mut self, eps: f64) -> Self {
        self.eps_abs = eps;
        self.eps_rel = eps;
        self
    }
}
