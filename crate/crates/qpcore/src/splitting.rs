//! Operator-splitting (ADMM) iteration for
//! `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u`.
//!
//! Each iteration solves one quasi-definite KKT system with a cached LDLᵀ
//! factorization, then projects onto the bound box and takes a dual step.
//! The step size ρ adapts to the ratio of primal to dual residuals and is
//! rescaled per row: equality rows get a stiffer ρ, free rows a tiny one.
//! After convergence an active-set polish re-solves the equality-constrained
//! KKT system on the guessed active set to sharpen both primal and dual.

use crate::ldl::LdlFactor;
use crate::polish::polish;
use crate::problem::{is_equality, project_dual, QuadraticProgram};
use crate::scaling::ScaledProblem;
use crate::settings::Settings;
use crate::solution::{QpSolution, Residuals, Status};
use crate::sparse::{inf_norm, CscMatrix};
use crate::QpError;

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Free,
    Inequality,
    Equality,
}

/// Reusable solver: the KKT factorization survives `update_q` and warm
/// starts, so a sequence of problems differing only in `q` is cheap.
#[derive(Debug, Clone)]
pub struct SplittingSolver {
    prob: QuadraticProgram,
    scaled: ScaledProblem,
    settings: Settings,
    kinds: Vec<RowKind>,
    kkt_values: Vec<f64>,
    rho_diag_pos: Vec<usize>,
    factor: LdlFactor,
    rho: f64,
    rho_vec: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

fn row_kinds(lower: &[f64], upper: &[f64]) -> Vec<RowKind> {
    lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| {
            if l == f64::NEG_INFINITY && u == f64::INFINITY {
                RowKind::Free
            } else if is_equality(l, u) {
                RowKind::Equality
            } else {
                RowKind::Inequality
            }
        })
        .collect()
}

impl SplittingSolver {
    pub fn new(prob: &QuadraticProgram, settings: &Settings) -> Result<Self, QpError> {
        prob.validate()?;
        let n = prob.num_vars();
        let m = prob.num_constraints();
        let scaled = ScaledProblem::new(prob, settings.scaling_iters);
        let kinds = row_kinds(&prob.lower, &prob.upper);

        let mut t = Vec::with_capacity(scaled.p.nnz() + scaled.a.nnz() + n + m);
        for (r, c, v) in scaled.p.iter() {
            if r <= c {
                t.push((r, c, v));
            }
        }
        for j in 0..n {
            t.push((j, j, settings.sigma));
        }
        for (r, c, v) in scaled.a.iter() {
            t.push((c, n + r, v));
        }
        for i in 0..m {
            t.push((n + i, n + i, -1.0));
        }
        let kkt = CscMatrix::from_triplets(n + m, n + m, &t);
        let rho_diag_pos: Vec<usize> = (0..m).map(|i| kkt.colptr[n + i + 1] - 1).collect();
        let kkt_values = kkt.values.clone();
        let factor = LdlFactor::analyze(&kkt)?;

        let mut solver = Self {
            prob: prob.clone(),
            scaled,
            settings: settings.clone(),
            kinds,
            kkt_values,
            rho_diag_pos,
            factor,
            rho: settings.rho.clamp(RHO_MIN, RHO_MAX),
            rho_vec: vec![0.0; m],
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
        };
        solver.refactor()?;
        Ok(solver)
    }

    fn refactor(&mut self) -> Result<(), QpError> {
        for (i, kind) in self.kinds.iter().enumerate() {
            self.rho_vec[i] = match kind {
                RowKind::Free => RHO_MIN,
                RowKind::Inequality => self.rho,
                RowKind::Equality => (RHO_EQ_FACTOR * self.rho).min(RHO_MAX),
            };
            self.kkt_values[self.rho_diag_pos[i]] = -1.0 / self.rho_vec[i];
        }
        self.factor.factor(&self.kkt_values)?;
        if self.factor.positive_pivots() != self.prob.num_vars() {
            return Err(QpError::NonConvex);
        }
        Ok(())
    }

    /// Replace the linear cost; factorization and iterates are kept.
    pub fn update_q(&mut self, q: &[f64]) -> Result<(), QpError> {
        if q.len() != self.prob.num_vars() {
            return Err(QpError::Dimension("update_q length".into()));
        }
        self.prob.q.copy_from_slice(q);
        self.scaled.set_q(q);
        Ok(())
    }

    /// Replace the bounds. Rows may not change between equality and
    /// inequality, since that would alter the factorized system.
    pub fn update_bounds(&mut self, lower: &[f64], upper: &[f64]) -> Result<(), QpError> {
        let m = self.prob.num_constraints();
        if lower.len() != m || upper.len() != m {
            return Err(QpError::Dimension("update_bounds length".into()));
        }
        for i in 0..m {
            if lower[i] > upper[i] {
                return Err(QpError::Bounds { row: i, lower: lower[i], upper: upper[i] });
            }
        }
        let kinds = row_kinds(lower, upper);
        self.prob.lower.copy_from_slice(lower);
        self.prob.upper.copy_from_slice(upper);
        self.scaled.set_bounds(lower, upper);
        if kinds != self.kinds {
            self.kinds = kinds;
            self.refactor()?;
        }
        Ok(())
    }

    /// Warm start from an unscaled primal/dual pair.
    pub fn warm_start(&mut self, x: &[f64], y: &[f64]) -> Result<(), QpError> {
        if x.len() != self.prob.num_vars() || y.len() != self.prob.num_constraints() {
            return Err(QpError::Dimension("warm start length".into()));
        }
        let s = &self.scaled.scaling;
        self.x = s.scale_x(x);
        self.y = s.scale_y(y);
        let ax = self.prob.a.mul_vec(x);
        let z: Vec<f64> = (0..ax.len()).map(|i| ax[i].clamp(self.prob.lower[i], self.prob.upper[i])).collect();
        self.z = s.scale_z(&z);
        Ok(())
    }

    pub fn problem(&self) -> &QuadraticProgram {
        &self.prob
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn solve(&mut self) -> Result<QpSolution, QpError> {
        let n = self.prob.num_vars();
        let m = self.prob.num_constraints();
        let st = self.settings.clone();
        let alpha = st.alpha;
        let sigma = st.sigma;

        let mut rhs = vec![0.0; n + m];
        let mut x_prev = vec![0.0; n];
        let mut y_prev = vec![0.0; m];
        let mut z_hat = vec![0.0; m];
        let mut work = Work::new(n, m);

        let mut status = Status::MaxIter;
        let mut certificate = None;
        let mut iter = 0;

        while iter < st.max_iter {
            iter += 1;
            x_prev.copy_from_slice(&self.x);
            y_prev.copy_from_slice(&self.y);

            for j in 0..n {
                rhs[j] = sigma * self.x[j] - self.scaled.q[j];
            }
            for i in 0..m {
                rhs[n + i] = self.z[i] - self.y[i] / self.rho_vec[i];
            }
            self.factor.solve_in_place(&mut rhs);

            for j in 0..n {
                self.x[j] = alpha * rhs[j] + (1.0 - alpha) * x_prev[j];
            }
            for i in 0..m {
                let nu = rhs[n + i];
                let z_tilde = self.z[i] + (nu - y_prev[i]) / self.rho_vec[i];
                z_hat[i] = alpha * z_tilde + (1.0 - alpha) * self.z[i];
                let z_new = (z_hat[i] + y_prev[i] / self.rho_vec[i]).clamp(self.scaled.lower[i], self.scaled.upper[i]);
                self.y[i] = y_prev[i] + self.rho_vec[i] * (z_hat[i] - z_new);
                self.z[i] = z_new;
            }

            let check = iter % st.check_interval.max(1) == 0 || iter == st.max_iter;
            let adapt = st.adaptive_rho && iter % st.adaptive_rho_interval.max(1) == 0;
            if !(check || adapt) {
                continue;
            }
            let res = work.residuals(&self.scaled, &self.x, &self.z, &self.y);
            if check {
                if res.primal <= st.eps_abs + st.eps_rel * res.primal_scale
                    && res.dual <= st.eps_abs + st.eps_rel * res.dual_scale
                {
                    status = Status::Optimal;
                    break;
                }
                if let Some(cert) = self.primal_infeasibility(&y_prev) {
                    status = Status::PrimalInfeasible;
                    certificate = Some(cert);
                    break;
                }
                if let Some(cert) = self.dual_infeasibility(&x_prev) {
                    status = Status::DualInfeasible;
                    certificate = Some(cert);
                    break;
                }
            }
            if adapt {
                let prim = res.scaled_primal / res.scaled_primal_scale.max(1e-10);
                let dual = res.scaled_dual / res.scaled_dual_scale.max(1e-10);
                let new_rho = (self.rho * (prim / dual.max(1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
                if new_rho.is_finite()
                    && (new_rho > self.rho * st.adaptive_rho_tolerance
                        || new_rho < self.rho / st.adaptive_rho_tolerance)
                {
                    self.rho = new_rho;
                    self.refactor()?;
                }
            }
        }

        let s = &self.scaled.scaling;
        let mut x = s.unscale_x(&self.x);
        let mut y = s.unscale_y(&self.y);
        project_dual(&self.prob.lower, &self.prob.upper, &mut y);
        let mut polished = false;
        match status {
            Status::PrimalInfeasible | Status::DualInfeasible => {
                let r = Residuals::evaluate(&self.prob, &x, &y);
                return Ok(QpSolution {
                    x,
                    y,
                    status,
                    objective: if status == Status::PrimalInfeasible { f64::INFINITY } else { f64::NEG_INFINITY },
                    primal_residual: r.primal,
                    dual_residual: r.dual,
                    duality_gap: r.gap,
                    iterations: iter,
                    polished: false,
                    certificate,
                });
            }
            Status::Optimal if st.polish => {
                let sp = &self.scaled;
                let guess: Vec<i8> = (0..m)
                    .map(|i| match self.kinds[i] {
                        RowKind::Equality => -1,
                        RowKind::Free => 0,
                        RowKind::Inequality => {
                            if self.z[i] - sp.lower[i] < -self.y[i] {
                                -1
                            } else if sp.upper[i] - self.z[i] < self.y[i] {
                                1
                            } else {
                                0
                            }
                        }
                    })
                    .collect();
                if let Some((xp, mut yp)) = polish(sp, guess, (&self.x, &self.y), st.polish_refine_iter) {
                    project_dual(&self.prob.lower, &self.prob.upper, &mut yp);
                    let before = Residuals::evaluate(&self.prob, &x, &y);
                    let after = Residuals::evaluate(&self.prob, &xp, &yp);
                    let tol_p = st.eps_abs + st.eps_rel * after.primal_scale;
                    let tol_d = st.eps_abs + st.eps_rel * after.dual_scale;
                    if after.primal <= before.primal.max(tol_p)
                        && after.dual <= before.dual.max(tol_d)
                        && after.gap <= before.gap.max(st.eps_abs + st.eps_rel * after.objective.abs())
                    {
                        x = xp;
                        y = yp;
                        polished = true;
                    }
                }
            }
            _ => {}
        }
        let r = Residuals::evaluate(&self.prob, &x, &y);
        Ok(QpSolution {
            x,
            y,
            status,
            objective: r.objective,
            primal_residual: r.primal,
            dual_residual: r.dual,
            duality_gap: r.gap,
            iterations: iter,
            polished,
            certificate: None,
        })
    }

    fn primal_infeasibility(&self, y_prev: &[f64]) -> Option<Vec<f64>> {
        let s = &self.scaled.scaling;
        let m = self.y.len();
        let dy: Vec<f64> = (0..m).map(|i| self.y[i] - y_prev[i]).collect();
        let dy_unscaled: Vec<f64> = (0..m).map(|i| dy[i] * s.e[i]).collect();
        let norm = inf_norm(&dy_unscaled);
        if norm < 1e-30 {
            return None;
        }
        let eps = self.settings.eps_prim_inf * norm;
        let mut support = 0.0;
        for i in 0..m {
            let d = dy[i];
            if d > 0.0 {
                if self.scaled.upper[i] == f64::INFINITY {
                    if dy_unscaled[i] > eps {
                        return None;
                    }
                } else {
                    support += self.scaled.upper[i] * d;
                }
            } else if d < 0.0 {
                if self.scaled.lower[i] == f64::NEG_INFINITY {
                    if dy_unscaled[i] < -eps {
                        return None;
                    }
                } else {
                    support += self.scaled.lower[i] * d;
                }
            }
        }
        if support >= -eps {
            return None;
        }
        let aty = self.scaled.a.mul_t_vec(&dy);
        let worst = aty.iter().zip(&s.d).map(|(v, d)| (v / d).abs()).fold(0.0, f64::max);
        if worst <= eps {
            Some(dy_unscaled.iter().map(|v| v / norm).collect())
        } else {
            None
        }
    }

    fn dual_infeasibility(&self, x_prev: &[f64]) -> Option<Vec<f64>> {
        let s = &self.scaled.scaling;
        let n = self.x.len();
        let dx: Vec<f64> = (0..n).map(|j| self.x[j] - x_prev[j]).collect();
        let dx_unscaled: Vec<f64> = (0..n).map(|j| dx[j] * s.d[j]).collect();
        let norm = inf_norm(&dx_unscaled);
        if norm < 1e-30 {
            return None;
        }
        let eps = self.settings.eps_dual_inf * norm;
        let qdx: f64 = self.scaled.q.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>() / s.c;
        if qdx >= -eps {
            return None;
        }
        let pdx = self.scaled.p.mul_vec(&dx);
        if pdx.iter().zip(&s.d).any(|(v, d)| (v / (d * s.c)).abs() > eps) {
            return None;
        }
        let adx = self.scaled.a.mul_vec(&dx);
        for i in 0..adx.len() {
            let v = adx[i] / s.e[i];
            let lo_inf = self.scaled.lower[i] == f64::NEG_INFINITY;
            let up_inf = self.scaled.upper[i] == f64::INFINITY;
            let ok = match (lo_inf, up_inf) {
                (true, true) => true,
                (false, true) => v >= -eps,
                (true, false) => v <= eps,
                (false, false) => v.abs() <= eps,
            };
            if !ok {
                return None;
            }
        }
        Some(dx_unscaled.iter().map(|v| v / norm).collect())
    }
}

struct Work {
    px: Vec<f64>,
    ax: Vec<f64>,
    aty: Vec<f64>,
}

struct IterResiduals {
    primal: f64,
    dual: f64,
    primal_scale: f64,
    dual_scale: f64,
    scaled_primal: f64,
    scaled_dual: f64,
    scaled_primal_scale: f64,
    scaled_dual_scale: f64,
}

impl Work {
    fn new(n: usize, m: usize) -> Self {
        Self { px: vec![0.0; n], ax: vec![0.0; m], aty: vec![0.0; n] }
    }

    fn residuals(&mut self, sp: &ScaledProblem, x: &[f64], z: &[f64], y: &[f64]) -> IterResiduals {
        let s = &sp.scaling;
        sp.a.mul_vec_into(x, &mut self.ax);
        sp.p.mul_vec_into(x, &mut self.px);
        sp.a.mul_t_vec_into(y, &mut self.aty);

        let (mut prim, mut ax_n, mut z_n) = (0.0f64, 0.0f64, 0.0f64);
        let (mut sprim, mut sax, mut sz) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..z.len() {
            let inv = 1.0 / s.e[i];
            let r = self.ax[i] - z[i];
            prim = prim.max((r * inv).abs());
            ax_n = ax_n.max((self.ax[i] * inv).abs());
            z_n = z_n.max((z[i] * inv).abs());
            sprim = sprim.max(r.abs());
            sax = sax.max(self.ax[i].abs());
            sz = sz.max(z[i].abs());
        }
        let (mut dual, mut px_n, mut aty_n, mut q_n) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let (mut sdual, mut spx, mut saty, mut sq) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for j in 0..x.len() {
            let inv = 1.0 / (s.d[j] * s.c);
            let r = self.px[j] + sp.q[j] + self.aty[j];
            dual = dual.max((r * inv).abs());
            px_n = px_n.max((self.px[j] * inv).abs());
            aty_n = aty_n.max((self.aty[j] * inv).abs());
            q_n = q_n.max((sp.q[j] * inv).abs());
            sdual = sdual.max(r.abs());
            spx = spx.max(self.px[j].abs());
            saty = saty.max(self.aty[j].abs());
            sq = sq.max(sp.q[j].abs());
        }
        IterResiduals {
            primal: prim,
            dual,
            primal_scale: ax_n.max(z_n),
            dual_scale: px_n.max(aty_n).max(q_n),
            scaled_primal: sprim,
            scaled_dual: sdual,
            scaled_primal_scale: sax.max(sz),
            scaled_dual_scale: spx.max(saty).max(sq),
        }
    }
}
