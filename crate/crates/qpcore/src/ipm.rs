//! Primal-dual interior point method (Mehrotra predictor-corrector) for
//! `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u`.
//!
//! Equality rows stay as equalities; every finite inequality bound gets its
//! own slack and multiplier. The Newton system is reduced to the
//! quasi-definite augmented form `[P + δI, Aᵀ; A, −D⁻¹]` and solved with a
//! statically regularized LDLᵀ plus iterative refinement.

use crate::ldl::{sym_upper_mul, LdlFactor};
use crate::polish::polish;
use crate::problem::{is_equality, project_dual, QuadraticProgram};
use crate::scaling::ScaledProblem;
use crate::settings::Settings;
use crate::solution::{QpSolution, Residuals, Status};
use crate::sparse::{inf_norm, CscMatrix};
use crate::QpError;

const REG_PRIMAL: f64 = 1e-8;
const REG_DUAL: f64 = 1e-8;
const STEP_FRACTION: f64 = 0.995;
const REFINE_STEPS: usize = 10;
const DYN_THRESHOLD: f64 = 1e-13;
const DYN_DELTA: f64 = 1e-7;
/// Iterations without improving the best iterate before giving up; near the
/// optimum the Newton directions lose accuracy and iterates can wander.
const STALL_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    Equality(f64),
    Lower(f64),
    Upper(f64),
    Box(f64, f64),
}

impl Row {
    fn lower(self) -> Option<f64> {
        match self {
            Row::Lower(l) | Row::Box(l, _) => Some(l),
            _ => None,
        }
    }

    fn upper(self) -> Option<f64> {
        match self {
            Row::Upper(u) | Row::Box(_, u) => Some(u),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InteriorPointSolver {
    prob: QuadraticProgram,
    scaled: ScaledProblem,
    settings: Settings,
    /// original row index of each active (non-free) row
    rows: Vec<usize>,
    kinds: Vec<Row>,
    a: CscMatrix,
    kkt: CscMatrix,
    factor: LdlFactor,
    diag_pos: Vec<usize>,
}

fn classify(lower: &[f64], upper: &[f64], rows: &[usize]) -> Vec<Row> {
    rows.iter()
        .map(|&i| {
            let (l, u) = (lower[i], upper[i]);
            let lf = l > f64::NEG_INFINITY;
            let uf = u < f64::INFINITY;
            if is_equality(l, u) {
                Row::Equality(0.5 * (l + u))
            } else if lf && uf {
                Row::Box(l, u)
            } else if lf {
                Row::Lower(l)
            } else {
                Row::Upper(u)
            }
        })
        .collect()
}

impl InteriorPointSolver {
    pub fn new(prob: &QuadraticProgram, settings: &Settings) -> Result<Self, QpError> {
        prob.validate()?;
        let n = prob.num_vars();
        let scaled = ScaledProblem::new(prob, settings.scaling_iters);
        let rows: Vec<usize> = (0..prob.num_constraints())
            .filter(|&i| prob.lower[i] > f64::NEG_INFINITY || prob.upper[i] < f64::INFINITY)
            .collect();
        let kinds = classify(&scaled.lower, &scaled.upper, &rows);
        let a = scaled.a.select_rows(&rows);
        let m = rows.len();

        let mut t = Vec::with_capacity(scaled.p.nnz() + a.nnz() + n + m);
        for (r, c, v) in scaled.p.iter() {
            if r <= c {
                t.push((r, c, v));
            }
        }
        for j in 0..n {
            t.push((j, j, 0.0));
        }
        for (r, c, v) in a.iter() {
            t.push((c, n + r, v));
        }
        for i in 0..m {
            t.push((n + i, n + i, 0.0));
        }
        let kkt = CscMatrix::from_triplets(n + m, n + m, &t);
        let diag_pos = (0..n + m).map(|c| kkt.colptr[c + 1] - 1).collect();
        let mut factor = LdlFactor::analyze(&kkt)?;
        let signs: Vec<f64> = (0..n + m).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        factor.set_dynamic_regularization(&signs, DYN_THRESHOLD, DYN_DELTA);
        Ok(Self { prob: prob.clone(), scaled, settings: settings.clone(), rows, kinds, a, kkt, factor, diag_pos })
    }

    pub fn update_q(&mut self, q: &[f64]) -> Result<(), QpError> {
        if q.len() != self.prob.num_vars() {
            return Err(QpError::Dimension("update_q length".into()));
        }
        self.prob.q.copy_from_slice(q);
        self.scaled.set_q(q);
        Ok(())
    }

    pub fn problem(&self) -> &QuadraticProgram {
        &self.prob
    }

    pub fn solve(&mut self) -> Result<QpSolution, QpError> {
        let n = self.prob.num_vars();
        let m = self.rows.len();
        let sp = self.scaled.clone();
        let st = self.settings.clone();
        let kinds = self.kinds.clone();

        // slacks / multipliers: index by active row; unused entries stay 0
        let has_lo: Vec<bool> = kinds.iter().map(|k| k.lower().is_some()).collect();
        let has_up: Vec<bool> = kinds.iter().map(|k| k.upper().is_some()).collect();
        let n_compl = has_lo.iter().filter(|&&b| b).count() + has_up.iter().filter(|&&b| b).count();

        // initial point from a regularized least-squares style solve
        let mut d = vec![1.0; m];
        let mut rhs = vec![0.0; n + m];
        for j in 0..n {
            rhs[j] = -sp.q[j];
        }
        for (i, k) in kinds.iter().enumerate() {
            rhs[n + i] = match *k {
                Row::Equality(b) => b,
                Row::Lower(l) => l,
                Row::Upper(u) => u,
                Row::Box(l, u) => 0.5 * (l + u),
            };
        }
        let eq: Vec<bool> = kinds.iter().map(|k| matches!(k, Row::Equality(_))).collect();
        self.factor_with(&vec![1.0; m], &eq, 1.0)?;
        let sol = self.solve_refined(&rhs, &d, &eq, 1.0);
        let mut x = sol[..n].to_vec();
        let ax = self.a.mul_vec(&x);
        let mut w = vec![0.0; m];
        let mut v = vec![0.0; m];
        let mut zl = vec![0.0; m];
        let mut zu = vec![0.0; m];
        let mut yeq = vec![0.0; m];
        for i in 0..m {
            if let Some(l) = kinds[i].lower() {
                w[i] = (ax[i] - l).max(1.0);
                zl[i] = 1.0;
            }
            if let Some(u) = kinds[i].upper() {
                v[i] = (u - ax[i]).max(1.0);
                zu[i] = 1.0;
            }
        }

        let mut status = Status::MaxIter;
        let mut certificate = None;
        let mut iter = 0;
        let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut best_merit = f64::INFINITY;
        let mut stall = 0;

        let mut px = vec![0.0; n];
        let mut aty = vec![0.0; n];
        let mut y = vec![0.0; m];
        let mut r_d = vec![0.0; n];
        let mut r_p = vec![0.0; m];
        let mut r_l = vec![0.0; m];
        let mut r_u = vec![0.0; m];
        let mut ax = vec![0.0; m];

        while iter < st.ipm_max_iter {
            for i in 0..m {
                y[i] = if eq[i] { yeq[i] } else { zu[i] - zl[i] };
            }
            // convergence check on the unscaled problem
            let (xo, yo) = self.unscale(&x, &y);
            let res = Residuals::evaluate(&self.prob, &xo, &yo);
            if res.primal_ok(st.eps_abs, st.eps_rel)
                && res.dual_ok(st.eps_abs, st.eps_rel)
                && res.gap_ok(st.eps_abs, st.eps_rel)
            {
                status = Status::Optimal;
                best = Some((xo, yo));
                break;
            }
            if let Some(cert) = primal_certificate(&self.prob, &yo, st.eps_prim_inf) {
                status = Status::PrimalInfeasible;
                certificate = Some(cert);
                best = Some((xo, yo));
                break;
            }
            if let Some(cert) = dual_certificate(&self.prob, &xo, st.eps_dual_inf) {
                status = Status::DualInfeasible;
                certificate = Some(cert);
                best = Some((xo, yo));
                break;
            }
            let merit = merit(&res, &st);
            if merit < best_merit {
                best_merit = merit;
                best = Some((xo, yo));
                stall = 0;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    break;
                }
            }
            iter += 1;

            sp.p.mul_vec_into(&x, &mut px);
            self.a.mul_t_vec_into(&y, &mut aty);
            self.a.mul_vec_into(&x, &mut ax);
            for j in 0..n {
                r_d[j] = px[j] + sp.q[j] + aty[j];
            }
            let mut mu = 0.0;
            for i in 0..m {
                match kinds[i] {
                    Row::Equality(b) => r_p[i] = ax[i] - b,
                    _ => {
                        if let Some(l) = kinds[i].lower() {
                            r_l[i] = ax[i] - l - w[i];
                            mu += w[i] * zl[i];
                        }
                        if let Some(u) = kinds[i].upper() {
                            r_u[i] = u - ax[i] - v[i];
                            mu += v[i] * zu[i];
                        }
                    }
                }
            }
            mu = if n_compl > 0 { mu / n_compl as f64 } else { 0.0 };

            for i in 0..m {
                if !eq[i] {
                    let mut di = 0.0;
                    if has_lo[i] {
                        di += zl[i] / w[i];
                    }
                    if has_up[i] {
                        di += zu[i] / v[i];
                    }
                    d[i] = di;
                }
            }
            self.factor_with(&d, &eq, 0.0)?;

            let newton = |rcl: &[f64], rcu: &[f64], this: &Self| -> Step {
                let mut rhs = vec![0.0; n + m];
                for j in 0..n {
                    rhs[j] = -r_d[j];
                }
                let mut c = vec![0.0; m];
                for i in 0..m {
                    if eq[i] {
                        rhs[n + i] = -r_p[i];
                        continue;
                    }
                    let mut ci = 0.0;
                    if has_lo[i] {
                        ci += rcl[i] / w[i] + zl[i] / w[i] * r_l[i];
                    }
                    if has_up[i] {
                        ci += -rcu[i] / v[i] - zu[i] / v[i] * r_u[i];
                    }
                    c[i] = ci;
                    rhs[n + i] = -ci / d[i];
                }
                let sol = this.solve_refined(&rhs, &d, &eq, 0.0);
                let dx = sol[..n].to_vec();
                let dy = sol[n..].to_vec();
                let adx = this.a.mul_vec(&dx);
                let mut step = Step {
                    dx,
                    dyeq: vec![0.0; m],
                    dw: vec![0.0; m],
                    dzl: vec![0.0; m],
                    dv: vec![0.0; m],
                    dzu: vec![0.0; m],
                };
                for i in 0..m {
                    if eq[i] {
                        step.dyeq[i] = dy[i];
                        continue;
                    }
                    match (has_lo[i], has_up[i]) {
                        // one-sided rows: take the dual step from the reduced
                        // solve, recovering the slack step avoids amplifying
                        // errors in A dx by z/s
                        (true, false) => {
                            step.dzl[i] = -dy[i];
                            step.dw[i] = -(rcl[i] + w[i] * step.dzl[i]) / zl[i];
                        }
                        (false, true) => {
                            step.dzu[i] = dy[i];
                            step.dv[i] = -(rcu[i] + v[i] * step.dzu[i]) / zu[i];
                        }
                        _ => {
                            if has_lo[i] {
                                step.dw[i] = adx[i] + r_l[i];
                                step.dzl[i] = -rcl[i] / w[i] - zl[i] / w[i] * step.dw[i];
                            }
                            if has_up[i] {
                                step.dv[i] = -adx[i] + r_u[i];
                                step.dzu[i] = -rcu[i] / v[i] - zu[i] / v[i] * step.dv[i];
                            }
                        }
                    }
                }
                step
            };

            // predictor
            let rcl: Vec<f64> = (0..m).map(|i| w[i] * zl[i]).collect();
            let rcu: Vec<f64> = (0..m).map(|i| v[i] * zu[i]).collect();
            let aff = newton(&rcl, &rcu, self);
            let alpha_aff = max_step(&w, &aff.dw, &has_lo)
                .min(max_step(&zl, &aff.dzl, &has_lo))
                .min(max_step(&v, &aff.dv, &has_up))
                .min(max_step(&zu, &aff.dzu, &has_up));
            let sigma = if n_compl > 0 && mu > 0.0 {
                let mut mu_aff = 0.0;
                for i in 0..m {
                    if has_lo[i] {
                        mu_aff += (w[i] + alpha_aff * aff.dw[i]) * (zl[i] + alpha_aff * aff.dzl[i]);
                    }
                    if has_up[i] {
                        mu_aff += (v[i] + alpha_aff * aff.dv[i]) * (zu[i] + alpha_aff * aff.dzu[i]);
                    }
                }
                mu_aff /= n_compl as f64;
                (mu_aff / mu).powi(3).clamp(0.0, 1.0)
            } else {
                0.0
            };

            // corrector
            let rcl: Vec<f64> = (0..m)
                .map(|i| w[i] * zl[i] + aff.dw[i] * aff.dzl[i] - if has_lo[i] { sigma * mu } else { 0.0 })
                .collect();
            let rcu: Vec<f64> = (0..m)
                .map(|i| v[i] * zu[i] + aff.dv[i] * aff.dzu[i] - if has_up[i] { sigma * mu } else { 0.0 })
                .collect();
            let step = newton(&rcl, &rcu, self);
            let alpha_max = max_step(&w, &step.dw, &has_lo)
                .min(max_step(&zl, &step.dzl, &has_lo))
                .min(max_step(&v, &step.dv, &has_up))
                .min(max_step(&zu, &step.dzu, &has_up));
            let alpha = (STEP_FRACTION * alpha_max).min(1.0);

            for j in 0..n {
                x[j] += alpha * step.dx[j];
            }
            for i in 0..m {
                if eq[i] {
                    yeq[i] += alpha * step.dyeq[i];
                    continue;
                }
                if has_lo[i] {
                    w[i] += alpha * step.dw[i];
                    zl[i] += alpha * step.dzl[i];
                }
                if has_up[i] {
                    v[i] += alpha * step.dv[i];
                    zu[i] += alpha * step.dzu[i];
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(QpError::Factorization("interior point iterate diverged".into()));
            }
        }

        let (mut xo, mut yo) = best.unwrap_or_else(|| (vec![0.0; n], vec![0.0; self.prob.num_constraints()]));
        let mut polished = false;
        if st.polish && matches!(status, Status::Optimal | Status::MaxIter) {
            let xs = self.scaled.scaling.scale_x(&xo);
            let ys = self.scaled.scaling.scale_y(&yo);
            if let Some((xp, mut yp)) =
                polish(&self.scaled, self.active_guess(&xo, &yo), (&xs, &ys), st.polish_refine_iter)
            {
                project_dual(&self.prob.lower, &self.prob.upper, &mut yp);
                let before = Residuals::evaluate(&self.prob, &xo, &yo);
                let after = Residuals::evaluate(&self.prob, &xp, &yp);
                if merit(&after, &st) <= merit(&before, &st).max(1.0) {
                    xo = xp;
                    yo = yp;
                    polished = true;
                    if merit(&after, &st) <= 1.0 {
                        status = Status::Optimal;
                    }
                }
            }
        }
        let r = Residuals::evaluate(&self.prob, &xo, &yo);
        let objective = match status {
            Status::PrimalInfeasible => f64::INFINITY,
            Status::DualInfeasible => f64::NEG_INFINITY,
            _ => r.objective,
        };
        Ok(QpSolution {
            x: xo,
            y: yo,
            status,
            objective,
            primal_residual: r.primal,
            dual_residual: r.dual,
            duality_gap: r.gap,
            iterations: iter,
            polished,
            certificate,
        })
    }

    /// Tight bounds at an (unscaled) iterate, judged in the scaled space.
    fn active_guess(&self, x: &[f64], y: &[f64]) -> Vec<i8> {
        let sp = &self.scaled;
        let xs = sp.scaling.scale_x(x);
        let ys = sp.scaling.scale_y(y);
        let ax = sp.a.mul_vec(&xs);
        (0..ax.len())
            .map(|i| {
                let (l, u) = (sp.lower[i], sp.upper[i]);
                if is_equality(l, u) {
                    -1
                } else if ax[i] - l < -ys[i] {
                    -1
                } else if u - ax[i] < ys[i] {
                    1
                } else {
                    0
                }
            })
            .collect()
    }

    fn unscale(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = &self.scaled.scaling;
        let mut yfull = vec![0.0; self.prob.num_constraints()];
        for (k, &i) in self.rows.iter().enumerate() {
            yfull[i] = y[k];
        }
        (s.unscale_x(x), s.unscale_y(&yfull))
    }

    fn kkt_values(&self, d: &[f64], eq: &[bool], extra: f64, regularize: bool) -> Vec<f64> {
        let n = self.prob.num_vars();
        let mut vals = self.kkt.values.clone();
        for j in 0..n {
            vals[self.diag_pos[j]] += extra + if regularize { REG_PRIMAL } else { 0.0 };
        }
        for i in 0..d.len() {
            let pos = self.diag_pos[n + i];
            // equality rows keep their regularization in the refined system
            // so that dependent rows do not make it singular
            vals[pos] = if eq[i] {
                -(extra + REG_DUAL)
            } else {
                -1.0 / d[i].max(1e-300) - if regularize { REG_DUAL } else { 0.0 }
            };
        }
        vals
    }

    fn factor_with(&mut self, d: &[f64], eq: &[bool], extra: f64) -> Result<(), QpError> {
        let vals = self.kkt_values(d, eq, extra, true);
        self.factor.factor(&vals)?;
        if self.factor.positive_pivots() != self.prob.num_vars() {
            return Err(QpError::NonConvex);
        }
        Ok(())
    }

    fn solve_refined(&self, rhs: &[f64], d: &[f64], eq: &[bool], extra: f64) -> Vec<f64> {
        let exact = self.kkt_values(d, eq, extra, false);
        let mut sol = rhs.to_vec();
        self.factor.solve_in_place(&mut sol);
        let mut k = vec![0.0; rhs.len()];
        let mut last = f64::INFINITY;
        let mut prev = sol.clone();
        for _ in 0..REFINE_STEPS {
            sym_upper_mul(&self.kkt, &exact, &sol, &mut k);
            let mut r: Vec<f64> = rhs.iter().zip(&k).map(|(a, b)| a - b).collect();
            let norm = inf_norm(&r);
            // refinement can diverge when the exact system is near singular
            if norm >= last {
                return prev;
            }
            last = norm;
            if norm <= 1e-14 * (1.0 + inf_norm(rhs)) {
                break;
            }
            prev.copy_from_slice(&sol);
            self.factor.solve_in_place(&mut r);
            for (s, dv) in sol.iter_mut().zip(&r) {
                *s += dv;
            }
        }
        sol
    }
}

/// Largest residual measured in units of its tolerance; `≤ 1` means solved.
fn merit(r: &Residuals, st: &Settings) -> f64 {
    (r.primal / (st.eps_abs + st.eps_rel * r.primal_scale))
        .max(r.dual / (st.eps_abs + st.eps_rel * r.dual_scale))
        .max(r.gap / (st.eps_abs + st.eps_rel * r.objective.abs().max(r.dual_objective.abs())))
}

struct Step {
    dx: Vec<f64>,
    dyeq: Vec<f64>,
    dw: Vec<f64>,
    dzl: Vec<f64>,
    dv: Vec<f64>,
    dzu: Vec<f64>,
}

fn max_step(val: &[f64], dir: &[f64], mask: &[bool]) -> f64 {
    let mut a: f64 = 1.0 / STEP_FRACTION;
    for i in 0..val.len() {
        if mask[i] && dir[i] < 0.0 {
            a = a.min(-val[i] / dir[i]);
        }
    }
    a
}

/// `y` certifies primal infeasibility when `Aᵀy ≈ 0` and the support of the
/// bound box at `y` is negative, both relative to `‖y‖`.
pub(crate) fn primal_certificate(prob: &QuadraticProgram, y: &[f64], eps: f64) -> Option<Vec<f64>> {
    let norm = inf_norm(y);
    if norm < 1e6 * (1.0 + inf_norm(&prob.q)) {
        return None;
    }
    let dir: Vec<f64> = y.iter().map(|v| v / norm).collect();
    let aty = prob.a.mul_t_vec(&dir);
    if inf_norm(&aty) > eps.max(1e-6) {
        return None;
    }
    let s = crate::problem::support(&prob.lower, &prob.upper, &dir);
    if s < -eps.max(1e-6) {
        Some(dir)
    } else {
        None
    }
}

/// `x` certifies dual infeasibility (unboundedness) when it is a recession
/// direction with `Px ≈ 0` and `qᵀx < 0`.
pub(crate) fn dual_certificate(prob: &QuadraticProgram, x: &[f64], eps: f64) -> Option<Vec<f64>> {
    let norm = inf_norm(x);
    let data =
        1.0 + inf_norm(&prob.lower.iter().chain(&prob.upper).copied().filter(|v| v.is_finite()).collect::<Vec<_>>());
    if norm < 1e6 * data {
        return None;
    }
    let dir: Vec<f64> = x.iter().map(|v| v / norm).collect();
    let tol = eps.max(1e-6);
    if inf_norm(&prob.p.mul_vec(&dir)) > tol {
        return None;
    }
    if crate::sparse::dot(&prob.q, &dir) >= -tol {
        return None;
    }
    let ad = prob.a.mul_vec(&dir);
    for i in 0..ad.len() {
        let lo_inf = prob.lower[i] == f64::NEG_INFINITY;
        let up_inf = prob.upper[i] == f64::INFINITY;
        let ok = match (lo_inf, up_inf) {
            (true, true) => true,
            (false, true) => ad[i] >= -tol,
            (true, false) => ad[i] <= tol,
            (false, false) => ad[i].abs() <= tol,
        };
        if !ok {
            return None;
        }
    }
    Some(dir)
}
