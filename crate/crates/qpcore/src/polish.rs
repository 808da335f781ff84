//! Active-set polish: given a guess of which bounds are tight, solve the
//! equality-constrained KKT system exactly, then drop rows whose multiplier
//! has the wrong sign and add rows that are violated, until the set settles.

use crate::ldl::{sym_upper_mul, LdlFactor};
use crate::problem::is_equality;
use crate::scaling::ScaledProblem;
use crate::sparse::{inf_norm, CscMatrix};

const DELTA: f64 = 1e-7;
const ROUNDS: usize = 8;
const TOL: f64 = 1e-9;

/// `active[i]` is `-1` for a tight lower bound, `1` for a tight upper bound
/// and `0` otherwise; equality rows must be marked `-1`. Works on the scaled
/// problem and returns an unscaled `(x, y)` pair.
pub(crate) fn polish(
    sp: &ScaledProblem,
    mut active: Vec<i8>,
    warm: (&[f64], &[f64]),
    refine_iter: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = active.len();
    let equality: Vec<bool> = (0..m).map(|i| is_equality(sp.lower[i], sp.upper[i])).collect();
    let (mut xs, mut ys) = (warm.0.to_vec(), warm.1.to_vec());
    for _ in 0..ROUNDS {
        let rows: Vec<usize> = (0..m).filter(|&i| active[i] != 0).collect();
        let y_act: Vec<f64> = rows.iter().map(|&i| ys[i]).collect();
        let (x_new, ys_act) = solve_reduced(sp, &rows, &active, (&xs, &y_act), refine_iter)?;
        xs = x_new;
        ys = vec![0.0; m];
        for (k, &i) in rows.iter().enumerate() {
            ys[i] = ys_act[k];
        }
        let ax = sp.a.mul_vec(&xs);
        let mut changed = false;
        for i in 0..m {
            if equality[i] {
                continue;
            }
            let scale = 1.0 + sp.lower[i].abs().min(sp.upper[i].abs()).min(1e6);
            match active[i] {
                0 => {
                    if ax[i] < sp.lower[i] - TOL * scale {
                        active[i] = -1;
                        changed = true;
                    } else if ax[i] > sp.upper[i] + TOL * scale {
                        active[i] = 1;
                        changed = true;
                    }
                }
                -1 => {
                    if ys[i] > TOL {
                        active[i] = 0;
                        ys[i] = 0.0;
                        changed = true;
                    }
                }
                _ => {
                    if ys[i] < -TOL {
                        active[i] = 0;
                        ys[i] = 0.0;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            let s = &sp.scaling;
            return Some((s.unscale_x(&xs), s.unscale_y(&ys)));
        }
    }
    None
}

/// Solve the equality-constrained KKT system of the active rows by
/// regularized refinement started at `warm`. Each refinement step is a
/// proximal-point step, so on singular (degenerate) systems the iterates
/// settle on the solution nearest to the warm start.
fn solve_reduced(
    sp: &ScaledProblem,
    rows: &[usize],
    active: &[i8],
    warm: (&[f64], &[f64]),
    refine_iter: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = sp.q.len();
    let k = rows.len();
    let a_red = sp.a.select_rows(rows);
    let mut t = Vec::with_capacity(sp.p.nnz() + a_red.nnz() + n + k);
    for (r, c, v) in sp.p.iter() {
        if r <= c {
            t.push((r, c, v));
        }
    }
    for j in 0..n {
        t.push((j, j, 0.0));
    }
    for (r, c, v) in a_red.iter() {
        t.push((c, n + r, v));
    }
    for i in 0..k {
        t.push((n + i, n + i, 0.0));
    }
    let exact = CscMatrix::from_triplets(n + k, n + k, &t);
    let mut reg = exact.values.clone();
    for c in 0..n + k {
        let pos = exact.colptr[c + 1] - 1;
        reg[pos] += if c < n { DELTA } else { -DELTA };
    }
    let mut f = LdlFactor::analyze(&exact).ok()?;
    let signs: Vec<f64> = (0..n + k).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
    f.set_dynamic_regularization(&signs, 1e-13, DELTA);
    f.factor(&reg).ok()?;

    let mut rhs = vec![0.0; n + k];
    for j in 0..n {
        rhs[j] = -sp.q[j];
    }
    for (r, &i) in rows.iter().enumerate() {
        rhs[n + r] = if active[i] > 0 { sp.upper[i] } else { sp.lower[i] };
    }
    let mut sol: Vec<f64> = warm.0.iter().chain(warm.1).copied().collect();
    let mut kx = vec![0.0; n + k];
    let tol = 1e-13 * (1.0 + inf_norm(&rhs));
    for _ in 0..refine_iter.max(1) * 10 {
        sym_upper_mul(&exact, &exact.values, &sol, &mut kx);
        let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
        if inf_norm(&r) <= tol {
            break;
        }
        f.solve_in_place(&mut r);
        for (s, d) in sol.iter_mut().zip(&r) {
            *s += d;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol[..n].to_vec(), sol[n..].to_vec()))
}
