//! Random instance generators and a brute-force LP oracle shared by the
//! solver tests.
#![allow(dead_code)]

use qpcore::{CscMatrix, QuadraticProgram};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const INF: f64 = f64::INFINITY;

/// Random convex QP that is feasible by construction (bounds straddle
/// `A x0`) and bounded (every variable carries a box row).
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m_extra: usize) -> QuadraticProgram {
    let rank = rng.gen_range(0..=n);
    let mut p = vec![vec![0.0; n]; n];
    for _ in 0..rank {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..n {
            for j in 0..n {
                p[i][j] += v[i] * v[j];
            }
        }
    }
    let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for j in 0..n {
        let mut r = vec![0.0; n];
        r[j] = 1.0;
        rows.push(r);
        lower.push(x0[j] - rng.gen_range(0.1..3.0));
        upper.push(x0[j] + rng.gen_range(0.1..3.0));
    }
    for _ in 0..m_extra {
        let r: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.4) { rng.gen_range(-3.0..3.0) } else { 0.0 }).collect();
        let ax: f64 = r.iter().zip(&x0).map(|(a, b)| a * b).sum();
        let kind = rng.gen_range(0..4);
        let (l, u) = match kind {
            0 => (ax, ax),
            1 => (ax - rng.gen_range(0.0..2.0), INF),
            2 => (-INF, ax + rng.gen_range(0.0..2.0)),
            _ => (ax - rng.gen_range(0.0..2.0), ax + rng.gen_range(0.0..2.0)),
        };
        rows.push(r);
        lower.push(l);
        upper.push(u);
    }
    QuadraticProgram::new(CscMatrix::from_dense(&p), q, CscMatrix::from_dense(&rows), lower, upper).unwrap()
}

/// Random LP over a box plus a few general rows; `x = 0` is always feasible.
pub fn random_lp(rng: &mut ChaCha8Rng, n: usize) -> QuadraticProgram {
    let extra = rng.gen_range(0..=(8 - n));
    let mut rows = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for j in 0..n {
        let mut r = vec![0.0; n];
        r[j] = 1.0;
        rows.push(r);
        lower.push(-rng.gen_range(0.5..5.0));
        upper.push(rng.gen_range(0.5..5.0));
    }
    for _ in 0..extra {
        rows.push((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect());
        if rng.gen_bool(0.5) {
            lower.push(-INF);
            upper.push(rng.gen_range(0.5..4.0));
        } else {
            lower.push(-rng.gen_range(0.5..4.0));
            upper.push(rng.gen_range(0.5..4.0));
        }
    }
    let q = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    QuadraticProgram::lp(q, CscMatrix::from_dense(&rows), lower, upper).unwrap()
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum of `qᵀx` over the polytope, by enumerating every vertex formed
/// by `n` tight bound sides. Assumes a bounded, nonempty polytope.
pub fn vertex_enumeration(prob: &QuadraticProgram) -> f64 {
    let n = prob.num_vars();
    let dense = prob.a.to_dense();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..prob.num_constraints() {
        if prob.lower[i].is_finite() {
            planes.push((dense[i].clone(), prob.lower[i]));
        }
        if prob.upper[i].is_finite() && prob.upper[i] != prob.lower[i] {
            planes.push((dense[i].clone(), prob.upper[i]));
        }
    }
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a: Vec<Vec<f64>> = idx.iter().map(|&k| planes[k].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&k| planes[k].1).collect();
        if let Some(x) = solve_dense(a, b) {
            let feasible = (0..prob.num_constraints()).all(|i| {
                let ax: f64 = dense[i].iter().zip(&x).map(|(a, b)| a * b).sum();
                ax >= prob.lower[i] - 1e-9 && ax <= prob.upper[i] + 1e-9
            });
            if feasible {
                let obj: f64 = prob.q.iter().zip(&x).map(|(a, b)| a * b).sum();
                best = best.min(obj);
            }
        }
        // next combination
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < planes.len() - n + k {
                idx[k] += 1;
                for j in k + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
