//! Ruiz equilibration of the KKT matrix plus cost scaling.
//!
//! The scaled problem uses `x̄ = D⁻¹x`, `P̄ = c D P D`, `q̄ = c D q`,
//! `Ā = E A D`, bounds `E l`, `E u`. Duals map back as `y = E ȳ / c`.

use crate::problem::QuadraticProgram;
use crate::sparse::{inf_norm, CscMatrix};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;

#[derive(Debug, Clone)]
pub struct Scaling {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub struct ScaledProblem {
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub scaling: Scaling,
}

fn limit(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

impl ScaledProblem {
    pub fn new(prob: &QuadraticProgram, iters: usize) -> Self {
        let n = prob.num_vars();
        let m = prob.num_constraints();
        let mut p = prob.p.clone();
        let mut a = prob.a.clone();
        let mut q = prob.q.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut c = 1.0;

        for _ in 0..iters {
            let pn = p.col_inf_norms();
            let an = a.col_inf_norms();
            let dk: Vec<f64> = (0..n).map(|j| 1.0 / limit(pn[j].max(an[j])).sqrt()).collect();
            let ek: Vec<f64> = a.row_inf_norms().into_iter().map(|v| 1.0 / limit(v).sqrt()).collect();
            p.scale(&dk, &dk);
            a.scale(&ek, &dk);
            for j in 0..n {
                q[j] *= dk[j];
                d[j] *= dk[j];
            }
            for i in 0..m {
                e[i] *= ek[i];
            }

            let pn = p.col_inf_norms();
            let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let gamma = 1.0 / limit(mean.max(inf_norm(&q)));
            p.values.iter_mut().for_each(|v| *v *= gamma);
            q.iter_mut().for_each(|v| *v *= gamma);
            c *= gamma;
        }

        let lower = prob.lower.iter().zip(&e).map(|(l, s)| l * s).collect();
        let upper = prob.upper.iter().zip(&e).map(|(u, s)| u * s).collect();
        Self { p, q, a, lower, upper, scaling: Scaling { d, e, c } }
    }

    /// Replace the linear cost, keeping the scaling fixed.
    pub fn set_q(&mut self, q: &[f64]) {
        let s = &self.scaling;
        for j in 0..q.len() {
            self.q[j] = s.c * s.d[j] * q[j];
        }
    }

    pub fn set_bounds(&mut self, lower: &[f64], upper: &[f64]) {
        for i in 0..lower.len() {
            self.lower[i] = lower[i] * self.scaling.e[i];
            self.upper[i] = upper[i] * self.scaling.e[i];
        }
    }
}

impl Scaling {
    pub fn unscale_x(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().zip(&self.d).map(|(x, d)| x * d).collect()
    }

    pub fn unscale_y(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().zip(&self.e).map(|(y, e)| y * e / self.c).collect()
    }

    pub fn scale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(x, d)| x / d).collect()
    }

    pub fn scale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.e).map(|(y, e)| y * self.c / e).collect()
    }

    pub fn scale_z(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.e).map(|(z, e)| z * e).collect()
    }
}
