//! Standard-form convex quadratic program.

use crate::sparse::{dot, CscMatrix};
use crate::QpError;

/// Symmetry tolerance accepted on `P`.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// ```text
/// minimize    ½ xᵀ P x + qᵀ x
/// subject to  lower ≤ A x ≤ upper
/// ```
///
/// `P` is stored in full (both triangles). Infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub variable_names: Option<Vec<String>>,
}

impl QuadraticProgram {
    pub fn new(p: CscMatrix, q: Vec<f64>, a: CscMatrix, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, QpError> {
        let prob = Self { p, q, a, lower, upper, variable_names: None };
        prob.validate()?;
        Ok(prob)
    }

    /// Linear program: `P = 0`.
    pub fn lp(q: Vec<f64>, a: CscMatrix, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, QpError> {
        let n = q.len();
        Self::new(CscMatrix::zeros(n, n), q, a, lower, upper)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self, QpError> {
        if names.len() != self.num_vars() {
            return Err(QpError::Dimension(format!(
                "{} variable names for {} variables",
                names.len(),
                self.num_vars()
            )));
        }
        self.variable_names = Some(names);
        Ok(self)
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.q.len();
        let m = self.lower.len();
        if self.p.nrows != n || self.p.ncols != n {
            return Err(QpError::Dimension(format!("P is {}x{}, expected {n}x{n}", self.p.nrows, self.p.ncols)));
        }
        if self.a.ncols != n || self.a.nrows != m || self.upper.len() != m {
            return Err(QpError::Dimension(format!(
                "A is {}x{} with {} lower / {} upper bounds for {n} variables",
                self.a.nrows,
                self.a.ncols,
                m,
                self.upper.len()
            )));
        }
        if self.q.iter().chain(&self.p.values).chain(&self.a.values).any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite);
        }
        for i in 0..m {
            let (l, u) = (self.lower[i], self.upper[i]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(QpError::Bounds { row: i, lower: l, upper: u });
            }
        }
        let asym = self.p.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(QpError::NotSymmetric(asym));
        }
        Ok(())
    }

    /// `½ xᵀ P x + qᵀ x`
    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.p.quad_form(x) + dot(&self.q, x)
    }

    /// Dual objective at `(x, y)` under the convention `P x + q + Aᵀ y = 0`:
    /// `-½ xᵀ P x - Σ (upper_i y_i⁺ + lower_i y_i⁻)`.
    ///
    /// Returns `-inf` if `y` puts weight on an infinite bound.
    pub fn dual_objective(&self, x: &[f64], y: &[f64]) -> f64 {
        -0.5 * self.p.quad_form(x) - support(&self.lower, &self.upper, y)
    }
}

/// Both bounds finite and (numerically) equal.
pub fn is_equality(lower: f64, upper: f64) -> bool {
    lower.is_finite() && upper.is_finite() && upper - lower <= 1e-10 * (1.0 + lower.abs())
}

/// Zero out multiplier components that point at an infinite bound. Such
/// components are numerical noise at an optimum and would make the support
/// function infinite.
pub(crate) fn project_dual(lower: &[f64], upper: &[f64], y: &mut [f64]) {
    for i in 0..y.len() {
        if upper[i] == f64::INFINITY && y[i] > 0.0 {
            y[i] = 0.0;
        }
        if lower[i] == f64::NEG_INFINITY && y[i] < 0.0 {
            y[i] = 0.0;
        }
    }
}

/// Support function of the box `[lower, upper]` evaluated at `y`.
pub(crate) fn support(lower: &[f64], upper: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        if y[i] > 0.0 {
            s += upper[i] * y[i];
        } else if y[i] < 0.0 {
            s += lower[i] * y[i];
        }
    }
    if s.is_nan() {
        f64::INFINITY
    } else {
        s
    }
}
