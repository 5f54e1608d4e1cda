use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `r(x) = gamma1/2 ||x||^2 + gamma2/2 sum_i (x_{i+1} - x_i)^2`.
///
/// With `intercept_exempt` the last coordinate is left out of the
/// sum-of-squares term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalRegularizerSpec {
    pub gamma1: f64,
    pub gamma2: f64,
    pub intercept_exempt: bool,
}

impl LocalRegularizerSpec {
    pub fn sum_of_squares(gamma1: f64) -> Self {
        Self {
            gamma1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and nonnegative, got {g}"
                )));
            }
        }
        Ok(())
    }

    fn ridge_weight(&self, i: usize, n: usize) -> f64 {
        if self.intercept_exempt && i + 1 == n {
            0.0
        } else {
            self.gamma1
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let n = x.len();
        let ridge: f64 = x.iter().enumerate().map(|(i, v)| self.ridge_weight(i, n) * v * v).sum();
        let diff: f64 = x.as_slice().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        0.5 * ridge + 0.5 * self.gamma2 * diff
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = x.len();
        let mut g = DVector::from_fn(n, |i, _| self.ridge_weight(i, n) * x[i]);
        for i in 0..n.saturating_sub(1) {
            let d = self.gamma2 * (x[i + 1] - x[i]);
            g[i] -= d;
            g[i + 1] += d;
        }
        g
    }

    /// The (constant) Hessian `gamma1 I + gamma2 D^T D` as a tridiagonal
    /// `(lower, diagonal, upper)` triple.
    pub fn tridiagonal(&self, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut diag: Vec<f64> = (0..n).map(|i| self.ridge_weight(i, n)).collect();
        let off = vec![-self.gamma2; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            diag[i] += self.gamma2;
            diag[i + 1] += self.gamma2;
        }
        (off.clone(), diag, off)
    }

    pub fn hessian(&self, n: usize) -> DMatrix<f64> {
        let (lower, diag, upper) = self.tridiagonal(n);
        let mut h = DMatrix::from_diagonal(&DVector::from_vec(diag));
        for i in 0..n.saturating_sub(1) {
            h[(i + 1, i)] = lower[i];
            h[(i, i + 1)] = upper[i];
        }
        h
    }
}

/// Solves a tridiagonal system with the Thomas algorithm. `lower[i]` sits at
/// `(i + 1, i)` and `upper[i]` at `(i, i + 1)`. The matrix must be diagonally
/// dominant or symmetric positive definite.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert!(rhs.len() == n && lower.len() + 1 == n.max(1) && upper.len() + 1 == n.max(1));
    if n == 0 {
        return Vec::new();
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { upper[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// `prox_{rho r}(v) = argmin_x r(x) + ||x - v||^2 / (2 rho)`, via the
/// tridiagonal system `(rho gamma1 I + rho gamma2 D^T D + I) x = v`.
pub fn prox_reg(spec: &LocalRegularizerSpec, v: &DVector<f64>, rho: f64) -> Result<DVector<f64>> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    Ok(prox_reg_unchecked(spec, v, rho))
}

pub(crate) fn prox_reg_unchecked(spec: &LocalRegularizerSpec, v: &DVector<f64>, rho: f64) -> DVector<f64> {
    if spec.gamma1 == 0.0 && spec.gamma2 == 0.0 {
        return v.clone();
    }
    let n = v.len();
    let (mut lower, mut diag, mut upper) = spec.tridiagonal(n);
    lower.iter_mut().chain(upper.iter_mut()).for_each(|x| *x *= rho);
    diag.iter_mut().for_each(|x| *x = *x * rho + 1.0);
    DVector::from_vec(solve_tridiagonal(&lower, &diag, &upper, v.as_slice()))
}
