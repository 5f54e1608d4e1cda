//! Damped Newton method for the smooth, strongly convex subproblems behind
//! every proximal step and the separate/common baselines.

use nalgebra::{DMatrix, DVector};

use super::loss::{predict_distribution, LocalLossSpec};
use super::regularizer::LocalRegularizerSpec;
use crate::error::{Error, Result};

pub const GRAD_TOL: f64 = 1e-9;
pub const MAX_ITER: usize = 100;
const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const DISCRETE_RIDGE: f64 = 1e-10;

/// `loss(x) + reg_scale * r(x) + ||x - center||^2 / (2 rho)`, with either
/// of the last two terms optional.
pub(crate) struct Objective<'a> {
    pub loss: &'a LocalLossSpec,
    pub reg: Option<(&'a LocalRegularizerSpec, f64)>,
    pub anchor: Option<(&'a DVector<f64>, f64)>,
}

impl Objective<'_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let mut f = self.loss.value(x);
        if let Some((r, s)) = self.reg {
            f += s * r.eval(x);
        }
        if let Some((v, rho)) = self.anchor {
            f += (x - v).norm_squared() / (2.0 * rho);
        }
        f
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.loss.gradient(x);
        if let Some((r, s)) = self.reg {
            g.axpy(s, &r.gradient(x), 1.0);
        }
        if let Some((v, rho)) = self.anchor {
            g.axpy(1.0 / rho, &(x - v), 1.0);
        }
        g
    }

    /// Newton direction `-H^{-1} g`.
    fn direction(&self, x: &DVector<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
        let n = x.len();
        if let (LocalLossSpec::DiscreteDistribution { counts }, None, Some((_, rho))) =
            (self.loss, self.reg, self.anchor)
        {
            // H = M diag(p) - M p p^T + (1/rho + ridge) I: diagonal minus
            // rank one, inverted with Sherman-Morrison.
            let total = counts.iter().sum::<u64>() as f64;
            let p = predict_distribution(x);
            let d = p.map(|pi| total * pi + 1.0 / rho + DISCRETE_RIDGE);
            let dinv_g = g.component_div(&d);
            let dinv_u = (&p * total).component_div(&d);
            let denom = 1.0 - p.dot(&dinv_u);
            let step = &dinv_g + &dinv_u * (p.dot(&dinv_g) / denom);
            return Some(-step);
        }
        let mut h = self.loss.hessian(x);
        if let Some((r, s)) = self.reg {
            h += r.hessian(n) * s;
        }
        let mut diag_shift = match self.anchor {
            Some((_, rho)) => 1.0 / rho,
            None => 0.0,
        };
        if matches!(self.loss, LocalLossSpec::DiscreteDistribution { .. }) {
            diag_shift += DISCRETE_RIDGE;
        }
        for i in 0..n {
            h[(i, i)] += diag_shift;
        }
        solve_spd(h, g).map(|d| -d)
    }
}

/// Cholesky solve, retrying with a growing ridge when the matrix is only
/// semidefinite.
fn solve_spd(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1.0);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            return Some(ch.solve(g));
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
    }
    None
}

/// Minimizes the objective from `x0`; fails with the final gradient norm if
/// the tolerance is not reached within [`MAX_ITER`] iterations.
pub(crate) fn minimize(obj: &Objective<'_>, x0: DVector<f64>) -> Result<DVector<f64>> {
    let mut x = x0;
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    for _ in 0..MAX_ITER {
        let gnorm = g.norm();
        if gnorm <= GRAD_TOL {
            return Ok(x);
        }
        let mut d = obj.direction(&x, &g).unwrap_or_else(|| -&g);
        let mut slope = g.dot(&d);
        if slope.is_nan() || slope >= 0.0 {
            d = -&g;
            slope = -gnorm * gnorm;
        }
        let slack = 1e-13 * (1.0 + f.abs());
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial = &x + &d * t;
            let ft = obj.value(&trial);
            if ft <= f + ARMIJO_SLOPE * t * slope + slack {
                x = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= BACKTRACK;
        }
        if !accepted {
            break;
        }
        g = obj.gradient(&x);
    }
    let residual = g.norm();
    if residual <= GRAD_TOL {
        Ok(x)
    } else {
        Err(Error::NumericalFailure {
            context: "Newton solve".into(),
            residual,
        })
    }
}

pub(crate) fn gradient_of(obj: &Objective<'_>, x: &DVector<f64>) -> DVector<f64> {
    obj.gradient(x)
}
