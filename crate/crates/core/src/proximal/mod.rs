//! Base-model losses and the local regularizer, accessed through evaluation
//! and proximal operators.

mod loss;
mod newton;
mod regularizer;

use nalgebra::DVector;

pub use loss::{log_sum_exp, predict_distribution, sigmoid, softplus, BaseKind, LocalLossSpec};
pub use newton::{GRAD_TOL, MAX_ITER};
pub use regularizer::{prox_reg, solve_tridiagonal, LocalRegularizerSpec};

pub(crate) use regularizer::prox_reg_unchecked;

use crate::error::{Error, Result};
use newton::{minimize, Objective};

/// `l_k(theta)`; zero when the node has no data.
pub fn loss_eval(spec: &LocalLossSpec, theta: &DVector<f64>) -> Result<f64> {
    spec.eval(theta)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    Ok(())
}

/// `prox_{rho l}(v) = argmin_theta l(theta) + ||theta - v||^2 / (2 rho)`.
pub fn prox_loss(spec: &LocalLossSpec, v: &DVector<f64>, rho: f64) -> Result<DVector<f64>> {
    prox_loss_from(spec, v, rho, v.clone())
}

/// [`prox_loss`] with Newton started from `start` instead of `v`. The result
/// is the same minimizer; only the iteration count changes.
pub fn prox_loss_from(spec: &LocalLossSpec, v: &DVector<f64>, rho: f64, start: DVector<f64>) -> Result<DVector<f64>> {
    check_rho(rho)?;
    spec.check_dim(v)?;
    spec.check_dim(&start)?;
    if spec.is_empty() {
        return Ok(v.clone());
    }
    let obj = Objective {
        loss: spec,
        reg: None,
        anchor: Some((v, rho)),
    };
    minimize(&obj, start)
}

/// Gradient of the prox objective `l(theta) + ||theta - v||^2 / (2 rho)`.
pub fn prox_loss_gradient(spec: &LocalLossSpec, v: &DVector<f64>, rho: f64, theta: &DVector<f64>) -> DVector<f64> {
    let obj = Objective {
        loss: spec,
        reg: None,
        anchor: Some((v, rho)),
    };
    newton::gradient_of(&obj, theta)
}

/// `argmin_theta l(theta) + reg_scale * r(theta)`, the fit of a single base
/// model. Starts from zero.
pub fn minimize_regularized(spec: &LocalLossSpec, reg: &LocalRegularizerSpec, reg_scale: f64) -> Result<DVector<f64>> {
    reg.validate()?;
    let n = spec.dim();
    if spec.is_empty() {
        // The regularizer alone is minimized at zero.
        return Ok(DVector::zeros(n));
    }
    let obj = Objective {
        loss: spec,
        reg: Some((reg, reg_scale)),
        anchor: None,
    };
    minimize(&obj, DVector::zeros(n))
}
