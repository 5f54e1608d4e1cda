use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{eigen_objective, node_error, FitConfig, FitDiagnostics, IterationRecord, ThetaTildeUpdate};
use crate::error::{Error, Result};
use crate::graphs::EigenBasis;
use crate::proximal::{prox_loss_from, prox_reg_unchecked, LocalLossSpec, LocalRegularizerSpec};

/// Iterates of the eigen-stratified ADMM. `u` and `u_tilde` are the scaled
/// duals of `theta = theta_tilde` and `theta_tilde = Z Q~^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta: DMatrix<f64>,
    pub theta_tilde: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub u_tilde: DMatrix<f64>,
    pub iteration: usize,
}

impl AdmmState {
    pub fn zeros(n: usize, k: usize, m: usize) -> Self {
        Self {
            theta: DMatrix::zeros(n, k),
            theta_tilde: DMatrix::zeros(n, k),
            z: DMatrix::zeros(n, m),
            u: DMatrix::zeros(n, k),
            u_tilde: DMatrix::zeros(n, k),
            iteration: 0,
        }
    }
}

/// `(1/rho) (u~ + theta~) Q~ (Lambda_m + I/rho)^{-1}`.
pub fn z_update(theta_tilde: &DMatrix<f64>, u_tilde: &DMatrix<f64>, basis: &EigenBasis, rho: f64) -> DMatrix<f64> {
    let mut z = (u_tilde + theta_tilde) * &basis.q_tilde;
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col /= rho * basis.lambda_m[j] + 1.0;
    }
    z
}

/// One fit in progress. Inputs are borrowed and never modified.
pub struct Admm<'a> {
    losses: &'a [LocalLossSpec],
    reg: &'a LocalRegularizerSpec,
    basis: &'a EigenBasis,
    config: &'a FitConfig,
    pub state: AdmmState,
}

/// Residuals of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResiduals {
    pub r1: f64,
    pub r2: f64,
    pub dual: f64,
    pub eps: f64,
}

impl<'a> Admm<'a> {
    pub fn new(
        losses: &'a [LocalLossSpec],
        reg: &'a LocalRegularizerSpec,
        basis: &'a EigenBasis,
        config: &'a FitConfig,
    ) -> Result<Self> {
        let n = super::check_losses(losses)?;
        if losses.len() != basis.num_vertices() {
            return Err(Error::invalid(format!(
                "{} losses for a graph with {} vertices",
                losses.len(),
                basis.num_vertices()
            )));
        }
        reg.validate()?;
        config.validate()?;
        Ok(Self {
            losses,
            reg,
            basis,
            config,
            state: AdmmState::zeros(n, losses.len(), basis.m()),
        })
    }

    fn set_columns(target: &mut DMatrix<f64>, cols: Vec<DVector<f64>>) {
        for (k, c) in cols.into_iter().enumerate() {
            target.set_column(k, &c);
        }
    }

    pub fn step(&mut self) -> Result<StepResiduals> {
        let rho = self.config.rho;
        let s = &mut self.state;

        let theta_cols: Vec<DVector<f64>> = (0..self.losses.len())
            .into_par_iter()
            .map(|k| {
                let v = s.theta_tilde.column(k) - s.u.column(k);
                prox_loss_from(&self.losses[k], &v, rho, s.theta.column(k).into_owned()).map_err(|e| node_error(k, e))
            })
            .collect::<Result<_>>()?;
        Self::set_columns(&mut s.theta, theta_cols);

        s.z = z_update(&s.theta_tilde, &s.u_tilde, self.basis, rho);
        let zq = &s.z * self.basis.q_tilde.transpose();

        let (target, scale) = match self.config.theta_tilde_update {
            ThetaTildeUpdate::Exact => ((&s.theta + &s.u + &zq - &s.u_tilde) * 0.5, 0.5 * rho),
            ThetaTildeUpdate::PaperLiteral => (&zq - &s.u_tilde, rho),
        };
        let tilde_cols: Vec<DVector<f64>> = (0..target.ncols())
            .into_par_iter()
            .map(|k| prox_reg_unchecked(self.reg, &target.column(k).into_owned(), scale))
            .collect();
        let old_tilde = s.theta_tilde.clone();
        Self::set_columns(&mut s.theta_tilde, tilde_cols);

        let d1 = &s.theta - &s.theta_tilde;
        let d2 = &s.theta_tilde - &zq;
        s.u += &d1;
        s.u_tilde += &d2;
        s.iteration += 1;

        let (n, k) = s.theta.shape();
        let scale_norm = s.theta.norm().max(s.theta_tilde.norm()).max(zq.norm());
        Ok(StepResiduals {
            r1: d1.norm(),
            r2: d2.norm(),
            dual: (&s.theta_tilde - old_tilde).norm() / rho,
            eps: ((n * k) as f64).sqrt() * self.config.abs_tol + self.config.rel_tol * scale_norm,
        })
    }

    /// Runs until both primal residuals are within tolerance or `max_iter`.
    pub fn run(&mut self) -> Result<FitDiagnostics> {
        let mut records = Vec::new();
        let mut converged = false;
        while self.state.iteration < self.config.max_iter {
            let res = self.step()?;
            let objective = eigen_objective(self.losses, self.reg, &self.state.z, self.basis)?;
            records.push(IterationRecord {
                iteration: self.state.iteration,
                r1: res.r1,
                r2: res.r2,
                dual: res.dual,
                objective,
            });
            if res.r1 <= res.eps && res.r2 <= res.eps {
                converged = true;
                break;
            }
        }
        Ok(FitDiagnostics {
            iterations: self.state.iteration,
            converged,
            records,
        })
    }
}
