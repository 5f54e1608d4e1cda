//! Fitting stratified and eigen-stratified models.

mod admm;
mod baselines;

use std::fmt::Write as _;

use nalgebra::DMatrix;

pub use admm::{z_update, Admm, AdmmState, StepResiduals};
pub use baselines::{fit_common, fit_separate};

use crate::error::{Error, Result};
use crate::graphs::{bottom_eigenbasis, dirichlet_energy, EigenBasis, WeightedGraph};
use crate::model::StratParams;
use crate::proximal::{LocalLossSpec, LocalRegularizerSpec};

/// Number of bottom eigenvectors to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenCount {
    /// `m = K`, the standard Laplacian-regularized model.
    #[default]
    All,
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaTildeUpdate {
    /// Exact block minimizer of the augmented Lagrangian over `theta~`.
    #[default]
    Exact,
    /// `prox_{rho r}(Z Q~^T - u~)`, dropping the `theta + u` term.
    PaperLiteral,
}

/// How the common model counts the local regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CommonRegularization {
    /// `sum_k l_k(theta) + K r(theta)`: the stratified objective restricted
    /// to equal columns.
    #[default]
    PerNode,
    /// `sum_k l_k(theta) + r(theta)`: a single base model on pooled data.
    Once,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub rho: f64,
    pub max_iter: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub m: EigenCount,
    pub theta_tilde_update: ThetaTildeUpdate,
    /// Reserved for randomized initialization; the iteration starts at zero.
    pub seed: u64,
    /// Worker threads for the per-node steps; `None` uses the global pool.
    pub threads: Option<usize>,
    pub common_regularization: CommonRegularization,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 1000,
            abs_tol: 1e-6,
            rel_tol: 1e-4,
            m: EigenCount::All,
            theta_tilde_update: ThetaTildeUpdate::Exact,
            seed: 0,
            threads: None,
            common_regularization: CommonRegularization::PerNode,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rho", self.rho)?;
        positive("abs_tol", self.abs_tol)?;
        positive("rel_tol", self.rel_tol)?;
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be positive"));
        }
        Ok(())
    }

    /// Resolves `m` against a graph with `k` vertices.
    pub fn resolve_m(&self, k: usize) -> Result<usize> {
        match self.m {
            EigenCount::All => Ok(k),
            EigenCount::Count(m) if (1..=k).contains(&m) => Ok(m),
            EigenCount::Count(m) => Err(Error::invalid(format!("m = {m} outside 1..={k}"))),
        }
    }

    pub(crate) fn run_in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(f()),
            Some(t) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| Error::invalid(format!("cannot start {t} threads: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub r1: f64,
    pub r2: f64,
    pub dual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
}

impl FitDiagnostics {
    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,r1,r2,dual_residual,objective\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.iteration, r.r1, r.r2, r.dual, r.objective);
        }
        out
    }
}

/// Which model family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Eigen-stratified with `config.m`.
    Eigen,
    Separate,
    Common,
}

/// Model and, for eigen-stratified fits, the iteration log.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub params: StratParams,
    pub diagnostics: Option<FitDiagnostics>,
}

impl FitOutcome {
    pub fn converged(&self) -> bool {
        self.diagnostics.as_ref().is_none_or(|d| d.converged)
    }

    pub fn iterations(&self) -> usize {
        self.diagnostics.as_ref().map_or(0, |d| d.iterations)
    }
}

pub(crate) fn node_error(k: usize, e: Error) -> Error {
    match e {
        Error::NumericalFailure { context, residual } => Error::NumericalFailure {
            context: format!("node {}: {context}", k + 1),
            residual,
        },
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("node {}: {m}", k + 1)),
        other => other,
    }
}

/// Checks that all losses share a kind and dimension; returns `n`.
pub(crate) fn check_losses(losses: &[LocalLossSpec]) -> Result<usize> {
    let first = losses.first().ok_or_else(|| Error::invalid("no losses given"))?;
    let (kind, n) = (first.kind(), first.dim());
    for (k, l) in losses.iter().enumerate() {
        l.validate().map_err(|e| node_error(k, e))?;
        if l.kind() != kind || l.dim() != n {
            return Err(Error::invalid(format!(
                "node {}: loss is {:?} with n = {}, expected {kind:?} with n = {n}",
                k + 1,
                l.kind(),
                l.dim()
            )));
        }
    }
    Ok(n)
}

fn local_terms(losses: &[LocalLossSpec], reg: &LocalRegularizerSpec, theta: &DMatrix<f64>) -> Result<f64> {
    if theta.ncols() != losses.len() {
        return Err(Error::invalid(format!(
            "theta has {} columns for {} losses",
            theta.ncols(),
            losses.len()
        )));
    }
    let mut total = 0.0;
    for (k, l) in losses.iter().enumerate() {
        let col = theta.column(k).into_owned();
        total += l.eval(&col).map_err(|e| node_error(k, e))? + reg.eval(&col);
    }
    Ok(total)
}

/// `sum_k (l_k(theta_k) + r(theta_k)) + (1/2) tr(theta L theta^T)`.
pub fn stratified_objective(
    losses: &[LocalLossSpec],
    reg: &LocalRegularizerSpec,
    theta: &DMatrix<f64>,
    graph: &WeightedGraph,
) -> Result<f64> {
    Ok(local_terms(losses, reg, theta)? + dirichlet_energy(theta, graph)?)
}

/// The stratified objective at `theta = Z Q~^T`, with the Laplacian term
/// written as `(1/2)||Z Lambda_m^{1/2}||^2`.
pub fn eigen_objective(
    losses: &[LocalLossSpec],
    reg: &LocalRegularizerSpec,
    z: &DMatrix<f64>,
    basis: &EigenBasis,
) -> Result<f64> {
    let theta = z * basis.q_tilde.transpose();
    let energy: f64 = (0..basis.m())
        .map(|j| basis.lambda_m[j] * z.column(j).norm_squared())
        .sum();
    Ok(local_terms(losses, reg, &theta)? + 0.5 * energy)
}

/// Eigen-stratified fit with a precomputed basis.
pub fn fit_eigen_stratified_with_basis(
    losses: &[LocalLossSpec],
    reg: &LocalRegularizerSpec,
    basis: &EigenBasis,
    config: &FitConfig,
) -> Result<(StratParams, FitDiagnostics)> {
    let mut admm = Admm::new(losses, reg, basis, config)?;
    let diagnostics = config.run_in_pool(|| admm.run())??;
    let mut params = StratParams::factorized(admm.state.z, basis.clone(), losses[0].kind())?;
    let meta = &mut params.metadata;
    meta.set("gamma1", reg.gamma1);
    meta.set("gamma2", reg.gamma2);
    meta.set("m", basis.m() as f64);
    meta.set("rho", config.rho);
    meta.set("iterations", diagnostics.iterations as f64);
    meta.set("converged", if diagnostics.converged { 1.0 } else { 0.0 });
    Ok((params, diagnostics))
}

/// Fits `theta = Z Q~^T` with `Q~` the bottom `config.m` eigenvectors of the
/// graph Laplacian. Non-convergence is reported in the diagnostics, not as
/// an error.
pub fn fit_eigen_stratified(
    losses: &[LocalLossSpec],
    reg: &LocalRegularizerSpec,
    graph: &WeightedGraph,
    config: &FitConfig,
) -> Result<(StratParams, FitDiagnostics)> {
    config.validate()?;
    let k = graph.num_vertices();
    if losses.len() != k {
        return Err(Error::invalid(format!(
            "{} losses for a graph with {k} vertices",
            losses.len()
        )));
    }
    let basis = bottom_eigenbasis(graph, config.resolve_m(k)?)?;
    let (mut params, diagnostics) = fit_eigen_stratified_with_basis(losses, reg, &basis, config)?;
    params.metadata.graph = graph.spec_string().unwrap_or_default();
    Ok((params, diagnostics))
}

/// Dispatches on `mode`.
pub fn fit(
    mode: FitMode,
    losses: &[LocalLossSpec],
    reg: &LocalRegularizerSpec,
    graph: &WeightedGraph,
    config: &FitConfig,
) -> Result<FitOutcome> {
    let k = graph.num_vertices();
    let (mut params, diagnostics) = match mode {
        FitMode::Eigen => {
            let (p, d) = fit_eigen_stratified(losses, reg, graph, config)?;
            (p, Some(d))
        }
        FitMode::Separate => (fit_separate(losses, reg, k, config)?, None),
        FitMode::Common => (fit_common(losses, reg, k, config)?, None),
    };
    params.metadata.graph = graph.spec_string().unwrap_or_default();
    Ok(FitOutcome { params, diagnostics })
}
