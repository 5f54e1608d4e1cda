//! Eigen-stratified models.
//!
//! A stratified model keeps one parameter vector per value of a categorical
//! feature and ties neighbouring categories together with a graph Laplacian
//! penalty. An eigen-stratified model further restricts the parameter matrix
//! to `theta = Z * Q_m^T`, where `Q_m` holds the bottom `m` eigenvectors of
//! that Laplacian, so a fit stores only `m * (n + K)` numbers.
//!
//! Modules:
//!
//! - [`graphs`]: weighted regularization graphs, Laplacians, analytic and
//!   numerical spectra, Cartesian products.
//! - [`proximal`]: logistic and discrete-distribution losses and the local
//!   regularizer, exposed through evaluation and proximal operators.
//! - [`solver`]: the distributed ADMM fit plus the separate/common baselines.
//! - [`model`]: fitted parameters, ANLL scoring, storage accounting, model files.
//! - [`experiments`]: datasets, splitting, synthetic data, grid search.
//! - [`cli`]: the `eigenstrat` command-line front end.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod graphs;
pub mod model;
pub mod proximal;
pub mod solver;

pub use error::{Error, LoadError, Result};
