//! Regularization graphs, their Laplacians and spectra.

mod graph;
mod lanczos;
mod parse;
mod spectrum;

pub use graph::{dirichlet_energy, dirichlet_energy_quadratic, Edge, LaplacianMatrix, StructureTag, WeightedGraph};
pub use lanczos::{lanczos_bottom, LanczosOptions};
pub use parse::parse_graph;
pub use spectrum::{
    bottom_eigenbasis, bottom_eigenbasis_with, dense_sorted, has_analytic_spectrum, spectrum, Backend, EigenBasis,
    Spectrum, DENSE_LIMIT,
};
