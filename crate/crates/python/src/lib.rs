//! Python bindings for `eigenstrat`.
//!
//! Matrices cross the boundary as lists of rows, vectors as lists of floats.

use eigenstrat::experiments::{load_csv, synth_smooth, Dataset as CoreDataset, ModelChoice, Schema, Split};
use eigenstrat::graphs::{bottom_eigenbasis, dirichlet_energy, parse_graph, spectrum, Backend, WeightedGraph};
use eigenstrat::model::{self, StratParams};
use eigenstrat::proximal::{self, BaseKind, LocalLossSpec, LocalRegularizerSpec};
use eigenstrat::solver::{EigenCount, FitConfig, ThetaTildeUpdate};
use eigenstrat::Error;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::NumericalFailure { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn base_kind(name: &str) -> PyResult<BaseKind> {
    match name {
        "logistic" => Ok(BaseKind::Logistic),
        "discrete" => Ok(BaseKind::DiscreteDistribution),
        _ => Err(PyValueError::new_err(format!(
            "kind must be \"logistic\" or \"discrete\", got {name:?}"
        ))),
    }
}

fn split_of(name: &str) -> PyResult<Split> {
    match name {
        "train" => Ok(Split::Train),
        "validation" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        _ => Err(PyValueError::new_err(format!("unknown split {name:?}"))),
    }
}

/// Weighted undirected graph built from a spec string such as
/// `"product(path(4,1),cycle(5,2))"`.
#[pyclass(frozen)]
struct Graph {
    inner: WeightedGraph,
}

#[pymethods]
impl Graph {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_graph(spec).map_err(to_py)?,
        })
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    fn laplacian(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.laplacian().into_inner())
    }

    /// All Laplacian eigenvalues, ascending.
    fn eigenvalues(&self) -> PyResult<Vec<f64>> {
        let s = spectrum(&self.inner, Backend::Auto).map_err(to_py)?;
        Ok(s.eigenvalues.iter().copied().collect())
    }

    /// `(lambda_m, q_tilde)` for the bottom `m` eigenpairs; `q_tilde` is K x m.
    fn bottom_eigenbasis(&self, m: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let b = bottom_eigenbasis(&self.inner, m).map_err(to_py)?;
        Ok((b.lambda_m.iter().copied().collect(), rows(&b.q_tilde)))
    }

    fn dirichlet_energy(&self, theta: Vec<Vec<f64>>) -> PyResult<f64> {
        dirichlet_energy(&matrix(&theta)?, &self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Graph({:?})", self.inner.to_string())
    }
}

/// Local loss for one node.
#[pyclass(frozen)]
struct Loss {
    inner: LocalLossSpec,
}

#[pymethods]
impl Loss {
    #[staticmethod]
    fn logistic(features: Vec<Vec<f64>>, labels: Vec<bool>) -> PyResult<Self> {
        let features = matrix(&features)?;
        let inner = LocalLossSpec::Logistic { features, labels };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn discrete(counts: Vec<u64>) -> PyResult<Self> {
        let inner = LocalLossSpec::DiscreteDistribution { counts };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn eval(&self, theta: Vec<f64>) -> PyResult<f64> {
        proximal::loss_eval(&self.inner, &DVector::from_vec(theta)).map_err(to_py)
    }

    fn prox(&self, v: Vec<f64>, rho: f64) -> PyResult<Vec<f64>> {
        let x = proximal::prox_loss(&self.inner, &DVector::from_vec(v), rho).map_err(to_py)?;
        Ok(x.iter().copied().collect())
    }
}

/// `prox_{rho r}(v)` for the sum-of-squares plus difference regularizer.
#[pyfunction]
#[pyo3(signature = (v, rho, gamma1, gamma2 = 0.0, intercept_exempt = false))]
fn prox_reg(v: Vec<f64>, rho: f64, gamma1: f64, gamma2: f64, intercept_exempt: bool) -> PyResult<Vec<f64>> {
    let reg = LocalRegularizerSpec {
        gamma1,
        gamma2,
        intercept_exempt,
    };
    let x = proximal::prox_reg(&reg, &DVector::from_vec(v), rho).map_err(to_py)?;
    Ok(x.iter().copied().collect())
}

/// Records with stratum, optional features and label, split into
/// train/validation/test.
#[pyclass]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load_csv(path: &str, kind: &str, n: usize, num_strata: usize) -> PyResult<Self> {
        let schema = match base_kind(kind)? {
            BaseKind::Logistic => Schema::Logistic { n },
            BaseKind::DiscreteDistribution => Schema::Discrete { n },
        };
        Ok(Self {
            inner: load_csv(path, schema, num_strata).map_err(to_py)?,
        })
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        self.inner.save_csv(path).map_err(to_py)
    }

    fn split(&mut self, train: f64, validation: f64, test: f64, seed: u64) -> PyResult<()> {
        self.inner.split((train, validation, test), seed).map_err(to_py)
    }

    fn count(&self, split: &str) -> PyResult<usize> {
        Ok(self.inner.count(split_of(split)?))
    }

    #[getter]
    fn num_strata(&self) -> usize {
        self.inner.num_strata
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Samples data whose true parameters lie in the span of the bottom
/// `basis_m` eigenvectors of `graph`. Returns `(dataset, theta)`.
#[pyfunction]
fn synth(
    graph: &Graph,
    basis_m: usize,
    n: usize,
    records_per_node: f64,
    kind: &str,
    seed: u64,
) -> PyResult<(Dataset, Vec<Vec<f64>>)> {
    let out = synth_smooth(&graph.inner, basis_m, n, records_per_node, base_kind(kind)?, seed).map_err(to_py)?;
    Ok((Dataset { inner: out.data }, rows(&out.theta)))
}

/// A fitted model.
#[pyclass(frozen)]
struct Model {
    inner: StratParams,
    converged: bool,
    iterations: usize,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = model::load(path).map_err(to_py)?;
        let converged = inner.metadata.get("converged").is_none_or(|v| v != 0.0);
        let iterations = inner.metadata.get("iterations").unwrap_or(0.0) as usize;
        Ok(Self {
            inner,
            converged,
            iterations,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        model::save(&self.inner, path).map_err(to_py)
    }

    /// The n x K parameter matrix.
    fn theta(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.materialize())
    }

    /// Average negative log-likelihood over `split`, or over all records.
    #[pyo3(signature = (data, split = None))]
    fn anll(&self, data: &Dataset, split: Option<&str>) -> PyResult<f64> {
        match split {
            Some(s) => self.inner.anll_split(&data.inner, split_of(s)?),
            None => model::anll(&self.inner, &data.inner),
        }
        .map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn m(&self) -> Option<usize> {
        self.inner.m()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Fits on the training split. `m` is an eigenvector count, `"all"`,
/// `"separate"` or `"common"`.
#[pyfunction]
#[pyo3(signature = (
    data, graph, gamma1, gamma2 = 0.0, m = "all".to_string(), intercept_exempt = false,
    rho = 1.0, max_iter = 1000, abs_tol = 1e-6, rel_tol = 1e-4, paper_literal = false, threads = None
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    data: &Dataset,
    graph: &Graph,
    gamma1: f64,
    gamma2: f64,
    m: String,
    intercept_exempt: bool,
    rho: f64,
    max_iter: usize,
    abs_tol: f64,
    rel_tol: f64,
    paper_literal: bool,
    threads: Option<usize>,
) -> PyResult<Model> {
    let choice: ModelChoice = m.parse().map_err(to_py)?;
    let reg = LocalRegularizerSpec {
        gamma1,
        gamma2,
        intercept_exempt,
    };
    let config = FitConfig {
        rho,
        max_iter,
        abs_tol,
        rel_tol,
        m: EigenCount::All,
        theta_tilde_update: if paper_literal {
            ThetaTildeUpdate::PaperLiteral
        } else {
            ThetaTildeUpdate::Exact
        },
        threads,
        ..FitConfig::default()
    };
    let out = py
        .detach(|| choice.fit(&data.inner, &reg, &graph.inner, &config))
        .map_err(to_py)?;
    Ok(Model {
        converged: out.converged(),
        iterations: out.iterations(),
        inner: out.params,
    })
}

#[pymodule]
fn pyeigenstrat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Loss>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(prox_reg, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    Ok(())
}
