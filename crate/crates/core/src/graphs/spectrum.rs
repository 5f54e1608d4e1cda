use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::graph::{StructureTag, WeightedGraph};
use super::lanczos::{lanczos_bottom, LanczosOptions};
use crate::error::{Error, Result};

/// Graphs up to this many vertices use the dense solver under [`Backend::Auto`].
pub const DENSE_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Analytic when the structure tag allows it, dense up to
    /// [`DENSE_LIMIT`] vertices, Lanczos above.
    #[default]
    Auto,
    Analytic,
    Dense,
    Lanczos,
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// The bottom `m` eigenpairs of a Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub q_tilde: DMatrix<f64>,
    pub lambda_m: DVector<f64>,
}

impl EigenBasis {
    pub fn new(q_tilde: DMatrix<f64>, lambda_m: DVector<f64>) -> Result<Self> {
        if q_tilde.ncols() != lambda_m.len() || q_tilde.ncols() == 0 || q_tilde.ncols() > q_tilde.nrows() {
            return Err(Error::invalid(format!(
                "eigen-basis shape mismatch: {}x{} vectors, {} eigenvalues",
                q_tilde.nrows(),
                q_tilde.ncols(),
                lambda_m.len()
            )));
        }
        Ok(Self { q_tilde, lambda_m })
    }

    pub fn m(&self) -> usize {
        self.q_tilde.ncols()
    }

    pub fn num_vertices(&self) -> usize {
        self.q_tilde.nrows()
    }
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// First `m` eigenpairs.
    pub fn bottom(&self, m: usize) -> Result<EigenBasis> {
        if m == 0 || m > self.len() {
            return Err(Error::invalid(format!("m must lie in [1, {}], got {m}", self.len())));
        }
        EigenBasis::new(
            self.eigenvectors.columns(0, m).into_owned(),
            self.eigenvalues.rows(0, m).into_owned(),
        )
    }

    /// Index ranges of eigenvalues that agree within `tol` (relative to the
    /// largest magnitude, absolute below 1).
    pub fn eigenspace_groups(&self, tol: f64) -> Vec<Range<usize>> {
        let scale = self.eigenvalues.amax().max(1.0);
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.eigenvalues[i] - self.eigenvalues[i - 1] > tol * scale {
                groups.push(start..i);
                start = i;
            }
        }
        groups
    }

    /// Orthogonal projector onto the span of the given eigenvector columns.
    pub fn projector(&self, cols: Range<usize>) -> DMatrix<f64> {
        let q = self.eigenvectors.columns(cols.start, cols.len());
        q * q.transpose()
    }

    /// CSV with one row per eigenpair: the eigenvalue, then the eigenvector entries.
    pub fn to_csv(&self) -> String {
        basis_csv(&self.eigenvectors, &self.eigenvalues)
    }
}

pub(crate) fn basis_csv(vectors: &DMatrix<f64>, values: &DVector<f64>) -> String {
    let mut out = String::new();
    out.push_str("eigenvalue");
    for v in 0..vectors.nrows() {
        out.push_str(&format!(",q{v}"));
    }
    out.push('\n');
    for (c, lambda) in values.iter().enumerate() {
        out.push_str(&lambda.to_string());
        for x in vectors.column(c).iter() {
            out.push(',');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

impl EigenBasis {
    pub fn to_csv(&self) -> String {
        basis_csv(&self.q_tilde, &self.lambda_m)
    }
}

/// Whether closed-form eigenpairs exist for this graph's construction.
pub fn has_analytic_spectrum(g: &WeightedGraph) -> bool {
    match g.structure() {
        StructureTag::Custom => false,
        StructureTag::Scaled { inner, .. } => has_analytic_spectrum(inner),
        StructureTag::Product { left, right } => has_analytic_spectrum(left) && has_analytic_spectrum(right),
        _ => true,
    }
}

fn resolve(g: &WeightedGraph, backend: Backend) -> Backend {
    match backend {
        Backend::Auto if has_analytic_spectrum(g) => Backend::Analytic,
        Backend::Auto if g.num_vertices() <= DENSE_LIMIT => Backend::Dense,
        Backend::Auto => Backend::Lanczos,
        b => b,
    }
}

/// Full eigen-decomposition of the graph Laplacian.
pub fn spectrum(g: &WeightedGraph, backend: Backend) -> Result<Spectrum> {
    let basis = bottom_eigenbasis_with(g, g.num_vertices(), backend)?;
    Ok(Spectrum {
        eigenvalues: basis.lambda_m,
        eigenvectors: basis.q_tilde,
    })
}

/// Bottom `m` eigenpairs with automatic backend selection.
pub fn bottom_eigenbasis(g: &WeightedGraph, m: usize) -> Result<EigenBasis> {
    bottom_eigenbasis_with(g, m, Backend::Auto)
}

pub fn bottom_eigenbasis_with(g: &WeightedGraph, m: usize, backend: Backend) -> Result<EigenBasis> {
    let k = g.num_vertices();
    if m == 0 || m > k {
        return Err(Error::invalid(format!("m must lie in [1, {k}], got {m}")));
    }
    match resolve(g, backend) {
        Backend::Analytic => {
            if !has_analytic_spectrum(g) {
                return Err(Error::UnsupportedStructure(format!(
                    "graph {g} has no closed-form spectrum"
                )));
            }
            let (values, vectors) = analytic_bottom(g, m);
            EigenBasis::new(vectors, values)
        }
        Backend::Dense => {
            let (values, vectors) = dense_sorted(g.laplacian().matrix());
            EigenBasis::new(vectors.columns(0, m).into_owned(), values.rows(0, m).into_owned())
        }
        Backend::Lanczos => {
            let (values, vectors) = lanczos_bottom(g.laplacian().matrix(), m, &LanczosOptions::for_m(m))?;
            EigenBasis::new(vectors, values)
        }
        Backend::Auto => unreachable!("resolved above"),
    }
}

/// Dense symmetric eigen-decomposition with eigenvalues ascending. Ties keep
/// the solver's column order; each eigenvector is signed so that its
/// largest-magnitude entry is positive.
pub fn dense_sorted(matrix: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(matrix.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(matrix.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

pub(crate) fn fix_sign(col: &mut DVector<f64>) {
    let mut best = 0;
    for (i, x) in col.iter().enumerate() {
        if x.abs() > col[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.neg_mut();
    }
}

type Pairs = Vec<(f64, DVector<f64>)>;

fn normalized(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    v / n
}

fn constant(k: usize) -> DVector<f64> {
    DVector::from_element(k, 1.0 / (k as f64).sqrt())
}

/// Orthonormal basis of `{x : support in idx, sum x = 0}`; vector `j` is
/// `(1, ..., 1, -j, 0, ...)` over the first `j + 1` listed indices.
fn helmert(k: usize, idx: Range<usize>) -> Vec<DVector<f64>> {
    let idx: Vec<usize> = idx.collect();
    (1..idx.len())
        .map(|j| {
            let mut v = DVector::zeros(k);
            for &t in &idx[..j] {
                v[t] = 1.0;
            }
            v[idx[j]] = -(j as f64);
            normalized(v)
        })
        .collect()
}

/// Full analytic eigenpairs of a leaf family with unit weights, ascending.
fn family_unit_pairs(tag: &StructureTag, k: usize) -> Pairs {
    let kf = k as f64;
    let mut pairs: Pairs = Vec::with_capacity(k);
    match tag {
        StructureTag::Path => {
            for freq in 0..k {
                let f = freq as f64;
                let v = DVector::from_fn(k, |t, _| (PI * f * (t as f64 + 0.5) / kf).cos());
                pairs.push((2.0 - 2.0 * (PI * f / kf).cos(), normalized(v)));
            }
        }
        StructureTag::Cycle => {
            pairs.push((0.0, constant(k)));
            for freq in 1..=k / 2 {
                let f = freq as f64;
                let lambda = 2.0 - 2.0 * (2.0 * PI * f / kf).cos();
                let c = DVector::from_fn(k, |t, _| (2.0 * PI * f * t as f64 / kf).cos());
                pairs.push((lambda, normalized(c)));
                if 2 * freq != k {
                    let s = DVector::from_fn(k, |t, _| (2.0 * PI * f * t as f64 / kf).sin());
                    pairs.push((lambda, normalized(s)));
                }
            }
        }
        StructureTag::Star => {
            pairs.push((0.0, constant(k)));
            pairs.extend(helmert(k, 1..k).into_iter().map(|v| (1.0, v)));
            pairs.push((kf, hub_vector(k)));
        }
        StructureTag::Wheel => {
            // Ring modes vanish on the hub and are cycle modes on the rim.
            let ring = k - 1;
            let rf = ring as f64;
            pairs.push((0.0, constant(k)));
            for freq in 1..=ring / 2 {
                let f = freq as f64;
                let lambda = 3.0 - 2.0 * (2.0 * PI * f / rf).cos();
                let c = DVector::from_fn(k, |t, _| {
                    if t == 0 {
                        0.0
                    } else {
                        (2.0 * PI * f * (t - 1) as f64 / rf).cos()
                    }
                });
                pairs.push((lambda, normalized(c)));
                if 2 * freq != ring {
                    let s = DVector::from_fn(k, |t, _| {
                        if t == 0 {
                            0.0
                        } else {
                            (2.0 * PI * f * (t - 1) as f64 / rf).sin()
                        }
                    });
                    pairs.push((lambda, normalized(s)));
                }
            }
            pairs.push((kf, hub_vector(k)));
        }
        StructureTag::Complete => {
            pairs.push((0.0, constant(k)));
            pairs.extend(helmert(k, 0..k).into_iter().map(|v| (kf, v)));
        }
        StructureTag::CompleteBipartite { alpha, beta } => {
            let (a, b) = (*alpha, *beta);
            pairs.push((0.0, constant(k)));
            // Vertices on the larger side have degree alpha.
            pairs.extend(helmert(k, a..k).into_iter().map(|v| (a as f64, v)));
            pairs.extend(helmert(k, 0..a).into_iter().map(|v| (b as f64, v)));
            let v = DVector::from_fn(k, |t, _| if t < a { -(b as f64) } else { a as f64 });
            pairs.push((kf, normalized(v)));
        }
        StructureTag::Scaled { .. } | StructureTag::Product { .. } | StructureTag::Custom => {
            unreachable!("not a leaf family")
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs
}

fn hub_vector(k: usize) -> DVector<f64> {
    let kf = k as f64;
    let mut v = DVector::from_element(k, -1.0);
    v[0] = kf - 1.0;
    v / (kf * (kf - 1.0)).sqrt()
}

/// Eigenvalues of an analytic graph in ascending order with matching columns.
struct AnalyticSpectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

fn analytic_full(g: &WeightedGraph) -> AnalyticSpectrum {
    let k = g.num_vertices();
    match g.structure() {
        StructureTag::Scaled { alpha, inner } => {
            let mut s = analytic_full(inner);
            s.values.iter_mut().for_each(|v| *v *= alpha);
            s
        }
        StructureTag::Product { .. } => {
            let (values, vectors) = analytic_bottom(g, k);
            AnalyticSpectrum {
                values: values.iter().copied().collect(),
                vectors,
            }
        }
        tag => {
            let w = g.base_weight();
            let pairs = family_unit_pairs(tag, k);
            let mut vectors = DMatrix::zeros(k, k);
            let mut values = Vec::with_capacity(k);
            for (c, (lambda, v)) in pairs.into_iter().enumerate() {
                values.push(lambda * w);
                vectors.set_column(c, &v);
            }
            AnalyticSpectrum { values, vectors }
        }
    }
}

/// Bottom `m` analytic eigenpairs. Products sort the pairwise sums by
/// `(eigenvalue, left index, right index)` and only materialize the selected
/// Kronecker-product vectors.
fn analytic_bottom(g: &WeightedGraph, m: usize) -> (DVector<f64>, DMatrix<f64>) {
    match g.structure() {
        StructureTag::Product { left, right } => {
            let a = analytic_full(left);
            let b = analytic_full(right);
            let mut idx: Vec<(f64, usize, usize)> = Vec::with_capacity(a.values.len() * b.values.len());
            for (i, la) in a.values.iter().enumerate() {
                for (j, lb) in b.values.iter().enumerate() {
                    idx.push((la + lb, i, j));
                }
            }
            idx.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
            let k2 = b.values.len();
            let mut vectors = DMatrix::zeros(g.num_vertices(), m);
            let mut values = DVector::zeros(m);
            for (c, &(lambda, i, j)) in idx.iter().take(m).enumerate() {
                values[c] = lambda;
                let qa = a.vectors.column(i);
                let qb = b.vectors.column(j);
                for (p, &x) in qa.iter().enumerate() {
                    for (q, &y) in qb.iter().enumerate() {
                        vectors[(p * k2 + q, c)] = x * y;
                    }
                }
            }
            (values, vectors)
        }
        _ => {
            let s = analytic_full(g);
            (
                DVector::from_iterator(m, s.values.into_iter().take(m)),
                s.vectors.columns(0, m).into_owned(),
            )
        }
    }
}
