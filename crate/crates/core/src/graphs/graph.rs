use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// How a graph was built. Enables closed-form spectra for the families
/// (and their scalings and products) that have them.
#[derive(Debug, Clone, PartialEq)]
pub enum StructureTag {
    Path,
    Cycle,
    Star,
    Wheel,
    Complete,
    CompleteBipartite {
        alpha: usize,
        beta: usize,
    },
    Scaled {
        alpha: f64,
        inner: Box<WeightedGraph>,
    },
    Product {
        left: Box<WeightedGraph>,
        right: Box<WeightedGraph>,
    },
    Custom,
}

/// A single undirected edge with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected graph on `K` vertices with nonnegative edge weights.
///
/// The edge list is the canonical representation; it is kept sorted by
/// `(i, j)` with at most one edge per unordered pair and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    num_vertices: usize,
    edges: Vec<Edge>,
    tag: StructureTag,
    /// Weight used by the family constructors (unused for scaled, product and custom graphs).
    base_weight: f64,
}

/// Dense symmetric Laplacian `L = diag(W 1) - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(DMatrix<f64>);

impl LaplacianMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

fn check_weight(w: f64) -> Result<()> {
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::invalid(format!(
            "edge weight must be finite and nonnegative, got {w}"
        )));
    }
    Ok(())
}

impl WeightedGraph {
    /// Builds an untagged graph from an arbitrary edge list. Edges may be given
    /// in either orientation; duplicates and self-loops are rejected.
    pub fn from_edges(num_vertices: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if num_vertices == 0 {
            return Err(Error::invalid("graph needs at least one vertex"));
        }
        let mut map = BTreeMap::new();
        for &(a, b, w) in edges {
            check_weight(w)?;
            if a >= num_vertices || b >= num_vertices {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for {num_vertices} vertices"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at vertex {a}")));
            }
            let key = (a.min(b), a.max(b));
            if map.insert(key, w).is_some() {
                return Err(Error::invalid(format!("duplicate edge ({}, {})", key.0, key.1)));
            }
        }
        let edges = map.into_iter().map(|((i, j), weight)| Edge { i, j, weight }).collect();
        Ok(Self {
            num_vertices,
            edges,
            tag: StructureTag::Custom,
            base_weight: 1.0,
        })
    }

    fn tagged(num_vertices: usize, edges: &[(usize, usize, f64)], tag: StructureTag, w: f64) -> Result<Self> {
        let mut g = Self::from_edges(num_vertices, edges)?;
        g.tag = tag;
        g.base_weight = w;
        Ok(g)
    }

    /// Chain `0 - 1 - ... - (K-1)`.
    pub fn path(k: usize, w: f64) -> Result<Self> {
        check_weight(w)?;
        if k == 0 {
            return Err(Error::invalid("path graph needs K >= 1"));
        }
        let edges: Vec<_> = (0..k - 1).map(|i| (i, i + 1, w)).collect();
        Self::tagged(k, &edges, StructureTag::Path, w)
    }

    /// Closed chain on `K >= 3` vertices.
    pub fn cycle(k: usize, w: f64) -> Result<Self> {
        check_weight(w)?;
        if k < 3 {
            return Err(Error::invalid(format!("cycle graph needs K >= 3, got {k}")));
        }
        let edges: Vec<_> = (0..k).map(|i| (i, (i + 1) % k, w)).collect();
        Self::tagged(k, &edges, StructureTag::Cycle, w)
    }

    /// Hub vertex 0 joined to leaves `1..K`.
    pub fn star(k: usize, w: f64) -> Result<Self> {
        check_weight(w)?;
        if k < 2 {
            return Err(Error::invalid(format!("star graph needs K >= 2, got {k}")));
        }
        let edges: Vec<_> = (1..k).map(|i| (0, i, w)).collect();
        Self::tagged(k, &edges, StructureTag::Star, w)
    }

    /// Hub vertex 0 joined to every vertex of the ring `1..K`.
    pub fn wheel(k: usize, w: f64) -> Result<Self> {
        check_weight(w)?;
        if k < 4 {
            return Err(Error::invalid(format!("wheel graph needs K >= 4, got {k}")));
        }
        let ring = k - 1;
        let mut edges: Vec<_> = (1..k).map(|i| (0, i, w)).collect();
        edges.extend((0..ring).map(|r| (1 + r, 1 + (r + 1) % ring, w)));
        Self::tagged(k, &edges, StructureTag::Wheel, w)
    }

    pub fn complete(k: usize, w: f64) -> Result<Self> {
        check_weight(w)?;
        if k < 2 {
            return Err(Error::invalid(format!("complete graph needs K >= 2, got {k}")));
        }
        let mut edges = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                edges.push((i, j, w));
            }
        }
        Self::tagged(k, &edges, StructureTag::Complete, w)
    }

    /// Complete bipartite graph; the sides are sorted so that `alpha <= beta`
    /// and vertices `0..alpha` form the smaller side.
    pub fn complete_bipartite(alpha: usize, beta: usize, w: f64) -> Result<Self> {
        check_weight(w)?;
        if alpha == 0 || beta == 0 {
            return Err(Error::invalid(format!(
                "complete bipartite graph needs both sides >= 1, got ({alpha}, {beta})"
            )));
        }
        let (alpha, beta) = (alpha.min(beta), alpha.max(beta));
        let mut edges = Vec::with_capacity(alpha * beta);
        for i in 0..alpha {
            for j in alpha..alpha + beta {
                edges.push((i, j, w));
            }
        }
        Self::tagged(alpha + beta, &edges, StructureTag::CompleteBipartite { alpha, beta }, w)
    }

    /// Multiplies every edge weight by `alpha`.
    pub fn scale_weights(&self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::invalid(format!(
                "scale factor must be finite and nonnegative, got {alpha}"
            )));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                weight: e.weight * alpha,
                ..*e
            })
            .collect();
        Ok(Self {
            num_vertices: self.num_vertices,
            edges,
            tag: StructureTag::Scaled {
                alpha,
                inner: Box::new(self.clone()),
            },
            base_weight: 1.0,
        })
    }

    /// Cartesian product; vertex `(a, b)` maps to `a * K_right + b`.
    pub fn cartesian_product(&self, other: &WeightedGraph) -> Self {
        let k2 = other.num_vertices;
        let mut edges = Vec::with_capacity(self.edges.len() * k2 + other.edges.len() * self.num_vertices);
        for e in &self.edges {
            for b in 0..k2 {
                edges.push(Edge {
                    i: e.i * k2 + b,
                    j: e.j * k2 + b,
                    weight: e.weight,
                });
            }
        }
        for a in 0..self.num_vertices {
            for e in &other.edges {
                edges.push(Edge {
                    i: a * k2 + e.i,
                    j: a * k2 + e.j,
                    weight: e.weight,
                });
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        Self {
            num_vertices: self.num_vertices * k2,
            edges,
            tag: StructureTag::Product {
                left: Box::new(self.clone()),
                right: Box::new(other.clone()),
            },
            base_weight: 1.0,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn structure(&self) -> &StructureTag {
        &self.tag
    }

    pub(crate) fn base_weight(&self) -> f64 {
        self.base_weight
    }

    /// Dense weight matrix `W`.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let k = self.num_vertices;
        let mut w = DMatrix::zeros(k, k);
        for e in &self.edges {
            w[(e.i, e.j)] = e.weight;
            w[(e.j, e.i)] = e.weight;
        }
        w
    }

    pub fn laplacian(&self) -> LaplacianMatrix {
        let k = self.num_vertices;
        let mut l = DMatrix::zeros(k, k);
        for e in &self.edges {
            l[(e.i, e.j)] -= e.weight;
            l[(e.j, e.i)] -= e.weight;
            l[(e.i, e.i)] += e.weight;
            l[(e.j, e.j)] += e.weight;
        }
        LaplacianMatrix(l)
    }

    /// Number of connected components, counting only edges with positive weight.
    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.num_vertices).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut count = self.num_vertices;
        for e in self.edges.iter().filter(|e| e.weight > 0.0) {
            let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
            if a != b {
                parent[a] = b;
                count -= 1;
            }
        }
        count
    }

    /// Graph-spec string accepted by [`crate::graphs::parse_graph`], or `None`
    /// for custom graphs.
    pub fn spec_string(&self) -> Option<String> {
        let k = self.num_vertices;
        let w = self.base_weight;
        Some(match &self.tag {
            StructureTag::Path => format!("path({k},{w})"),
            StructureTag::Cycle => format!("cycle({k},{w})"),
            StructureTag::Star => format!("star({k},{w})"),
            StructureTag::Wheel => format!("wheel({k},{w})"),
            StructureTag::Complete => format!("complete({k},{w})"),
            StructureTag::CompleteBipartite { alpha, beta } => format!("bipartite({alpha},{beta},{w})"),
            StructureTag::Scaled { alpha, inner } => format!("scale({alpha},{})", inner.spec_string()?),
            StructureTag::Product { left, right } => {
                format!("product({},{})", left.spec_string()?, right.spec_string()?)
            }
            StructureTag::Custom => return None,
        })
    }
}

impl fmt::Display for WeightedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.spec_string() {
            Some(s) => f.write_str(&s),
            None => write!(f, "custom({} vertices, {} edges)", self.num_vertices, self.edges.len()),
        }
    }
}

/// Laplacian penalty `(1/2) tr(theta L theta^T)` over the columns of `theta`
/// (one column per vertex), summed edge by edge as
/// `(1/2) sum_{edges} w_ij ||theta_i - theta_j||^2`.
pub fn dirichlet_energy(theta: &DMatrix<f64>, graph: &WeightedGraph) -> Result<f64> {
    if theta.ncols() != graph.num_vertices() {
        return Err(Error::invalid(format!(
            "theta has {} columns but the graph has {} vertices",
            theta.ncols(),
            graph.num_vertices()
        )));
    }
    let mut total = 0.0;
    for e in graph.edges() {
        let d = theta.column(e.i) - theta.column(e.j);
        total += e.weight * d.norm_squared();
    }
    Ok(0.5 * total)
}

/// Same penalty via the quadratic form `(1/2) tr(theta L theta^T)`.
pub fn dirichlet_energy_quadratic(theta: &DMatrix<f64>, laplacian: &LaplacianMatrix) -> Result<f64> {
    if theta.ncols() != laplacian.dim() {
        return Err(Error::invalid(format!(
            "theta has {} columns but the Laplacian is {}x{}",
            theta.ncols(),
            laplacian.dim(),
            laplacian.dim()
        )));
    }
    let tl = theta * laplacian.matrix();
    Ok(0.5 * tl.component_mul(theta).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_two_vertices() {
        let l = WeightedGraph::path(2, 3.0).unwrap().laplacian();
        assert_eq!(l.matrix(), &DMatrix::from_row_slice(2, 2, &[3.0, -3.0, -3.0, 3.0]));
    }

    #[test]
    fn size_errors() {
        assert!(WeightedGraph::path(0, 1.0).is_err());
        assert!(WeightedGraph::cycle(2, 1.0).is_err());
        assert!(WeightedGraph::cycle(1, 1.0).is_err());
        assert!(WeightedGraph::star(1, 1.0).is_err());
        assert!(WeightedGraph::wheel(3, 1.0).is_err());
        assert!(WeightedGraph::complete(1, 1.0).is_err());
        assert!(WeightedGraph::complete_bipartite(0, 3, 1.0).is_err());
        assert!(WeightedGraph::path(3, -1.0).is_err());
        assert!(WeightedGraph::from_edges(3, &[(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::from_edges(3, &[(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(WeightedGraph::from_edges(3, &[(0, 3, 1.0)]).is_err());
    }

    #[test]
    fn bipartite_sorts_sides() {
        let g = WeightedGraph::complete_bipartite(6, 3, 1.0).unwrap();
        assert_eq!(g.structure(), &StructureTag::CompleteBipartite { alpha: 3, beta: 6 });
        assert_eq!(g.num_vertices(), 9);
        assert_eq!(g.edges().len(), 18);
    }

    #[test]
    fn wheel_edges() {
        let g = WeightedGraph::wheel(5, 1.0).unwrap();
        // 4 spokes + 4 ring edges
        assert_eq!(g.edges().len(), 8);
        let l = g.laplacian();
        assert_eq!(l.matrix()[(0, 0)], 4.0);
        assert_eq!(l.matrix()[(1, 1)], 3.0);
    }

    #[test]
    fn rows_sum_to_zero() {
        let g = WeightedGraph::wheel(7, 2.5)
            .unwrap()
            .cartesian_product(&WeightedGraph::cycle(4, 0.3).unwrap());
        let l = g.laplacian();
        let max = l.matrix().amax();
        for row in l.matrix().row_iter() {
            assert!(row.sum().abs() <= 1e-12 * max);
        }
    }

    #[test]
    fn laplacian_matches_elementwise_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 6;
        let mut edges = Vec::new();
        let mut w = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i + 1..k {
                if rng.random_bool(0.6) {
                    let x: f64 = rng.random_range(0.0..3.0);
                    edges.push((i, j, x));
                    w[(i, j)] = x;
                    w[(j, i)] = x;
                }
            }
        }
        let l = WeightedGraph::from_edges(k, &edges).unwrap().laplacian();
        for i in 0..k {
            for j in 0..k {
                let expected = if i == j {
                    (0..k).map(|t| w[(i, t)]).sum()
                } else {
                    -w[(i, j)]
                };
                assert_eq!(l.matrix()[(i, j)], expected);
            }
        }
    }

    #[test]
    fn product_laplacian_is_kronecker_sum() {
        let g1 = WeightedGraph::path(3, 1.5).unwrap();
        let g2 = WeightedGraph::star(4, 0.7).unwrap();
        let l1 = g1.laplacian().into_inner();
        let l2 = g2.laplacian().into_inner();
        let expected = l1.kronecker(&DMatrix::identity(4, 4)) + DMatrix::identity(3, 3).kronecker(&l2);
        let got = g1.cartesian_product(&g2).laplacian().into_inner();
        assert!((got - expected).amax() <= 1e-12);
    }

    #[test]
    fn components() {
        assert_eq!(WeightedGraph::path(5, 1.0).unwrap().connected_components(), 1);
        assert_eq!(WeightedGraph::path(5, 0.0).unwrap().connected_components(), 5);
        let g = WeightedGraph::from_edges(5, &[(0, 1, 1.0), (3, 4, 2.0)]).unwrap();
        assert_eq!(g.connected_components(), 3);
    }

    #[test]
    fn energy_two_nodes() {
        let g = WeightedGraph::path(2, 1.0).unwrap();
        let theta = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 1.5, 0.0, 3.0]);
        // d = (-0.5, 2, 0), ||d||^2 = 4.25
        assert!((dirichlet_energy(&theta, &g).unwrap() - 2.125).abs() < 1e-14);
    }

    #[test]
    fn energy_of_constant_columns_is_zero() {
        let g = WeightedGraph::complete(5, 2.0).unwrap();
        let theta = DMatrix::from_fn(3, 5, |i, _| i as f64 - 1.0);
        assert_eq!(dirichlet_energy(&theta, &g).unwrap(), 0.0);
    }

    #[test]
    fn energy_pairwise_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g =
            WeightedGraph::from_edges(6, &[(0, 1, 0.5), (1, 2, 1.0), (2, 5, 2.0), (0, 4, 0.25), (3, 4, 1.5)]).unwrap();
        let theta = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-2.0..2.0));
        let a = dirichlet_energy(&theta, &g).unwrap();
        let b = dirichlet_energy_quadratic(&theta, &g.laplacian()).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs());
    }

    #[test]
    fn energy_dimension_mismatch() {
        let g = WeightedGraph::path(4, 1.0).unwrap();
        assert!(dirichlet_energy(&DMatrix::zeros(2, 3), &g).is_err());
    }

    #[test]
    fn spec_strings_round_trip() {
        let g = WeightedGraph::path(4, 1.0)
            .unwrap()
            .cartesian_product(&WeightedGraph::cycle(5, 2.0).unwrap().scale_weights(0.5).unwrap());
        let s = g.spec_string().unwrap();
        assert_eq!(s, "product(path(4,1),scale(0.5,cycle(5,2)))");
        let back = crate::graphs::parse_graph(&s).unwrap();
        assert_eq!(back, g);
    }
}
