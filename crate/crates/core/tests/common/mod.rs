//! Shared fixtures and an independent gradient-descent oracle.
#![allow(dead_code)]

use eigenstrat::experiments::{Dataset, Record, Schema};
use eigenstrat::graphs::WeightedGraph;
use eigenstrat::proximal::{LocalLossSpec, LocalRegularizerSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// 200 logistic records on a 10-node path, n = 4, smooth true parameters.
pub fn logistic_problem(seed: u64) -> Dataset {
    let (k, n) = (10usize, 4usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let records = (0..200)
        .map(|i| {
            let z = i % k;
            let t = z as f64 / (k - 1) as f64;
            let theta = &a + &b * (2.0 * t - 1.0);
            let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let p = 1.0 / (1.0 + (-theta.dot(&x)).exp());
            Record {
                z: z + 1,
                x: Some(x),
                y: rng.random_bool(p) as usize,
            }
        })
        .collect();
    Dataset::new(Schema::Logistic { n }, k, records).unwrap()
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Loss value and gradient written out from the definitions.
pub fn loss_value_grad(spec: &LocalLossSpec, theta: &DVector<f64>) -> (f64, DVector<f64>) {
    match spec {
        LocalLossSpec::Logistic { features, labels } => {
            let mut f = 0.0;
            let mut g = DVector::zeros(theta.len());
            for (i, &label) in labels.iter().enumerate() {
                let x = features.row(i).transpose();
                let s = if label { 1.0 } else { -1.0 };
                let margin = s * x.dot(theta);
                f += softplus(-margin);
                g -= x * (s / (1.0 + margin.exp()));
            }
            (f, g)
        }
        LocalLossSpec::DiscreteDistribution { counts } => {
            let total: f64 = counts.iter().map(|&c| c as f64).sum();
            let mx = theta.max();
            let z: f64 = theta.iter().map(|t| (t - mx).exp()).sum();
            let lse = mx + z.ln();
            let f = total * lse - counts.iter().zip(theta.iter()).map(|(&c, t)| c as f64 * t).sum::<f64>();
            let g = DVector::from_fn(theta.len(), |i, _| total * (theta[i] - lse).exp() - counts[i] as f64);
            (f, g)
        }
    }
}

fn reg_value_grad(reg: &LocalRegularizerSpec, x: &DVector<f64>) -> (f64, DVector<f64>) {
    let n = x.len();
    let mut f = 0.0;
    let mut g = DVector::zeros(n);
    // The last coordinate is the intercept.
    let ridge_end = if reg.intercept_exempt { n.saturating_sub(1) } else { n };
    for i in 0..ridge_end {
        f += 0.5 * reg.gamma1 * x[i] * x[i];
        g[i] += reg.gamma1 * x[i];
    }
    for i in 0..n.saturating_sub(1) {
        let d = x[i + 1] - x[i];
        f += 0.5 * reg.gamma2 * d * d;
        g[i + 1] += reg.gamma2 * d;
        g[i] -= reg.gamma2 * d;
    }
    (f, g)
}

/// Objective and gradient of `sum_k l_k + r + (1/2) tr(theta L theta^T)`.
pub fn stratified_value_grad(
    losses: &[LocalLossSpec],
    reg: &LocalRegularizerSpec,
    lap: &DMatrix<f64>,
    theta: &DMatrix<f64>,
) -> (f64, DMatrix<f64>) {
    let lt = theta * lap;
    let mut f = 0.5 * theta.component_mul(&lt).sum();
    let mut g = lt;
    for (k, l) in losses.iter().enumerate() {
        let col = theta.column(k).into_owned();
        let (fl, gl) = loss_value_grad(l, &col);
        let (fr, gr) = reg_value_grad(reg, &col);
        f += fl + fr;
        let mut gc = g.column_mut(k);
        gc += gl + gr;
    }
    (f, g)
}

/// Upper bound on the curvature of `l + r` for one node.
fn curvature_bound(spec: &LocalLossSpec, reg: &LocalRegularizerSpec) -> f64 {
    let loss = match spec {
        LocalLossSpec::Logistic { features, .. } => 0.25 * features.norm_squared(),
        LocalLossSpec::DiscreteDistribution { counts } => counts.iter().sum::<u64>() as f64,
    };
    loss + reg.gamma1 + 4.0 * reg.gamma2
}

/// Minimizes the stratified objective over `theta = Z Q^T` by projected
/// gradient descent with step `1/L`, `L` a bound on the curvature, until the
/// projected gradient norm is at most `tol`. Returns the minimizer and the
/// optimal value.
pub fn oracle_fit(
    losses: &[LocalLossSpec],
    reg: &LocalRegularizerSpec,
    graph: &WeightedGraph,
    q: &DMatrix<f64>,
    tol: f64,
) -> (DMatrix<f64>, f64) {
    let lap = graph.laplacian().into_inner();
    let proj = q * q.transpose();
    let lap_bound = lap
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let local_bound = losses.iter().map(|l| curvature_bound(l, reg)).fold(0.0, f64::max);
    let step = 1.0 / (lap_bound + local_bound);
    let n = losses[0].dim();
    let mut theta = DMatrix::zeros(n, graph.num_vertices());
    for _ in 0..5_000_000 {
        let (f, g) = stratified_value_grad(losses, reg, &lap, &theta);
        let pg = &g * &proj;
        if pg.norm() <= tol {
            return (theta, f);
        }
        theta -= pg * step;
    }
    panic!("oracle did not reach gradient norm {tol}");
}

/// Random connected weighted graph on `k` vertices.
pub fn random_graph(rng: &mut ChaCha8Rng, k: usize) -> WeightedGraph {
    let mut edges = Vec::new();
    for v in 1..k {
        edges.push((rng.random_range(0..v), v, rng.random_range(0.1..3.0)));
    }
    for i in 0..k {
        for j in i + 1..k {
            if rng.random_bool(0.15) && !edges.iter().any(|&(a, b, _)| (a, b) == (i, j)) {
                edges.push((i, j, rng.random_range(0.1..3.0)));
            }
        }
    }
    WeightedGraph::from_edges(k, &edges).unwrap()
}
