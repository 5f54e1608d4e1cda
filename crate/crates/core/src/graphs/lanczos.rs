//! Lanczos iteration with full reorthogonalization for the smallest
//! eigenpairs of a symmetric matrix.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spectrum::{dense_sorted, fix_sign};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Residual tolerance, relative to `max(1, ||A||_inf)`.
    pub tol: f64,
    /// Maximum Krylov dimension (capped at the matrix size).
    pub max_iter: usize,
    /// Seed of the starting vector.
    pub seed: u64,
}

impl LanczosOptions {
    /// Defaults: tolerance `1e-8`, at most `10 m` iterations.
    pub fn for_m(m: usize) -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10 * m,
            seed: 0x5eed,
        }
    }
}

fn orthogonalize(w: &mut DVector<f64>, locked: &[DVector<f64>], basis: &[DVector<f64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for v in locked.iter().chain(basis) {
            let c = v.dot(w);
            w.axpy(-c, v, 1.0);
        }
    }
}

fn random_unit(
    rng: &mut ChaCha8Rng,
    k: usize,
    locked: &[DVector<f64>],
    basis: &[DVector<f64>],
) -> Option<DVector<f64>> {
    for _ in 0..4 {
        let mut v = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        orthogonalize(&mut v, locked, basis);
        let n = v.norm();
        if n > 1e-8 {
            return Some(v / n);
        }
    }
    None
}

/// Bottom `m` eigenpairs of the symmetric matrix `a`, ascending.
///
/// A single Krylov sequence sees one vector per eigenspace, so after each
/// converged pass the iteration is rerun in the orthogonal complement of the
/// pairs found so far. Pairs below the current `m`-th value are merged in and
/// the check repeats until the complement holds nothing smaller.
pub fn lanczos_bottom(a: &DMatrix<f64>, m: usize, opts: &LanczosOptions) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = a.nrows();
    if m == 0 || m > k {
        return Err(Error::invalid(format!("m must lie in [1, {k}], got {m}")));
    }
    let norm = a
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1.0);
    let threshold = opts.tol * norm;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut pairs = run(a, m, opts, norm, &[], &mut rng)?;
    while pairs.len() < k {
        let locked: Vec<DVector<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
        let top = pairs[m - 1].0;
        let extra = run(a, m.min(k - pairs.len()), opts, norm, &locked, &mut rng)?;
        if extra.iter().all(|p| p.0 >= top - threshold) {
            break;
        }
        pairs.extend(extra);
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        pairs.truncate(m);
    }
    let values = DVector::from_fn(m, |i, _| pairs[i].0);
    let vectors = DMatrix::from_columns(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
    Ok((values, vectors))
}

/// One Lanczos pass restricted to the orthogonal complement of `locked`.
///
/// Ritz pairs come from the explicit projection `V^T A V`: the locked vectors
/// are only approximate eigenvectors, so projecting them out spoils the
/// three-term recurrence.
fn run(
    a: &DMatrix<f64>,
    m: usize,
    opts: &LanczosOptions,
    norm: f64,
    locked: &[DVector<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, DVector<f64>)>> {
    let k = a.nrows();
    let free = k - locked.len();
    let max_iter = opts.max_iter.clamp(m, free);
    let threshold = opts.tol * norm;

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_iter);
    let mut images: Vec<DVector<f64>> = Vec::with_capacity(max_iter);
    let mut h = DMatrix::zeros(0, 0);
    match random_unit(rng, k, locked, &[]) {
        Some(v) => basis.push(v),
        None => {
            return Err(Error::NumericalFailure {
                context: "Lanczos start vector".into(),
                residual: 0.0,
            })
        }
    }

    let mut worst = f64::INFINITY;
    loop {
        let j = basis.len() - 1;
        let mut w = a * &basis[j];
        h = h.resize(j + 1, j + 1, 0.0);
        for (i, v) in basis.iter().enumerate() {
            let c = v.dot(&w);
            h[(i, j)] = c;
            h[(j, i)] = c;
        }
        images.push(w.clone());
        orthogonalize(&mut w, locked, &basis);
        let beta = w.norm();

        let dim = basis.len();
        if dim >= m {
            let (theta, s) = dense_sorted(&h);
            let estimate = (0..m).map(|i| (beta * s[(dim - 1, i)]).abs()).fold(0.0, f64::max);
            worst = estimate;
            if estimate <= threshold || dim == free {
                match ritz_pairs(&basis, &images, &theta, &s, m, threshold) {
                    Ok(pairs) => return Ok(pairs),
                    Err(r) => worst = r,
                }
            }
        }
        if dim >= max_iter || dim == free {
            break;
        }
        if beta > 1e-10 * norm {
            basis.push(w / beta);
        } else {
            match random_unit(rng, k, locked, &basis) {
                Some(v) => basis.push(v),
                None => break,
            }
        }
    }
    Err(Error::NumericalFailure {
        context: format!("Lanczos (m = {m}, {} iterations)", basis.len()),
        residual: worst,
    })
}

/// Bottom `m` Ritz pairs, or the worst true residual if any exceeds `threshold`.
fn ritz_pairs(
    basis: &[DVector<f64>],
    images: &[DVector<f64>],
    theta: &DVector<f64>,
    s: &DMatrix<f64>,
    m: usize,
    threshold: f64,
) -> std::result::Result<Vec<(f64, DVector<f64>)>, f64> {
    let k = basis[0].len();
    let mut pairs = Vec::with_capacity(m);
    let mut worst: f64 = 0.0;
    for i in 0..m {
        let mut y = DVector::zeros(k);
        let mut ay = DVector::zeros(k);
        for j in 0..basis.len() {
            y.axpy(s[(j, i)], &basis[j], 1.0);
            ay.axpy(s[(j, i)], &images[j], 1.0);
        }
        let n = y.norm();
        y /= n;
        ay /= n;
        worst = worst.max((ay - &y * theta[i]).norm());
        fix_sign(&mut y);
        pairs.push((theta[i], y));
    }
    if worst <= threshold {
        Ok(pairs)
    } else {
        Err(worst)
    }
}
