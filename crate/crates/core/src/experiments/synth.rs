use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::dataset::{Dataset, Record, Schema};
use crate::error::{Error, Result};
use crate::graphs::{bottom_eigenbasis, WeightedGraph};
use crate::proximal::{predict_distribution, sigmoid, BaseKind};

/// Synthetic data together with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub data: Dataset,
    /// `theta* = Z* Q~^T`, one column per node.
    pub theta: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl SynthOutput {
    /// `node,theta1,...,thetan` with one row per node.
    pub fn ground_truth_csv(&self) -> String {
        let mut out = String::from("node");
        for i in 1..=self.theta.nrows() {
            out.push_str(&format!(",theta{i}"));
        }
        out.push('\n');
        for (k, col) in self.theta.column_iter().enumerate() {
            out.push_str(&(k + 1).to_string());
            for v in col.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Data whose true parameters are combinations of the bottom `basis_m`
/// eigenvectors of `graph`. `Z*` has i.i.d. normal entries with variance
/// `K / basis_m`, so entries of `theta*` have unit variance on average.
/// Each node receives a Poisson(`records_per_node`) number of records.
pub fn synth_smooth(
    graph: &WeightedGraph,
    basis_m: usize,
    n: usize,
    records_per_node: f64,
    kind: BaseKind,
    seed: u64,
) -> Result<SynthOutput> {
    let k = graph.num_vertices();
    if basis_m == 0 || basis_m > k {
        return Err(Error::invalid(format!("basis_m = {basis_m} outside 1..={k}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(records_per_node >= 0.0 && records_per_node.is_finite()) {
        return Err(Error::invalid(format!(
            "records_per_node must be nonnegative, got {records_per_node}"
        )));
    }
    let basis = bottom_eigenbasis(graph, basis_m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (k as f64 / basis_m as f64).sqrt();
    let z = DMatrix::from_fn(n, basis_m, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let theta = &z * basis.q_tilde.transpose();

    let poisson = if records_per_node > 0.0 {
        Some(Poisson::new(records_per_node).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut records = Vec::new();
    for node in 0..k {
        let count = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        let col: DVector<f64> = theta.column(node).into_owned();
        match kind {
            BaseKind::Logistic => {
                for _ in 0..count {
                    let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let y = rng.random_bool(sigmoid(col.dot(&x)));
                    records.push(Record {
                        z: node + 1,
                        x: Some(x),
                        y: y as usize,
                    });
                }
            }
            BaseKind::DiscreteDistribution => {
                let dist = WeightedIndex::new(predict_distribution(&col).iter().copied())
                    .map_err(|e| Error::invalid(e.to_string()))?;
                for _ in 0..count {
                    records.push(Record {
                        z: node + 1,
                        x: None,
                        y: dist.sample(&mut rng) + 1,
                    });
                }
            }
        }
    }
    let schema = match kind {
        BaseKind::Logistic => Schema::Logistic { n },
        BaseKind::DiscreteDistribution => Schema::Discrete { n },
    };
    let mut data = Dataset::new(schema, k, records)?;
    data.provenance = format!(
        "synth_smooth(graph={graph}, basis_m={basis_m}, n={n}, records_per_node={records_per_node}, seed={seed})"
    );
    Ok(SynthOutput { data, theta, z })
}
