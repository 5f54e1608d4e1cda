use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::experiments::{Dataset, Record, Split};
use crate::graphs::EigenBasis;
use crate::proximal::{log_sum_exp, softplus, BaseKind};

/// How the `n x K` parameter matrix is stored.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamStorage {
    Dense {
        theta: DMatrix<f64>,
    },
    /// `theta = z * basis.q_tilde^T`.
    Factorized {
        z: DMatrix<f64>,
        basis: EigenBasis,
    },
}

/// Free-form provenance kept alongside the parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metadata {
    /// Graph-spec string of the regularization graph (empty if unknown).
    pub graph: String,
    /// Named hyper-parameters and fit statistics, in insertion order.
    pub hyper: Vec<(String, f64)>,
}

impl Metadata {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.hyper.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn set(&mut self, key: &str, value: f64) {
        match self.hyper.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.hyper.push((key.to_string(), value)),
        }
    }
}

/// A fitted stratified model.
#[derive(Debug, Clone, PartialEq)]
pub struct StratParams {
    pub storage: ParamStorage,
    pub base_kind: BaseKind,
    pub metadata: Metadata,
}

/// Per-record negative log-likelihoods and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDataset {
    pub nll: Vec<f64>,
    pub anll: f64,
}

impl StratParams {
    pub fn dense(theta: DMatrix<f64>, base_kind: BaseKind) -> Self {
        Self {
            storage: ParamStorage::Dense { theta },
            base_kind,
            metadata: Metadata::default(),
        }
    }

    pub fn factorized(z: DMatrix<f64>, basis: EigenBasis, base_kind: BaseKind) -> Result<Self> {
        if z.ncols() != basis.m() {
            return Err(Error::invalid(format!(
                "Z has {} columns but the basis has m = {}",
                z.ncols(),
                basis.m()
            )));
        }
        Ok(Self {
            storage: ParamStorage::Factorized { z, basis },
            base_kind,
            metadata: Metadata::default(),
        })
    }

    pub fn with_metadata(mut self, metadata: Metadata) -> Self {
        self.metadata = metadata;
        self
    }

    /// Parameter dimension `n`.
    pub fn n(&self) -> usize {
        match &self.storage {
            ParamStorage::Dense { theta } => theta.nrows(),
            ParamStorage::Factorized { z, .. } => z.nrows(),
        }
    }

    /// Number of strata `K`.
    pub fn k(&self) -> usize {
        match &self.storage {
            ParamStorage::Dense { theta } => theta.ncols(),
            ParamStorage::Factorized { basis, .. } => basis.num_vertices(),
        }
    }

    /// Number of eigenvectors, or `None` for dense storage.
    pub fn m(&self) -> Option<usize> {
        match &self.storage {
            ParamStorage::Dense { .. } => None,
            ParamStorage::Factorized { basis, .. } => Some(basis.m()),
        }
    }

    /// The full `n x K` parameter matrix.
    pub fn materialize(&self) -> DMatrix<f64> {
        match &self.storage {
            ParamStorage::Dense { theta } => theta.clone(),
            ParamStorage::Factorized { z, basis } => z * basis.q_tilde.transpose(),
        }
    }

    /// `n K` for dense storage, `m (n + K)` for factorized storage.
    pub fn parameter_count(&self) -> usize {
        match &self.storage {
            ParamStorage::Dense { theta } => theta.len(),
            ParamStorage::Factorized { z, basis } => basis.m() * (z.nrows() + basis.num_vertices()),
        }
    }

    /// Same model with the parameters materialized into dense storage.
    pub fn to_dense(&self) -> Self {
        Self {
            storage: ParamStorage::Dense {
                theta: self.materialize(),
            },
            base_kind: self.base_kind,
            metadata: self.metadata.clone(),
        }
    }

    /// Negative log-likelihoods of `records` under this model.
    pub fn score<'a>(&self, records: impl IntoIterator<Item = &'a Record>) -> Result<ScoredDataset> {
        let theta = self.materialize();
        let (n, k) = (theta.nrows(), theta.ncols());
        let mut nll = Vec::new();
        for (idx, r) in records.into_iter().enumerate() {
            if r.z == 0 || r.z > k {
                return Err(Error::invalid(format!(
                    "record {idx}: stratum z = {} outside 1..={k}",
                    r.z
                )));
            }
            let col = theta.column(r.z - 1);
            let value = match self.base_kind {
                BaseKind::Logistic => {
                    let x =
                        r.x.as_ref()
                            .filter(|x| x.len() == n)
                            .ok_or_else(|| Error::invalid(format!("record {idx}: expected {n} features")))?;
                    let margin = col.dot(x);
                    if r.y == 1 {
                        softplus(-margin)
                    } else {
                        softplus(margin)
                    }
                }
                BaseKind::DiscreteDistribution => {
                    if r.y == 0 || r.y > n {
                        return Err(Error::invalid(format!(
                            "record {idx}: outcome y = {} outside 1..={n}",
                            r.y
                        )));
                    }
                    let c: DVector<f64> = col.into_owned();
                    log_sum_exp(&c) - c[r.y - 1]
                }
            };
            nll.push(value);
        }
        let anll = if nll.is_empty() {
            f64::NAN
        } else {
            nll.iter().sum::<f64>() / nll.len() as f64
        };
        Ok(ScoredDataset { nll, anll })
    }

    /// Average negative log-likelihood over `records` (NaN when empty).
    pub fn anll<'a>(&self, records: impl IntoIterator<Item = &'a Record>) -> Result<f64> {
        Ok(self.score(records)?.anll)
    }

    /// ANLL over one split of a dataset.
    pub fn anll_split(&self, data: &Dataset, split: Split) -> Result<f64> {
        self.anll(data.records_in(split))
    }
}

/// Average negative log-likelihood over every record of `data`.
pub fn anll(params: &StratParams, data: &Dataset) -> Result<f64> {
    params.anll(data.records.iter())
}

/// CSV report `split,anll,record_count` for the train/validation/test splits.
pub fn anll_report(params: &StratParams, data: &Dataset) -> Result<String> {
    let mut out = String::from("split,anll,record_count\n");
    for split in [Split::Train, Split::Validation, Split::Test] {
        let s = params.score(data.records_in(split))?;
        out.push_str(&format!("{},{},{}\n", split.name(), s.anll, s.nll.len()));
    }
    Ok(out)
}
