use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One node's data, reduced to what its loss needs.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalLossSpec {
    /// Logistic loss over records `(x, y)` with `y` in `{0, 1}`; `features`
    /// holds one record per row.
    Logistic { features: DMatrix<f64>, labels: Vec<bool> },
    /// Softmax negative log-likelihood; `counts[y]` is how often outcome `y`
    /// was observed.
    DiscreteDistribution { counts: Vec<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseKind {
    Logistic,
    DiscreteDistribution,
}

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(theta: &DVector<f64>) -> f64 {
    let max = theta.max();
    max + theta.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Softmax `exp(theta) / sum(exp(theta))`.
pub fn predict_distribution(theta: &DVector<f64>) -> DVector<f64> {
    let max = theta.max();
    let mut p = theta.map(|t| (t - max).exp());
    let s = p.sum();
    p /= s;
    p
}

impl LocalLossSpec {
    pub fn empty(kind: BaseKind, n: usize) -> Self {
        match kind {
            BaseKind::Logistic => Self::Logistic {
                features: DMatrix::zeros(0, n),
                labels: Vec::new(),
            },
            BaseKind::DiscreteDistribution => Self::DiscreteDistribution { counts: vec![0; n] },
        }
    }

    pub fn kind(&self) -> BaseKind {
        match self {
            Self::Logistic { .. } => BaseKind::Logistic,
            Self::DiscreteDistribution { .. } => BaseKind::DiscreteDistribution,
        }
    }

    /// Parameter dimension `n`.
    pub fn dim(&self) -> usize {
        match self {
            Self::Logistic { features, .. } => features.ncols(),
            Self::DiscreteDistribution { counts } => counts.len(),
        }
    }

    /// Number of records behind this loss.
    pub fn num_records(&self) -> u64 {
        match self {
            Self::Logistic { labels, .. } => labels.len() as u64,
            Self::DiscreteDistribution { counts } => counts.iter().sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.num_records() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Logistic { features, labels } if features.nrows() != labels.len() => Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            ))),
            Self::DiscreteDistribution { counts } if counts.is_empty() => {
                Err(Error::invalid("discrete distribution needs at least one outcome"))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn check_dim(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::invalid(format!(
                "parameter has length {} but the loss expects {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Pools several nodes' data into one loss (used by the common model).
    pub fn pooled<'a>(specs: impl IntoIterator<Item = &'a LocalLossSpec>, kind: BaseKind, n: usize) -> Result<Self> {
        let mut out = Self::empty(kind, n);
        for s in specs {
            if s.kind() != kind || s.dim() != n {
                return Err(Error::invalid("cannot pool losses of different kinds or dimensions"));
            }
            match (&mut out, s) {
                (Self::Logistic { features, labels }, Self::Logistic { features: f, labels: l }) => {
                    let start = features.nrows();
                    let grown =
                        std::mem::replace(features, DMatrix::zeros(0, 0)).resize_vertically(start + f.nrows(), 0.0);
                    *features = grown;
                    features.rows_mut(start, f.nrows()).copy_from(f);
                    labels.extend_from_slice(l);
                }
                (Self::DiscreteDistribution { counts }, Self::DiscreteDistribution { counts: c }) => {
                    counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
                }
                _ => unreachable!("kinds checked above"),
            }
        }
        Ok(out)
    }

    fn margins(features: &DMatrix<f64>, labels: &[bool], theta: &DVector<f64>) -> DVector<f64> {
        let mut m = features * theta;
        for (mi, &y) in m.iter_mut().zip(labels) {
            if !y {
                *mi = -*mi;
            }
        }
        m
    }

    /// Loss value `l_k(theta)`.
    pub fn eval(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(self.value(theta))
    }

    pub(crate) fn value(&self, theta: &DVector<f64>) -> f64 {
        match self {
            Self::Logistic { features, labels } => {
                if labels.is_empty() {
                    return 0.0;
                }
                Self::margins(features, labels, theta)
                    .iter()
                    .map(|&m| softplus(-m))
                    .sum()
            }
            Self::DiscreteDistribution { counts } => {
                let total: u64 = counts.iter().sum();
                if total == 0 {
                    return 0.0;
                }
                let lse = log_sum_exp(theta);
                counts
                    .iter()
                    .zip(theta.iter())
                    .filter(|(&c, _)| c > 0)
                    .map(|(&c, &t)| c as f64 * (lse - t))
                    .sum()
            }
        }
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Logistic { features, labels } => {
                let n = theta.len();
                if labels.is_empty() {
                    return DVector::zeros(n);
                }
                let m = Self::margins(features, labels, theta);
                // d/dm softplus(-m) = -sigmoid(-m); chain through the sign.
                let coef = DVector::from_iterator(
                    labels.len(),
                    m.iter().zip(labels).map(|(&mi, &y)| {
                        let s = -sigmoid(-mi);
                        if y {
                            s
                        } else {
                            -s
                        }
                    }),
                );
                features.tr_mul(&coef)
            }
            Self::DiscreteDistribution { counts } => {
                let total: u64 = counts.iter().sum();
                let p = predict_distribution(theta);
                DVector::from_iterator(
                    counts.len(),
                    p.iter().zip(counts).map(|(&pi, &c)| total as f64 * pi - c as f64),
                )
            }
        }
    }

    /// Dense Hessian of the loss.
    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = theta.len();
        match self {
            Self::Logistic { features, labels } => {
                if labels.is_empty() {
                    return DMatrix::zeros(n, n);
                }
                let m = features * theta;
                let mut weighted = features.clone();
                for (i, &mi) in m.iter().enumerate() {
                    let s = sigmoid(mi);
                    weighted.row_mut(i).scale_mut(s * (1.0 - s));
                }
                features.tr_mul(&weighted)
            }
            Self::DiscreteDistribution { counts } => {
                let total = counts.iter().sum::<u64>() as f64;
                let p = predict_distribution(theta);
                let mut h = -(&p * p.transpose()) * total;
                for i in 0..n {
                    h[(i, i)] += total * p[i];
                }
                h
            }
        }
    }
}
