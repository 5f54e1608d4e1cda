use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{check_losses, node_error, CommonRegularization, FitConfig};
use crate::error::{Error, Result};
use crate::model::{Metadata, StratParams};
use crate::proximal::{minimize_regularized, LocalLossSpec, LocalRegularizerSpec};

fn check_count(losses: &[LocalLossSpec], k: usize) -> Result<usize> {
    if losses.len() != k {
        return Err(Error::invalid(format!("{} losses for K = {k}", losses.len())));
    }
    check_losses(losses)
}

/// Independent fits of `l_k + r` at every node (all edge weights zero).
pub fn fit_separate(
    losses: &[LocalLossSpec],
    reg: &LocalRegularizerSpec,
    k: usize,
    config: &FitConfig,
) -> Result<StratParams> {
    let n = check_count(losses, k)?;
    reg.validate()?;
    config.validate()?;
    let cols: Vec<DVector<f64>> = config.run_in_pool(|| {
        losses
            .par_iter()
            .enumerate()
            .map(|(i, l)| minimize_regularized(l, reg, 1.0).map_err(|e| node_error(i, e)))
            .collect::<Result<_>>()
    })??;
    let theta = DMatrix::from_fn(n, k, |i, j| cols[j][i]);
    let mut meta = Metadata::default();
    meta.set("gamma1", reg.gamma1);
    meta.set("gamma2", reg.gamma2);
    Ok(StratParams::dense(theta, losses[0].kind()).with_metadata(meta))
}

/// One parameter vector shared by every node (all edge weights infinite).
pub fn fit_common(
    losses: &[LocalLossSpec],
    reg: &LocalRegularizerSpec,
    k: usize,
    config: &FitConfig,
) -> Result<StratParams> {
    let n = check_count(losses, k)?;
    reg.validate()?;
    config.validate()?;
    let kind = losses[0].kind();
    let pooled = LocalLossSpec::pooled(losses, kind, n)?;
    let scale = match config.common_regularization {
        CommonRegularization::PerNode => k as f64,
        CommonRegularization::Once => 1.0,
    };
    let theta0 = minimize_regularized(&pooled, reg, scale)?;
    let theta = DMatrix::from_fn(n, k, |i, _| theta0[i]);
    let mut meta = Metadata::default();
    meta.set("gamma1", reg.gamma1);
    meta.set("gamma2", reg.gamma2);
    Ok(StratParams::dense(theta, kind).with_metadata(meta))
}
