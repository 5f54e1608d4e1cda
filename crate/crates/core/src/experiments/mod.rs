//! Datasets, synthetic data and hyper-parameter search.

mod dataset;
mod search;
mod synth;

pub use dataset::{assign_splits, load_csv, Dataset, Record, Schema, Split};
pub use search::{grid_search, instantiate_template, results_csv, GridRow, GridSearchSpec, ModelChoice};
pub use synth::{synth_smooth, SynthOutput};
