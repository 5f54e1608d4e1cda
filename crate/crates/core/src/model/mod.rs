//! Fitted stratified models: storage, scoring and model files.

mod io;
mod params;

pub use io::{decode, encode, load, save, serialized_size_report, SizeReport, MAGIC, VERSION};
pub use params::{anll, anll_report, Metadata, ParamStorage, ScoredDataset, StratParams};
