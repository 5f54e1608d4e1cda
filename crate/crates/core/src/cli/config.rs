use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::{instantiate_template, load_csv, synth_smooth, Dataset, GridSearchSpec, ModelChoice, Schema};
use crate::graphs::{parse_graph, WeightedGraph};
use crate::proximal::{BaseKind, LocalRegularizerSpec};
use crate::solver::{CommonRegularization, FitConfig, ThetaTildeUpdate};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Graph spec, e.g. `product(path(2,15),path(27,175))`. Optional when
    /// a `[search]` block supplies a template.
    pub graph: Option<String>,
    /// Eigenvector count, `"all"`, `"separate"` or `"common"`. Absent means
    /// `"all"`.
    pub m: Option<ModelValue>,
    pub base: BaseSection,
    #[serde(default)]
    pub regularizer: RegularizerSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub data: Option<DataSection>,
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub output: OutputSection,
    pub search: Option<SearchSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelValue {
    Count(i64),
    Name(String),
}

impl ModelValue {
    fn choice(&self, field: &str) -> Result<ModelChoice> {
        match self {
            ModelValue::Count(m) if *m > 0 => Ok(ModelChoice::Eigen(*m as usize)),
            ModelValue::Count(m) => Err(Error::Config(format!("{field}: m = {m} must be positive"))),
            ModelValue::Name(s) => s.parse().map_err(|e: Error| Error::Config(format!("{field}: {e}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum KindName {
    Logistic,
    Discrete,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSection {
    pub kind: KindName,
    pub n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizerSection {
    pub gamma1: f64,
    pub gamma2: f64,
    pub intercept_exempt: bool,
}

impl Default for RegularizerSection {
    fn default() -> Self {
        Self {
            gamma1: 0.0,
            gamma2: 0.0,
            intercept_exempt: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum UpdateName {
    Exact,
    PaperLiteral,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum CommonRegName {
    PerNode,
    Once,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub rho: Option<f64>,
    pub max_iter: Option<usize>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub theta_tilde_update: Option<UpdateName>,
    pub common_regularization: Option<CommonRegName>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub basis_m: usize,
    pub records_per_node: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            fractions: [1.0, 0.0, 0.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Graph spec with `$name` placeholders; defaults to `graph`.
    pub graph_template: Option<String>,
    #[serde(default)]
    pub graph_weights: BTreeMap<String, Vec<f64>>,
    pub gamma1: Vec<f64>,
    #[serde(default = "zero_grid")]
    pub gamma2: Vec<f64>,
    pub m: Vec<ModelValue>,
}

fn zero_grid() -> Vec<f64> {
    vec![0.0]
}

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub enum DataSource {
    Csv(PathBuf),
    Synth {
        basis_m: usize,
        records_per_node: f64,
        seed: u64,
    },
}

/// A fully validated configuration.
pub struct Plan {
    pub graph: Option<WeightedGraph>,
    pub kind: BaseKind,
    pub n: usize,
    pub reg: LocalRegularizerSpec,
    pub model: ModelChoice,
    pub fit: FitConfig,
    pub source: Option<DataSource>,
    pub fractions: (f64, f64, f64),
    pub split_seed: u64,
    pub out_dir: PathBuf,
    pub search: Option<GridSearchSpec>,
}

impl Plan {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_config(cfg, &base_dir, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_config(cfg: ExperimentConfig, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        let graph = cfg
            .graph
            .as_deref()
            .map(parse_graph)
            .transpose()
            .map_err(|e| field("graph", e))?;
        let kind = match cfg.base.kind {
            KindName::Logistic => BaseKind::Logistic,
            KindName::Discrete => BaseKind::DiscreteDistribution,
        };
        if cfg.base.n == 0 {
            return Err(Error::Config("base.n must be positive".into()));
        }
        let reg = LocalRegularizerSpec {
            gamma1: cfg.regularizer.gamma1,
            gamma2: cfg.regularizer.gamma2,
            intercept_exempt: cfg.regularizer.intercept_exempt,
        };
        reg.validate().map_err(|e| field("regularizer", e))?;
        let model = match &cfg.m {
            Some(v) => v.choice("m")?,
            None => ModelChoice::Standard,
        };
        if let (Some(g), ModelChoice::Eigen(m)) = (&graph, model) {
            if m > g.num_vertices() {
                return Err(Error::Config(format!("m: {m} exceeds K = {}", g.num_vertices())));
            }
        }

        let defaults = FitConfig::default();
        let s = &cfg.solver;
        let fit = FitConfig {
            rho: s.rho.unwrap_or(defaults.rho),
            max_iter: s.max_iter.unwrap_or(defaults.max_iter),
            abs_tol: s.abs_tol.unwrap_or(defaults.abs_tol),
            rel_tol: s.rel_tol.unwrap_or(defaults.rel_tol),
            m: model.eigen_count(),
            theta_tilde_update: match s.theta_tilde_update {
                Some(UpdateName::PaperLiteral) => ThetaTildeUpdate::PaperLiteral,
                _ => ThetaTildeUpdate::Exact,
            },
            seed: overrides.seed.unwrap_or(defaults.seed),
            threads: overrides.threads,
            common_regularization: match s.common_regularization {
                Some(CommonRegName::Once) => CommonRegularization::Once,
                _ => CommonRegularization::PerNode,
            },
        };
        fit.validate().map_err(|e| field("solver", e))?;

        let source = match (&cfg.data, &cfg.synth) {
            (Some(_), Some(_)) => return Err(Error::Config("give either [data] or [synth], not both".into())),
            (Some(d), None) => Some(DataSource::Csv(base_dir.join(&d.path))),
            (None, Some(s)) => {
                if let Some(g) = &graph {
                    if s.basis_m == 0 || s.basis_m > g.num_vertices() {
                        return Err(Error::Config(format!(
                            "synth.basis_m: {} outside 1..={}",
                            s.basis_m,
                            g.num_vertices()
                        )));
                    }
                }
                if !(s.records_per_node >= 0.0 && s.records_per_node.is_finite()) {
                    return Err(Error::Config("synth.records_per_node must be nonnegative".into()));
                }
                Some(DataSource::Synth {
                    basis_m: s.basis_m,
                    records_per_node: s.records_per_node,
                    seed: overrides.seed.unwrap_or(s.seed),
                })
            }
            (None, None) => None,
        };
        let [a, b, c] = cfg.split.fractions;
        crate::experiments::assign_splits(0, (a, b, c), 0).map_err(|e| field("split.fractions", e))?;

        let search = match cfg.search {
            None => None,
            Some(sec) => {
                let template = sec
                    .graph_template
                    .or_else(|| cfg.graph.clone())
                    .ok_or_else(|| Error::Config("search: needs graph_template or graph".into()))?;
                let models = sec.m.iter().map(|v| v.choice("search.m")).collect::<Result<Vec<_>>>()?;
                let spec = GridSearchSpec {
                    graph_template: template,
                    graph_weights: sec.graph_weights.into_iter().collect(),
                    gamma1: sec.gamma1,
                    gamma2: sec.gamma2,
                    models,
                    intercept_exempt: cfg.regularizer.intercept_exempt,
                };
                let first: Vec<(String, f64)> = spec
                    .graph_weights
                    .iter()
                    .filter_map(|(k, v)| Some((k.clone(), *v.first()?)))
                    .collect();
                let g = instantiate_template(&spec.graph_template, &first)
                    .map_err(|e| field("search.graph_template", e))?;
                spec.validate(g.num_vertices()).map_err(|e| field("search", e))?;
                Some(spec)
            }
        };

        let out_dir = match (&overrides.out, &cfg.output.dir) {
            (Some(o), _) => o.clone(),
            (None, Some(d)) => base_dir.join(d),
            (None, None) => base_dir.to_path_buf(),
        };
        Ok(Plan {
            graph,
            kind,
            n: cfg.base.n,
            reg,
            model,
            fit,
            source,
            fractions: (a, b, c),
            split_seed: overrides.seed.unwrap_or(cfg.split.seed),
            out_dir,
            search,
        })
    }

    pub fn require_graph(&self) -> Result<&WeightedGraph> {
        self.graph
            .as_ref()
            .ok_or_else(|| Error::Config("graph is required".into()))
    }

    pub fn schema(&self) -> Schema {
        match self.kind {
            BaseKind::Logistic => Schema::Logistic { n: self.n },
            BaseKind::DiscreteDistribution => Schema::Discrete { n: self.n },
        }
    }

    /// Loads or synthesizes the dataset and applies the split.
    pub fn dataset(&self, k: usize, graph: Option<&WeightedGraph>) -> Result<Dataset> {
        let mut data = match &self.source {
            None => return Err(Error::Config("a [data] or [synth] block is required".into())),
            Some(DataSource::Csv(p)) => load_csv(p, self.schema(), k)?,
            Some(DataSource::Synth {
                basis_m,
                records_per_node,
                seed,
            }) => {
                let g = graph.ok_or_else(|| Error::Config("synth needs a graph".into()))?;
                synth_smooth(g, *basis_m, self.n, *records_per_node, self.kind, *seed)?.data
            }
        };
        data.split(self.fractions, self.split_seed)?;
        Ok(data)
    }
}
