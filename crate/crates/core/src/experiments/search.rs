use std::cmp::Ordering;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use super::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::graphs::{parse_graph, WeightedGraph};
use crate::proximal::LocalRegularizerSpec;
use crate::solver::{fit, EigenCount, FitConfig, FitMode, FitOutcome};

/// Model family and size for one fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    /// Eigen-stratified with `m` eigenvectors.
    Eigen(usize),
    /// Standard Laplacian-regularized model (`m = K`).
    Standard,
    Separate,
    Common,
}

impl ModelChoice {
    pub fn mode(&self) -> FitMode {
        match self {
            ModelChoice::Eigen(_) | ModelChoice::Standard => FitMode::Eigen,
            ModelChoice::Separate => FitMode::Separate,
            ModelChoice::Common => FitMode::Common,
        }
    }

    pub fn eigen_count(&self) -> EigenCount {
        match self {
            ModelChoice::Eigen(m) => EigenCount::Count(*m),
            _ => EigenCount::All,
        }
    }

    /// Size used for tie-breaking: `m`, with `K` for standard and separate
    /// models and 1 for the common model.
    pub fn effective_m(&self, k: usize) -> usize {
        match self {
            ModelChoice::Eigen(m) => *m,
            ModelChoice::Standard | ModelChoice::Separate => k,
            ModelChoice::Common => 1,
        }
    }

    /// Fits this choice on the training split of `data`.
    pub fn fit(
        &self,
        data: &Dataset,
        reg: &LocalRegularizerSpec,
        graph: &WeightedGraph,
        config: &FitConfig,
    ) -> Result<FitOutcome> {
        if graph.num_vertices() != data.num_strata {
            return Err(Error::invalid(format!(
                "graph has {} vertices but the data has K = {}",
                graph.num_vertices(),
                data.num_strata
            )));
        }
        let cfg = FitConfig {
            m: self.eigen_count(),
            ..config.clone()
        };
        fit(self.mode(), &data.local_losses(Split::Train), reg, graph, &cfg)
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelChoice::Eigen(m) => write!(f, "{m}"),
            ModelChoice::Standard => f.write_str("all"),
            ModelChoice::Separate => f.write_str("separate"),
            ModelChoice::Common => f.write_str("common"),
        }
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(ModelChoice::Standard),
            "separate" => Ok(ModelChoice::Separate),
            "common" => Ok(ModelChoice::Common),
            other => match other.parse::<usize>() {
                Ok(m) if m > 0 => Ok(ModelChoice::Eigen(m)),
                _ => Err(Error::Config(format!(
                    "model {s:?} is not a positive integer, \"all\", \"separate\" or \"common\""
                ))),
            },
        }
    }
}

/// Hyper-parameter grid. Graph weights are substituted for `$name`
/// placeholders in `graph_template`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchSpec {
    pub graph_template: String,
    pub graph_weights: Vec<(String, Vec<f64>)>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub models: Vec<ModelChoice>,
    pub intercept_exempt: bool,
}

/// One grid point with its scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    /// Graph weights by name, then `gamma1` and `gamma2`.
    pub hyper: Vec<(String, f64)>,
    pub model: ModelChoice,
    pub effective_m: usize,
    pub train_anll: f64,
    pub val_anll: f64,
    pub test_anll: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct GridPoint {
    weights: Vec<(String, f64)>,
    gamma1: f64,
    gamma2: f64,
    model: ModelChoice,
}

/// Replaces each `$name` in `template` with the matching value.
pub fn instantiate_template(template: &str, weights: &[(String, f64)]) -> Result<WeightedGraph> {
    let mut names: Vec<&(String, f64)> = weights.iter().collect();
    // Longest names first so `$a` does not clobber `$ab`.
    names.sort_by_key(|w| std::cmp::Reverse(w.0.len()));
    let mut s = template.to_string();
    for (name, value) in names {
        let key = format!("${name}");
        if !s.contains(&key) {
            return Err(Error::Config(format!(
                "graph template {template:?} has no placeholder {key}"
            )));
        }
        s = s.replace(&key, &value.to_string());
    }
    if let Some(pos) = s.find('$') {
        return Err(Error::Config(format!(
            "graph template {template:?} has an unbound placeholder at {:?}",
            &s[pos..]
        )));
    }
    parse_graph(&s)
}

impl GridSearchSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.gamma1.is_empty() || self.gamma2.is_empty() || self.models.is_empty() {
            return Err(Error::Config(
                "grids for gamma1, gamma2 and the model must be non-empty".into(),
            ));
        }
        for (name, grid) in &self.graph_weights {
            if grid.is_empty() {
                return Err(Error::Config(format!("grid for graph weight {name} is empty")));
            }
        }
        for m in &self.models {
            if let ModelChoice::Eigen(m) = m {
                if *m > k {
                    return Err(Error::Config(format!("m = {m} exceeds K = {k}")));
                }
            }
        }
        for &g1 in &self.gamma1 {
            for &g2 in &self.gamma2 {
                LocalRegularizerSpec {
                    gamma1: g1,
                    gamma2: g2,
                    intercept_exempt: self.intercept_exempt,
                }
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        for weights in self.weight_combinations() {
            let g = instantiate_template(&self.graph_template, &weights)?;
            if g.num_vertices() != k {
                return Err(Error::Config(format!(
                    "graph has {} vertices but the data has K = {k}",
                    g.num_vertices()
                )));
            }
        }
        Ok(())
    }

    fn weight_combinations(&self) -> Vec<Vec<(String, f64)>> {
        let mut out = vec![Vec::new()];
        for (name, grid) in &self.graph_weights {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    grid.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((name.clone(), *v));
                        p
                    })
                })
                .collect();
        }
        out
    }

    fn points(&self) -> Vec<GridPoint> {
        let mut pts = Vec::new();
        for weights in self.weight_combinations() {
            for &gamma1 in &self.gamma1 {
                for &gamma2 in &self.gamma2 {
                    for &model in &self.models {
                        pts.push(GridPoint {
                            weights: weights.clone(),
                            gamma1,
                            gamma2,
                            model,
                        });
                    }
                }
            }
        }
        pts
    }
}

fn run_point(spec: &GridSearchSpec, data: &Dataset, config: &FitConfig, p: &GridPoint) -> GridRow {
    let mut hyper = p.weights.clone();
    hyper.push(("gamma1".into(), p.gamma1));
    hyper.push(("gamma2".into(), p.gamma2));
    let mut row = GridRow {
        hyper,
        model: p.model,
        effective_m: p.model.effective_m(data.num_strata),
        train_anll: f64::NAN,
        val_anll: f64::NAN,
        test_anll: f64::NAN,
        iterations: 0,
        converged: false,
        error: None,
    };
    let reg = LocalRegularizerSpec {
        gamma1: p.gamma1,
        gamma2: p.gamma2,
        intercept_exempt: spec.intercept_exempt,
    };
    let result = instantiate_template(&spec.graph_template, &p.weights).and_then(|g| {
        let out = p.model.fit(data, &reg, &g, config)?;
        let scores = [Split::Train, Split::Validation, Split::Test].map(|s| out.params.anll_split(data, s));
        Ok((out, scores))
    });
    match result {
        Ok((out, [train, val, test])) => {
            row.iterations = out.iterations();
            row.converged = out.converged();
            match (train, val, test) {
                (Ok(a), Ok(b), Ok(c)) => {
                    row.train_anll = a;
                    row.val_anll = b;
                    row.test_anll = c;
                }
                (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => row.error = Some(e.to_string()),
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn compare_rows(a: &GridRow, b: &GridRow) -> Ordering {
    let key = |r: &GridRow| if r.val_anll.is_nan() { f64::INFINITY } else { r.val_anll };
    key(a)
        .total_cmp(&key(b))
        .then(a.effective_m.cmp(&b.effective_m))
        .then_with(|| {
            a.hyper
                .iter()
                .zip(&b.hyper)
                .map(|(x, y)| x.1.total_cmp(&y.1))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.model.to_string().cmp(&b.model.to_string()))
}

/// Fits every grid point on the training split and ranks the points by
/// validation ANLL (ties: smaller `m`, then hyper-parameter values). A point
/// whose fit fails is kept with its error message and ranked last.
pub fn grid_search(spec: &GridSearchSpec, data: &Dataset, config: &FitConfig) -> Result<Vec<GridRow>> {
    spec.validate(data.num_strata)?;
    config.validate()?;
    let inner = FitConfig {
        threads: None,
        ..config.clone()
    };
    let points = spec.points();
    let mut rows: Vec<GridRow> =
        config.run_in_pool(|| points.par_iter().map(|p| run_point(spec, data, &inner, p)).collect())?;
    rows.sort_by(compare_rows);
    Ok(rows)
}

/// Results table: hyper-parameters, model, ANLL per split, iterations,
/// convergence flag and error.
pub fn results_csv(rows: &[GridRow]) -> String {
    let mut out = String::new();
    if let Some(first) = rows.first() {
        for (name, _) in &first.hyper {
            let _ = write!(out, "{name},");
        }
    }
    out.push_str("m,train_anll,val_anll,test_anll,iterations,converged,error\n");
    for r in rows {
        for (_, v) in &r.hyper {
            let _ = write!(out, "{v},");
        }
        let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        let err = if err.contains(',') { format!("\"{err}\"") } else { err };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.model, r.train_anll, r.val_anll, r.test_anll, r.iterations, r.converged, err
        );
    }
    out
}
