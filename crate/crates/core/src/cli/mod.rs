//! The `eigenstrat` command-line front end.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use config::{ExperimentConfig, Overrides, Plan};

use crate::error::{Error, Result};
use crate::experiments::{grid_search, load_csv, results_csv, synth_smooth, Schema};
use crate::graphs::{bottom_eigenbasis, parse_graph};
use crate::model::{anll_report, load, save};
use crate::proximal::BaseKind;
use crate::solver::FitDiagnostics;

#[derive(Debug, Parser)]
#[command(name = "eigenstrat", version, about = "Fit eigen-stratified models")]
pub struct Cli {
    /// Worker threads for the per-node steps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the bottom eigenvalues of a graph and optionally write the
    /// eigenpairs as CSV.
    Spectra {
        graph: String,
        /// Number of eigenpairs (default: all).
        #[arg(long)]
        m: Option<usize>,
        /// CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model; writes model.esm, diagnostics.csv and anll.csv.
    Fit {
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the ANLL of a saved model on a dataset.
    Eval { model: PathBuf, data: PathBuf },
    /// Generate synthetic data; writes data.csv and ground_truth.csv.
    Synth {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a hyper-parameter grid search; writes results.csv.
    Search {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    NotConverged,
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::Data { .. }
            | Error::Load(_)
            | Error::Config(_)
            | Error::UnsupportedStructure(_)
    ) || matches!(e, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
}

/// Parses `args` and runs the command. Exit codes: 0 success, 1 fit did not
/// converge or failed numerically, 2 invalid input.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_input_error(&e) { 2 } else { 1 })
        }
    }
}

fn execute(cli: Cli) -> Result<Status> {
    let overrides = |out: Option<PathBuf>| Overrides {
        threads: cli.threads,
        seed: cli.seed,
        out,
    };
    match cli.command {
        Command::Spectra { ref graph, m, ref out } => cmd_spectra(graph, m, out.as_deref()),
        Command::Fit { ref config, ref out } => cmd_fit(config, &overrides(out.clone())),
        Command::Eval { ref model, ref data } => cmd_eval(model, data),
        Command::Synth { ref config, ref out } => cmd_synth(config, &overrides(out.clone())),
        Command::Search { ref config, ref out } => cmd_search(config, &overrides(out.clone())),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn format_value(v: f64) -> String {
    let s = format!("{:.6}", if v.abs() < 5e-7 { 0.0 } else { v });
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn cmd_spectra(spec: &str, m: Option<usize>, out: Option<&Path>) -> Result<Status> {
    let g = parse_graph(spec)?;
    let m = m.unwrap_or(g.num_vertices());
    let basis = bottom_eigenbasis(&g, m)?;
    let values: Vec<String> = basis.lambda_m.iter().map(|v| format_value(*v)).collect();
    println!("{}", values.join(", "));
    if let Some(path) = out {
        write(path, basis.to_csv())?;
    }
    Ok(Status::Ok)
}

fn cmd_fit(config: &Path, overrides: &Overrides) -> Result<Status> {
    let plan = Plan::load(config, overrides)?;
    let graph = plan.require_graph()?;
    let data = plan.dataset(graph.num_vertices(), Some(graph))?;
    let outcome = plan.model.fit(&data, &plan.reg, graph, &plan.fit)?;
    let report = anll_report(&outcome.params, &data)?;
    let diagnostics = outcome.diagnostics.clone().unwrap_or(FitDiagnostics {
        records: Vec::new(),
        converged: true,
        iterations: 0,
    });

    create_dir(&plan.out_dir)?;
    save(&outcome.params, plan.out_dir.join("model.esm"))?;
    write(&plan.out_dir.join("diagnostics.csv"), diagnostics.to_csv())?;
    write(&plan.out_dir.join("anll.csv"), &report)?;
    print!("{report}");
    if diagnostics.converged {
        println!("converged after {} iterations", diagnostics.iterations);
        Ok(Status::Ok)
    } else {
        let last = diagnostics.final_record();
        eprintln!(
            "warning: not converged after {} iterations (r1 = {:e}, r2 = {:e})",
            diagnostics.iterations,
            last.map_or(f64::NAN, |r| r.r1),
            last.map_or(f64::NAN, |r| r.r2)
        );
        Ok(Status::NotConverged)
    }
}

fn cmd_eval(model: &Path, data: &Path) -> Result<Status> {
    let params = load(model)?;
    let schema = match params.base_kind {
        BaseKind::Logistic => Schema::Logistic { n: params.n() },
        BaseKind::DiscreteDistribution => Schema::Discrete { n: params.n() },
    };
    let data = load_csv(data, schema, params.k())?;
    let scored = params.score(data.records.iter())?;
    println!("anll,record_count");
    println!("{},{}", scored.anll, scored.nll.len());
    Ok(Status::Ok)
}

fn cmd_synth(config: &Path, overrides: &Overrides) -> Result<Status> {
    let plan = Plan::load(config, overrides)?;
    let graph = plan.require_graph()?;
    let Some(config::DataSource::Synth {
        basis_m,
        records_per_node,
        seed,
    }) = plan.source
    else {
        return Err(Error::Config(format!(
            "{}: synth needs a [synth] block",
            config.display()
        )));
    };
    let out = synth_smooth(graph, basis_m, plan.n, records_per_node, plan.kind, seed)?;
    create_dir(&plan.out_dir)?;
    out.data.save_csv(plan.out_dir.join("data.csv"))?;
    write(&plan.out_dir.join("ground_truth.csv"), out.ground_truth_csv())?;
    println!("{} records over {} nodes", out.data.len(), graph.num_vertices());
    Ok(Status::Ok)
}

fn cmd_search(config: &Path, overrides: &Overrides) -> Result<Status> {
    let plan = Plan::load(config, overrides)?;
    let spec = plan
        .search
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{}: search needs a [search] block", config.display())))?;
    let first: Vec<(String, f64)> = spec.graph_weights.iter().map(|(k, v)| (k.clone(), v[0])).collect();
    let template_graph = crate::experiments::instantiate_template(&spec.graph_template, &first)?;
    let graph = plan.graph.as_ref().unwrap_or(&template_graph);
    let data = plan.dataset(template_graph.num_vertices(), Some(graph))?;
    let rows = grid_search(spec, &data, &plan.fit)?;
    create_dir(&plan.out_dir)?;
    write(&plan.out_dir.join("results.csv"), results_csv(&rows))?;
    if let Some(best) = rows.first() {
        let hyper: Vec<String> = best.hyper.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "best: m={} {} val_anll={} test_anll={}",
            best.model,
            hyper.join(" "),
            best.val_anll,
            best.test_anll
        );
    }
    Ok(Status::Ok)
}
