//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use eigenstrat::experiments::{synth_smooth, Dataset, Split};
use eigenstrat::graphs::{bottom_eigenbasis, dirichlet_energy, spectrum, Backend, WeightedGraph};
use eigenstrat::model::{save, serialized_size_report, StratParams};
use eigenstrat::proximal::{prox_loss, prox_loss_gradient, prox_reg, BaseKind, LocalLossSpec, LocalRegularizerSpec};
use eigenstrat::solver::{
    eigen_objective, fit_common, fit_eigen_stratified, fit_separate, stratified_objective, EigenCount, FitConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<String, String> {
    let t = start.elapsed();
    check(t < limit, format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(format!("{t:.2?}"))
}

fn close_all(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(a, b)| (a - b).abs() <= tol)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let path = WeightedGraph::path(4, 1.0).unwrap();
    let cycle = WeightedGraph::cycle(5, 2.0).unwrap();
    let product = path.cartesian_product(&cycle);
    let p = bottom_eigenbasis(&path, 4).unwrap().lambda_m;
    let c = bottom_eigenbasis(&cycle, 5).unwrap().lambda_m;
    let b = bottom_eigenbasis(&product, 6).unwrap().lambda_m;
    check(
        close_all(p.as_slice(), &[0.0, 0.586, 2.0, 3.414], 1e-3),
        format!("path(4,1): {p}"),
    )?;
    check(
        close_all(c.as_slice(), &[0.0, 2.764, 2.764, 7.236, 7.236], 1e-3),
        format!("cycle(5,2): {c}"),
    )?;
    check(
        close_all(b.as_slice(), &[0.0, 0.586, 2.0, 2.764, 2.764, 3.350], 1e-3),
        format!("product: {b}"),
    )?;
    within_time(start, Duration::from_secs(1))
}

fn compare_spectra(name: &str, g: &WeightedGraph) -> Result<(), String> {
    let a = spectrum(g, Backend::Analytic).map_err(|e| format!("{name}: {e}"))?;
    let d = spectrum(g, Backend::Dense).map_err(|e| format!("{name}: {e}"))?;
    let gap = (&a.eigenvalues - &d.eigenvalues).amax();
    check(gap <= 1e-8, format!("{name}: eigenvalue gap {gap:e}"))?;
    for group in d.eigenspace_groups(1e-9) {
        let pa = a.projector(group.clone());
        let pd = d.projector(group.clone());
        let diff = (pa - pd).amax();
        check(
            diff <= 1e-6,
            format!("{name}: projector gap {diff:e} for columns {group:?}"),
        )?;
    }
    Ok(())
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    for k in 3..=32usize {
        let w = 0.5 + (k % 5) as f64 * 0.7;
        let mut graphs = vec![
            (format!("path({k})"), WeightedGraph::path(k, w).unwrap()),
            (format!("cycle({k})"), WeightedGraph::cycle(k, w).unwrap()),
            (format!("star({k})"), WeightedGraph::star(k, w).unwrap()),
            (format!("complete({k})"), WeightedGraph::complete(k, w).unwrap()),
        ];
        if k >= 4 {
            graphs.push((format!("wheel({k})"), WeightedGraph::wheel(k, w).unwrap()));
        }
        for alpha in 1..k {
            graphs.push((
                format!("bipartite({alpha},{})", k - alpha),
                WeightedGraph::complete_bipartite(alpha, k - alpha, w).unwrap(),
            ));
        }
        for (name, g) in &graphs {
            compare_spectra(name, g)?;
            cases += 1;
        }
    }
    let t = within_time(start, Duration::from_secs(60))?;
    Ok(format!("{cases} graphs, {t}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(2..=30);
        let g = common::random_graph(&mut rng, k);
        let m = rng.random_range(1..=k);
        let n = rng.random_range(1..=5);
        let basis = bottom_eigenbasis(&g, m).map_err(|e| e.to_string())?;
        let z = DMatrix::from_fn(n, m, |_, _| rng.random_range(-3.0..3.0));
        let quad: f64 = 0.5
            * (0..m)
                .map(|j| basis.lambda_m[j] * z.column(j).norm_squared())
                .sum::<f64>();
        let e = dirichlet_energy(&(&z * basis.q_tilde.transpose()), &g).map_err(|e| e.to_string())?;
        let rel = (quad - e).abs() / quad.abs().max(e.abs()).max(1e-300);
        if quad.abs().max(e.abs()) > 1e-12 {
            worst = worst.max(rel);
        } else {
            worst = worst.max((quad - e).abs());
        }
    }
    check(worst <= 1e-10, format!("worst relative error {worst:e}"))?;
    Ok(format!("100 cases, worst relative error {worst:.1e}"))
}

fn problem_4() -> (Dataset, Vec<LocalLossSpec>, LocalRegularizerSpec, WeightedGraph) {
    let data = common::logistic_problem(4);
    let losses = data.local_losses(Split::Train);
    (
        data,
        losses,
        LocalRegularizerSpec::sum_of_squares(0.1),
        WeightedGraph::path(10, 1.0).unwrap(),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let (_, losses, reg, g) = problem_4();
    let (params, diag) = fit_eigen_stratified(&losses, &reg, &g, &FitConfig::default()).map_err(|e| e.to_string())?;
    check(
        diag.converged,
        format!("not converged after {} iterations", diag.iterations),
    )?;
    let (z, basis) = match &params.storage {
        eigenstrat::model::ParamStorage::Factorized { z, basis } => (z, basis),
        _ => return Err("expected factorized parameters".into()),
    };
    let f = eigen_objective(&losses, &reg, z, basis).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let q = DMatrix::identity(10, 10);
    let (_, oracle) = common::oracle_fit(&losses, &reg, &g, &q, 1e-10);
    let rel = (f - oracle).abs() / oracle.abs();
    check(
        rel <= 1e-4,
        format!("objective {f} vs oracle {oracle}: relative gap {rel:e}"),
    )?;
    check(elapsed < Duration::from_secs(30), format!("fit took {elapsed:.2?}"))?;
    Ok(format!(
        "{} iterations, objective {f:.8} vs oracle {oracle:.8} (rel {rel:.1e}), {elapsed:.2?}",
        diag.iterations
    ))
}

fn criterion_5() -> Outcome {
    let (_, losses, reg, g) = problem_4();
    let cfg = FitConfig {
        m: EigenCount::Count(1),
        ..FitConfig::default()
    };
    let (params, diag) = fit_eigen_stratified(&losses, &reg, &g, &cfg).map_err(|e| e.to_string())?;
    check(diag.converged, "m = 1 fit did not converge")?;
    let theta = params.materialize();
    let spread = (0..10)
        .map(|j| (theta.column(j) - theta.column(0)).amax())
        .fold(0.0, f64::max);
    check(spread <= 1e-6, format!("columns differ by {spread:e}"))?;
    let common = fit_common(&losses, &reg, 10, &cfg)
        .map_err(|e| e.to_string())?
        .materialize();
    let a = stratified_objective(&losses, &reg, &theta, &g).map_err(|e| e.to_string())?;
    let b = stratified_objective(&losses, &reg, &common, &g).map_err(|e| e.to_string())?;
    let rel = (a - b).abs() / b.abs();
    check(rel <= 1e-4, format!("m = 1 objective {a} vs common {b}"))?;
    let m_k = criterion_4().map_err(|e| format!("m = K: {e}"))?;
    Ok(format!(
        "m = 1: spread {spread:.1e}, objective gap {rel:.1e}; m = K: {m_k}"
    ))
}

fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    let h = 1e-5;
    DVector::from_fn(x.len(), |i, _| {
        let mut p = x.clone();
        p[i] += h;
        let mut m = x.clone();
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_foc = 0.0f64;
    let mut worst_fd = 0.0f64;
    let mut record = |foc: f64, analytic: &DVector<f64>, fd: &DVector<f64>| -> Result<(), String> {
        let gap = (analytic - fd).amax() / analytic.amax().max(1.0);
        worst_foc = worst_foc.max(foc);
        worst_fd = worst_fd.max(gap);
        check(foc <= 1e-6, format!("first-order residual {foc:e}"))?;
        check(gap <= 1e-4, format!("finite-difference gap {gap:e}"))
    };
    for _ in 0..50 {
        let n = rng.random_range(1..=6);
        let rows = rng.random_range(0..=25);
        let spec = LocalLossSpec::Logistic {
            features: DMatrix::from_fn(rows, n, |_, _| rng.random_range(-3.0..3.0)),
            labels: (0..rows).map(|_| rng.random_bool(0.5)).collect(),
        };
        let v = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let rho = rng.random_range(0.05..20.0);
        let x = prox_loss(&spec, &v, rho).map_err(|e| e.to_string())?;
        let foc = prox_loss_gradient(&spec, &v, rho, &x).norm();
        let g = spec.gradient(&x);
        let fd = fd_gradient(|t| spec.eval(t).unwrap(), &x);
        record(foc, &g, &fd).map_err(|e| format!("logistic prox: {e}"))?;
    }
    for _ in 0..50 {
        let n = rng.random_range(2..=12);
        let spec = LocalLossSpec::DiscreteDistribution {
            counts: (0..n)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0
                    } else {
                        rng.random_range(0..40)
                    }
                })
                .collect(),
        };
        let v = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let rho = rng.random_range(0.05..20.0);
        let x = prox_loss(&spec, &v, rho).map_err(|e| e.to_string())?;
        let foc = prox_loss_gradient(&spec, &v, rho, &x).norm();
        let g = spec.gradient(&x);
        let fd = fd_gradient(|t| spec.eval(t).unwrap(), &x);
        record(foc, &g, &fd).map_err(|e| format!("discrete prox: {e}"))?;
    }
    for _ in 0..50 {
        let n = rng.random_range(1..=15);
        let reg = LocalRegularizerSpec {
            gamma1: rng.random_range(0.0..5.0),
            gamma2: rng.random_range(0.0..5.0),
            intercept_exempt: rng.random_bool(0.5),
        };
        let v = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let rho = rng.random_range(0.05..20.0);
        let x = prox_reg(&reg, &v, rho).map_err(|e| e.to_string())?;
        let foc = (reg.gradient(&x) + (&x - &v) / rho).norm();
        let g = reg.gradient(&x);
        let fd = fd_gradient(|t| reg.eval(t), &x);
        record(foc, &g, &fd).map_err(|e| format!("regularizer prox: {e}"))?;
    }
    Ok(format!(
        "150 cases, worst first-order residual {worst_foc:.1e}, worst gradient gap {worst_fd:.1e}"
    ))
}

fn criterion_7() -> Outcome {
    let g = WeightedGraph::path(2, 15.0)
        .unwrap()
        .cartesian_product(&WeightedGraph::path(27, 175.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let basis = bottom_eigenbasis(&g, 5).map_err(|e| e.to_string())?;
    let z = DMatrix::from_fn(14, 5, |_, _| rng.random_range(-1.0..1.0));
    let factorized = StratParams::factorized(z, basis, BaseKind::Logistic).map_err(|e| e.to_string())?;
    let dense = factorized.to_dense();
    check(
        dense.parameter_count() == 756,
        format!("dense count {}", dense.parameter_count()),
    )?;
    check(
        factorized.parameter_count() == 340,
        format!("factorized count {}", factorized.parameter_count()),
    )?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (fp, dp) = (dir.path().join("f.esm"), dir.path().join("d.esm"));
    save(&factorized, &fp).map_err(|e| e.to_string())?;
    save(&dense, &dp).map_err(|e| e.to_string())?;
    let fs = std::fs::metadata(&fp).map_err(|e| e.to_string())?.len();
    let ds = std::fs::metadata(&dp).map_err(|e| e.to_string())?.len();
    check(fs < ds, format!("factorized file {fs} bytes, dense {ds} bytes"))?;
    check(
        serialized_size_report(&factorized).file_bytes as u64 == fs,
        "size report disagrees with file",
    )?;
    Ok(format!("756 / 340 parameters, files {ds} / {fs} bytes"))
}

/// Best validation ANLL over a small grid of regularization strengths.
fn best_test_anll(data: &Dataset, fits: impl Iterator<Item = StratParams>) -> f64 {
    let mut best = (f64::INFINITY, f64::NAN);
    for p in fits {
        let val = p.anll_split(data, Split::Validation).unwrap();
        if val < best.0 {
            best = (val, p.anll_split(data, Split::Test).unwrap());
        }
    }
    best.1
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let torus = WeightedGraph::cycle(52, 1.0)
        .unwrap()
        .cartesian_product(&WeightedGraph::cycle(24, 1.0).unwrap());
    let n = 43;
    let (train, val, test) = (0.3, 0.35, 0.35);
    let mut beats_separate = 0;
    let mut beats_common = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let mut data = synth_smooth(&torus, 3, n, 4.0 / train, BaseKind::DiscreteDistribution, 100 + seed)
            .map_err(|e| e.to_string())?
            .data;
        data.split((train, val, test), seed).map_err(|e| e.to_string())?;
        let losses = data.local_losses(Split::Train);
        let k = torus.num_vertices();
        let cfg = FitConfig::default();
        let grid = [0.01, 0.1, 1.0];
        let reg = |g1: f64| LocalRegularizerSpec::sum_of_squares(g1);

        let eigen = best_test_anll(
            &data,
            [3usize, 10, 30]
                .into_iter()
                .flat_map(|m| grid.iter().map(move |&g1| (m, g1)))
                .map(|(m, g1)| {
                    let cfg = FitConfig {
                        m: EigenCount::Count(m),
                        ..cfg.clone()
                    };
                    fit_eigen_stratified(&losses, &reg(g1), &torus, &cfg).unwrap().0
                }),
        );
        let separate = best_test_anll(
            &data,
            grid.iter().map(|&g1| fit_separate(&losses, &reg(g1), k, &cfg).unwrap()),
        );
        let common = best_test_anll(
            &data,
            grid.iter().map(|&g1| fit_common(&losses, &reg(g1), k, &cfg).unwrap()),
        );
        beats_separate += usize::from(eigen <= separate);
        beats_common += usize::from(eigen <= common);
        lines.push(format!(
            "seed {seed}: eigen {eigen:.4} separate {separate:.4} common {common:.4}"
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    check(
        beats_separate >= 9,
        format!("eigen <= separate in {beats_separate}/10 seeds"),
    )?;
    check(beats_common >= 8, format!("eigen <= common in {beats_common}/10 seeds"))?;
    let t = within_time(start, Duration::from_secs(600))?;
    Ok(format!(
        "eigen <= separate {beats_separate}/10, eigen <= common {beats_common}/10, {t}"
    ))
}

fn criterion_9() -> Outcome {
    let (data, losses, reg, g) = problem_4();
    let run = |threads| {
        let cfg = FitConfig {
            threads: Some(threads),
            ..FitConfig::default()
        };
        fit_eigen_stratified(&losses, &reg, &g, &cfg).map(|(_, d)| d.to_csv())
    };
    let lib_1 = run(1).map_err(|e| e.to_string())?;
    let lib_8 = run(8).map_err(|e| e.to_string())?;
    check(lib_1 == lib_8, "library diagnostics differ between 1 and 8 threads")?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    data.save_csv(dir.path().join("data.csv")).map_err(|e| e.to_string())?;
    let config = "graph = \"path(10,1)\"\n\
                  [base]\nkind = \"logistic\"\nn = 4\n\
                  [regularizer]\ngamma1 = 0.1\n\
                  [data]\npath = \"data.csv\"\n";
    let config_path = dir.path().join("fit.toml");
    std::fs::write(&config_path, config).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("out{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_eigenstrat"))
            .args(["--threads", threads, "fit"])
            .arg(&config_path)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        check(
            status.status.success(),
            format!(
                "fit --threads {threads} failed: {}",
                String::from_utf8_lossy(&status.stderr)
            ),
        )?;
        outputs.push(std::fs::read(out.join("diagnostics.csv")).map_err(|e| e.to_string())?);
    }
    check(
        outputs[0] == outputs[1],
        "CLI diagnostics differ between --threads 1 and --threads 8",
    )?;
    check(
        outputs[0] == lib_1.as_bytes(),
        "CLI diagnostics differ from the library fit",
    )?;
    Ok(format!("{} diagnostics rows identical", lib_1.lines().count() - 1))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("worked example spectra", criterion_1),
        ("analytic vs dense spectra", criterion_2),
        ("energy identity", criterion_3),
        ("ADMM at m = K vs oracle", criterion_4),
        ("two extremes", criterion_5),
        ("prox optimality", criterion_6),
        ("storage accounting", criterion_7),
        ("synthetic torus comparison", criterion_8),
        ("determinism across threads", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        match f() {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id} FAIL  {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
