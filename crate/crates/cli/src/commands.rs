//! Subcommand bodies. Every output is rendered in memory and written only
//! after the computation succeeds.

use std::fs;
use std::path::Path;

use l2e_core::experiments::{
    lambda_max, run_replicates, summary_json, write_bench_csv, write_bench_means_csv,
    write_replicates_csv, ConfigFile, ExperimentConfig, ExperimentSummary,
};
use l2e_core::model::residuals;
use l2e_core::projections::difference_matrix;
use l2e_core::{
    fit_l2e, ConstraintSet, Dataset, FitOptions, FitReport, L2eError, Penalty, RhoContinuation,
};

use crate::input::read_dataset;
use crate::{FitArgs, PenaltyKind, SimArgs};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn solver(e: L2eError) -> Self {
        CliError {
            code: EXIT_SOLVER,
            message: e.to_string(),
        }
    }
}

impl From<L2eError> for CliError {
    fn from(e: L2eError) -> Self {
        CliError::input(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn build_penalty(args: &FitArgs, data: &Dataset) -> CliResult<Penalty> {
    let p = data.p();
    let need_k = || {
        args.k.ok_or_else(|| {
            CliError::input(format!("--penalty {:?} needs --k", args.penalty).to_lowercase())
        })
    };
    let need_identity = || {
        if data.design().is_identity() {
            Ok(())
        } else {
            Err(CliError::input(
                "order constraints need a response-only CSV (identity design)",
            ))
        }
    };
    let default_lambda = || -> CliResult<f64> {
        match args.lambda {
            Some(l) => Ok(l),
            None => Ok(0.1 * lambda_max(data)?),
        }
    };
    let pen = match args.penalty {
        PenaltyKind::None => Penalty::None,
        PenaltyKind::Lasso => Penalty::lasso(default_lambda()?)?,
        PenaltyKind::Mcp => Penalty::mcp(default_lambda()?, args.gamma)?,
        PenaltyKind::Isotonic | PenaltyKind::Antitonic => {
            need_identity()?;
            Penalty::indicator(ConstraintSet::Isotonic)
        }
        PenaltyKind::Sparse => Penalty::sparse_distance(args.rho, p, need_k()?)?,
        PenaltyKind::Fused => Penalty::distance(
            args.rho,
            difference_matrix(p, 1)?,
            ConstraintSet::Sparse(need_k()?),
        )?,
        PenaltyKind::Convex => Penalty::distance(
            args.rho,
            difference_matrix(p, 2)?,
            ConstraintSet::Nonnegative,
        )?,
    };
    pen.validate(p)?;
    Ok(pen)
}

fn fit_options(args: &FitArgs) -> CliResult<FitOptions> {
    let mut opts = FitOptions {
        rho_continuation: Some(RhoContinuation::default()),
        ..FitOptions::default()
    };
    if let Some(tol) = args.tol {
        opts.outer_tol = tol;
    }
    if let Some(m) = args.max_outer {
        opts.max_outer = m;
    }
    opts.validate()?;
    Ok(opts)
}

/// Shortest decimal that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
    } else {
        v.to_string()
    }
}

/// Case, residual, weight and log-weight rows for outlier screening.
fn weights_csv(data: &Dataset, report: &FitReport) -> CliResult<Vec<u8>> {
    let r = residuals(data, report.beta.view()).map_err(CliError::solver)?;
    let tau = report.tau();
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::input(e.to_string());
    w.write_record(["case", "residual", "weight", "log_weight"])
        .map_err(io)?;
    for (i, (&ri, &wi)) in r.iter().zip(report.weights.iter()).enumerate() {
        let log_w = -0.5 * (tau * ri).powi(2);
        w.write_record([
            (i + 1).to_string(),
            fmt_f64(ri),
            fmt_f64(wi),
            fmt_f64(log_w),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::input(e.to_string()))
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let (mut data, _names) =
        read_dataset(&args.input, &args.response, args.add_intercept).map_err(CliError::input)?;
    let pen = build_penalty(args, &data)?;
    let opts = fit_options(args)?;
    let flip = args.penalty == PenaltyKind::Antitonic;
    if flip {
        data = Dataset::identity(data.y().mapv(|v| -v))?;
    }
    let mut report = fit_l2e(&data, &pen, &opts).map_err(CliError::solver)?;
    if flip {
        report.beta.mapv_inplace(|v| -v);
        data = Dataset::identity(data.y().mapv(|v| -v))?;
    }

    let json = report.to_record().to_json();
    let weights = match &args.weights {
        Some(_) => Some(weights_csv(&data, &report)?),
        None => None,
    };
    match &args.output {
        Some(path) => write_file(path, json.as_bytes())?,
        None => println!("{json}"),
    }
    if let (Some(path), Some(bytes)) = (&args.weights, weights) {
        write_file(path, &bytes)?;
    }
    eprintln!(
        "penalty {}: tau {:.6}, outer iterations {}, converged {}{}",
        pen.name(),
        report.tau(),
        report.outer_iters,
        report.converged,
        if report.precision_diverged {
            ", precision diverged"
        } else {
            ""
        }
    );
    Ok(())
}

fn experiment_config(args: &SimArgs) -> CliResult<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            ConfigFile::parse(&text)?
        }
        None => ConfigFile::default(),
    };
    let scenario = match (&args.scenario, file.scenario.is_empty()) {
        (Some(s), _) => s.clone(),
        (None, false) => file.scenario.clone(),
        (None, true) => {
            return Err(CliError::input(
                "a scenario (isotonic or sparse) is required",
            ))
        }
    };
    let methods = args
        .methods
        .as_ref()
        .map(|s| s.split(',').map(|m| m.trim().to_string()).collect());
    let merged = ConfigFile {
        scenario,
        n: args.n.or(file.n),
        p: args.p.or(file.p),
        m: args.m.or(file.m),
        shift: args.shift.or(file.shift),
        tau: args.tau.or(file.tau),
        reps: args.reps.or(file.reps),
        seed: args.seed.or(file.seed),
        methods: methods.or(file.methods),
        cv: if args.cv { Some(true) } else { file.cv },
        folds: args.folds.or(file.folds),
        lambda: args.lambda.or(file.lambda),
        gamma: args.gamma.or(file.gamma),
        k: args.k.or(file.k),
        k_grid: file.k_grid,
        rho: args.rho.or(file.rho),
        max_outer: args.max_outer.or(file.max_outer),
        tol: args.tol.or(file.tol),
        jobs: args.jobs.or(file.jobs),
    };
    Ok(merged.into_config()?)
}

fn fmt_runtime(v: Option<f64>) -> String {
    v.map(|t| format!("{t:.3}")).unwrap_or_else(|| "-".into())
}

fn print_accuracy(summary: &ExperimentSummary) {
    println!(
        "scenario {} | {} replicates | seed {}",
        summary.scenario, summary.n_reps, summary.seed
    );
    println!(
        "{:<9} {:>5} {:>12} {:>12} {:>8} {:>8} {:>8} {:>10}",
        "method", "fail", "median_mse", "mean_mse", "mean_f1", "mean_fp", "outer", "runtime_s"
    );
    for m in &summary.methods {
        println!(
            "{:<9} {:>5} {:>12.6} {:>12.6} {:>8.4} {:>8.2} {:>8.2} {:>10}",
            m.method.to_string(),
            m.failures,
            m.median_mse,
            m.mean_mse,
            m.mean_f1,
            m.mean_false_positives,
            m.mean_outer_iters,
            fmt_runtime(m.mean_runtime)
        );
    }
}

fn print_iterations(summary: &ExperimentSummary) {
    println!(
        "scenario {} | {} replicates | seed {}",
        summary.scenario, summary.n_reps, summary.seed
    );
    println!(
        "{:<9} {:>10} {:>12} {:>12} {:>10}",
        "method", "outer", "inner_beta", "inner_prec", "runtime_s"
    );
    for m in &summary.methods {
        println!(
            "{:<9} {:>10.2} {:>12.2} {:>12.2} {:>10}",
            m.method.to_string(),
            m.mean_outer_iters,
            m.mean_inner_beta,
            m.mean_inner_eta,
            fmt_runtime(m.mean_runtime)
        );
    }
}

fn run(args: &SimArgs) -> CliResult<ExperimentSummary> {
    let cfg = experiment_config(args)?;
    let summary = run_replicates(&cfg).map_err(CliError::solver)?;
    Ok(if args.omit_timing {
        summary.without_timing()
    } else {
        summary
    })
}

fn render<F>(f: F) -> CliResult<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> l2e_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::input(e.to_string()))?;
    Ok(buf)
}

pub fn simulate(args: &SimArgs) -> CliResult<()> {
    let summary = run(args)?;
    let timing = !args.omit_timing;
    let csv = render(|b| write_replicates_csv(&summary.records, b, timing))?;
    if let Some(path) = &args.out {
        write_file(path, &csv)?;
    }
    if let Some(path) = &args.summary {
        write_file(path, summary_json(&summary).as_bytes())?;
    }
    print_accuracy(&summary);
    Ok(())
}

pub fn bench(args: &SimArgs) -> CliResult<()> {
    let summary = run(args)?;
    let rows = render(|b| write_bench_csv(&summary.records, b))?;
    let means = render(|b| write_bench_means_csv(&summary, b))?;
    if let Some(path) = &args.out {
        write_file(path, &rows)?;
    }
    if let Some(path) = &args.summary {
        write_file(path, &means)?;
    }
    print_iterations(&summary);
    Ok(())
}
