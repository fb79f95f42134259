//! Replicate runner: generate a dataset per replicate, fit every method,
//! score it, and aggregate per method.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, lambda_grid};
use super::metrics::{compute_metrics, SUPPORT_TOL};
use super::rng::derive_seed;
use super::scenario::{gen_isotonic, gen_sparse, IsotonicScenario, SparseScenario};
use crate::error::{L2eError, Result};
use crate::fit::{fit_l2e, FitOptions, FitReport, RhoContinuation};
use crate::linalg::least_squares;
use crate::majorize::{Penalty, DEFAULT_MCP_GAMMA};
use crate::model::Dataset;
use crate::pg::{fit_pg, PgOptions};
use crate::projections::{project_isotonic, ConstraintSet};

/// Estimators compared by the harness, listed in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// L2E by block descent; isotonic indicator or no penalty.
    Mm,
    /// L2E by proximal gradient block descent.
    Pg,
    /// Least squares: PAVA on the raw responses, or ordinary least squares.
    Ls,
    Lasso,
    Mcp,
    Distance,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mm,
        Method::Pg,
        Method::Ls,
        Method::Lasso,
        Method::Mcp,
        Method::Distance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mm => "mm",
            Method::Pg => "pg",
            Method::Ls => "ls",
            Method::Lasso => "lasso",
            Method::Mcp => "mcp",
            Method::Distance => "distance",
        }
    }

    /// Parses a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Method::from_str)
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = L2eError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                L2eError::InvalidArgument(format!(
                    "unknown method '{s}' (expected one of mm, pg, ls, lasso, mcp, distance)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Isotonic(IsotonicScenario),
    Sparse(SparseScenario),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Isotonic(_) => "isotonic",
            Scenario::Sparse(_) => "sparse",
        }
    }

    pub fn supports(&self, method: Method) -> bool {
        match self {
            Scenario::Isotonic(_) => matches!(method, Method::Mm | Method::Pg | Method::Ls),
            Scenario::Sparse(_) => method != Method::Pg,
        }
    }

    fn with_seed(&self, seed: u64) -> Scenario {
        match *self {
            Scenario::Isotonic(s) => Scenario::Isotonic(IsotonicScenario { seed, ..s }),
            Scenario::Sparse(s) => Scenario::Sparse(SparseScenario { seed, ..s }),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Scenario::Isotonic(s) => s.validate(),
            Scenario::Sparse(s) => s.validate(),
        }
    }

    pub fn generate(&self) -> Result<(Dataset, Array1<f64>)> {
        match self {
            Scenario::Isotonic(s) => gen_isotonic(s),
            Scenario::Sparse(s) => gen_sparse(s),
        }
    }
}

/// Tuning of the sparse methods.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    /// Select λ and k by cross-validation; otherwise use the fixed values.
    pub cv: bool,
    pub folds: usize,
    pub lambda_len: usize,
    pub lambda_ratio: f64,
    /// Candidate sparsity levels, most restrictive first.
    pub k_grid: Vec<usize>,
    /// Fixed λ; defaults to a tenth of `λ_max`.
    pub lambda: Option<f64>,
    pub k: usize,
    pub gamma: f64,
    pub rho: f64,
    pub rho_continuation: RhoContinuation,
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning {
            cv: false,
            folds: 5,
            lambda_len: 10,
            lambda_ratio: 1e-2,
            k_grid: vec![3, 5, 7, 9, 11, 13, 15],
            lambda: None,
            k: 5,
            gamma: DEFAULT_MCP_GAMMA,
            rho: 1e8,
            rho_continuation: RhoContinuation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// The scenario seed is replaced per replicate.
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub n_reps: usize,
    pub seed: u64,
    pub tuning: Tuning,
    pub fit: FitOptions,
    pub pg: PgOptions,
    /// Worker threads; all available cores when absent.
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, methods: Vec<Method>, n_reps: usize, seed: u64) -> Self {
        ExperimentConfig {
            scenario,
            methods,
            n_reps,
            seed,
            tuning: Tuning::default(),
            fit: FitOptions::default(),
            pg: PgOptions::default(),
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(L2eError::InvalidArgument(
                "need at least one replicate".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(L2eError::InvalidArgument("no methods requested".into()));
        }
        if let Some(m) = self.methods.iter().find(|&&m| !self.scenario.supports(m)) {
            return Err(L2eError::InvalidArgument(format!(
                "method {m} does not apply to the {} scenario",
                self.scenario.name()
            )));
        }
        if self.jobs == Some(0) {
            return Err(L2eError::InvalidArgument("jobs must be at least 1".into()));
        }
        if self.tuning.cv && self.tuning.k_grid.is_empty() {
            return Err(L2eError::InvalidArgument("k grid is empty".into()));
        }
        self.scenario.validate()?;
        self.fit.validate()?;
        self.pg.validate()
    }

    /// Methods deduplicated in canonical order.
    pub fn canonical_methods(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }
}

/// One method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub mse: f64,
    pub relative_error: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub outer_iters: usize,
    pub mean_inner_beta: f64,
    pub mean_inner_eta: f64,
    pub converged: bool,
    pub precision_diverged: bool,
    /// Selected λ or k for the sparse methods.
    pub tuning: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub failures: usize,
    pub mean_mse: f64,
    pub median_mse: f64,
    pub mean_relative_error: f64,
    pub median_relative_error: f64,
    pub mean_f1: f64,
    pub median_f1: f64,
    pub mean_true_positives: f64,
    pub mean_false_positives: f64,
    pub mean_outer_iters: f64,
    pub mean_inner_beta: f64,
    pub mean_inner_eta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_runtime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_runtime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub scenario: String,
    pub n_reps: usize,
    pub seed: u64,
    pub methods: Vec<MethodSummary>,
    /// Sorted by method (canonical order), then replicate.
    pub records: Vec<ReplicateRecord>,
}

impl ExperimentSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// Copy with every runtime removed, for reproducibility checks.
    pub fn without_timing(&self) -> ExperimentSummary {
        let mut out = self.clone();
        for r in &mut out.records {
            r.runtime = None;
        }
        for m in &mut out.methods {
            m.mean_runtime = None;
            m.median_runtime = None;
        }
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Aggregates successful replicates of each method.
pub fn summarize(method: Method, records: &[ReplicateRecord]) -> MethodSummary {
    let all: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method).collect();
    let ok: Vec<&ReplicateRecord> = all.iter().copied().filter(|r| r.error.is_none()).collect();
    let col = |f: &dyn Fn(&ReplicateRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let mse = col(&|r| r.mse);
    let rel = col(&|r| r.relative_error);
    let f1 = col(&|r| r.f1);
    let runtimes: Option<Vec<f64>> = ok.iter().map(|r| r.runtime).collect();
    MethodSummary {
        method,
        replicates: all.len(),
        failures: all.len() - ok.len(),
        mean_mse: mean(&mse),
        median_mse: median(&mse),
        mean_relative_error: mean(&rel),
        median_relative_error: median(&rel),
        mean_f1: mean(&f1),
        median_f1: median(&f1),
        mean_true_positives: mean(&col(&|r| r.true_positives as f64)),
        mean_false_positives: mean(&col(&|r| r.false_positives as f64)),
        mean_outer_iters: mean(&col(&|r| r.outer_iters as f64)),
        mean_inner_beta: mean(&col(&|r| r.mean_inner_beta)),
        mean_inner_eta: mean(&col(&|r| r.mean_inner_eta)),
        mean_runtime: runtimes.as_deref().map(mean),
        median_runtime: runtimes.as_deref().map(median),
    }
}

struct Outcome {
    beta: Array1<f64>,
    report: Option<FitReport>,
    tuning: Option<f64>,
}

fn from_report(report: FitReport, tuning: Option<f64>) -> Outcome {
    Outcome {
        beta: report.beta.clone(),
        report: Some(report),
        tuning,
    }
}

fn distance_fit(data: &Dataset, pen: &Penalty, cfg: &ExperimentConfig) -> Result<FitReport> {
    let opts = FitOptions {
        rho_continuation: Some(cfg.tuning.rho_continuation),
        ..cfg.fit.clone()
    };
    fit_l2e(data, pen, &opts)
}

/// Fits `method` on one replicate's data.
fn run_method(
    method: Method,
    data: &Dataset,
    cfg: &ExperimentConfig,
    cv_seed: u64,
) -> Result<Outcome> {
    let t = &cfg.tuning;
    let isotonic = matches!(cfg.scenario, Scenario::Isotonic(_));
    match method {
        Method::Mm => {
            let pen = if isotonic {
                Penalty::indicator(ConstraintSet::Isotonic)
            } else {
                Penalty::None
            };
            Ok(from_report(fit_l2e(data, &pen, &cfg.fit)?, None))
        }
        Method::Pg => {
            let pen = Penalty::indicator(ConstraintSet::Isotonic);
            Ok(from_report(fit_pg(data, &pen, &cfg.pg)?, None))
        }
        Method::Ls => {
            let beta = if isotonic {
                let w = Array1::ones(data.n());
                project_isotonic(data.y().view(), w.view())?
            } else {
                least_squares(&data.design().to_dense(), data.y())
            };
            Ok(Outcome {
                beta,
                report: None,
                tuning: None,
            })
        }
        Method::Lasso | Method::Mcp => {
            let make = |lambda: f64| match method {
                Method::Lasso => Penalty::lasso(lambda),
                _ => Penalty::mcp(lambda, Some(t.gamma)),
            };
            let lambda = if t.cv {
                let grid = lambda_grid(data, t.lambda_len, t.lambda_ratio)?
                    .into_iter()
                    .map(make)
                    .collect::<Result<Vec<_>>>()?;
                let res = cross_validate(data, &grid, t.folds, cv_seed, |tr, pen| {
                    fit_l2e(tr, pen, &cfg.fit)
                })?;
                match res.best {
                    Penalty::Lasso { lambda } | Penalty::Mcp { lambda, .. } => lambda,
                    _ => unreachable!("grid holds lasso or mcp penalties"),
                }
            } else {
                match t.lambda {
                    Some(l) => l,
                    None => 0.1 * lambda_grid(data, 1, 0.5)?[0],
                }
            };
            let pen = make(lambda)?;
            Ok(from_report(fit_l2e(data, &pen, &cfg.fit)?, Some(lambda)))
        }
        Method::Distance => {
            let p = data.p();
            let k = if t.cv {
                let grid = t
                    .k_grid
                    .iter()
                    .map(|&k| Penalty::sparse_distance(t.rho, p, k))
                    .collect::<Result<Vec<_>>>()?;
                let res = cross_validate(data, &grid, t.folds, cv_seed, |tr, pen| {
                    distance_fit(tr, pen, cfg)
                })?;
                t.k_grid[res.best_index]
            } else {
                t.k
            };
            let pen = Penalty::sparse_distance(t.rho, p, k)?;
            Ok(from_report(distance_fit(data, &pen, cfg)?, Some(k as f64)))
        }
    }
}

fn run_one(
    method: Method,
    rep: usize,
    seed: u64,
    data: &Dataset,
    truth: &Array1<f64>,
    cfg: &ExperimentConfig,
) -> ReplicateRecord {
    let start = Instant::now();
    let outcome = run_method(method, data, cfg, derive_seed(seed, 1))
        .and_then(|o| compute_metrics(o.beta.view(), truth.view(), SUPPORT_TOL).map(|m| (o, m)));
    let runtime = Some(start.elapsed().as_secs_f64());
    match outcome {
        Ok((o, m)) => {
            let (outer, ib, ie, conv, div) = match &o.report {
                Some(r) => (
                    r.outer_iters,
                    r.mean_inner_beta(),
                    r.mean_inner_eta(),
                    r.converged,
                    r.precision_diverged,
                ),
                None => (0, 0.0, 0.0, true, false),
            };
            ReplicateRecord {
                replicate: rep,
                seed,
                method,
                mse: m.mse,
                relative_error: m.relative_error,
                f1: m.f1,
                true_positives: m.true_positives,
                false_positives: m.false_positives,
                false_negatives: m.false_negatives,
                outer_iters: outer,
                mean_inner_beta: ib,
                mean_inner_eta: ie,
                converged: conv,
                precision_diverged: div,
                tuning: o.tuning,
                runtime,
                error: None,
            }
        }
        Err(e) => failed_record(method, rep, seed, e.to_string(), runtime),
    }
}

fn failed_record(
    method: Method,
    rep: usize,
    seed: u64,
    error: String,
    runtime: Option<f64>,
) -> ReplicateRecord {
    ReplicateRecord {
        replicate: rep,
        seed,
        method,
        mse: f64::NAN,
        relative_error: f64::NAN,
        f1: f64::NAN,
        true_positives: 0,
        false_positives: 0,
        false_negatives: 0,
        outer_iters: 0,
        mean_inner_beta: f64::NAN,
        mean_inner_eta: f64::NAN,
        converged: false,
        precision_diverged: false,
        tuning: None,
        runtime,
        error: Some(error),
    }
}

fn run_replicate(rep: usize, methods: &[Method], cfg: &ExperimentConfig) -> Vec<ReplicateRecord> {
    let seed = derive_seed(cfg.seed, rep as u64);
    match cfg.scenario.with_seed(seed).generate() {
        Ok((data, truth)) => methods
            .iter()
            .map(|&m| run_one(m, rep, seed, &data, &truth, cfg))
            .collect(),
        Err(e) => methods
            .iter()
            .map(|&m| failed_record(m, rep, seed, e.to_string(), Some(0.0)))
            .collect(),
    }
}

/// Runs every method on `n_reps` replicates. Replicates run in parallel;
/// the result does not depend on scheduling or on the order of `methods`.
pub fn run_replicates(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let methods = cfg.canonical_methods();
    let work = || -> Vec<Vec<ReplicateRecord>> {
        (0..cfg.n_reps)
            .into_par_iter()
            .map(|rep| run_replicate(rep, &methods, cfg))
            .collect()
    };
    let per_rep = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| L2eError::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut records: Vec<ReplicateRecord> = per_rep.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.method, r.replicate));
    let summaries = methods.iter().map(|&m| summarize(m, &records)).collect();
    Ok(ExperimentSummary {
        scenario: cfg.scenario.name().to_string(),
        n_reps: cfg.n_reps,
        seed: cfg.seed,
        methods: summaries,
        records,
    })
}
