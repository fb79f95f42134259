//! Outer block descent: alternate the MM β update and the Newton η update
//! until the penalized objective stalls.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, L2eError, Result};
use crate::majorize::{mm_beta_update, penalized_objective, Penalty};
use crate::model::{case_weights, clamp_eta, residuals, Dataset, FitState};
use crate::newton::{eta_update_residuals, NewtonOptions};

/// Increasing ρ schedule for distance penalties: fits at
/// `start, start·factor, …` up to the penalty's own ρ, each warm-started from
/// the previous one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoContinuation {
    pub start: f64,
    pub factor: f64,
}

impl Default for RhoContinuation {
    fn default() -> Self {
        RhoContinuation {
            start: 1e-2,
            factor: 10.0,
        }
    }
}

impl RhoContinuation {
    /// The ρ values visited on the way to `rho_max` (inclusive).
    pub fn schedule(&self, rho_max: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut rho = self.start;
        while rho < rho_max {
            out.push(rho);
            rho *= self.factor;
        }
        out.push(rho_max);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_outer: usize,
    /// Relative change of the penalized objective that ends the outer loop.
    pub outer_tol: f64,
    /// N_β
    pub n_beta_inner: usize,
    pub beta_inner_tol: f64,
    pub newton: NewtonOptions,
    pub init_beta: Option<Array1<f64>>,
    pub init_eta: Option<f64>,
    /// Only consulted for distance penalties.
    pub rho_continuation: Option<RhoContinuation>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_outer: 100,
            outer_tol: 1e-8,
            n_beta_inner: 100,
            beta_inner_tol: 1e-8,
            newton: NewtonOptions::default(),
            init_beta: None,
            init_eta: None,
            rho_continuation: None,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0 || self.n_beta_inner == 0 {
            return Err(L2eError::InvalidArgument(
                "iteration caps must be at least 1".into(),
            ));
        }
        if !(self.outer_tol > 0.0) || !(self.beta_inner_tol > 0.0) {
            return Err(L2eError::InvalidArgument(
                "tolerances must be positive".into(),
            ));
        }
        if let Some(c) = self.rho_continuation {
            if !(c.start > 0.0 && c.factor > 1.0) {
                return Err(L2eError::InvalidArgument(format!(
                    "rho continuation needs start > 0 and factor > 1, got {c:?}"
                )));
            }
        }
        self.newton.validate()
    }
}

/// Result of a block-descent fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub beta: Array1<f64>,
    pub eta: f64,
    /// Case weights at the final `(β, η)`.
    pub weights: Array1<f64>,
    /// Penalized objective after each outer iteration of the final stage.
    pub loss_trace: Vec<f64>,
    pub outer_iters: usize,
    /// β surrogate solves per outer iteration.
    pub inner_beta_iters: Vec<usize>,
    /// η (or τ) iterations per outer iteration.
    pub inner_eta_iters: Vec<usize>,
    pub converged: bool,
    pub precision_diverged: bool,
    /// The data had zero MAD so the default η₀ = 0 was used.
    pub mad_fallback: bool,
    /// Number of ρ stages (1 unless a continuation was used).
    pub rho_stages: usize,
    /// Newton steps accepted at `t = 1`, and all accepted Newton steps.
    pub eta_unit_steps: usize,
    pub eta_steps: usize,
    /// Unpenalized L2E loss at the final `(β, η)`.
    pub l2e_loss: f64,
    pub wall_time: f64,
}

impl FitReport {
    pub fn tau(&self) -> f64 {
        self.eta.exp()
    }

    /// Copy with the wall time zeroed, for comparing runs.
    pub fn without_timing(&self) -> FitReport {
        FitReport {
            wall_time: 0.0,
            ..self.clone()
        }
    }

    pub fn mean_inner_beta(&self) -> f64 {
        mean_usize(&self.inner_beta_iters)
    }

    pub fn mean_inner_eta(&self) -> f64 {
        mean_usize(&self.inner_eta_iters)
    }

    pub fn to_record(&self) -> ReportRecord {
        ReportRecord {
            beta: self.beta.to_vec(),
            eta: self.eta,
            tau: self.tau(),
            weights: self.weights.to_vec(),
            loss_trace: self.loss_trace.clone(),
            outer_iters: self.outer_iters,
            inner_beta_iters: self.inner_beta_iters.clone(),
            inner_eta_iters: self.inner_eta_iters.clone(),
            converged: self.converged,
            precision_diverged: self.precision_diverged,
            l2e_loss: self.l2e_loss,
        }
    }
}

fn mean_usize(v: &[usize]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<usize>() as f64 / v.len() as f64
    }
}

/// JSON form of a fit report. Floats serialize to the shortest decimal that
/// round-trips, so reading a record back reproduces every value bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub beta: Vec<f64>,
    pub eta: f64,
    pub tau: f64,
    pub weights: Vec<f64>,
    pub loss_trace: Vec<f64>,
    pub outer_iters: usize,
    pub inner_beta_iters: Vec<usize>,
    pub inner_eta_iters: Vec<usize>,
    pub converged: bool,
    pub precision_diverged: bool,
    pub l2e_loss: f64,
}

impl ReportRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialGuess {
    pub beta: Array1<f64>,
    pub eta: f64,
    pub mad_fallback: bool,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Unscaled median absolute deviation.
pub fn mad(y: ArrayView1<f64>) -> f64 {
    let mut v = y.to_vec();
    if v.is_empty() {
        return 0.0;
    }
    let m = median(&mut v);
    let mut dev: Vec<f64> = y.iter().map(|x| (x - m).abs()).collect();
    median(&mut dev)
}

/// `β₀ = y` for identity designs and `0` otherwise; `η₀ = −ln MAD(y)`, or 0
/// when the MAD vanishes.
pub fn init_default(data: &Dataset) -> InitialGuess {
    let beta = if data.n() == data.p() && data.design().is_identity() {
        data.y().clone()
    } else {
        Array1::zeros(data.p())
    };
    let m = mad(data.y().view());
    let (eta, mad_fallback) = if m > 0.0 && m.is_finite() {
        (clamp_eta(-m.ln()), false)
    } else {
        (0.0, true)
    };
    InitialGuess {
        beta,
        eta,
        mad_fallback,
    }
}

struct Stage {
    beta: Array1<f64>,
    eta: f64,
    loss_trace: Vec<f64>,
    inner_beta_iters: Vec<usize>,
    inner_eta_iters: Vec<usize>,
    converged: bool,
    precision_diverged: bool,
    eta_unit_steps: usize,
    eta_steps: usize,
}

fn block_descent(
    data: &Dataset,
    pen: &Penalty,
    beta0: Array1<f64>,
    eta0: f64,
    opts: &FitOptions,
) -> Result<Stage> {
    let mut beta = beta0;
    let mut eta = clamp_eta(eta0);
    let mut f_prev = penalized_objective(data, beta.view(), eta, pen)?;
    let mut stage = Stage {
        beta: Array1::zeros(0),
        eta,
        loss_trace: Vec::new(),
        inner_beta_iters: Vec::new(),
        inner_eta_iters: Vec::new(),
        converged: false,
        precision_diverged: false,
        eta_unit_steps: 0,
        eta_steps: 0,
    };

    for _ in 0..opts.max_outer {
        let state = FitState::new(data, beta, eta)?;
        let bu = mm_beta_update(data, &state, pen, opts.n_beta_inner, opts.beta_inner_tol)?;
        beta = bu.beta;

        let r = residuals(data, beta.view())?;
        let eu = eta_update_residuals(r.view(), eta, pen.value(beta.view())?, &opts.newton)?;
        eta = eu.eta;

        let f = penalized_objective(data, beta.view(), eta, pen)?;
        stage.loss_trace.push(f);
        stage.inner_beta_iters.push(bu.iters);
        stage.inner_eta_iters.push(eu.iters);
        stage.eta_unit_steps += eu.unit_steps;
        stage.eta_steps += eu.iters - usize::from(eu.stalled);

        if eu.hit_cap {
            stage.precision_diverged = true;
            break;
        }
        if f_prev.is_finite() && (f_prev - f).abs() <= opts.outer_tol * f_prev.abs() {
            stage.converged = true;
            break;
        }
        f_prev = f;
    }
    stage.beta = beta;
    stage.eta = eta;
    Ok(stage)
}

/// Fits the penalized L2E regression by block descent (β first, then η).
pub fn fit_l2e(data: &Dataset, pen: &Penalty, opts: &FitOptions) -> Result<FitReport> {
    let start = Instant::now();
    opts.validate()?;
    pen.validate(data.p())?;
    let init = init_default(data);
    let beta0 = match &opts.init_beta {
        Some(b) => {
            check_len("initial coefficients", data.p(), b.len())?;
            b.clone()
        }
        None => init.beta,
    };
    let eta0 = opts.init_eta.unwrap_or(init.eta);
    if !eta0.is_finite() {
        return Err(L2eError::InvalidArgument(
            "initial eta must be finite".into(),
        ));
    }

    let stages: Vec<Penalty> = match (pen, opts.rho_continuation) {
        (Penalty::Distance { rho, .. }, Some(cont)) => cont
            .schedule(*rho)
            .into_iter()
            .map(|r| pen.with_rho(r))
            .collect(),
        _ => vec![pen.clone()],
    };

    let mut beta = beta0;
    let mut eta = eta0;
    let mut inner_beta_iters = Vec::new();
    let mut inner_eta_iters = Vec::new();
    let mut last = None;
    let (mut unit, mut steps) = (0, 0);
    for stage_pen in &stages {
        let s = block_descent(data, stage_pen, beta, eta, opts)?;
        inner_beta_iters.extend_from_slice(&s.inner_beta_iters);
        inner_eta_iters.extend_from_slice(&s.inner_eta_iters);
        unit += s.eta_unit_steps;
        steps += s.eta_steps;
        beta = s.beta.clone();
        eta = s.eta;
        let diverged = s.precision_diverged;
        last = Some(s);
        if diverged {
            break;
        }
    }
    let last = last.expect("at least one stage");

    let r = residuals(data, beta.view())?;
    let weights = case_weights(r.view(), eta);
    let l2e_loss = crate::model::l2e_loss_residuals(r.view(), eta);
    Ok(FitReport {
        outer_iters: inner_beta_iters.len(),
        beta,
        eta,
        weights,
        loss_trace: last.loss_trace,
        inner_beta_iters,
        inner_eta_iters,
        converged: last.converged,
        precision_diverged: last.precision_diverged,
        mad_fallback: init.mad_fallback && opts.init_eta.is_none(),
        rho_stages: stages.len(),
        eta_unit_steps: unit,
        eta_steps: steps,
        l2e_loss,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
