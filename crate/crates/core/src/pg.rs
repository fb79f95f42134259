//! Proximal gradient block descent on `(β, τ)`: the comparison baseline.
//! It minimizes the same objective as [`crate::fit::fit_l2e`],
//! `h(β, τ) + c(τ) φ(β)`.
//!
//! β steps are `prox(β − s∇_β h)` with a halving line search started at
//! `1 / L`; τ steps are projected gradient steps on `[τ_min, τ_max]` with a
//! halving line search started at twice the last accepted step.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};

use crate::error::{check_len, L2eError, Result};
use crate::fit::{init_default, FitReport};
use crate::majorize::{penalized_objective, soft_threshold, Penalty};
use crate::model::{
    case_weights, compensated_sum, grad_beta_residuals, l2e_loss_residuals, residuals,
    surrogate_scale, Dataset, INV_TWO_SQRT_PI, SQRT_2_OVER_PI,
};
use crate::projections::{project_isotonic, ConstraintSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PgOptions {
    /// Defaults to `1e−3 · τ₀` when absent.
    pub tau_min: Option<f64>,
    /// Defaults to `1e3 · τ₀` when absent.
    pub tau_max: Option<f64>,
    pub max_outer: usize,
    pub n_beta_inner: usize,
    pub n_tau_inner: usize,
    /// Initial trial step of every τ line search.
    pub tau_step: f64,
    /// Step shrink factor of both line searches.
    pub shrink: f64,
    /// Sufficient-decrease constant of both line searches.
    pub sigma: f64,
    pub max_backtracks: usize,
    pub outer_tol: f64,
    pub beta_inner_tol: f64,
    /// τ iterations stop once `|τ ∂h/∂τ|` falls below this.
    pub grad_tol: f64,
    pub init_beta: Option<Array1<f64>>,
    pub init_eta: Option<f64>,
}

impl Default for PgOptions {
    fn default() -> Self {
        PgOptions {
            tau_min: None,
            tau_max: None,
            max_outer: 100,
            n_beta_inner: 100,
            n_tau_inner: 100,
            tau_step: 1.0,
            shrink: 0.5,
            sigma: 1e-4,
            max_backtracks: 50,
            outer_tol: 1e-8,
            beta_inner_tol: 1e-8,
            grad_tol: 1e-10,
            init_beta: None,
            init_eta: None,
        }
    }
}

impl PgOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(L2eError::InvalidArgument(m.to_string()));
        if self.max_outer == 0 || self.n_beta_inner == 0 || self.n_tau_inner == 0 {
            return bad("iteration caps must be at least 1");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad("line search constants must lie in (0, 1)");
        }
        if !(self.tau_step > 0.0 && self.tau_step.is_finite()) {
            return bad("tau_step must be positive");
        }
        if !(self.outer_tol > 0.0) || !(self.beta_inner_tol > 0.0) || !(self.grad_tol >= 0.0) {
            return bad("tolerances must be positive");
        }
        if let (Some(lo), Some(hi)) = (self.tau_min, self.tau_max) {
            if !(lo > 0.0 && lo <= hi) {
                return bad("need 0 < tau_min <= tau_max");
            }
        }
        for t in [self.tau_min, self.tau_max].into_iter().flatten() {
            if !(t > 0.0 && t.is_finite()) {
                return bad("tau bounds must be positive and finite");
            }
        }
        Ok(())
    }
}

fn check_supported(data: &Dataset, pen: &Penalty) -> Result<()> {
    match pen {
        Penalty::None | Penalty::Lasso { .. } => Ok(()),
        Penalty::Indicator {
            set: ConstraintSet::Isotonic,
        } if data.design().is_identity() => Ok(()),
        other => Err(L2eError::InvalidArgument(format!(
            "proximal gradient supports none, lasso and isotonic (identity design) penalties, got {}",
            other.name()
        ))),
    }
}

/// `prox_{tφ}(v)`
fn prox(pen: &Penalty, v: Array1<f64>, t: f64) -> Result<Array1<f64>> {
    Ok(match pen {
        Penalty::Lasso { lambda } => v.mapv(|z| soft_threshold(z, t * lambda)),
        Penalty::Indicator { .. } => {
            let w = Array1::ones(v.len());
            project_isotonic(v.view(), w.view())?
        }
        _ => v,
    })
}

fn objective(data: &Dataset, pen: &Penalty, beta: ArrayView1<f64>, tau: f64) -> Result<f64> {
    penalized_objective(data, beta, tau.ln(), pen)
}

/// One proximal gradient step `prox_{s c φ}(β − s∇_β h)` with a fixed step `s`.
pub fn pg_beta_step(
    data: &Dataset,
    pen: &Penalty,
    beta: ArrayView1<f64>,
    eta: f64,
    s: f64,
) -> Result<Array1<f64>> {
    check_supported(data, pen)?;
    check_len("coefficient vector", data.p(), beta.len())?;
    if !(s > 0.0) {
        return Err(L2eError::InvalidArgument(
            "step size must be positive".into(),
        ));
    }
    let r = residuals(data, beta)?;
    let g = grad_beta_residuals(data, r.view(), eta);
    prox(pen, &beta - &(g * s), s * surrogate_scale(eta, data.n()))
}

/// `∂h/∂τ = 1/(2√π) − (1/n)√(2/π) Σ w_i (1 − τ² r_i²)`
pub fn grad_tau(r: ArrayView1<f64>, tau: f64) -> f64 {
    let w = case_weights(r, tau.ln());
    let t2 = tau * tau;
    let s = compensated_sum(w.iter().zip(r.iter()).map(|(w, r)| w * (1.0 - t2 * r * r)));
    INV_TWO_SQRT_PI - SQRT_2_OVER_PI * s / r.len() as f64
}

struct BetaPhase {
    beta: Array1<f64>,
    iters: usize,
}

fn beta_phase(
    data: &Dataset,
    pen: &Penalty,
    beta0: Array1<f64>,
    tau: f64,
    lip_x: f64,
    opts: &PgOptions,
) -> Result<BetaPhase> {
    let eta = tau.ln();
    let c = surrogate_scale(eta, data.n());
    let s0 = 1.0 / (c * lip_x).max(f64::MIN_POSITIVE);
    let mut beta = beta0;
    let mut f = objective(data, pen, beta.view(), tau)?;
    let mut iters = 0;
    while iters < opts.n_beta_inner {
        iters += 1;
        let r = residuals(data, beta.view())?;
        let g = grad_beta_residuals(data, r.view(), eta);
        let mut s = s0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let cand = prox(pen, &beta - &(&g * s), s * c)?;
            let delta = &cand - &beta;
            let step_sq = delta.dot(&delta);
            let f_cand = objective(data, pen, cand.view(), tau)?;
            if f_cand <= f - opts.sigma / (2.0 * s) * step_sq
                || (!f.is_finite() && f_cand.is_finite())
            {
                accepted = Some((cand, f_cand, step_sq));
                break;
            }
            s *= opts.shrink;
        }
        let Some((cand, f_cand, step_sq)) = accepted else {
            break;
        };
        let done = step_sq == 0.0
            || (f.is_finite() && (f - f_cand).abs() <= opts.beta_inner_tol * f.abs());
        beta = cand;
        f = f_cand;
        if done {
            break;
        }
    }
    Ok(BetaPhase { beta, iters })
}

struct TauPhase {
    tau: f64,
    iters: usize,
    steps: usize,
}

/// τ-objective `h + c(τ) φ` for fixed residuals and penalty value.
fn tau_objective(r: ArrayView1<f64>, tau: f64, phi: f64) -> f64 {
    let pen = if phi == 0.0 {
        0.0
    } else {
        surrogate_scale(tau.ln(), r.len()) * phi
    };
    l2e_loss_residuals(r, tau.ln()) + pen
}

fn tau_phase(
    r: ArrayView1<f64>,
    phi: f64,
    tau0: f64,
    lo: f64,
    hi: f64,
    opts: &PgOptions,
) -> TauPhase {
    let mut tau = tau0.clamp(lo, hi);
    let mut h = tau_objective(r, tau, phi);
    let mut out = TauPhase {
        tau,
        iters: 0,
        steps: 0,
    };
    while out.iters < opts.n_tau_inner {
        let g = grad_tau(r, tau)
            + if phi == 0.0 {
                0.0
            } else {
                3.0 * surrogate_scale(tau.ln(), r.len()) * phi / tau
            };
        let pinned = (tau <= lo && g > 0.0) || (tau >= hi && g < 0.0);
        if (tau * g).abs() < opts.grad_tol || pinned {
            break;
        }
        out.iters += 1;
        let mut t = opts.tau_step;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let cand = (tau - t * g).clamp(lo, hi);
            let d = cand - tau;
            let h_cand = tau_objective(r, cand, phi);
            if d != 0.0 && h_cand <= h - opts.sigma / t * d * d {
                accepted = Some((cand, h_cand));
                break;
            }
            t *= opts.shrink;
        }
        match accepted {
            Some((cand, h_cand)) => {
                tau = cand;
                h = h_cand;
                out.steps += 1;
            }
            None => break,
        }
    }
    out.tau = tau;
    out
}

/// Proximal gradient block descent for `h(β, τ) + φ(β)`, τ boxed in
/// `[τ_min, τ_max]`. Supports no penalty, lasso, and the isotonic indicator
/// with an identity design.
pub fn fit_pg(data: &Dataset, pen: &Penalty, opts: &PgOptions) -> Result<FitReport> {
    let start = Instant::now();
    opts.validate()?;
    pen.validate(data.p())?;
    check_supported(data, pen)?;

    let init = init_default(data);
    let mut beta = match &opts.init_beta {
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
    let tau0 = eta0.exp();
    let lo = opts.tau_min.unwrap_or(1e-3 * tau0);
    let hi = opts.tau_max.unwrap_or(1e3 * tau0);
    if !(lo > 0.0 && lo <= hi) {
        return Err(L2eError::InvalidArgument(format!(
            "need 0 < tau_min <= tau_max, got [{lo}, {hi}]"
        )));
    }
    let mut tau = tau0.clamp(lo, hi);
    let lip_x = data.design().spectral_norm_sq();

    let mut f_prev = objective(data, pen, beta.view(), tau)?;
    let mut loss_trace = Vec::new();
    let mut inner_beta_iters = Vec::new();
    let mut inner_eta_iters = Vec::new();
    let mut tau_steps = 0;
    let mut converged = false;

    for _ in 0..opts.max_outer {
        let bp = beta_phase(data, pen, beta, tau, lip_x, opts)?;
        beta = bp.beta;
        let r = residuals(data, beta.view())?;
        let tp = tau_phase(r.view(), pen.value(beta.view())?, tau, lo, hi, opts);
        tau = tp.tau;
        tau_steps += tp.steps;

        let f = objective(data, pen, beta.view(), tau)?;
        if !f.is_finite() {
            return Err(L2eError::NumericalOverflow(
                "objective is not finite".into(),
            ));
        }
        loss_trace.push(f);
        inner_beta_iters.push(bp.iters);
        inner_eta_iters.push(tp.iters);
        if f_prev.is_finite() && (f_prev - f).abs() <= opts.outer_tol * f_prev.abs() {
            converged = true;
            break;
        }
        f_prev = f;
    }

    let eta = tau.ln();
    let r = residuals(data, beta.view())?;
    Ok(FitReport {
        weights: case_weights(r.view(), eta),
        l2e_loss: l2e_loss_residuals(r.view(), eta),
        beta,
        eta,
        outer_iters: loss_trace.len(),
        loss_trace,
        inner_beta_iters,
        inner_eta_iters,
        converged,
        precision_diverged: tau >= hi,
        mad_fallback: init.mad_fallback && opts.init_eta.is_none(),
        rho_stages: 1,
        eta_unit_steps: 0,
        eta_steps: tau_steps,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{fit_l2e, FitOptions};
    use ndarray::{array, Array2};

    #[test]
    fn unsupported_penalties_are_rejected() {
        let d = Dataset::new(array![1.0, 2.0, 3.0], Array2::ones((3, 1))).unwrap();
        let pen = Penalty::mcp(0.1, None).unwrap();
        assert!(matches!(
            fit_pg(&d, &pen, &PgOptions::default()),
            Err(L2eError::InvalidArgument(_))
        ));
        let iso = Penalty::indicator(ConstraintSet::Isotonic);
        assert!(fit_pg(&d, &iso, &PgOptions::default()).is_err());
        let bad = PgOptions {
            tau_min: Some(2.0),
            tau_max: Some(1.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tau_gradient_matches_finite_difference() {
        let r = array![0.3, -1.2, 0.05, 2.0, -0.7];
        for &tau in &[0.3, 1.0, 2.5] {
            let h: f64 = 1e-6;
            let fd = (l2e_loss_residuals(r.view(), (tau + h).ln())
                - l2e_loss_residuals(r.view(), (tau - h).ln()))
                / (2.0 * h);
            assert!((grad_tau(r.view(), tau) - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn tau_stays_in_box_and_trace_descends() {
        let y = array![0.1, -0.3, 0.2, 0.05, 9.0, -0.15, 0.25, 0.0];
        let x = Array2::from_shape_fn((8, 2), |(i, j)| if j == 0 { 1.0 } else { i as f64 / 7.0 });
        let d = Dataset::new(y, x).unwrap();
        let opts = PgOptions {
            tau_min: Some(0.5),
            tau_max: Some(2.0),
            ..Default::default()
        };
        let rep = fit_pg(&d, &Penalty::None, &opts).unwrap();
        assert!(rep.tau() >= 0.5 && rep.tau() <= 2.0);
        for w in rep.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn agrees_with_block_descent_on_easy_data() {
        let x = Array2::from_shape_fn((12, 2), |(i, j)| if j == 0 { 1.0 } else { i as f64 });
        let noise = [
            0.3, -0.2, 0.1, -0.4, 0.25, 0.0, -0.1, 0.35, -0.3, 0.15, -0.05, 0.2,
        ];
        let y = Array1::from_shape_fn(12, |i| 1.0 + 0.5 * i as f64 + noise[i]);
        let d = Dataset::new(y, x).unwrap();
        let tight = FitOptions {
            outer_tol: 1e-14,
            beta_inner_tol: 1e-14,
            ..Default::default()
        };
        let mm = fit_l2e(&d, &Penalty::None, &tight).unwrap();
        let pg = fit_pg(
            &d,
            &Penalty::None,
            &PgOptions {
                max_outer: 2000,
                outer_tol: 1e-14,
                beta_inner_tol: 1e-14,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            (mm.l2e_loss - pg.l2e_loss).abs() < 1e-6,
            "{} vs {}",
            mm.l2e_loss,
            pg.l2e_loss
        );
    }

    #[test]
    fn isotonic_prox_yields_monotone_iterates() {
        let d = Dataset::identity(array![1.0, 3.0, 2.0, 4.0, 3.5]).unwrap();
        let pen = Penalty::indicator(ConstraintSet::Isotonic);
        let rep = fit_pg(&d, &pen, &PgOptions::default()).unwrap();
        assert!(rep.beta.windows(2).into_iter().all(|w| w[0] <= w[1]));
        assert!(rep.loss_trace.iter().all(|f| f.is_finite()));
    }
}
