//! The η block: modified Newton steps `η ← η − t · (∂h/∂η) / d` where `d`
//! is the positive curvature surrogate from [`crate::model`] and `t` comes
//! from Armijo backtracking started at 1.
//!
//! With a penalty value `φ = φ(β) > 0` the block objective is
//! `h + c(η) φ` with `c(η) = e^{3η} √(2/π) / n`; its η-derivatives add
//! `3cφ` to the gradient and `9cφ` to `d`. For `φ = 0` this is the plain
//! L2E update.

use ndarray::ArrayView1;

use crate::error::{L2eError, Result};
use crate::majorize::Penalty;
use crate::model::{clamp_eta, residuals, surrogate_scale, Dataset, WeightMoments, ETA_CAP};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Maximum Newton steps per call.
    pub max_inner: usize,
    pub armijo_sigma: f64,
    /// Backtracking factor applied to `t`.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Stop once `|∂h/∂η|` falls below this.
    pub grad_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_inner: 100,
            armijo_sigma: 1e-4,
            shrink: 0.5,
            max_backtracks: 30,
            grad_tol: 1e-10,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_inner >= 1
            && self.armijo_sigma > 0.0
            && self.armijo_sigma < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.grad_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(L2eError::InvalidArgument(format!(
                "invalid Newton options: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaUpdate {
    pub eta: f64,
    /// Newton iterations attempted (accepted steps plus a final stalled one).
    pub iters: usize,
    /// Steps accepted with `t = 1`.
    pub unit_steps: usize,
    /// Total step halvings across all iterations.
    pub backtracks: usize,
    /// η reached `±ETA_CAP`.
    pub hit_cap: bool,
    /// Backtracking exhausted without sufficient decrease.
    pub stalled: bool,
}

/// Modified Newton descent on `η ↦ h(β, e^η)` with `β` held fixed.
pub fn eta_update(
    data: &Dataset,
    beta: ArrayView1<f64>,
    eta0: f64,
    opts: &NewtonOptions,
) -> Result<EtaUpdate> {
    let r = residuals(data, beta)?;
    eta_update_residuals(r.view(), eta0, 0.0, opts)
}

/// Modified Newton descent on `η ↦ h(β, e^η) + c(η) φ(β)`.
pub fn eta_update_penalized(
    data: &Dataset,
    beta: ArrayView1<f64>,
    pen: &Penalty,
    eta0: f64,
    opts: &NewtonOptions,
) -> Result<EtaUpdate> {
    let r = residuals(data, beta)?;
    eta_update_residuals(r.view(), eta0, pen.value(beta)?, opts)
}

/// Block objective in η and its derivatives for fixed residuals and `φ`.
struct EtaObjective {
    moments: WeightMoments,
    phi: f64,
}

impl EtaObjective {
    fn new(r: ArrayView1<f64>, eta: f64, phi: f64) -> Self {
        EtaObjective {
            moments: WeightMoments::new(r, eta),
            phi,
        }
    }

    fn penalty(&self, eta: f64) -> f64 {
        if self.phi == 0.0 {
            0.0
        } else {
            surrogate_scale(eta, self.moments.n as usize) * self.phi
        }
    }

    fn value(&self, eta: f64) -> f64 {
        self.moments.loss(eta) + self.penalty(eta)
    }

    fn grad(&self, eta: f64) -> f64 {
        self.moments.grad_eta(eta) + 3.0 * self.penalty(eta)
    }

    fn curvature(&self, eta: f64) -> f64 {
        self.moments.curvature(eta) + 9.0 * self.penalty(eta)
    }
}

/// As [`eta_update`], from precomputed residuals and a penalty value `phi ≥ 0`
/// on the surrogate scale.
pub fn eta_update_residuals(
    r: ArrayView1<f64>,
    eta0: f64,
    phi: f64,
    opts: &NewtonOptions,
) -> Result<EtaUpdate> {
    opts.validate()?;
    if !eta0.is_finite() {
        return Err(L2eError::InvalidArgument("eta0 must be finite".into()));
    }
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(L2eError::InvalidArgument(format!(
            "penalty value must be finite and nonnegative, got {phi}"
        )));
    }
    let mut eta = clamp_eta(eta0);
    let mut out = EtaUpdate {
        eta,
        iters: 0,
        unit_steps: 0,
        backtracks: 0,
        hit_cap: eta.abs() >= ETA_CAP,
        stalled: false,
    };
    let mut obj = EtaObjective::new(r, eta, phi);
    let mut h = obj.value(eta);

    while out.iters < opts.max_inner && !out.hit_cap {
        let g = obj.grad(eta);
        if g.abs() < opts.grad_tol {
            break;
        }
        out.iters += 1;
        let d = obj.curvature(eta);
        let step = -g / d;
        let mut t = 1.0;
        let mut accepted = None;
        for bt in 0..=opts.max_backtracks {
            let cand = clamp_eta(eta + t * step);
            let m = EtaObjective::new(r, cand, phi);
            let h_cand = m.value(cand);
            // Armijo on the step actually taken (it may be clipped by the cap).
            if h_cand <= h + opts.armijo_sigma * g * (cand - eta) && cand != eta {
                accepted = Some((cand, m, h_cand, bt));
                break;
            }
            t *= opts.shrink;
        }
        match accepted {
            Some((cand, m, h_cand, bt)) => {
                out.backtracks += bt;
                if bt == 0 {
                    out.unit_steps += 1;
                }
                eta = cand;
                obj = m;
                h = h_cand;
                if eta.abs() >= ETA_CAP {
                    out.hit_cap = true;
                }
            }
            None => {
                out.backtracks += opts.max_backtracks;
                out.stalled = true;
                break;
            }
        }
    }
    out.eta = eta;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::l2e_loss_residuals;
    use ndarray::array;

    #[test]
    fn options_validation() {
        assert!(NewtonOptions::default().validate().is_ok());
        let bad = NewtonOptions {
            shrink: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = NewtonOptions {
            max_inner: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn perfect_fit_runs_to_the_cap() {
        let r = array![0.0, 0.0, 0.0];
        let out = eta_update_residuals(r.view(), 0.0, 0.0, &NewtonOptions::default()).unwrap();
        assert!(out.hit_cap);
        assert_eq!(out.eta, ETA_CAP);
        // Each unit step adds 2√2 − 1 to η.
        let few = NewtonOptions {
            max_inner: 3,
            ..Default::default()
        };
        let out = eta_update_residuals(r.view(), 0.0, 0.0, &few).unwrap();
        assert!(!out.hit_cap);
        assert!((out.eta - 3.0 * (2.0 * 2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn matches_grid_search_minimizer() {
        let r = array![-1.0, 1.0];
        let out = eta_update_residuals(r.view(), 0.0, 0.0, &NewtonOptions::default()).unwrap();
        let (mut best, mut best_h) = (0.0, f64::INFINITY);
        let steps = 100_000;
        for i in 0..=steps {
            let e = -5.0 + 10.0 * i as f64 / steps as f64;
            let h = l2e_loss_residuals(r.view(), e);
            if h < best_h {
                best = e;
                best_h = h;
            }
        }
        assert!((out.eta - best).abs() < 1e-3, "{} vs {}", out.eta, best);
        assert!(!out.hit_cap);
        let g = WeightMoments::new(r.view(), out.eta).grad_eta(out.eta);
        assert!(g.abs() < 1e-8, "gradient {g}");

        let again =
            eta_update_residuals(r.view(), out.eta, 0.0, &NewtonOptions::default()).unwrap();
        assert_eq!(again.eta, out.eta);
        assert!(again.iters <= 1);
    }

    #[test]
    fn stationary_point_has_closed_form() {
        // r = ±1: stationarity of h in η gives τ² = x where
        // 1/(2√π) = √(2/π) e^{−x/2} (1 − x); solve by bisection as a cross-check.
        let r = array![-1.0, 1.0];
        let out = eta_update_residuals(r.view(), 0.0, 0.0, &NewtonOptions::default()).unwrap();
        let f = |x: f64| {
            0.5 / std::f64::consts::PI.sqrt()
                - (2.0 / std::f64::consts::PI).sqrt() * (-x / 2.0).exp() * (1.0 - x)
        };
        let (mut lo, mut hi) = (0.0, 0.99);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let tau_sq = 0.5 * (lo + hi);
        assert!(((2.0 * out.eta).exp() - tau_sq).abs() < 1e-8);
    }

    #[test]
    fn penalty_term_lowers_the_precision() {
        let r = array![-1.0, 1.0, 0.5, -0.3];
        let plain = eta_update_residuals(r.view(), 0.0, 0.0, &NewtonOptions::default()).unwrap();
        let pen = eta_update_residuals(r.view(), 0.0, 2.0, &NewtonOptions::default()).unwrap();
        assert!(pen.eta < plain.eta);
        // Stationarity of h + c(η)φ at the returned point.
        let obj = EtaObjective::new(r.view(), pen.eta, 2.0);
        assert!(obj.grad(pen.eta).abs() < 1e-8);
        assert!(
            eta_update_residuals(r.view(), 0.0, f64::INFINITY, &NewtonOptions::default()).is_err()
        );
    }
}
