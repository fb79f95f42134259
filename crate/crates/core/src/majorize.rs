//! The β block: sharp quadratic majorization of the L2E loss.
//!
//! Each case contributes `−exp(−a r_i²)` (with `a = τ²/2`) to the loss, a
//! concave function of `r_i²`. Linearizing in `r_i²` at the current residual
//! gives the quadratic
//!
//! ```text
//! g(r | r_k) = −e^{−a r_k²} + a e^{−a r_k²} (r² − r_k²)
//! ```
//!
//! which touches `−e^{−a r²}` at `r = ±r_k` and lies above it elsewhere.
//! Summing over cases, the loss is majorized (up to an additive constant) by
//! `c · ½‖ỹ − X̃β‖²` with `c = (τ³/n)√(2/π)`, `ỹ = √W y`, `X̃ = √W X` and
//! `W = diag(w)`. Each MM step minimizes `½‖ỹ − X̃β‖² + φ(β)`, a penalized
//! weighted least squares problem.
//!
//! Penalty parameters therefore live on the scale of the normalized
//! surrogate, and the objective decreased by every step is
//! `F(β, τ) = h(β, τ) + c(τ) φ(β)`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, L2eError, Result};
use crate::linalg;
use crate::model::{
    case_weights, l2e_loss_residuals, residuals, surrogate_scale, Dataset, Design, FitState,
};
use crate::projections::{project_isotonic, ConstraintSet, FusionMatrix};

pub const DEFAULT_MCP_GAMMA: f64 = 3.0;

/// Sweep cap for coordinate descent.
pub const CD_MAX_SWEEPS: usize = 10_000;

/// Per-coordinate convergence tolerance for coordinate descent.
pub const CD_TOL: f64 = 1e-8;

/// The penalty φ(β).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    None,
    Lasso {
        lambda: f64,
    },
    Mcp {
        lambda: f64,
        gamma: f64,
    },
    /// 0/∞ indicator of a constraint set.
    Indicator {
        set: ConstraintSet,
    },
    /// `ρ/2 · dist(Dβ, C)²`
    Distance {
        rho: f64,
        fusion: FusionMatrix,
        set: ConstraintSet,
    },
}

impl Penalty {
    pub fn lasso(lambda: f64) -> Result<Self> {
        let pen = Penalty::Lasso { lambda };
        pen.check_params()?;
        Ok(pen)
    }

    /// MCP with `gamma` defaulting to [`DEFAULT_MCP_GAMMA`].
    pub fn mcp(lambda: f64, gamma: Option<f64>) -> Result<Self> {
        let pen = Penalty::Mcp {
            lambda,
            gamma: gamma.unwrap_or(DEFAULT_MCP_GAMMA),
        };
        pen.check_params()?;
        Ok(pen)
    }

    pub fn indicator(set: ConstraintSet) -> Self {
        Penalty::Indicator { set }
    }

    pub fn distance(rho: f64, fusion: FusionMatrix, set: ConstraintSet) -> Result<Self> {
        let pen = Penalty::Distance { rho, fusion, set };
        pen.check_params()?;
        Ok(pen)
    }

    /// Distance to the `k`-sparse set with `D = I_p`.
    pub fn sparse_distance(rho: f64, p: usize, k: usize) -> Result<Self> {
        Self::distance(rho, FusionMatrix::identity(p), ConstraintSet::Sparse(k))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Penalty::None => "none",
            Penalty::Lasso { .. } => "lasso",
            Penalty::Mcp { .. } => "mcp",
            Penalty::Indicator { .. } => "indicator",
            Penalty::Distance { .. } => "distance",
        }
    }

    fn check_params(&self) -> Result<()> {
        let bad = |msg: String| Err(L2eError::InvalidArgument(msg));
        match *self {
            Penalty::Lasso { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                bad(format!("lasso lambda must be nonnegative, got {lambda}"))
            }
            Penalty::Mcp { lambda, gamma } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    bad(format!("mcp lambda must be nonnegative, got {lambda}"))
                } else if !(gamma > 1.0 && gamma.is_finite()) {
                    bad(format!("mcp gamma must exceed 1, got {gamma}"))
                } else {
                    Ok(())
                }
            }
            Penalty::Distance { rho, set, .. } => {
                if !(rho > 0.0 && rho.is_finite()) {
                    bad(format!("distance rho must be positive, got {rho}"))
                } else if set == ConstraintSet::Sparse(0) {
                    bad("sparsity level must be at least 1".into())
                } else {
                    Ok(())
                }
            }
            Penalty::Indicator {
                set: ConstraintSet::Sparse(0),
            } => bad("sparsity level must be at least 1".into()),
            _ => Ok(()),
        }
    }

    /// Checks parameters and compatibility with `p` coefficients.
    pub fn validate(&self, p: usize) -> Result<()> {
        self.check_params()?;
        if let Penalty::Distance { fusion, .. } = self {
            check_len("fusion matrix columns", p, fusion.cols())?;
        }
        Ok(())
    }

    /// Same penalty with a different ρ; identity for non-distance penalties.
    pub fn with_rho(&self, rho: f64) -> Penalty {
        match self {
            Penalty::Distance { fusion, set, .. } => Penalty::Distance {
                rho,
                fusion: fusion.clone(),
                set: *set,
            },
            other => other.clone(),
        }
    }

    /// φ(β) on the surrogate scale. Indicators evaluate to `+∞` off the set.
    pub fn value(&self, beta: ArrayView1<f64>) -> Result<f64> {
        Ok(match self {
            Penalty::None => 0.0,
            Penalty::Lasso { lambda } => lambda * beta.iter().map(|b| b.abs()).sum::<f64>(),
            Penalty::Mcp { lambda, gamma } => {
                beta.iter().map(|&b| mcp_value(b, *lambda, *gamma)).sum()
            }
            Penalty::Indicator { set } => {
                if is_feasible(set, beta) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Penalty::Distance { rho, fusion, set } => {
                let d = set.distance(fusion.apply(beta).view())?;
                0.5 * rho * d * d
            }
        })
    }
}

fn is_feasible(set: &ConstraintSet, beta: ArrayView1<f64>) -> bool {
    match *set {
        ConstraintSet::WholeSpace => true,
        ConstraintSet::Nonnegative => beta.iter().all(|&b| b >= 0.0),
        ConstraintSet::Isotonic => beta.windows(2).into_iter().all(|w| w[0] <= w[1]),
        ConstraintSet::Sparse(k) => beta.iter().filter(|&&b| b != 0.0).count() <= k,
    }
}

/// Minimax concave penalty of a single coefficient.
pub fn mcp_value(b: f64, lambda: f64, gamma: f64) -> f64 {
    let a = b.abs();
    if a <= gamma * lambda {
        lambda * a - a * a / (2.0 * gamma)
    } else {
        0.5 * gamma * lambda * lambda
    }
}

/// `−e^{−a r²}`, one case's contribution to the loss up to scale.
pub fn case_loss_term(r: f64, a: f64) -> f64 {
    -(-a * r * r).exp()
}

/// The sharp quadratic majorizer of [`case_loss_term`] anchored at `r_anchor`.
pub fn sharp_majorizer(r: f64, r_anchor: f64, a: f64) -> f64 {
    let e = (-a * r_anchor * r_anchor).exp();
    -e + a * e * (r * r - r_anchor * r_anchor)
}

/// `ỹ = √W y`, `X̃ = √W X`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSystem {
    pub y: Array1<f64>,
    pub x: Design,
}

impl WeightedSystem {
    /// `½‖ỹ − X̃β‖²`
    pub fn objective(&self, beta: ArrayView1<f64>) -> f64 {
        let r = &self.y - &self.x.matvec(beta);
        0.5 * r.dot(&r)
    }
}

pub fn build_weighted_system(data: &Dataset, weights: ArrayView1<f64>) -> Result<WeightedSystem> {
    check_len("case weights", data.n(), weights.len())?;
    if let Some(bad) = weights.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
        return Err(L2eError::InvalidArgument(format!(
            "case weights must be positive, got {bad}"
        )));
    }
    let s = weights.mapv(f64::sqrt);
    Ok(WeightedSystem {
        y: &s * data.y(),
        x: data.design().scale_rows(s.view()),
    })
}

/// Unpenalized surrogate minimizer (minimum-norm when rank deficient).
pub fn solve_wls(sys: &WeightedSystem) -> Array1<f64> {
    match &sys.x {
        Design::Dense(x) => linalg::least_squares(x, &sys.y),
        Design::Diagonal(d) => d
            .iter()
            .zip(sys.y.iter())
            .map(|(&dj, &yj)| if dj != 0.0 { yj / dj } else { 0.0 })
            .collect(),
    }
}

pub(crate) fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `argmin_b ½ s (b − z)² + λ|b|`
fn lasso_coordinate(z: f64, s: f64, lambda: f64) -> f64 {
    soft_threshold(s * z, lambda) / s
}

/// `argmin_b ½ s (b − z)² + MCP(b; λ, γ)`, exact for any `s, γ > 0`.
fn mcp_coordinate(z: f64, s: f64, lambda: f64, gamma: f64) -> f64 {
    let knot = gamma * lambda;
    let q = |b: f64| 0.5 * s * (b - z) * (b - z) + mcp_value(b, lambda, gamma);
    // Outer region: penalty flat, so the quadratic's minimizer projected onto |b| ≥ γλ.
    let outer = z.signum() * z.abs().max(knot);
    let mut best = 0.0_f64;
    let mut best_q = q(0.0);
    let mut consider = |b: f64| {
        let v = q(b);
        if v < best_q || (v == best_q && b.abs() < best.abs()) {
            best = b;
            best_q = v;
        }
    };
    consider(outer);
    if s > 1.0 / gamma {
        let inner = (soft_threshold(s * z, lambda) / (s - 1.0 / gamma)).clamp(-knot, knot);
        consider(inner);
    } else {
        consider(knot);
        consider(-knot);
    }
    best
}

/// Cyclic coordinate descent on `½‖ỹ − X̃β‖² + Σ pen(β_j)` where
/// `coordinate(z, s)` minimizes `½ s (b − z)² + pen(b)`.
fn coordinate_descent<F>(
    sys: &WeightedSystem,
    start: ArrayView1<f64>,
    coordinate: F,
    kkt_lambda: Option<f64>,
) -> Array1<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let mut beta = start.to_owned();
    match &sys.x {
        Design::Diagonal(d) => {
            for (j, b) in beta.iter_mut().enumerate() {
                let s = d[j] * d[j];
                *b = if s > 0.0 {
                    coordinate(sys.y[j] / d[j], s)
                } else {
                    0.0
                };
            }
            beta
        }
        Design::Dense(x) if x.ncols() <= x.nrows() => {
            gram_descent(x, &sys.y, beta, coordinate, kkt_lambda)
        }
        Design::Dense(x) => {
            // Columns as contiguous rows.
            let cols: Array2<f64> = x.t().as_standard_layout().into_owned();
            let norms: Vec<f64> = cols.axis_iter(Axis(0)).map(|c| c.dot(&c)).collect();
            let mut r = &sys.y - &x.dot(&beta);
            for _ in 0..CD_MAX_SWEEPS {
                let mut max_change = 0.0_f64;
                for (j, col) in cols.axis_iter(Axis(0)).enumerate() {
                    let s = norms[j];
                    let old = beta[j];
                    let new = if s > 0.0 {
                        coordinate(old + col.dot(&r) / s, s)
                    } else {
                        0.0
                    };
                    let delta = new - old;
                    if delta != 0.0 {
                        r.scaled_add(-delta, &col);
                        beta[j] = new;
                        max_change = max_change.max(s * delta.abs());
                    }
                }
                if max_change <= CD_TOL {
                    let g = cols.dot(&r);
                    match kkt_lambda {
                        Some(lambda) if lasso_kkt_violation(&g, &beta, lambda) > CD_TOL => {}
                        _ => break,
                    }
                }
            }
            beta
        }
    }
}

/// Coordinate descent with covariance updates: works with `G = X̃ᵀX̃` and
/// the gradient `X̃ᵀ(ỹ − X̃β)`, so a coordinate step costs `O(p)`.
fn gram_descent<F>(
    x: &Array2<f64>,
    y: &Array1<f64>,
    mut beta: Array1<f64>,
    coordinate: F,
    kkt_lambda: Option<f64>,
) -> Array1<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let gram = x.t().dot(x);
    let xty = x.t().dot(y);
    let mut g = &xty - &gram.dot(&beta);
    for sweep in 0..CD_MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for j in 0..beta.len() {
            let s = gram[[j, j]];
            let old = beta[j];
            let new = if s > 0.0 {
                coordinate(old + g[j] / s, s)
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                g.scaled_add(-delta, &gram.row(j));
                beta[j] = new;
                max_change = max_change.max(s * delta.abs());
            }
        }
        if max_change <= CD_TOL {
            // Refresh the gradient to shed accumulated rounding before the final check.
            g = &xty - &gram.dot(&beta);
            match kkt_lambda {
                Some(lambda)
                    if lasso_kkt_violation(&g, &beta, lambda) > CD_TOL
                        && sweep + 1 < CD_MAX_SWEEPS => {}
                _ => break,
            }
        }
    }
    beta
}

/// Largest violation of the lasso subgradient conditions given `g = X̃ᵀ(ỹ − X̃β)`.
fn lasso_kkt_violation(g: &Array1<f64>, beta: &Array1<f64>, lambda: f64) -> f64 {
    g.iter()
        .zip(beta.iter())
        .map(|(&g, &b)| {
            if b > 0.0 {
                (g - lambda).abs()
            } else if b < 0.0 {
                (g + lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Lasso on the surrogate, `½‖ỹ − X̃β‖² + λ‖β‖₁`, from a zero start.
pub fn solve_wls_lasso(sys: &WeightedSystem, lambda: f64) -> Array1<f64> {
    solve_wls_lasso_from(sys, lambda, Array1::zeros(sys.x.ncols()).view())
}

/// Lasso on the surrogate, warm-started at `start`.
pub fn solve_wls_lasso_from(
    sys: &WeightedSystem,
    lambda: f64,
    start: ArrayView1<f64>,
) -> Array1<f64> {
    coordinate_descent(
        sys,
        start,
        |z, s| lasso_coordinate(z, s, lambda),
        Some(lambda),
    )
}

/// MCP on the surrogate from a zero start.
pub fn solve_wls_mcp(sys: &WeightedSystem, lambda: f64, gamma: f64) -> Array1<f64> {
    solve_wls_mcp_from(sys, lambda, gamma, Array1::zeros(sys.x.ncols()).view())
}

/// MCP on the surrogate, warm-started at `start`.
pub fn solve_wls_mcp_from(
    sys: &WeightedSystem,
    lambda: f64,
    gamma: f64,
    start: ArrayView1<f64>,
) -> Array1<f64> {
    coordinate_descent(sys, start, |z, s| mcp_coordinate(z, s, lambda, gamma), None)
}

/// Diagonal of a structurally diagonal design.
fn diagonal_of(x: &Design) -> Option<Array1<f64>> {
    match x {
        Design::Diagonal(d) => Some(d.clone()),
        Design::Dense(m) => {
            let off_diag_zero =
                m.is_square() && m.indexed_iter().all(|((i, j), &v)| i == j || v == 0.0);
            off_diag_zero.then(|| m.diag().to_owned())
        }
    }
}

/// Exact minimizer of `½‖ỹ − X̃β‖²` over a constraint set. Sets other than
/// the whole space need a diagonal design with a nonzero diagonal, where the
/// problem separates into a weighted projection.
pub fn solve_wls_indicator(sys: &WeightedSystem, set: ConstraintSet) -> Result<Array1<f64>> {
    if set == ConstraintSet::WholeSpace {
        return Ok(solve_wls(sys));
    }
    let unsupported = || {
        L2eError::Unsupported(format!(
            "{set:?} constraint requires a diagonal design with nonzero diagonal"
        ))
    };
    let d = diagonal_of(&sys.x).ok_or_else(unsupported)?;
    if d.iter().any(|&v| v == 0.0) {
        return Err(unsupported());
    }
    // ½ Σ (ỹ_i − d_i β_i)² = ½ Σ d_i² (ỹ_i/d_i − β_i)²
    let v = &sys.y / &d;
    let w = d.mapv(|x| x * x);
    match set {
        ConstraintSet::Isotonic => project_isotonic(v.view(), w.view()),
        ConstraintSet::Nonnegative => Ok(v.mapv(|x| x.max(0.0))),
        ConstraintSet::Sparse(k) => {
            if k == 0 {
                return Err(L2eError::InvalidArgument(
                    "sparsity level must be at least 1".into(),
                ));
            }
            // Keeping coordinate i saves ỹ_i².
            let mut order: Vec<usize> = (0..v.len()).collect();
            order.sort_by(|&a, &b| sys.y[b].abs().total_cmp(&sys.y[a].abs()).then(a.cmp(&b)));
            let mut out = Array1::zeros(v.len());
            for &i in order.iter().take(k) {
                out[i] = v[i];
            }
            Ok(out)
        }
        ConstraintSet::WholeSpace => unreachable!(),
    }
}

/// One distance-majorization step: minimizes
/// `½‖ỹ − X̃β‖² + ρ/2 ‖Dβ − P_C(Dβ_prev)‖²` as the stacked least squares
/// problem `[X̃; √ρ D] β ≈ [ỹ; √ρ P_C(Dβ_prev)]`.
pub fn solve_wls_distance(
    sys: &WeightedSystem,
    rho: f64,
    fusion: &FusionMatrix,
    set: ConstraintSet,
    beta_prev: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if !(rho > 0.0) {
        return Err(L2eError::InvalidArgument(format!(
            "distance rho must be positive, got {rho}"
        )));
    }
    let p = sys.x.ncols();
    check_len("fusion matrix columns", p, fusion.cols())?;
    check_len("previous coefficients", p, beta_prev.len())?;
    let target = set.project(fusion.apply(beta_prev).view())?;

    if let (Design::Diagonal(d), true) = (&sys.x, fusion.is_identity()) {
        // Separable: (d_j² + ρ) β_j = d_j ỹ_j + ρ t_j.
        return Ok((0..p)
            .map(|j| (d[j] * sys.y[j] + rho * target[j]) / (d[j] * d[j] + rho))
            .collect());
    }

    let dense_x;
    let x = match &sys.x {
        Design::Dense(x) => x,
        other => {
            dense_x = other.to_dense();
            &dense_x
        }
    };
    // Normal equations when well conditioned, else the stacked orthogonal solve.
    let mut normal = x.t().dot(x);
    fusion.add_gram_to(&mut normal, rho);
    let rhs = x.t().dot(&sys.y) + fusion.apply_transpose(target.view()) * rho;
    if let Some(beta) = linalg::cholesky_solve(&normal, &rhs) {
        return Ok(beta);
    }
    let (n, m) = (x.nrows(), fusion.rows());
    let sr = rho.sqrt();
    let mut a = Array2::zeros((n + m, p));
    a.slice_mut(ndarray::s![..n, ..]).assign(x);
    a.slice_mut(ndarray::s![n.., ..])
        .assign(&(fusion.to_dense() * sr));
    let mut b = Array1::zeros(n + m);
    b.slice_mut(ndarray::s![..n]).assign(&sys.y);
    b.slice_mut(ndarray::s![n..]).assign(&(target * sr));
    Ok(linalg::least_squares(&a, &b))
}

/// Outcome of the inner β loop.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaUpdate {
    pub beta: Array1<f64>,
    /// Surrogate solves performed.
    pub iters: usize,
    /// [`penalized_objective`] before the loop and after each accepted step.
    pub objective_trace: Vec<f64>,
}

/// `F = h(β, e^η) + c(η) φ(β)` with `c` the surrogate scale.
pub fn penalized_objective(
    data: &Dataset,
    beta: ArrayView1<f64>,
    eta: f64,
    pen: &Penalty,
) -> Result<f64> {
    let r = residuals(data, beta)?;
    objective_from_residuals(r.view(), eta, surrogate_scale(eta, data.n()), pen, beta)
}

fn objective_from_residuals(
    r: ArrayView1<f64>,
    eta: f64,
    c: f64,
    pen: &Penalty,
    beta: ArrayView1<f64>,
) -> Result<f64> {
    let phi = pen.value(beta)?;
    let scaled = if phi == 0.0 { 0.0 } else { c * phi };
    Ok(l2e_loss_residuals(r, eta) + scaled)
}

/// Repeated MM steps for β at fixed η: recompute weights, build the weighted
/// system and solve the penalized surrogate, until the relative change of
/// [`penalized_objective`] drops below `tol` or `max_inner` solves have run. A step that
/// would raise the objective (possible only through rounding) is discarded
/// and ends the loop.
pub fn mm_beta_update(
    data: &Dataset,
    state: &FitState,
    pen: &Penalty,
    max_inner: usize,
    tol: f64,
) -> Result<BetaUpdate> {
    if max_inner == 0 {
        return Err(L2eError::InvalidArgument(
            "max_inner must be at least 1".into(),
        ));
    }
    pen.validate(data.p())?;
    check_len("coefficient vector", data.p(), state.beta.len())?;
    let eta = state.eta;
    let c = surrogate_scale(eta, data.n());

    let mut beta = state.beta.clone();
    let mut r = residuals(data, beta.view())?;
    let mut f_prev = objective_from_residuals(r.view(), eta, c, pen, beta.view())?;
    let mut trace = vec![f_prev];
    let mut iters = 0;

    while iters < max_inner {
        iters += 1;
        let w = case_weights(r.view(), eta);
        let sys = build_weighted_system(data, w.view())?;
        let cand = match pen {
            Penalty::None => solve_wls(&sys),
            Penalty::Lasso { lambda } => solve_wls_lasso_from(&sys, *lambda, beta.view()),
            Penalty::Mcp { lambda, gamma } => {
                solve_wls_mcp_from(&sys, *lambda, *gamma, beta.view())
            }
            Penalty::Indicator { set } => solve_wls_indicator(&sys, *set)?,
            Penalty::Distance { rho, fusion, set } => {
                solve_wls_distance(&sys, *rho, fusion, *set, beta.view())?
            }
        };
        let r_cand = residuals(data, cand.view())?;
        let f = objective_from_residuals(r_cand.view(), eta, c, pen, cand.view())?;
        if !f.is_finite() {
            return Err(L2eError::NumericalOverflow(
                "penalized objective is not finite after a beta step".into(),
            ));
        }
        if f_prev.is_finite() && f > f_prev {
            break;
        }
        let done = f_prev.is_finite() && (f_prev - f).abs() <= tol * f_prev.abs();
        beta = cand;
        r = r_cand;
        trace.push(f);
        f_prev = f;
        if done {
            break;
        }
    }
    Ok(BetaUpdate {
        beta,
        iters,
        objective_trace: trace,
    })
}
