//! The L2E loss for the Gaussian linear model and its block derivatives.
//!
//! With residuals `r_i = y_i − x_iᵀβ`, precision `τ = e^η` and case weights
//! `w_i = exp(−τ² r_i² / 2)`:
//!
//! ```text
//! h      = τ/(2√π) − (τ/n)√(2/π) Σ w_i
//! ∇_β h  = −(τ³/n)√(2/π) Σ w_i r_i x_i
//! ∂h/∂η  = τ/(2√π) − (τ/n)√(2/π) Σ w_i + (τ³/n)√(2/π) Σ w_i r_i²
//! d      = τ/(2√π) + (4τ³/n)√(2/π) Σ w_i r_i²          (≥ ∂²h/∂η²)
//! ```
//!
//! Every reduction over cases uses Neumaier-compensated summation so that
//! losses produced by different solvers can be compared at the 1e−12 level.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{check_len, L2eError, Result};

/// Hard bound on |η|. `e^{5·50}` is still finite in f64.
pub const ETA_CAP: f64 = 50.0;

/// Lower clamp applied to every case weight.
pub const WEIGHT_FLOOR: f64 = 1e-300;

pub(crate) const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// 1 / (2√π)
pub(crate) const INV_TWO_SQRT_PI: f64 = 0.282_094_791_773_878_14;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn clamp_eta(eta: f64) -> f64 {
    eta.clamp(-ETA_CAP, ETA_CAP)
}

/// Design matrix. Identity-like designs (isotonic regression, signal
/// denoising) are stored as a diagonal so that an `n = 1000` problem does not
/// materialize a million-entry matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Dense(Array2<f64>),
    /// Square diagonal matrix given by its diagonal.
    Diagonal(Array1<f64>),
}

impl Design {
    pub fn identity(n: usize) -> Self {
        Design::Diagonal(Array1::ones(n))
    }

    pub fn nrows(&self) -> usize {
        match self {
            Design::Dense(x) => x.nrows(),
            Design::Diagonal(d) => d.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Design::Dense(x) => x.ncols(),
            Design::Diagonal(d) => d.len(),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Design::Diagonal(d) => d.iter().all(|&v| v == 1.0),
            Design::Dense(x) => {
                x.is_square()
                    && x.indexed_iter()
                        .all(|((i, j), &v)| if i == j { v == 1.0 } else { v == 0.0 })
            }
        }
    }

    /// `Xβ`
    pub fn matvec(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Design::Dense(x) => x.dot(&beta),
            Design::Diagonal(d) => d * &beta,
        }
    }

    /// `Xᵀv`
    pub fn tr_matvec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Design::Dense(x) => x.t().dot(&v),
            Design::Diagonal(d) => d * &v,
        }
    }

    /// `Xᵀv` with each column reduction compensated.
    pub(crate) fn tr_matvec_compensated(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Design::Dense(x) => x
                .axis_iter(Axis(1))
                .map(|col| compensated_sum(col.iter().zip(v.iter()).map(|(a, b)| a * b)))
                .collect(),
            Design::Diagonal(d) => d * &v,
        }
    }

    /// Multiplies row `i` by `s_i`.
    pub fn scale_rows(&self, s: ArrayView1<f64>) -> Design {
        match self {
            Design::Dense(x) => {
                let mut out = x.clone();
                for (mut row, &si) in out.axis_iter_mut(Axis(0)).zip(s.iter()) {
                    row *= si;
                }
                Design::Dense(out)
            }
            Design::Diagonal(d) => Design::Diagonal(d * &s),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Design::Dense(x) => x.clone(),
            Design::Diagonal(d) => Array2::from_diag(d),
        }
    }

    /// Squared Euclidean norm of each column.
    pub fn column_sq_norms(&self) -> Array1<f64> {
        match self {
            Design::Dense(x) => x
                .axis_iter(Axis(1))
                .map(|c| c.iter().map(|v| v * v).sum())
                .collect(),
            Design::Diagonal(d) => d.mapv(|v| v * v),
        }
    }

    /// Largest eigenvalue of `XᵀX`. Exact for diagonal designs, power
    /// iteration otherwise.
    pub fn spectral_norm_sq(&self) -> f64 {
        match self {
            Design::Diagonal(d) => d.iter().fold(0.0, |m, v| m.max(v * v)),
            Design::Dense(x) => {
                let p = x.ncols();
                let mut v = Array1::from_elem(p, 1.0 / (p as f64).sqrt());
                let mut lambda = 0.0;
                for _ in 0..500 {
                    let xv = x.dot(&v);
                    let w = x.t().dot(&xv);
                    let norm = w.dot(&w).sqrt();
                    if norm == 0.0 {
                        return 0.0;
                    }
                    let next = v.dot(&w);
                    v = w / norm;
                    if (next - lambda).abs() <= 1e-12 * next.abs() {
                        lambda = next;
                        break;
                    }
                    lambda = next;
                }
                lambda
            }
        }
    }

    /// Keeps the rows listed in `rows`. Diagonal designs become dense since
    /// the result is no longer square.
    pub fn select_rows(&self, rows: &[usize]) -> Design {
        match self {
            Design::Dense(x) => Design::Dense(x.select(Axis(0), rows)),
            Design::Diagonal(_) => Design::Dense(self.to_dense().select(Axis(0), rows)),
        }
    }

    fn all_finite(&self) -> bool {
        match self {
            Design::Dense(x) => x.iter().all(|v| v.is_finite()),
            Design::Diagonal(d) => d.iter().all(|v| v.is_finite()),
        }
    }
}

/// Responses `y` (length n) and design `X` (n × p).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Array1<f64>,
    x: Design,
}

impl Dataset {
    pub fn new(y: Array1<f64>, x: Array2<f64>) -> Result<Self> {
        Self::with_design(y, Design::Dense(x))
    }

    /// Dataset with `X = I_n`.
    pub fn identity(y: Array1<f64>) -> Result<Self> {
        let n = y.len();
        Self::with_design(y, Design::identity(n))
    }

    pub fn with_design(y: Array1<f64>, x: Design) -> Result<Self> {
        if y.is_empty() || x.ncols() == 0 {
            return Err(L2eError::InvalidArgument(
                "dataset needs at least one case and one predictor".into(),
            ));
        }
        check_len("design rows", y.len(), x.nrows())?;
        if !y.iter().all(|v| v.is_finite()) || !x.all_finite() {
            return Err(L2eError::InvalidArgument(
                "dataset contains non-finite entries".into(),
            ));
        }
        Ok(Dataset { y, x })
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn design(&self) -> &Design {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Subset of cases, used for cross-validation folds.
    pub fn select_cases(&self, rows: &[usize]) -> Result<Dataset> {
        let y: Array1<f64> = rows.iter().map(|&i| self.y[i]).collect();
        Dataset::with_design(y, self.x.select_rows(rows))
    }
}

/// β, η and the case weights they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub beta: Array1<f64>,
    pub eta: f64,
    pub weights: Array1<f64>,
}

impl FitState {
    /// Builds a state, clamping η to `±ETA_CAP` and computing the weights.
    pub fn new(data: &Dataset, beta: Array1<f64>, eta: f64) -> Result<Self> {
        if !eta.is_finite() {
            return Err(L2eError::InvalidArgument("eta must be finite".into()));
        }
        let eta = clamp_eta(eta);
        let r = residuals(data, beta.view())?;
        let weights = case_weights(r.view(), eta);
        Ok(FitState { beta, eta, weights })
    }

    pub fn tau(&self) -> f64 {
        self.eta.exp()
    }
}

/// Value of the L2E objective.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LossValue(pub f64);

impl LossValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `r = y − Xβ`
pub fn residuals(data: &Dataset, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len("coefficient vector", data.p(), beta.len())?;
    let fitted = data.x.matvec(beta);
    Ok(&data.y - &fitted)
}

/// `w_i = max(exp(−e^{2η} r_i² / 2), WEIGHT_FLOOR)`
pub fn case_weights(residuals: ArrayView1<f64>, eta: f64) -> Array1<f64> {
    let tau_sq = (2.0 * eta).exp();
    residuals.mapv(|r| (-0.5 * tau_sq * r * r).exp().max(WEIGHT_FLOOR))
}

/// Compensated sums `Σw`, `Σw r²`, `Σw r⁴` that all η-derivatives need.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WeightMoments {
    pub s0: f64,
    pub s2: f64,
    pub s4: f64,
    pub n: f64,
}

impl WeightMoments {
    pub fn new(residuals: ArrayView1<f64>, eta: f64) -> Self {
        let tau_sq = (2.0 * eta).exp();
        let w: Vec<f64> = residuals
            .iter()
            .map(|&r| (-0.5 * tau_sq * r * r).exp().max(WEIGHT_FLOOR))
            .collect();
        let s0 = compensated_sum(w.iter().copied());
        let s2 = compensated_sum(w.iter().zip(residuals.iter()).map(|(w, r)| w * r * r));
        let s4 = compensated_sum(
            w.iter()
                .zip(residuals.iter())
                .map(|(w, r)| w * r * r * r * r),
        );
        WeightMoments {
            s0,
            s2,
            s4,
            n: residuals.len() as f64,
        }
    }

    pub fn loss(&self, eta: f64) -> f64 {
        let tau = eta.exp();
        tau * INV_TWO_SQRT_PI - tau / self.n * SQRT_2_OVER_PI * self.s0
    }

    pub fn grad_eta(&self, eta: f64) -> f64 {
        let tau = eta.exp();
        let tau3 = (3.0 * eta).exp();
        tau * INV_TWO_SQRT_PI - tau / self.n * SQRT_2_OVER_PI * self.s0
            + tau3 / self.n * SQRT_2_OVER_PI * self.s2
    }

    pub fn curvature(&self, eta: f64) -> f64 {
        let tau = eta.exp();
        let tau3 = (3.0 * eta).exp();
        tau * INV_TWO_SQRT_PI + 4.0 * tau3 / self.n * SQRT_2_OVER_PI * self.s2
    }

    pub fn exact_second(&self, eta: f64) -> f64 {
        let tau = eta.exp();
        let tau5 = (5.0 * eta).exp();
        self.curvature(eta)
            - tau / self.n * SQRT_2_OVER_PI * self.s0
            - tau5 / self.n * SQRT_2_OVER_PI * self.s4
    }
}

fn finite_or_overflow(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(L2eError::NumericalOverflow(format!("{what} is not finite")))
    }
}

/// L2E loss of a residual vector at log-precision `eta`.
pub fn l2e_loss_residuals(residuals: ArrayView1<f64>, eta: f64) -> f64 {
    WeightMoments::new(residuals, eta).loss(eta)
}

/// L2E loss `h(β, e^η)`.
pub fn l2e_loss(data: &Dataset, beta: ArrayView1<f64>, eta: f64) -> Result<LossValue> {
    let r = residuals(data, beta)?;
    finite_or_overflow(l2e_loss_residuals(r.view(), eta), "l2e loss").map(LossValue)
}

/// Scale factor `(τ³/n)√(2/π)` linking the weighted least squares surrogate
/// `½Σ w_i r_i²` to the loss: `∇_β h = −c · Xᵀ(w ∘ r)`.
pub fn surrogate_scale(eta: f64, n: usize) -> f64 {
    (3.0 * eta).exp() / n as f64 * SQRT_2_OVER_PI
}

pub(crate) fn grad_beta_residuals(
    data: &Dataset,
    residuals: ArrayView1<f64>,
    eta: f64,
) -> Array1<f64> {
    let w = case_weights(residuals, eta);
    let wr = &w * &residuals;
    let c = surrogate_scale(eta, data.n());
    data.x.tr_matvec_compensated(wr.view()) * (-c)
}

/// `∇_β h(β, e^η)`
pub fn grad_beta(data: &Dataset, beta: ArrayView1<f64>, eta: f64) -> Result<Array1<f64>> {
    let r = residuals(data, beta)?;
    let g = grad_beta_residuals(data, r.view(), eta);
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(L2eError::NumericalOverflow(
            "beta gradient is not finite".into(),
        ))
    }
}

/// `∂h/∂η` at `(β, η)`.
pub fn grad_eta(data: &Dataset, beta: ArrayView1<f64>, eta: f64) -> Result<f64> {
    let r = residuals(data, beta)?;
    finite_or_overflow(
        WeightMoments::new(r.view(), eta).grad_eta(eta),
        "eta gradient",
    )
}

/// Positive curvature surrogate `d` for `∂²h/∂η²`, dropping the two
/// nonpositive terms of the exact second derivative.
pub fn hess_eta_approx(data: &Dataset, beta: ArrayView1<f64>, eta: f64) -> Result<f64> {
    let r = residuals(data, beta)?;
    finite_or_overflow(
        WeightMoments::new(r.view(), eta).curvature(eta),
        "eta curvature",
    )
}

/// Exact `∂²h/∂η²`; only used for diagnostics.
pub fn hess_eta_exact(data: &Dataset, beta: ArrayView1<f64>, eta: f64) -> Result<f64> {
    let r = residuals(data, beta)?;
    finite_or_overflow(
        WeightMoments::new(r.view(), eta).exact_second(eta),
        "eta second derivative",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_col(y: Array1<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(y, Array2::ones((n, 1))).unwrap()
    }

    #[test]
    fn residuals_subtract_fit() {
        let d = one_col(array![1.0, 2.0]);
        assert_eq!(residuals(&d, array![1.0].view()).unwrap(), array![0.0, 1.0]);
        assert_eq!(residuals(&d, array![0.0].view()).unwrap(), array![1.0, 2.0]);
    }

    #[test]
    fn residuals_reject_wrong_length() {
        let d = one_col(array![1.0, 2.0]);
        let err = residuals(&d, array![1.0, 2.0].view()).unwrap_err();
        assert!(matches!(err, L2eError::DimensionMismatch { .. }));
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(Dataset::new(array![1.0, f64::NAN], Array2::ones((2, 1))).is_err());
        assert!(Dataset::new(array![1.0], Array2::ones((2, 1))).is_err());
        assert!(Dataset::new(Array1::zeros(0), Array2::ones((0, 1))).is_err());
    }

    #[test]
    fn weights_closed_forms() {
        assert_eq!(case_weights(array![0.0].view(), 3.0)[0], 1.0);
        let w = case_weights(array![1.0].view(), 0.0)[0];
        assert!((w - (-0.5f64).exp()).abs() < 1e-16);
        let raw = (-0.5 * (4.0f64).exp() * 100.0).exp();
        assert!(raw < 1e-12);
        let w = case_weights(array![10.0].view(), 2.0)[0];
        assert!((WEIGHT_FLOOR..1e-12).contains(&w));
        // Far tail underflows to the floor rather than zero.
        assert_eq!(case_weights(array![1e6].view(), 10.0)[0], WEIGHT_FLOOR);
    }

    #[test]
    fn loss_closed_forms() {
        let d = one_col(array![1.0, 1.0]);
        let h = l2e_loss(&d, array![1.0].view(), 0.0).unwrap().value();
        assert!((h - (INV_TWO_SQRT_PI - SQRT_2_OVER_PI)).abs() < 1e-15);
        assert!((h + 0.515_790).abs() < 1e-6);

        let d = one_col(array![1.0]);
        let h = l2e_loss(&d, array![0.0].view(), 0.0).unwrap().value();
        let expect = INV_TWO_SQRT_PI - SQRT_2_OVER_PI * (-0.5f64).exp();
        assert!((h - expect).abs() < 1e-15);
    }

    #[test]
    fn gradient_closed_forms() {
        let d = one_col(array![1.0, 1.0]);
        assert_eq!(grad_beta(&d, array![1.0].view(), 0.7).unwrap(), array![0.0]);
        let g = grad_eta(&d, array![1.0].view(), 0.0).unwrap();
        assert!((g + 0.515_790).abs() < 1e-6);
        let hd = hess_eta_approx(&d, array![1.0].view(), 0.0).unwrap();
        assert!((hd - 0.282_095).abs() < 1e-6);

        let d = one_col(array![1.0]);
        let g = grad_beta(&d, array![0.0].view(), 0.0).unwrap()[0];
        assert!((g - (-SQRT_2_OVER_PI * (-0.5f64).exp())).abs() < 1e-15);
        assert!((g + 0.483_941).abs() < 1e-6);
    }

    #[test]
    fn grad_eta_vanishes_with_tau() {
        let d = one_col(array![0.3, -2.0, 1.1]);
        let eta = -30.0;
        let g = grad_eta(&d, array![0.0].view(), eta).unwrap();
        let tau = eta.exp();
        let limit = tau * (INV_TWO_SQRT_PI - SQRT_2_OVER_PI);
        assert!(g < 0.0);
        assert!(((g - limit) / limit).abs() < 1e-10);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn diagonal_design_matches_dense() {
        let d = array![1.0, 2.0, -0.5];
        let diag = Design::Diagonal(d.clone());
        let dense = Design::Dense(Array2::from_diag(&d));
        let b = array![0.3, 1.0, 4.0];
        assert_eq!(diag.matvec(b.view()), dense.matvec(b.view()));
        assert_eq!(diag.tr_matvec(b.view()), dense.tr_matvec(b.view()));
        assert_eq!(diag.column_sq_norms(), dense.column_sq_norms());
        assert!((dense.spectral_norm_sq() - 4.0).abs() < 1e-9);
        assert!(Design::identity(3).is_identity());
        assert!(Design::Dense(Array2::<f64>::eye(3)).is_identity());
        assert!(!dense.is_identity());
    }
}
