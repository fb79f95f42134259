//! Simulation designs: contaminated isotonic signals and sparse regressions
//! with high-leverage outliers.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::rng::NormalStream;
use crate::error::{L2eError, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotonicScenario {
    pub n: usize,
    /// Number of consecutive shifted responses.
    pub m: usize,
    pub shift: f64,
    pub seed: u64,
}

impl Default for IsotonicScenario {
    fn default() -> Self {
        IsotonicScenario {
            n: 1000,
            m: 100,
            shift: 14.0,
            seed: 0,
        }
    }
}

impl IsotonicScenario {
    /// 0-based index of the first outlier: `round(n / 4)`, i.e. case 251 of 1000.
    pub fn outlier_start(&self) -> usize {
        (self.n as f64 / 4.0).round() as usize
    }

    pub fn outlier_range(&self) -> std::ops::Range<usize> {
        let s = self.outlier_start();
        s..s + self.m
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(L2eError::InvalidArgument(
                "isotonic scenario needs n >= 2".into(),
            ));
        }
        if self.outlier_start() + self.m > self.n {
            return Err(L2eError::InvalidArgument(format!(
                "m = {} outliers starting at case {} do not fit in n = {}",
                self.m,
                self.outlier_start() + 1,
                self.n
            )));
        }
        if !self.shift.is_finite() {
            return Err(L2eError::InvalidArgument("shift must be finite".into()));
        }
        Ok(())
    }
}

/// `y_i = x_i³ + s_i + ε_i` on an even grid of `[−2.5, 2.5]`; the truth is `x³`.
pub fn gen_isotonic(sc: &IsotonicScenario) -> Result<(Dataset, Array1<f64>)> {
    sc.validate()?;
    let n = sc.n;
    let truth = Array1::from_shape_fn(n, |i| {
        let x = -2.5 + 5.0 * i as f64 / (n - 1) as f64;
        x * x * x
    });
    let mut noise = NormalStream::new(sc.seed);
    let mut y = truth.mapv(|t| t + noise.next_normal());
    for i in sc.outlier_range() {
        y[i] += sc.shift;
    }
    Ok((Dataset::identity(y)?, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseScenario {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub shift: f64,
    pub tau_true: f64,
    pub seed: u64,
}

impl Default for SparseScenario {
    fn default() -> Self {
        SparseScenario {
            n: 200,
            p: 50,
            m: 20,
            shift: 5.0,
            tau_true: 1.0,
            seed: 0,
        }
    }
}

/// Number of leading unit coefficients in the sparse truth.
pub const SPARSE_TRUE_K: usize = 5;

impl SparseScenario {
    pub fn truth(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.p, |j| if j < SPARSE_TRUE_K { 1.0 } else { 0.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 || self.m > self.n {
            return Err(L2eError::InvalidArgument(format!(
                "sparse scenario needs n >= 2, p >= 1, m <= n; got n = {}, p = {}, m = {}",
                self.n, self.p, self.m
            )));
        }
        if !(self.tau_true > 0.0 && self.tau_true.is_finite()) || !self.shift.is_finite() {
            return Err(L2eError::InvalidArgument(
                "tau_true must be positive and shift finite".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian design and `y = Xβ + ε/τ`, after which `shift` is added to the
/// first `m` responses and to every entry of the first `m` design rows.
pub fn gen_sparse(sc: &SparseScenario) -> Result<(Dataset, Array1<f64>)> {
    sc.validate()?;
    let mut g = NormalStream::new(sc.seed);
    let mut x = Array2::zeros((sc.n, sc.p));
    for v in x.iter_mut() {
        *v = g.next_normal();
    }
    let truth = sc.truth();
    let mut y = x.dot(&truth);
    for v in y.iter_mut() {
        *v += g.next_normal() / sc.tau_true;
    }
    for i in 0..sc.m {
        y[i] += sc.shift;
        x.row_mut(i).mapv_inplace(|v| v + sc.shift);
    }
    Ok((Dataset::new(y, x)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotonic_outliers_sit_at_cases_251_to_350() {
        let sc = IsotonicScenario {
            seed: 3,
            ..Default::default()
        };
        let clean = IsotonicScenario { m: 0, ..sc };
        let (d, truth) = gen_isotonic(&sc).unwrap();
        let (c, truth_c) = gen_isotonic(&clean).unwrap();
        assert_eq!(truth, truth_c);
        let diff = d.y() - c.y();
        for (i, v) in diff.iter().enumerate() {
            let expected = if (250..350).contains(&i) { 14.0 } else { 0.0 };
            assert_eq!(*v, expected, "case {}", i + 1);
        }
        assert_eq!(truth[0], -15.625);
        assert_eq!(truth[999], 15.625);
        assert!(d.design().is_identity());
    }

    #[test]
    fn generators_are_pure() {
        let sc = IsotonicScenario {
            n: 50,
            m: 5,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(gen_isotonic(&sc).unwrap(), gen_isotonic(&sc).unwrap());
        let sp = SparseScenario {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(gen_sparse(&sp).unwrap(), gen_sparse(&sp).unwrap());
    }

    #[test]
    fn sparse_contamination_and_noise_level() {
        let clean = SparseScenario {
            m: 0,
            tau_true: 2.0,
            seed: 11,
            ..Default::default()
        };
        let (d, truth) = gen_sparse(&clean).unwrap();
        assert_eq!(truth.iter().filter(|&&b| b == 1.0).count(), 5);
        let x = d.design().to_dense();
        let r = d.y() - &x.dot(&truth);
        let mean = r.sum() / r.len() as f64;
        let sd = (r.mapv(|v| (v - mean).powi(2)).sum() / (r.len() - 1) as f64).sqrt();
        assert!((sd - 0.5).abs() < 0.05, "sd {sd}");

        let dirty = SparseScenario { m: 20, ..clean };
        let (dd, _) = gen_sparse(&dirty).unwrap();
        let xd = dd.design().to_dense();
        for i in 0..200 {
            let dy = dd.y()[i] - d.y()[i];
            let dx = &xd.row(i) - &x.row(i);
            let s = if i < 20 { 5.0 } else { 0.0 };
            assert!((dy - s).abs() < 1e-12);
            assert!(dx.iter().all(|v| (v - s).abs() < 1e-12));
        }
    }

    #[test]
    fn invalid_scenarios() {
        let sc = IsotonicScenario {
            n: 10,
            m: 9,
            ..Default::default()
        };
        assert!(gen_isotonic(&sc).is_err());
        let sp = SparseScenario {
            tau_true: 0.0,
            ..Default::default()
        };
        assert!(gen_sparse(&sp).is_err());
    }
}
