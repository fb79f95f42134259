//! K-fold cross-validation over an ordered penalty grid.

use ndarray::Array1;
use rand::seq::SliceRandom;

use super::rng::rng_from_seed;
use crate::error::{L2eError, Result};
use crate::fit::{init_default, FitReport};
use crate::majorize::Penalty;
use crate::model::{grad_beta, l2e_loss, surrogate_scale, Dataset};

/// Fold label of every case: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(L2eError::InvalidArgument(format!(
            "need 2 <= folds <= n, got {folds} folds for n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut label = vec![0; n];
    for (pos, &case) in order.iter().enumerate() {
        label[case] = pos % folds;
    }
    Ok(label)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_index: usize,
    pub best: Penalty,
    /// Mean held-out L2E loss per grid entry.
    pub scores: Vec<f64>,
}

/// Scores every grid entry by the held-out L2E loss averaged over folds.
/// The grid must be ordered from most to least penalized: ties go to the
/// earlier entry. A fold whose fit fails scores `+∞` for that entry.
pub fn cross_validate<F>(
    data: &Dataset,
    grid: &[Penalty],
    folds: usize,
    seed: u64,
    fit: F,
) -> Result<CvResult>
where
    F: Fn(&Dataset, &Penalty) -> Result<FitReport>,
{
    if grid.is_empty() {
        return Err(L2eError::InvalidArgument("penalty grid is empty".into()));
    }
    let label = fold_assignment(data.n(), folds, seed)?;
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..data.n()).filter(|&i| label[i] != f).collect();
            let test: Vec<usize> = (0..data.n()).filter(|&i| label[i] == f).collect();
            Ok((data.select_cases(&train)?, data.select_cases(&test)?))
        })
        .collect::<Result<_>>()?;

    let mut scores = Vec::with_capacity(grid.len());
    for pen in grid {
        let mut total = 0.0;
        for (train, test) in &splits {
            total += match fit(train, pen) {
                Ok(rep) => l2e_loss(test, rep.beta.view(), rep.eta)
                    .map(|l| l.value())
                    .unwrap_or(f64::INFINITY),
                Err(_) => f64::INFINITY,
            };
        }
        scores.push(total / folds as f64);
    }
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best_index] {
            best_index = i;
        }
    }
    Ok(CvResult {
        best_index,
        best: grid[best_index].clone(),
        scores,
    })
}

/// Smallest λ at which `β = 0` solves the first lasso surrogate from
/// `β = 0` at the default η₀: `‖Xᵀ(w ∘ y)‖_∞`.
pub fn lambda_max(data: &Dataset) -> Result<f64> {
    let eta0 = init_default(data).eta;
    let g =
        grad_beta(data, Array1::zeros(data.p()).view(), eta0)? / surrogate_scale(eta0, data.n());
    Ok(g.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// `len` values log-spaced from `λ_max` down to `ratio · λ_max`.
pub fn lambda_grid(data: &Dataset, len: usize, ratio: f64) -> Result<Vec<f64>> {
    if len == 0 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(L2eError::InvalidArgument(
            "lambda grid needs len >= 1 and ratio in (0, 1)".into(),
        ));
    }
    let top = lambda_max(data)?;
    if len == 1 {
        return Ok(vec![top]);
    }
    Ok((0..len)
        .map(|i| top * ratio.powf(i as f64 / (len - 1) as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{fit_l2e, FitOptions};
    use crate::majorize::mm_beta_update;
    use crate::model::FitState;
    use ndarray::{array, Array2};

    #[test]
    fn folds_partition_the_cases() {
        let label = fold_assignment(23, 5, 4).unwrap();
        let mut counts = [0; 5];
        for &l in &label {
            counts[l] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 23);
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert_eq!(label, fold_assignment(23, 5, 4).unwrap());
        assert!(fold_assignment(5, 1, 0).is_err());
        assert!(fold_assignment(3, 5, 0).is_err());
    }

    #[test]
    fn singleton_grid_still_fits_every_fold() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| 1.0 + i as f64);
        let y = array![1.1, 2.0, 2.9, 4.2, 5.0, 5.8, 7.1, 8.0, 9.1, 9.9];
        let d = Dataset::new(y, x).unwrap();
        let calls = std::cell::Cell::new(0);
        let res = cross_validate(&d, &[Penalty::None], 5, 0, |tr, pen| {
            calls.set(calls.get() + 1);
            fit_l2e(tr, pen, &FitOptions::default())
        })
        .unwrap();
        assert_eq!(calls.get(), 5);
        assert_eq!(res.best_index, 0);
        assert!(cross_validate(&d, &[], 5, 0, |tr, pen| fit_l2e(
            tr,
            pen,
            &FitOptions::default()
        ))
        .is_err());
    }

    #[test]
    fn ties_go_to_the_earlier_entry() {
        let d = Dataset::new(array![1.0, 2.0, 3.0, 4.0], Array2::ones((4, 1))).unwrap();
        let grid = vec![Penalty::lasso(1.0).unwrap(), Penalty::lasso(0.5).unwrap()];
        let res = cross_validate(&d, &grid, 2, 0, |tr, _| {
            fit_l2e(tr, &Penalty::None, &FitOptions::default())
        })
        .unwrap();
        assert_eq!(res.scores[0], res.scores[1]);
        assert_eq!(res.best_index, 0);
    }

    #[test]
    fn lambda_grid_is_decreasing_and_zero_at_the_top() {
        let x = array![[1.0, 0.5], [0.2, 1.0], [-0.3, 0.4], [0.9, -1.0], [0.1, 0.1]];
        let d = Dataset::new(array![1.0, 0.5, -0.2, 2.0, 0.3], x).unwrap();
        let grid = lambda_grid(&d, 4, 1e-2).unwrap();
        assert!(grid.windows(2).all(|w| w[0] > w[1]));
        assert!((grid[3] / grid[0] - 1e-2).abs() < 1e-12);
        let eta0 = init_default(&d).eta;
        let state = FitState::new(&d, Array1::zeros(2), eta0).unwrap();
        let pen = Penalty::lasso(grid[0] * 1.0001).unwrap();
        let up = mm_beta_update(&d, &state, &pen, 10, 1e-10).unwrap();
        assert!(up.beta.iter().all(|&b| b == 0.0), "{:?}", up.beta);
        let pen = Penalty::lasso(grid[0] * 0.9).unwrap();
        let up = mm_beta_update(&d, &state, &pen, 10, 1e-10).unwrap();
        assert!(up.beta.iter().any(|&b| b != 0.0));
    }
}
