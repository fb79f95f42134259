use ndarray::{Array1, Array2};
use proptest::prelude::*;

use l2e_core::majorize::mm_beta_update;
use l2e_core::model::{case_weights, l2e_loss_residuals};
use l2e_core::newton::{eta_update_residuals, NewtonOptions};
use l2e_core::projections::{difference_matrix, project_isotonic, project_sparse};
use l2e_core::{ConstraintSet, Dataset, FitState, Penalty, ReportRecord};

fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 1..max_len)
}

proptest! {
    #[test]
    fn isotonic_projection_is_monotone_idempotent_and_mass_preserving(
        (v, w) in (1usize..40).prop_flat_map(|n| (
            prop::collection::vec(-50.0..50.0f64, n),
            prop::collection::vec(0.1..5.0f64, n),
        ))
    ) {
        let (v, w) = (Array1::from(v), Array1::from(w));
        let fit = project_isotonic(v.view(), w.view()).unwrap();
        prop_assert!(fit.windows(2).into_iter().all(|p| p[0] <= p[1] + 1e-12));
        let again = project_isotonic(fit.view(), w.view()).unwrap();
        prop_assert!((&again - &fit).iter().all(|d| d.abs() < 1e-9));
        let mass = |x: &Array1<f64>| (x * &w).sum();
        prop_assert!((mass(&fit) - mass(&v)).abs() < 1e-8 * (1.0 + mass(&v).abs()));
    }

    #[test]
    fn sparse_projection_keeps_the_largest_entries(v in finite_vec(30), k in 1usize..10) {
        let v = Array1::from(v);
        let out = project_sparse(v.view(), k);
        let kept: Vec<usize> = (0..v.len()).filter(|&i| out[i] != 0.0).collect();
        prop_assert!(kept.len() <= k);
        for &i in &kept {
            prop_assert_eq!(out[i], v[i]);
        }
        let smallest_kept = kept.iter().map(|&i| v[i].abs()).fold(f64::INFINITY, f64::min);
        let largest_dropped = (0..v.len()).filter(|i| !kept.contains(i)).map(|i| v[i].abs()).fold(0.0, f64::max);
        if kept.len() == k.min(v.len()) {
            prop_assert!(smallest_kept >= largest_dropped);
        }
    }

    #[test]
    fn difference_operator_is_adjoint_to_its_transpose(
        (beta, v, order) in (3usize..20, 1usize..3).prop_flat_map(|(n, order)| (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n - order),
            Just(order),
        ))
    ) {
        let d = difference_matrix(beta.len(), order).unwrap();
        let (beta, v) = (Array1::from(beta), Array1::from(v));
        let lhs = d.apply(beta.view()).dot(&v);
        let rhs = beta.dot(&d.apply_transpose(v.view()));
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn weights_lie_in_the_unit_interval(r in finite_vec(30), eta in -3.0..3.0f64) {
        let w = case_weights(Array1::from(r).view(), eta);
        prop_assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn newton_never_raises_the_loss(r in finite_vec(30), eta0 in -3.0..3.0f64) {
        let r = Array1::from(r);
        let out = eta_update_residuals(r.view(), eta0, 0.0, &NewtonOptions::default()).unwrap();
        prop_assert!(l2e_loss_residuals(r.view(), out.eta) <= l2e_loss_residuals(r.view(), eta0));
    }

    #[test]
    fn mm_step_never_raises_the_objective(
        (y, x) in (3usize..25, 1usize..4).prop_flat_map(|(n, p)| (
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n * p).prop_map(move |v| (p, v)),
        )),
        eta in -1.5..1.5f64,
        lambda in 0.0..2.0f64,
    ) {
        let n = y.len();
        let (p, xs) = x;
        let data = Dataset::new(Array1::from(y), Array2::from_shape_vec((n, p), xs).unwrap()).unwrap();
        let state = FitState::new(&data, Array1::zeros(p), eta).unwrap();
        for pen in [Penalty::None, Penalty::lasso(lambda).unwrap(), Penalty::mcp(lambda, None).unwrap()] {
            let up = mm_beta_update(&data, &state, &pen, 20, 1e-10).unwrap();
            prop_assert!(up.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
        }
    }

    #[test]
    fn isotonic_mm_step_stays_feasible(y in finite_vec(30), eta in -2.0..1.0f64) {
        let data = Dataset::identity(Array1::from(y)).unwrap();
        let state = FitState::new(&data, Array1::zeros(data.p()), eta).unwrap();
        let pen = Penalty::indicator(ConstraintSet::Isotonic);
        let up = mm_beta_update(&data, &state, &pen, 10, 1e-10).unwrap();
        prop_assert!(up.beta.windows(2).into_iter().all(|w| w[0] <= w[1]));
    }

    #[test]
    fn report_json_round_trips_bit_exactly(beta in finite_vec(10), eta in -40.0..40.0f64, w in finite_vec(10)) {
        let rec = ReportRecord {
            beta: beta.iter().map(|b| b * std::f64::consts::PI).collect(),
            eta,
            tau: eta.exp(),
            weights: w.iter().map(|x| (x / 7.0).exp()).collect(),
            loss_trace: vec![eta / 3.0, -eta / 11.0],
            outer_iters: 2,
            inner_beta_iters: vec![1, 2],
            inner_eta_iters: vec![3, 4],
            converged: true,
            precision_diverged: false,
            l2e_loss: -eta.abs() / 13.0,
        };
        let back = ReportRecord::from_json(&rec.to_json()).unwrap();
        prop_assert_eq!(back, rec);
    }
}
