mod common;

use acwb::basis::{df_to_lambda, difference_penalty, hat_trace};
use acwb::bench::auc;
use acwb::data::{kfold_assignment, split, subsample, SplitSpec};
use acwb::hpo::HyperbandSchedule;
use acwb::linalg::Matrix;
use acwb::loss::Loss;
use proptest::prelude::*;

fn check(name: &str, f: fn() -> common::Check) {
    if let Err(msg) = f() {
        panic!("{name}: {msg}");
    }
}

#[test]
fn bspline_partition_of_unity() {
    check("partition", common::partition_of_unity);
}

#[test]
fn centered_basis_orthogonality() {
    check("orthogonality", common::centered_orthogonality);
}

#[test]
fn df_to_lambda_against_eigen_oracle() {
    check("df", common::df_to_lambda_oracle);
}

#[test]
fn pseudo_residuals_match_finite_differences() {
    check("gradient", common::pseudo_residual_gradient);
}

#[test]
fn cwb_training_risk_is_monotone() {
    check("monotone", common::cwb_monotone_training_risk);
}

#[test]
fn aggregated_parameters_replay_iterations() {
    check("replay", common::aggregation_replay);
}

#[test]
fn vip_sums_telescope() {
    check("vip", common::vip_telescoping);
}

#[test]
fn decomposition_is_additive() {
    check("decomposition", common::decomposition_additivity);
}

#[test]
fn screening_ranks_planted_pair_first() {
    check("screening", common::screening_finds_planted_pair);
}

#[test]
fn hyperband_schedule_matches_construction() {
    check("hyperband", common::hyperband_matches_construction);
}

#[test]
fn model_file_round_trip() {
    check("roundtrip", common::model_roundtrip);
}

#[test]
fn binomial_loss_finite_at_extremes() {
    for f in [-700.0, -50.0, 0.0, 50.0, 700.0] {
        for y in [0.0, 1.0] {
            let v = Loss::Binomial.value(y, f);
            let g = Loss::Binomial.negative_gradient(y, f);
            assert!(v.is_finite() && v >= 0.0 && g.is_finite(), "f = {f}, y = {y}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_rows(n in 10usize..300, frac in 0.05f64..0.9, seed in any::<u64>()) {
        let ds = common::regression(vec![("x", (0..n).map(|i| i as f64).collect())], (0..n).map(|i| i as f64).collect());
        let s = split(&ds, &SplitSpec { validation_fraction: frac, seed, stratify: false }).unwrap();
        let mut all: Vec<usize> = s.train_rows.iter().chain(&s.validation_rows).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(s.train.n_rows() + s.validation.n_rows(), n);
    }

    #[test]
    fn folds_cover_rows_once(n in 5usize..200, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let ds = common::regression(vec![("x", vec![0.5; n])], vec![1.0; n]);
        let a = kfold_assignment(&ds, k, seed);
        prop_assert_eq!(a.len(), n);
        prop_assert!(a.iter().all(|&f| f < k));
        prop_assert_eq!(&a, &kfold_assignment(&ds, k, seed));
    }

    #[test]
    fn subsample_keeps_schema(frac in 0.1f64..1.0, seed in any::<u64>()) {
        let ds = common::mixed_binary(120, 3);
        let sub = subsample(&ds, frac, seed).unwrap();
        prop_assert_eq!(&sub.schema, &ds.schema);
        prop_assert!(sub.n_rows() <= ds.n_rows());
    }

    #[test]
    fn auc_invariant_under_monotone_maps(scores in prop::collection::vec(-5.0f64..5.0, 4..80), seed in any::<u64>()) {
        let labels: Vec<f64> = scores.iter().enumerate().map(|(i, _)| f64::from((seed >> (i % 64)) & 1 == 1)).collect();
        prop_assume!(labels.contains(&1.0) && labels.contains(&0.0));
        let a = auc(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
        prop_assert!((a - auc(&mapped, &labels).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn hyperband_invariants(eta in 2usize..=4, ratio in 3usize..=81) {
        let r_min = 1.0 / ratio as f64;
        let s = HyperbandSchedule::new(eta as f64, r_min, 1.0).unwrap();
        prop_assert_eq!(s.brackets.len(), s.s_max + 1);
        prop_assert!((eta as f64).powi(s.s_max as i32) <= ratio as f64 + 1e-9);
        prop_assert!((eta as f64).powi(s.s_max as i32 + 1) > ratio as f64 + 1e-9);
        for b in &s.brackets {
            prop_assert_eq!(b.rungs.len(), b.s + 1);
            prop_assert!(b.rungs[0].budget >= r_min - 1e-12);
            prop_assert!((b.rungs.last().unwrap().budget - 1.0).abs() < 1e-12);
            for w in b.rungs.windows(2) {
                prop_assert!(w[1].budget > w[0].budget);
                prop_assert!(w[1].n_configs <= w[0].n_configs && w[1].n_configs >= 1);
            }
        }
    }

    #[test]
    fn difference_penalty_annihilates_low_polynomials(order in 1usize..4, extra in 1usize..12, c in prop::collection::vec(-3.0f64..3.0, 4)) {
        let dim = order + extra;
        let p = difference_penalty(order, dim).unwrap();
        let v: Vec<f64> = (0..dim)
            .map(|j| (0..order).map(|k| c[k] * (j as f64).powi(k as i32)).sum())
            .collect();
        let pv = &p * Matrix::from_column_slice(dim, 1, &v);
        prop_assert!(pv.amax() < 1e-7 * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()))).powi(2));
    }

    #[test]
    fn df_round_trips_through_trace(seed in any::<u64>(), df in 2.5f64..7.5) {
        use rand::Rng;
        let mut r = common::rng(seed);
        let x = Matrix::from_fn(40, 9, |_, _| r.gen_range(-1.0..1.0));
        let g = x.transpose() * &x;
        let p = difference_penalty(2, 9).unwrap();
        let lambda = df_to_lambda(&g, &p, df).unwrap();
        prop_assert!((hat_trace(&g, &p, lambda).unwrap() - df).abs() < 1e-5);
    }
}
