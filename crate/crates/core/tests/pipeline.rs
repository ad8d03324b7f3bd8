//! Library-level runs across module boundaries.

use chrono::{Duration, NaiveDateTime};
use eql_core::data::{prepare, RawSeries, ScalingFit, Schema, LagSpec};
use eql_core::eql_net::Gradients;
use eql_core::extract::{catalog_by_name, feature_report, live_inputs, to_expression, verify_equivalence};
use eql_core::optim::RmsState;
use eql_core::trainer::checkpoint::{load_checkpoint, save_checkpoint, DataContext, Stage};
use eql_core::trainer::{finish_from_phase1, run_full, TrainConfig};
use eql_core::{EqlParams, FuncLayout, RegConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn series(hours: usize, seed: u64) -> RawSeries {
    let schema = Schema::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = NaiveDateTime::parse_from_str("2019-06-01 00:00", "%Y-%m-%d %H:%M").unwrap();
    let ts = (0..hours).map(|h| t0 + Duration::hours(h as i64)).collect();
    let cols = (0..schema.n_columns())
        .map(|c| (0..hours).map(|h| (h as f64 * 0.05 + c as f64).sin() * 5.0 + rng.gen_range(0.0..3.0)).collect())
        .collect();
    RawSeries::new(schema, ts, cols).unwrap()
}

#[test]
fn weather_series_to_verified_formula() {
    let raw = series(700, 1);
    let p = prepare(&raw, &LagSpec::new("roskilde"), ScalingFit::Full, 0.9).unwrap();
    assert_eq!(p.full.n_samples(), 700 - 4 - 6 + 1);
    assert_eq!(p.train.n_samples(), (p.full.n_samples() as f64 * 0.9).floor() as usize);
    let cfg = TrainConfig {
        epochs_p1: 30,
        epochs_p2: 10,
        lr_p1: 3e-3,
        lr_p2: 3e-4,
        reg: RegConfig::new(1e-3, 5e-3).unwrap(),
        threshold: 0.1,
        seed: 5,
        ..TrainConfig::default()
    };
    let run = run_full::<f64>(FuncLayout::default_layout(), &p.train, Some(&p.val), &cfg).unwrap();
    assert_eq!(run.history.len(), 40);
    assert!(run.report.mae_after_phase2.unwrap().is_finite());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("final.json");
    save_checkpoint(&run.params, Stage::Final, Some(DataContext::of(&p.train)), &path).unwrap();
    let q: EqlParams<f64> = load_checkpoint(&path).unwrap();
    assert_eq!(q, run.params);

    let e = to_expression(&q, p.train.var_names(), 0.0).unwrap();
    assert!(verify_equivalence(&q, &e, p.train.var_names(), 1000, 1, 1e-9).unwrap().pass);
    let live: Vec<String> = live_inputs(&q).into_iter().map(|i| p.train.var_names()[i].clone()).collect();
    assert!(e.free_vars().iter().all(|v| live.contains(v)));
    let rows = feature_report(&e, &catalog_by_name(p.train.catalog())).unwrap();
    assert_eq!(rows.len(), e.free_vars().len());
}

#[test]
fn f32_pipeline_runs() {
    let raw = series(400, 2);
    let p = prepare(&raw, &LagSpec::new("esbjerg"), ScalingFit::TrainOnly, 0.9).unwrap();
    let cfg = TrainConfig {
        epochs_p1: 3,
        epochs_p2: 2,
        lr_p1: 1e-3,
        ..TrainConfig::default()
    };
    let run = run_full::<f32>(FuncLayout::default_layout(), &p.train, Some(&p.val), &cfg).unwrap();
    assert_eq!(run.params.weight_count(), 1744);
    assert!(run.history.records.iter().all(|r| r.loss.is_finite()));
}

#[test]
fn resuming_from_phase1_checkpoint_is_exact() {
    let raw = series(300, 4);
    let p = prepare(&raw, &LagSpec::new("odense"), ScalingFit::Full, 0.9).unwrap();
    let cfg = TrainConfig {
        epochs_p1: 4,
        epochs_p2: 3,
        lr_p1: 1e-3,
        threshold: 0.05,
        seed: 8,
        ..TrainConfig::default()
    };
    let run = run_full::<f64>(FuncLayout::default_layout(), &p.train, Some(&p.val), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phase1.json");
    save_checkpoint(&run.phase1, Stage::Phase1, Some(DataContext::of(&p.train)), &path).unwrap();
    let loaded: EqlParams<f64> = load_checkpoint(&path).unwrap();
    let ((thr, fin), report, _) = finish_from_phase1(&loaded, cfg.threshold, &p.train, Some(&p.val), &cfg).unwrap();
    assert_eq!(thr, run.thresholded);
    assert_eq!(fin, run.params);
    assert_eq!(report, run.report);
}

#[test]
fn zero_threshold_keeps_every_weight() {
    let raw = series(200, 6);
    let p = prepare(&raw, &LagSpec::new("aalborg"), ScalingFit::Full, 0.9).unwrap();
    let cfg = TrainConfig {
        epochs_p1: 2,
        epochs_p2: 2,
        threshold: 0.0,
        ..TrainConfig::default()
    };
    let run = run_full::<f64>(FuncLayout::default_layout(), &p.train, None, &cfg).unwrap();
    assert_eq!(run.report.sparsity, 0.0);
    assert!(run.params.masks().iter().flatten().all(|m| *m));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaled_training_inputs_stay_in_unit_interval(
        hours in 30usize..200,
        seed in 0u64..1000,
        train_only in any::<bool>(),
    ) {
        let raw = series(hours, seed);
        let fit = if train_only { ScalingFit::TrainOnly } else { ScalingFit::Full };
        let p = prepare(&raw, &LagSpec::new("aarhus"), fit, 0.8).unwrap();
        prop_assert!(p.train.inputs().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(p.train.targets().iter().all(|v| (0.0..=1.0).contains(v)));
        if !train_only {
            prop_assert!(p.val.inputs().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn masked_weights_survive_any_update_sequence(
        seed in 0u64..1000,
        tau in 0.05f64..0.5,
        steps in 1usize..30,
    ) {
        let (mut p, _) = EqlParams::<f64>::init(3, FuncLayout::default_layout(), seed).unwrap().threshold(tau);
        let mut state = RmsState::new(&p, 0.05, 0.9, 1e-8).unwrap();
        let mut grads = Gradients::zeros_like(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..steps {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = p.forward(&x).unwrap();
            grads.fill_zero();
            p.backward_into(&t, &x, rng.gen_range(-5.0..5.0), &mut grads).unwrap();
            state.step(&mut p, &grads).unwrap();
        }
        for (w, mask) in p.weights().iter().zip(p.masks()) {
            for (v, keep) in w.as_slice().iter().zip(mask) {
                prop_assert!(*keep || *v == 0.0);
            }
        }
    }
}
