//! Evaluation and experiment harness: descaled MAE, sparsity sweeps, grid
//! search, phase comparison and inference timing.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnStats, LaggedDataset};
use crate::eql_net::EqlParams;
use crate::error::{EqlError, Result};
use crate::expr::Expr;
use crate::extract::{to_expression, DEFAULT_PRUNE_TOL};
use crate::funcset::FuncLayout;
use crate::scalar::Scalar;
use crate::trainer::{finish_from_phase1, run_full_with_depth, TrainConfig};

/// Sparsity levels swept by default.
pub const DEFAULT_SWEEP_LEVELS: [f64; 12] =
    [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.94, 0.98];

/// Network predictions over every sample, in scaled units.
pub fn predict_scaled<T: Scalar>(p: &EqlParams<T>, ds: &LaggedDataset) -> Result<Vec<f64>> {
    if ds.input_dim() != p.input_dim() {
        return Err(EqlError::Dimension {
            what: "dataset input_dim",
            expected: p.input_dim(),
            got: ds.input_dim(),
        });
    }
    let mut x = vec![T::zero(); ds.input_dim()];
    (0..ds.n_samples())
        .map(|i| {
            for (t, v) in x.iter_mut().zip(ds.row(i)) {
                *t = T::of(*v);
            }
            Ok(p.predict(&x)?.as_f64())
        })
        .collect()
}

/// Mean absolute error after descaling both sides with `stats`.
pub fn mae(preds_scaled: &[f64], targets_scaled: &[f64], stats: &ColumnStats) -> Result<f64> {
    if preds_scaled.len() != targets_scaled.len() {
        return Err(EqlError::Dimension {
            what: "prediction count",
            expected: targets_scaled.len(),
            got: preds_scaled.len(),
        });
    }
    if preds_scaled.is_empty() {
        return Err(EqlError::Data("MAE over zero samples".into()));
    }
    let s: f64 = preds_scaled
        .iter()
        .zip(targets_scaled)
        .map(|(p, t)| (stats.descale(*p) - stats.descale(*t)).abs())
        .sum();
    Ok(s / preds_scaled.len() as f64)
}

pub fn mae_descaled(preds_scaled: &[f64], ds: &LaggedDataset) -> Result<f64> {
    mae(preds_scaled, ds.targets(), ds.target_stats())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub target_sparsity: f64,
    pub tau: f64,
    /// Sparsity actually reached after thresholding.
    pub sparsity: f64,
    pub mae_descaled: f64,
    /// Node count of the extracted expression at the default prune tolerance.
    pub expression_complexity: usize,
}

/// For each level, threshold the same phase-1 weights to that sparsity and
/// run a fresh phase 2. Points come back sorted by level.
pub fn sparsity_sweep<T: Scalar>(
    phase1: &EqlParams<T>,
    levels: &[f64],
    train: &LaggedDataset,
    val: &LaggedDataset,
    cfg: &TrainConfig,
) -> Result<Vec<SweepPoint>> {
    if val.is_empty() {
        return Err(EqlError::Data("sweep needs a nonempty validation set".into()));
    }
    if let Some(bad) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(EqlError::Config(format!("sparsity level {bad} outside [0, 1]")));
    }
    let mut levels = levels.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("levels are finite"));
    levels.dedup();
    levels
        .par_iter()
        .map(|&level| {
            let tau = phase1.tau_for_sparsity(level).as_f64();
            let ((_, params), report, _) = finish_from_phase1(phase1, tau, train, Some(val), cfg)?;
            let e = to_expression(&params, val.var_names(), DEFAULT_PRUNE_TOL)?;
            Ok(SweepPoint {
                target_sparsity: level,
                tau,
                sparsity: report.sparsity,
                mae_descaled: report
                    .mae_after_phase2
                    .expect("validation set is nonempty"),
                expression_complexity: e.node_count(),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["target_sparsity", "tau", "sparsity", "mae", "complexity"])?;
    for p in points {
        wr.write_record([
            format!("{:?}", p.target_sparsity),
            format!("{:?}", p.tau),
            format!("{:?}", p.sparsity),
            format!("{:?}", p.mae_descaled),
            p.expression_complexity.to_string(),
        ])?;
    }
    wr.flush().map_err(|e| EqlError::io("<sweep>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub lambda: f64,
    pub a: f64,
    pub threshold: f64,
    pub seed: u64,
    pub status: CellStatus,
    pub mae: Option<f64>,
    pub complexity: Option<usize>,
    pub sparsity: Option<f64>,
    /// Failure message of a diverged cell.
    pub error: Option<String>,
}

/// Train every `(λ, a)` pair; cell `k` (λ-major) uses seed `base.seed + k`.
/// Successful cells are ranked by MAE, then complexity, then λ; diverged
/// cells follow in grid order.
pub fn grid_search<T: Scalar>(
    lambdas: &[f64],
    a_values: &[f64],
    layout: &FuncLayout,
    depth: usize,
    train: &LaggedDataset,
    val: &LaggedDataset,
    base: &TrainConfig,
) -> Result<Vec<GridRow>> {
    if lambdas.is_empty() || a_values.is_empty() {
        return Err(EqlError::Config("grid search needs nonempty λ and a lists".into()));
    }
    if val.is_empty() {
        return Err(EqlError::Data("grid search needs a nonempty validation set".into()));
    }
    let cells: Vec<(usize, f64, f64)> = lambdas
        .iter()
        .flat_map(|l| a_values.iter().map(move |a| (*l, *a)))
        .enumerate()
        .map(|(k, (l, a))| (k, l, a))
        .collect();
    let rows: Vec<Result<GridRow>> = cells
        .par_iter()
        .map(|&(k, lambda, a)| {
            let mut cfg = base.clone();
            cfg.reg.lambda = lambda;
            cfg.reg.a = a;
            cfg.seed = base.seed.wrapping_add(k as u64);
            let mut row = GridRow {
                lambda,
                a,
                threshold: cfg.threshold,
                seed: cfg.seed,
                status: CellStatus::Ok,
                mae: None,
                complexity: None,
                sparsity: None,
                error: None,
            };
            match run_full_with_depth::<T>(layout.clone(), depth, train, Some(val), &cfg) {
                Ok(run) => {
                    row.mae = Some(mae_descaled(&predict_scaled(&run.params, val)?, val)?);
                    row.complexity =
                        Some(to_expression(&run.params, val.var_names(), DEFAULT_PRUNE_TOL)?.node_count());
                    row.sparsity = Some(run.report.sparsity);
                }
                Err(e) if e.is_numerical() => {
                    row.status = CellStatus::Diverged;
                    row.error = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
            Ok(row)
        })
        .collect();
    let mut rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    // stable: diverged cells keep grid order
    rows.sort_by(|x, y| match (x.status, y.status) {
        (CellStatus::Ok, CellStatus::Ok) => x
            .mae
            .partial_cmp(&y.mae)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.complexity.cmp(&y.complexity))
            .then(x.lambda.partial_cmp(&y.lambda).unwrap_or(std::cmp::Ordering::Equal)),
        (CellStatus::Ok, CellStatus::Diverged) => std::cmp::Ordering::Less,
        (CellStatus::Diverged, CellStatus::Ok) => std::cmp::Ordering::Greater,
        _ => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], w: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["rank", "lambda", "a", "threshold", "seed", "status", "mae", "complexity", "sparsity"])?;
    for (i, r) in rows.iter().enumerate() {
        wr.write_record([
            (i + 1).to_string(),
            format!("{:?}", r.lambda),
            format!("{:?}", r.a),
            format!("{:?}", r.threshold),
            r.seed.to_string(),
            match r.status {
                CellStatus::Ok => "ok".to_string(),
                CellStatus::Diverged => "diverged".to_string(),
            },
            opt(r.mae),
            r.complexity.map(|c| c.to_string()).unwrap_or_default(),
            opt(r.sparsity),
        ])?;
    }
    wr.flush().map_err(|e| EqlError::io("<grid>", e))?;
    Ok(())
}

/// Least-squares `y ≈ α·x + β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub alpha: f64,
    pub beta: f64,
    pub residual_rms: f64,
}

/// Ordinary least squares on centred data. A constant `x` cannot pin the
/// slope, so α is then taken as 1 and β absorbs the mean offset.
pub fn affine_fit(x: &[f64], y: &[f64]) -> Result<AffineFit> {
    if x.len() != y.len() {
        return Err(EqlError::Dimension {
            what: "affine fit lengths",
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.is_empty() {
        return Err(EqlError::Data("affine fit over zero samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let alpha = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    let beta = my - alpha * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (alpha * a + beta);
            r * r
        })
        .sum();
    Ok(AffineFit {
        alpha,
        beta,
        residual_rms: (ss / n).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    /// Descaled `(actual, before, after)` per sample.
    pub rows: Vec<[f64; 3]>,
    pub mae_before: f64,
    pub mae_after: f64,
    /// Fit of `after ≈ α·before + β` in physical units.
    pub fit: AffineFit,
}

impl PhaseReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["sample", "actual", "before", "after"])?;
        for (i, r) in self.rows.iter().enumerate() {
            wr.write_record([
                i.to_string(),
                format!("{:?}", r[0]),
                format!("{:?}", r[1]),
                format!("{:?}", r[2]),
            ])?;
        }
        wr.flush().map_err(|e| EqlError::io("<phase report>", e))?;
        Ok(())
    }
}

/// Compare a thresholded model with its phase-2 successor on `ds`.
pub fn phase_report<T: Scalar>(
    before: &EqlParams<T>,
    after: &EqlParams<T>,
    ds: &LaggedDataset,
) -> Result<PhaseReport> {
    if before.layout() != after.layout() || before.input_dim() != after.input_dim() {
        return Err(EqlError::Data("checkpoints have different architectures".into()));
    }
    if before.masks() != after.masks() {
        return Err(EqlError::Data("checkpoints have different freeze masks".into()));
    }
    let pb = predict_scaled(before, ds)?;
    let pa = predict_scaled(after, ds)?;
    let st = ds.target_stats();
    let rows: Vec<[f64; 3]> = ds
        .targets()
        .iter()
        .zip(&pb)
        .zip(&pa)
        .map(|((t, b), a)| [st.descale(*t), st.descale(*b), st.descale(*a)])
        .collect();
    let xb: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let ya: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    Ok(PhaseReport {
        mae_before: mae_descaled(&pb, ds)?,
        mae_after: mae_descaled(&pa, ds)?,
        fit: affine_fit(&xb, &ya)?,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub samples: usize,
    pub trials: usize,
    pub mean_seconds: f64,
    pub trial_seconds: Vec<f64>,
}

/// Time `trials` passes of evaluating `e` on `samples` rows of `inputs`
/// (row-major, one column per name; rows are cycled). One warm-up pass runs
/// first and is discarded.
pub fn bench_inference(
    e: &Expr,
    var_names: &[String],
    inputs: &[f64],
    samples: usize,
    trials: usize,
) -> Result<BenchResult> {
    if trials == 0 {
        return Err(EqlError::Config("trials must be at least 1".into()));
    }
    let d = var_names.len();
    let n_rows = inputs.len().checked_div(d).unwrap_or(0);
    if d > 0 && (n_rows == 0 || !inputs.len().is_multiple_of(d)) {
        return Err(EqlError::Data(format!(
            "{} input values do not form rows of width {d}",
            inputs.len()
        )));
    }
    let compiled = e.compile(var_names)?;
    let mut stack = Vec::with_capacity(64);
    let mut pass = || {
        let start = Instant::now();
        let mut acc = 0.0;
        for s in 0..samples {
            let row = if d == 0 { &[][..] } else { &inputs[(s % n_rows) * d..(s % n_rows + 1) * d] };
            acc += compiled.eval(black_box(row), &mut stack);
        }
        black_box(acc);
        start.elapsed().as_secs_f64()
    };
    pass();
    let trial_seconds: Vec<f64> = (0..trials).map(|_| pass()).collect();
    Ok(BenchResult {
        samples,
        trials,
        mean_seconds: trial_seconds.iter().sum::<f64>() / trials as f64,
        trial_seconds,
    })
}

/// Published reference numbers, reported alongside local results.
pub mod published {
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Row {
        pub model: &'static str,
        pub city: &'static str,
        /// Best validation MAE over all sparsity levels.
        pub mae: f64,
        /// MAE at 98% sparsity; EQL only.
        pub mae_star: Option<f64>,
        pub inference_seconds: f64,
    }

    pub const RESULTS: [Row; 6] = [
        Row { model: "eql", city: "esbjerg", mae: 1.51, mae_star: Some(1.52), inference_seconds: 0.0879 },
        Row { model: "eql", city: "odense", mae: 1.45, mae_star: Some(1.56), inference_seconds: 0.129 },
        Row { model: "eql", city: "roskilde", mae: 1.43, mae_star: Some(1.51), inference_seconds: 0.132 },
        Row { model: "3d-cnn", city: "esbjerg", mae: 1.40, mae_star: None, inference_seconds: 3.73 },
        Row { model: "3d-cnn", city: "odense", mae: 0.62, mae_star: None, inference_seconds: 3.77 },
        Row { model: "3d-cnn", city: "roskilde", mae: 1.48, mae_star: None, inference_seconds: 3.74 },
    ];

    pub fn eql(city: &str) -> Option<&'static Row> {
        RESULTS.iter().find(|r| r.model == "eql" && r.city == city)
    }

    /// Comment lines for the end of a report file.
    pub fn footer() -> String {
        let mut s = String::from("# published reference (model,city,mae,mae_star,inference_s)\n");
        for r in &RESULTS {
            let star = r.mae_star.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "# {},{},{},{},{}\n",
                r.model, r.city, r.mae, star, r.inference_seconds
            ));
        }
        s
    }
}

/// `<city>_<experiment>_<timestamp>.csv`
pub fn output_name(city: &str, experiment: &str, timestamp: &str) -> String {
    format!("{city}_{experiment}_{timestamp}.csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcset::FuncKind;
    use crate::regularizer::RegConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(min: f64, max: f64) -> ColumnStats {
        ColumnStats {
            city: "c".into(),
            feature: "f".into(),
            min,
            max,
        }
    }

    #[test]
    fn mae_examples() {
        // scaled values descale by ×2: (0.5, 1) → (1, 2); (1, 2) → (2, 4)
        let st = stats(0.0, 2.0);
        assert_eq!(mae(&[0.5, 1.0], &[1.0, 2.0], &st).unwrap(), 1.5);
        assert_eq!(mae(&[0.3, 0.7], &[0.3, 0.7], &st).unwrap(), 0.0);
        assert!(mae(&[1.0], &[1.0, 2.0], &st).is_err());
        assert!(mae(&[], &[], &st).is_err());
    }

    #[test]
    fn affine_examples() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = affine_fit(&x, &x).unwrap();
        assert_eq!((f.alpha, f.beta, f.residual_rms), (1.0, 0.0, 0.0));
        let y: Vec<f64> = x.iter().map(|v| v + 0.5).collect();
        let f = affine_fit(&x, &y).unwrap();
        assert!((f.alpha - 1.0).abs() < 1e-12 && (f.beta - 0.5).abs() < 1e-12);
        assert!(f.residual_rms < 1e-10);
        let c = affine_fit(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!((c.alpha, c.beta), (1.0, 1.0));
    }

    #[test]
    fn bench_protocol() {
        let names = vec!["x".to_string()];
        let r = bench_inference(&Expr::constant(0.0), &names, &[0.5, 0.25], 5000, 1).unwrap();
        assert_eq!(r.trials, 1);
        assert_eq!(r.mean_seconds, r.trial_seconds[0]);
        assert!(r.mean_seconds > 0.0);
        assert!(bench_inference(&Expr::constant(0.0), &names, &[0.5], 10, 0).is_err());
        assert!(bench_inference(&Expr::var("q"), &names, &[0.5], 10, 1).is_err());
    }

    #[test]
    fn published_constants() {
        let e = published::eql("esbjerg").unwrap();
        assert_eq!((e.mae, e.mae_star, e.inference_seconds), (1.51, Some(1.52), 0.0879));
        assert_eq!(published::eql("odense").unwrap().mae, 1.45);
        assert_eq!(published::eql("roskilde").unwrap().mae, 1.43);
        assert!(published::footer().contains("# 3d-cnn,odense,0.62,-,3.77"));
        assert_eq!(output_name("odense", "sweep", "20260101T000000"), "odense_sweep_20260101T000000.csv");
    }

    fn toy(n: usize, seed: u64) -> LaggedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let ys = rows.iter().map(|r| 0.6 * r[0] + 0.3 * r[1] * r[1]).collect();
        LaggedDataset::from_rows(rows, ys, vec!["u".into(), "v".into()])
            .unwrap()
            .with_target_stats(stats(0.0, 10.0))
    }

    fn layout() -> FuncLayout {
        FuncLayout::new(vec![(FuncKind::Constant, 1), (FuncKind::Identity, 2), (FuncKind::Square, 2)]).unwrap()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs_p1: 5,
            epochs_p2: 3,
            batch_size: 50,
            lr_p1: 3e-3,
            lr_p2: 1e-3,
            reg: RegConfig::new(1e-3, 5e-3).unwrap(),
            threshold: 0.05,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sweep_points_share_phase1_and_are_sorted() {
        let (train, val) = (toy(300, 1), toy(60, 2));
        let cfg = quick_cfg();
        let p0 = EqlParams::<f64>::init(2, layout(), cfg.seed).unwrap();
        let (p1, _) = crate::trainer::train_phase1(p0, &train, Some(&val), &cfg).unwrap();
        let pts = sparsity_sweep(&p1, &[0.9, 0.0, 0.3], &train, &val, &cfg).unwrap();
        let levels: Vec<f64> = pts.iter().map(|p| p.target_sparsity).collect();
        assert_eq!(levels, vec![0.0, 0.3, 0.9]);
        assert_eq!((pts[0].tau, pts[0].sparsity), (0.0, 0.0));
        assert!(pts.iter().all(|p| p.sparsity >= p.target_sparsity));
        let again = sparsity_sweep(&p1, &[0.0, 0.3, 0.9], &train, &val, &cfg).unwrap();
        assert_eq!(pts, again);
        let mut buf = Vec::new();
        write_sweep_csv(&pts, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn one_cell_grid_equals_direct_run() {
        let (train, val) = (toy(300, 1), toy(60, 2));
        let cfg = quick_cfg();
        let rows = grid_search::<f64>(&[cfg.reg.lambda], &[cfg.reg.a], &layout(), 2, &train, &val, &cfg).unwrap();
        let run = crate::trainer::run_full::<f64>(layout(), &train, Some(&val), &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mae, Some(mae_descaled(&predict_scaled(&run.params, &val).unwrap(), &val).unwrap()));
        assert_eq!(rows[0].sparsity, Some(run.report.sparsity));
    }

    #[test]
    fn diverging_cell_is_recorded() {
        let (train, val) = (toy(200, 1), toy(40, 2));
        let rows = grid_search::<f64>(&[1e9, 1e-3], &[5e-3], &layout(), 2, &train, &val, &quick_cfg()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].status, CellStatus::Ok);
        assert_eq!(rows[1].status, CellStatus::Diverged);
        assert_eq!(rows[1].lambda, 1e9);
        assert_eq!(rows[1].seed, quick_cfg().seed);
        let mut buf = Vec::new();
        write_grid_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains(",diverged,"));
    }

    #[test]
    fn phase_report_checks_masks() {
        let ds = toy(40, 5);
        let p = EqlParams::<f64>::init(2, layout(), 1).unwrap();
        let r = phase_report(&p, &p, &ds).unwrap();
        assert_eq!(r.mae_before, r.mae_after);
        assert!((r.fit.alpha - 1.0).abs() < 1e-12 && r.fit.beta.abs() < 1e-9);
        let (q, _) = p.threshold(0.3);
        assert!(phase_report(&p, &q, &ds).is_err());
    }

    proptest! {
        #[test]
        fn mae_ignores_common_permutation(
            pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            let st = stats(-3.0, 12.0);
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let (ps, ts): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
            let a = mae(&p, &t, &st).unwrap();
            let b = mae(&ps, &ts, &st).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn affine_fit_recovers_transform(
            x in prop::collection::vec(-5.0f64..5.0, 3..60),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let mx = x.iter().sum::<f64>() / x.len() as f64;
            prop_assume!(x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() > 1e-3);
            let y: Vec<f64> = x.iter().map(|v| alpha * v + beta).collect();
            let f = affine_fit(&x, &y).unwrap();
            prop_assert!((f.alpha - alpha).abs() < 1e-8);
            prop_assert!((f.beta - beta).abs() < 1e-8);
            prop_assert!(f.residual_rms < 1e-10);
        }
    }
}
