//! Two-phase training: regularized minibatch RMSProp, global thresholding,
//! then unregularized fine-tuning with the zeroed weights frozen.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{mae_descaled, predict_scaled};
use crate::data::LaggedDataset;
use crate::eql_net::{EqlParams, Gradients, SparsityReport, DEFAULT_DEPTH};
use crate::error::{EqlError, Result};
use crate::funcset::FuncLayout;
use crate::optim::{RmsState, DEFAULT_EPS, DEFAULT_RHO};
use crate::regularizer::{add_penalty_grad, total_penalty, RegConfig};
use crate::scalar::Scalar;

pub mod checkpoint;

/// Published per-city hyperparameters and the sparsities they reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub lambda: f64,
    pub a: f64,
    pub threshold: f64,
    /// Global, W1, W2 and head sparsity in percent.
    pub sparsity_pct: [f64; 4],
}

pub const PRESETS: [Preset; 3] = [
    Preset {
        name: "esbjerg",
        lambda: 5.0,
        a: 5e-3,
        threshold: 8.0e-3,
        sparsity_pct: [98.0, 99.86, 91.67, 43.75],
    },
    Preset {
        name: "odense",
        lambda: 5.0,
        a: 5e-4,
        threshold: 7.5e-3,
        sparsity_pct: [98.0, 99.58, 92.36, 50.00],
    },
    Preset {
        name: "roskilde",
        lambda: 3.0,
        a: 5e-3,
        threshold: 7.5e-3,
        sparsity_pct: [98.0, 99.72, 94.4, 56.25],
    },
];

pub fn preset(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            EqlError::Config(format!(
                "unknown preset `{name}` (known: esbjerg, odense, roskilde)"
            ))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_p1: usize,
    pub epochs_p2: usize,
    pub batch_size: usize,
    pub lr_p1: f64,
    pub lr_p2: f64,
    pub rho: f64,
    pub eps: f64,
    /// Penalty settings; only phase 1 uses them.
    pub reg: RegConfig,
    pub threshold: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// A batch loss above this aborts the run as diverged.
    pub max_loss: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let p = &PRESETS[0];
        TrainConfig {
            epochs_p1: 100,
            epochs_p2: 100,
            batch_size: 200,
            lr_p1: 1e-4,
            lr_p2: 1e-5,
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            reg: RegConfig {
                lambda: p.lambda,
                a: p.a,
            },
            threshold: p.threshold,
            seed: 0,
            shuffle: true,
            max_loss: 1e8,
        }
    }
}

impl TrainConfig {
    pub fn apply_preset(&mut self, p: &Preset) {
        self.reg = RegConfig {
            lambda: p.lambda,
            a: p.a,
        };
        self.threshold = p.threshold;
    }

    pub fn validate(&self) -> Result<()> {
        self.reg.validate()?;
        if self.batch_size == 0 {
            return Err(EqlError::Config("batch_size must be at least 1".into()));
        }
        for (name, v) in [("lr_p1", self.lr_p1), ("lr_p2", self.lr_p2), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EqlError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(EqlError::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(EqlError::Config(format!(
                "threshold must be non-negative, got {}",
                self.threshold
            )));
        }
        if !(self.max_loss > 0.0) {
            return Err(EqlError::Config("max_loss must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Phase::One => "phase 1",
            Phase::Two => "phase 2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based, counted across both phases.
    pub epoch: usize,
    pub phase: Phase,
    /// Mean over batches of the batch MSE (scaled units).
    pub loss: f64,
    /// Mean over batches of `λ·ΣL0.5*`; always 0 in phase 2.
    pub penalty: f64,
    /// Validation MAE in physical units, if a validation set was given.
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn extend(&mut self, other: TrainHistory) {
        self.records.extend(other.records);
    }

    /// CSV with header `epoch,phase,loss,penalty,val_mae`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["epoch", "phase", "loss", "penalty", "val_mae"])?;
        for r in &self.records {
            wr.write_record([
                r.epoch.to_string(),
                r.phase.number().to_string(),
                format!("{:?}", r.loss),
                format!("{:?}", r.penalty),
                r.val_mae.map(|v| format!("{v:?}")).unwrap_or_default(),
            ])?;
        }
        wr.flush().map_err(|e| EqlError::io("<history>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| EqlError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Mean squared error plus `λ·ΣL0.5*` over unmasked weights.
pub fn loss<T: Scalar>(preds: &[f64], targets: &[f64], p: &EqlParams<T>, reg: &RegConfig) -> Result<f64> {
    Ok(mse(preds, targets)? + total_penalty(p, reg)?.as_f64())
}

pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(EqlError::Dimension {
            what: "prediction count",
            expected: targets.len(),
            got: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(EqlError::Data("loss over zero samples".into()));
    }
    let s: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / preds.len() as f64)
}

/// Sample order of every batch in one epoch. Phase `k` draws from its own
/// ChaCha8 stream, so a phase replays identically whatever ran before it.
pub struct BatchPlan {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    batch_size: usize,
    shuffle: bool,
}

impl BatchPlan {
    pub fn new(n: usize, batch_size: usize, seed: u64, phase: Phase, shuffle: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(phase.number() as u64);
        BatchPlan {
            rng,
            order: (0..n).collect(),
            batch_size,
            shuffle,
        }
    }

    /// Batches of the next epoch; the last one may be short.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        if self.shuffle {
            self.order.shuffle(&mut self.rng);
        }
        self.order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

struct PhaseRun<'a> {
    phase: Phase,
    epochs: usize,
    lr: f64,
    reg: Option<RegConfig>,
    first_epoch: usize,
    cfg: &'a TrainConfig,
}

fn to_t<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::of(*x)).collect()
}

fn run_phase<T: Scalar>(
    mut p: EqlParams<T>,
    train: &LaggedDataset,
    val: Option<&LaggedDataset>,
    run: PhaseRun<'_>,
) -> Result<(EqlParams<T>, TrainHistory)> {
    let cfg = run.cfg;
    cfg.validate()?;
    if train.is_empty() {
        return Err(EqlError::Data("training set is empty".into()));
    }
    if train.input_dim() != p.input_dim() {
        return Err(EqlError::Dimension {
            what: "dataset input_dim",
            expected: p.input_dim(),
            got: train.input_dim(),
        });
    }
    let d = train.input_dim();
    let xs: Vec<T> = to_t(train.inputs());
    let ys: Vec<T> = to_t(train.targets());
    let mut state = RmsState::new(&p, run.lr, cfg.rho, cfg.eps)?;
    let mut grads = Gradients::zeros_like(&p);
    let mut plan = BatchPlan::new(train.n_samples(), cfg.batch_size, cfg.seed, run.phase, cfg.shuffle);
    let mut history = TrainHistory::default();
    let two = T::of(2.0);

    for e in 0..run.epochs {
        let epoch = run.first_epoch + e;
        let batches = plan.next_epoch();
        let (mut loss_sum, mut pen_sum) = (0.0, 0.0);
        for (b, batch) in batches.iter().enumerate() {
            grads.fill_zero();
            let scale = T::one() / T::of(batch.len() as f64);
            let mut sq = T::zero();
            for &i in batch {
                let x = &xs[i * d..(i + 1) * d];
                let trace = p.forward(x)?;
                let err = trace.y_hat - ys[i];
                sq += err * err;
                p.backward_into(&trace, x, two * err * scale, &mut grads)?;
            }
            let batch_mse = (sq * scale).as_f64();
            let pen = match &run.reg {
                Some(reg) => {
                    add_penalty_grad(&p, reg, &mut grads)?;
                    total_penalty(&p, reg)?.as_f64()
                }
                None => 0.0,
            };
            let total = batch_mse + pen;
            if !total.is_finite() {
                return Err(EqlError::NonFinite {
                    phase: run.phase.label(),
                    epoch,
                    batch: b + 1,
                });
            }
            if total > cfg.max_loss {
                return Err(EqlError::Diverged {
                    phase: run.phase.label(),
                    epoch,
                    batch: b + 1,
                    loss: total,
                    limit: cfg.max_loss,
                });
            }
            loss_sum += batch_mse;
            pen_sum += pen;
            state.step(&mut p, &grads)?;
        }
        let nb = batches.len() as f64;
        let val_mae = match val {
            Some(v) if !v.is_empty() => Some(mae_descaled(&predict_scaled(&p, v)?, v)?),
            _ => None,
        };
        history.records.push(EpochRecord {
            epoch,
            phase: run.phase,
            loss: loss_sum / nb,
            penalty: pen_sum / nb,
            val_mae,
        });
    }
    Ok((p, history))
}

/// Phase 1: `epochs_p1` epochs at `lr_p1` with the penalty active.
pub fn train_phase1<T: Scalar>(
    p: EqlParams<T>,
    train: &LaggedDataset,
    val: Option<&LaggedDataset>,
    cfg: &TrainConfig,
) -> Result<(EqlParams<T>, TrainHistory)> {
    if p.masks().iter().flatten().any(|k| !k) {
        return Err(EqlError::Contract("phase 1 expects no frozen weights".into()));
    }
    run_phase(
        p,
        train,
        val,
        PhaseRun {
            phase: Phase::One,
            epochs: cfg.epochs_p1,
            lr: cfg.lr_p1,
            reg: Some(cfg.reg),
            first_epoch: 1,
            cfg,
        },
    )
}

/// Phase 2: `epochs_p2` epochs at `lr_p2`; `cfg.reg` is ignored.
pub fn train_phase2<T: Scalar>(
    p: EqlParams<T>,
    train: &LaggedDataset,
    val: Option<&LaggedDataset>,
    cfg: &TrainConfig,
) -> Result<(EqlParams<T>, TrainHistory)> {
    run_phase(
        p,
        train,
        val,
        PhaseRun {
            phase: Phase::Two,
            epochs: cfg.epochs_p2,
            lr: cfg.lr_p2,
            reg: None,
            first_epoch: cfg.epochs_p1 + 1,
            cfg,
        },
    )
}

/// Everything produced by [`run_full`].
#[derive(Debug, Clone)]
pub struct FullRun<T> {
    pub phase1: EqlParams<T>,
    pub thresholded: EqlParams<T>,
    pub params: EqlParams<T>,
    pub report: SparsityReport,
    pub history: TrainHistory,
}

/// Init, phase 1, threshold at `cfg.threshold`, phase 2.
pub fn run_full<T: Scalar>(
    layout: FuncLayout,
    train: &LaggedDataset,
    val: Option<&LaggedDataset>,
    cfg: &TrainConfig,
) -> Result<FullRun<T>> {
    run_full_with_depth(layout, DEFAULT_DEPTH, train, val, cfg)
}

pub fn run_full_with_depth<T: Scalar>(
    layout: FuncLayout,
    depth: usize,
    train: &LaggedDataset,
    val: Option<&LaggedDataset>,
    cfg: &TrainConfig,
) -> Result<FullRun<T>> {
    cfg.validate()?;
    let p0 = EqlParams::init_with_depth(train.input_dim(), layout, depth, cfg.seed)?;
    let (phase1, mut history) = train_phase1(p0, train, val, cfg)?;
    let (rest, report, h2) = finish_from_phase1(&phase1, cfg.threshold, train, val, cfg)?;
    history.extend(h2);
    Ok(FullRun {
        phase1,
        thresholded: rest.0,
        params: rest.1,
        report,
        history,
    })
}

type Pair<T> = (EqlParams<T>, EqlParams<T>);

/// Threshold a phase-1 model and fine-tune it. Returns the thresholded and
/// final parameters, the sparsity report with MAE before and after phase 2,
/// and the phase-2 history.
pub fn finish_from_phase1<T: Scalar>(
    phase1: &EqlParams<T>,
    tau: f64,
    train: &LaggedDataset,
    val: Option<&LaggedDataset>,
    cfg: &TrainConfig,
) -> Result<(Pair<T>, SparsityReport, TrainHistory)> {
    let (thresholded, mut report) = phase1.threshold(T::of(tau));
    report.threshold = tau;
    let (params, history) = train_phase2(thresholded.clone(), train, val, cfg)?;
    if let Some(v) = val.filter(|v| !v.is_empty()) {
        report.mae_before_phase2 = Some(mae_descaled(&predict_scaled(&thresholded, v)?, v)?);
        report.mae_after_phase2 = Some(mae_descaled(&predict_scaled(&params, v)?, v)?);
    }
    Ok(((thresholded, params), report, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcset::FuncKind;
    use rand::Rng;

    fn linear_data(n: usize, seed: u64) -> LaggedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let ys = rows.iter().map(|r| 0.9 * r[0]).collect();
        LaggedDataset::from_rows(rows, ys, vec!["x".into()]).unwrap()
    }

    fn small_layout() -> FuncLayout {
        FuncLayout::new(vec![
            (FuncKind::Constant, 1),
            (FuncKind::Identity, 2),
            (FuncKind::Square, 1),
            (FuncKind::Sine, 1),
        ])
        .unwrap()
    }

    #[test]
    fn loss_examples() {
        let p = EqlParams::<f64>::zeros(1, small_layout(), 2);
        let no_reg = RegConfig::new(0.0, 5e-3).unwrap();
        assert_eq!(loss(&[0.0, 0.0], &[2.0, 2.0], &p, &no_reg).unwrap(), 4.0);
        assert!(loss(&[0.0], &[1.0, 2.0], &p, &no_reg).is_err());
        assert!(loss(&[], &[], &p, &no_reg).is_err());

        let layout = FuncLayout::new(vec![(FuncKind::Identity, 1)]).unwrap();
        let mut q = EqlParams::<f64>::zeros(1, layout, 1);
        q.set_weight(0, 0, 0, 1.0).unwrap();
        q.threshold_in_place(0.5);
        let l5 = loss(&[1.0], &[1.0], &q, &RegConfig::new(5.0, 5e-3).unwrap()).unwrap();
        assert_eq!(l5, 5.0);
        let l3 = loss(&[1.0], &[1.0], &q, &RegConfig::new(3.0, 5e-3).unwrap()).unwrap();
        assert_eq!(l3, 3.0);
    }

    #[test]
    fn presets_match_published_table() {
        let e = preset("esbjerg").unwrap();
        assert_eq!((e.lambda, e.a, e.threshold), (5.0, 5e-3, 8.0e-3));
        let o = preset("Odense").unwrap();
        assert_eq!((o.lambda, o.a, o.threshold), (5.0, 5e-4, 7.5e-3));
        let r = preset("roskilde").unwrap();
        assert_eq!((r.lambda, r.a, r.threshold), (3.0, 5e-3, 7.5e-3));
        assert!(preset("aarhus").is_err());
        let d = TrainConfig::default();
        assert_eq!((d.epochs_p1, d.epochs_p2, d.batch_size), (100, 100, 200));
        assert_eq!((d.lr_p1, d.lr_p2), (1e-4, 1e-5));
    }

    #[test]
    fn batches_keep_partial_tail() {
        let mut plan = BatchPlan::new(450, 200, 1, Phase::One, true);
        let b = plan.next_epoch();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![200, 200, 50]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..450).collect::<Vec<_>>());
        let again = BatchPlan::new(450, 200, 1, Phase::One, true).next_epoch();
        assert_eq!(b, again);
        let fixed = BatchPlan::new(5, 2, 1, Phase::One, false).next_epoch();
        assert_eq!(fixed, vec![vec![0, 1], vec![2, 3], vec![4]]);
    }

    #[test]
    fn learns_linear_target() {
        let train = linear_data(2000, 1);
        let val = linear_data(300, 2);
        let cfg = TrainConfig {
            epochs_p1: 100,
            epochs_p2: 100,
            batch_size: 50,
            lr_p1: 3e-3,
            lr_p2: 1e-3,
            reg: RegConfig::new(1e-4, 5e-3).unwrap(),
            threshold: 0.0,
            seed: 7,
            ..TrainConfig::default()
        };
        let run = run_full::<f64>(small_layout(), &train, Some(&val), &cfg).unwrap();
        let pred = predict_scaled(&run.params, &val).unwrap();
        let got = mse(&pred, val.targets()).unwrap();

        // closed-form least squares through the origin is exact here
        let xs: Vec<f64> = (0..val.n_samples()).map(|i| val.row(i)[0]).collect();
        let slope: f64 = xs.iter().zip(val.targets()).map(|(x, y)| x * y).sum::<f64>()
            / xs.iter().map(|x| x * x).sum::<f64>();
        assert!((slope - 0.9).abs() < 1e-12);
        assert!(got < 1e-3, "validation MSE {got}");
        assert_eq!(run.history.len(), 200);
        assert_eq!(run.report.sparsity, 0.0);
    }

    #[test]
    fn same_seed_same_weights() {
        let train = linear_data(500, 3);
        let cfg = TrainConfig {
            epochs_p1: 5,
            epochs_p2: 5,
            batch_size: 64,
            lr_p1: 1e-3,
            threshold: 0.05,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = run_full::<f64>(small_layout(), &train, None, &cfg).unwrap();
        let b = run_full::<f64>(small_layout(), &train, None, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        let c = run_full::<f64>(small_layout(), &train, None, &TrainConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn large_penalty_shrinks_every_weight() {
        let train = linear_data(1000, 4);
        let cfg = TrainConfig {
            epochs_p1: 200,
            batch_size: 100,
            lr_p1: 1e-3,
            reg: RegConfig::new(1e3, 5e-3).unwrap(),
            seed: 5,
            ..TrainConfig::default()
        };
        let p0 = EqlParams::<f64>::init(1, small_layout(), cfg.seed).unwrap();
        let (p, h) = train_phase1(p0, &train, None, &cfg).unwrap();
        let max = p.weights().iter().flat_map(|m| m.as_slice()).fold(0.0f64, |m, w| m.max(w.abs()));
        assert!(max < 1e-2, "largest weight {max}");
        assert!(h.records.iter().all(|r| r.phase == Phase::One));
    }

    #[test]
    fn phase2_keeps_sparsity_and_ignores_lambda() {
        let train = linear_data(400, 6);
        let base = TrainConfig {
            epochs_p1: 3,
            epochs_p2: 4,
            batch_size: 32,
            lr_p1: 1e-3,
            lr_p2: 1e-3,
            threshold: 0.2,
            seed: 2,
            ..TrainConfig::default()
        };
        let run = run_full::<f64>(small_layout(), &train, None, &base).unwrap();
        assert_eq!(run.thresholded.sparsity().0, run.params.sparsity().0);
        for (m, k) in run.params.weights().iter().zip(run.params.masks()) {
            for (w, keep) in m.as_slice().iter().zip(k) {
                assert!(*keep || *w == 0.0);
            }
        }
        let heavy = TrainConfig {
            reg: RegConfig::new(1e4, 0.1).unwrap(),
            ..base.clone()
        };
        let (p2a, ha) = train_phase2(run.thresholded.clone(), &train, None, &base).unwrap();
        let (p2b, hb) = train_phase2(run.thresholded.clone(), &train, None, &heavy).unwrap();
        assert_eq!(p2a, p2b);
        assert_eq!(ha, hb);
        assert!(ha.records.iter().all(|r| r.penalty == 0.0 && r.phase == Phase::Two));
        assert_eq!(ha.records[0].epoch, 4);
    }

    #[test]
    fn history_matches_replayed_losses() {
        let train = linear_data(230, 8);
        let cfg = TrainConfig {
            epochs_p1: 2,
            batch_size: 100,
            lr_p1: 1e-3,
            reg: RegConfig::new(0.5, 5e-3).unwrap(),
            seed: 9,
            ..TrainConfig::default()
        };
        let p0 = EqlParams::<f64>::init(1, small_layout(), cfg.seed).unwrap();
        let (trained, h) = train_phase1(p0.clone(), &train, None, &cfg).unwrap();

        // replay with the public pieces
        let mut p = p0;
        let mut state = RmsState::new(&p, cfg.lr_p1, cfg.rho, cfg.eps).unwrap();
        let mut plan = BatchPlan::new(train.n_samples(), cfg.batch_size, cfg.seed, Phase::One, true);
        for rec in &h.records {
            let batches = plan.next_epoch();
            let mut sum = 0.0;
            for batch in &batches {
                let preds: Vec<f64> = batch.iter().map(|&i| p.predict(train.row(i)).unwrap()).collect();
                let ys: Vec<f64> = batch.iter().map(|&i| train.targets()[i]).collect();
                let l = loss(&preds, &ys, &p, &cfg.reg).unwrap();
                sum += l;
                let mut g = Gradients::zeros_like(&p);
                for (k, &i) in batch.iter().enumerate() {
                    let t = p.forward(train.row(i)).unwrap();
                    p.backward_into(&t, train.row(i), 2.0 * (preds[k] - ys[k]) / batch.len() as f64, &mut g)
                        .unwrap();
                }
                add_penalty_grad(&p, &cfg.reg, &mut g).unwrap();
                state.step(&mut p, &g).unwrap();
            }
            let logged = rec.loss + rec.penalty;
            let replayed = sum / batches.len() as f64;
            assert!((logged - replayed).abs() <= 1e-12 * replayed, "{logged} vs {replayed}");
        }
        let max_diff = trained
            .weights()
            .iter()
            .zip(p.weights())
            .flat_map(|(a, b)| a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-12, "{max_diff}");
    }

    #[test]
    fn blow_up_is_reported() {
        let train = linear_data(300, 10);
        let cfg = TrainConfig {
            epochs_p1: 2,
            reg: RegConfig::new(1e9, 5e-3).unwrap(),
            ..TrainConfig::default()
        };
        let p0 = EqlParams::<f64>::init(1, small_layout(), 0).unwrap();
        let err = train_phase1(p0, &train, None, &cfg).unwrap_err();
        assert!(err.is_numerical(), "{err}");
        assert!(matches!(err, EqlError::Diverged { epoch: 1, batch: 1, .. }));

        let bad = LaggedDataset::from_rows(vec![vec![1e200]], vec![0.0], vec!["x".into()]).unwrap();
        let p0 = EqlParams::<f64>::init(1, small_layout(), 0).unwrap();
        let err = train_phase1(p0, &bad, None, &TrainConfig { epochs_p1: 1, ..TrainConfig::default() }).unwrap_err();
        assert!(matches!(err, EqlError::NonFinite { epoch: 1, batch: 1, .. }), "{err}");
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let empty = LaggedDataset::from_rows(vec![], vec![], vec!["x".into()]).unwrap();
        let p0 = EqlParams::<f64>::init(1, small_layout(), 0).unwrap();
        assert!(matches!(
            train_phase1(p0, &empty, None, &TrainConfig::default()),
            Err(EqlError::Data(_))
        ));
    }

    #[test]
    fn phase1_rejects_frozen_weights() {
        let train = linear_data(10, 1);
        let (p, _) = EqlParams::<f64>::init(1, small_layout(), 0).unwrap().threshold(0.3);
        assert!(matches!(
            train_phase1(p, &train, None, &TrainConfig::default()),
            Err(EqlError::Contract(_))
        ));
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            records: vec![
                EpochRecord { epoch: 1, phase: Phase::One, loss: 0.5, penalty: 2.0, val_mae: Some(1.25) },
                EpochRecord { epoch: 2, phase: Phase::Two, loss: 0.25, penalty: 0.0, val_mae: None },
            ],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,phase,loss,penalty,val_mae\n1,1,0.5,2.0,1.25\n2,2,0.25,0.0,\n"
        );
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let c: TrainConfig = serde_json::from_str(r#"{"seed": 4, "reg": {"lambda": 3.0, "a": 0.005}}"#).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.reg.lambda, 3.0);
        assert_eq!(c.epochs_p1, 100);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 3}"#).is_err());
    }
}
