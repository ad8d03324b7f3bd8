use std::path::{Path, PathBuf};

use eql_core::analysis::{
    bench_inference, grid_search, output_name, phase_report, published, sparsity_sweep, write_grid_csv,
    write_sweep_csv, DEFAULT_SWEEP_LEVELS,
};
use eql_core::data::{catalog, load_csv, prepare, split, LagSpec, LaggedDataset, Prepared, ScalingFit, Schema};
use eql_core::extract::{catalog_by_name, feature_report, to_expression, verify_equivalence, write_feature_report};
use eql_core::trainer::checkpoint::{Checkpoint, DataContext, Stage};
use eql_core::trainer::run_full_with_depth;
use eql_core::{EqlError, EqlParams, Scalar};
use serde_json::json;

use crate::config::{LoadedConfig, Overrides, Precision, RunConfig};
use crate::files::{
    create_file, dataset_from_context, ensure_dir, file_name, stamp, write_json, ExprFile, Manifest,
};
use crate::{
    BenchArgs, CliResult, ConfigArgs, ExtractArgs, GridArgs, Log, PredictArgs, PrepArgs, ReportArgs, SweepArgs,
    TrainArgs,
};

pub const CKPT_PHASE1: &str = "checkpoint_phase1.json";
pub const CKPT_THRESHOLDED: &str = "checkpoint_thresholded.json";
pub const CKPT_FINAL: &str = "checkpoint_final.json";
pub const HISTORY: &str = "history.csv";
pub const SPARSITY: &str = "sparsity.json";

fn to_value<S: serde::Serialize>(v: &S) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn write_windows(ds: &LaggedDataset, timestamps: &[chrono::NaiveDateTime], path: &Path) -> CliResult<()> {
    let mut wr = csv::Writer::from_writer(create_file(path)?);
    let mut header = vec!["target_time".to_string()];
    header.extend(ds.var_names().iter().cloned());
    header.push("target".into());
    wr.write_record(&header).map_err(EqlError::from)?;
    for i in 0..ds.n_samples() {
        let t = ds.target_hour(i).map(|h| timestamps[h].to_string()).unwrap_or_default();
        let mut rec = vec![t];
        rec.extend(ds.row(i).iter().map(|v| format!("{v:?}")));
        rec.push(format!("{:?}", ds.targets()[i]));
        wr.write_record(&rec).map_err(EqlError::from)?;
    }
    wr.flush().map_err(|e| EqlError::io(path, e))?;
    Ok(())
}

pub fn prep(a: &PrepArgs, log: Log) -> CliResult<()> {
    let schema = Schema::default();
    let raw = load_csv(&a.data, &schema)?;
    let spec = LagSpec {
        lags: a.lags,
        horizon: a.horizon,
        target_city: a.target_city.clone(),
        target_feature: a.target_feature.clone(),
    };
    let fit = if a.train_only_scaling {
        ScalingFit::TrainOnly
    } else {
        ScalingFit::Full
    };
    let p = prepare(&raw, &spec, fit, a.train_frac)?;
    ensure_dir(&a.out)?;
    write_json(&a.out.join("scaling.json"), &p.stats)?;
    write_windows(&p.train, raw.timestamps(), &a.out.join("train.csv"))?;
    write_windows(&p.val, raw.timestamps(), &a.out.join("val.csv"))?;
    let args = json!({
        "data": a.data, "target_city": a.target_city, "target_feature": a.target_feature,
        "lags": a.lags, "horizon": a.horizon, "train_frac": a.train_frac, "scaling": fit,
    });
    let mut m = Manifest::new("prep", args.clone(), args);
    m.outputs = vec!["scaling.json".into(), "train.csv".into(), "val.csv".into()];
    m.summary = json!({
        "hours": raw.len(),
        "samples": p.full.n_samples(),
        "train_samples": p.train.n_samples(),
        "val_samples": p.val.n_samples(),
        "input_dim": p.full.input_dim(),
        "fingerprint": p.stats.fingerprint(),
    });
    write_json(&a.out.join("prep_manifest.json"), &m)?;
    log.line(format!(
        "{} hours -> {} train / {} val samples of width {}",
        raw.len(),
        p.train.n_samples(),
        p.val.n_samples(),
        p.full.input_dim()
    ));
    Ok(())
}

fn overrides(c: &ConfigArgs) -> Overrides {
    Overrides {
        preset: c.preset.clone(),
        data: c.data.clone(),
        target_city: c.target_city.clone(),
        seed: c.seed,
        epochs_p1: c.epochs_p1,
        epochs_p2: c.epochs_p2,
        ..Overrides::default()
    }
}

fn load_config(c: &ConfigArgs, o: &Overrides) -> CliResult<(LoadedConfig, RunConfig)> {
    let lc = LoadedConfig::load(c.config.as_deref())?;
    let rc = lc.config.clone().resolve(o)?;
    Ok((lc, rc))
}

fn load_data(rc: &RunConfig, log: Log) -> CliResult<Prepared> {
    let path = rc.data_path()?;
    let raw = load_csv(path, &rc.data.schema)?;
    let p = prepare(&raw, &rc.data.lag_spec(), rc.data.scaling, rc.data.train_frac)?;
    log.line(format!(
        "{}: {} train / {} val samples, {} inputs, target {}_{}",
        path.display(),
        p.train.n_samples(),
        p.val.n_samples(),
        p.train.input_dim(),
        rc.data.target_city,
        rc.data.target_feature
    ));
    Ok(p)
}

fn manifest_for(command: &str, lc: &LoadedConfig, rc: &RunConfig) -> Manifest {
    let mut m = Manifest::new(command, lc.verbatim.clone(), to_value(rc));
    m.config_path = lc.source.clone();
    m
}

fn nonempty(ds: &LaggedDataset) -> Option<&LaggedDataset> {
    Some(ds).filter(|d| !d.is_empty())
}

fn train_with<T: Scalar>(rc: &RunConfig, data: &Prepared, out: &Path, log: Log) -> CliResult<serde_json::Value> {
    let ctx = DataContext::of(&data.train);
    log.line(format!(
        "training: {} + {} epochs, batch {}, λ={}, a={}, threshold={}, seed {}",
        rc.train.epochs_p1,
        rc.train.epochs_p2,
        rc.train.batch_size,
        rc.train.reg.lambda,
        rc.train.reg.a,
        rc.train.threshold,
        rc.train.seed
    ));
    let run = run_full_with_depth::<T>(rc.layout.clone(), rc.depth, &data.train, nonempty(&data.val), &rc.train)?;
    Checkpoint::new(&run.phase1, Stage::Phase1, Some(ctx.clone())).save(out.join(CKPT_PHASE1))?;
    Checkpoint::new(&run.thresholded, Stage::Thresholded, Some(ctx.clone())).save(out.join(CKPT_THRESHOLDED))?;
    Checkpoint::new(&run.params, Stage::Final, Some(ctx)).save(out.join(CKPT_FINAL))?;
    run.history.save_csv(out.join(HISTORY))?;
    write_json(&out.join(SPARSITY), &run.report)?;
    let last = run.history.records.last();
    log.line(format!(
        "done: sparsity {:.2}% ({} of {} weights zero), final loss {:.3e}",
        100.0 * run.report.sparsity,
        run.report.zero_weights,
        run.report.total_weights,
        last.map(|r| r.loss).unwrap_or(f64::NAN)
    ));
    if let Some(m) = run.report.mae_after_phase2 {
        log.line(format!("validation MAE {m:.4}"));
    }
    Ok(json!({
        "weights": run.params.weight_count(),
        "sparsity": run.report,
        "final_loss": last.map(|r| r.loss),
    }))
}

pub fn train(a: &TrainArgs, log: Log) -> CliResult<()> {
    let mut o = overrides(&a.cfg);
    o.lambda = a.lambda;
    o.a = a.a;
    o.threshold = a.threshold;
    let (lc, rc) = load_config(&a.cfg, &o)?;
    let data = load_data(&rc, log)?;
    ensure_dir(&a.out)?;
    let summary = match rc.precision {
        Precision::F64 => train_with::<f64>(&rc, &data, &a.out, log)?,
        Precision::F32 => train_with::<f32>(&rc, &data, &a.out, log)?,
    };
    let mut m = manifest_for("train", &lc, &rc);
    m.outputs = [CKPT_PHASE1, CKPT_THRESHOLDED, CKPT_FINAL, HISTORY, SPARSITY]
        .iter()
        .map(|s| s.to_string())
        .collect();
    m.summary = summary;
    write_json(&a.out.join("train_manifest.json"), &m)?;
    Ok(())
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

pub fn extract(a: &ExtractArgs, log: Log) -> CliResult<()> {
    let ck = Checkpoint::load(&a.ckpt)?;
    let p: EqlParams<f64> = ck.params()?;
    let names = match &ck.data {
        Some(d) => d.var_names.clone(),
        None => default_names(p.input_dim()),
    };
    let out = match &a.out {
        Some(d) => d.clone(),
        None => a.ckpt.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    ensure_dir(&out)?;

    // the exact expression checks extraction itself; pruning error is
    // reported separately
    let exact = to_expression(&p, &names, 0.0)?;
    let equivalence = verify_equivalence(&p, &exact, &names, a.verify_samples, 0, a.verify_tol)?;
    let e = if a.prune_tol == 0.0 {
        exact
    } else {
        to_expression(&p, &names, a.prune_tol)?
    };
    let pruned = verify_equivalence(&p, &e, &names, a.verify_samples, 0, f64::INFINITY)?;

    let file = ExprFile::new(e.clone(), a.prune_tol, a.decimals, ck.data.clone());
    write_json(&out.join("expression.json"), &file)?;
    std::fs::write(out.join("expression.txt"), format!("{}\n{}\n", file.machine, file.pretty))
        .map_err(|err| EqlError::io(out.join("expression.txt"), err))?;
    let mut outputs = vec!["expression.json".to_string(), "expression.txt".into(), "equivalence.json".into()];
    if let Some(ctx) = &ck.data {
        if let (Some(schema), Some(spec)) = (&ctx.schema, &ctx.lag_spec) {
            let rows = feature_report(&e, &catalog_by_name(&catalog(schema, spec.lags)))?;
            write_feature_report(&rows, create_file(&out.join("features.csv"))?)?;
            outputs.push("features.csv".into());
        }
    }
    write_json(
        &out.join("equivalence.json"),
        &json!({ "exact": equivalence, "prune_tol": a.prune_tol, "pruned_max_abs_err": pruned.max_abs_err }),
    )?;
    let args = json!({
        "ckpt": a.ckpt, "prune_tol": a.prune_tol, "pretty": a.pretty, "decimals": a.decimals,
        "verify_samples": a.verify_samples, "verify_tol": a.verify_tol,
    });
    let mut m = Manifest::new("extract", args.clone(), args);
    m.outputs = outputs;
    m.summary = json!({
        "node_count": file.node_count,
        "variables": e.free_vars(),
        "equivalence_pass": equivalence.pass,
    });
    write_json(&out.join("extract_manifest.json"), &m)?;

    println!("{}", if a.pretty { &file.pretty } else { &file.machine });
    log.line(format!(
        "{} nodes, {} variables; network agreement {:.2e} (tol {:.0e}), after pruning {:.2e}",
        file.node_count,
        e.free_vars().len(),
        equivalence.max_abs_err,
        a.verify_tol,
        pruned.max_abs_err
    ));
    if !equivalence.pass {
        return Err(EqlError::Contract(format!(
            "extracted expression differs from the network by {:e} > {:e}",
            equivalence.max_abs_err, a.verify_tol
        ))
        .into());
    }
    Ok(())
}

pub fn predict(a: &PredictArgs, log: Log) -> CliResult<()> {
    let f = ExprFile::load(&a.expr)?;
    let ctx = f.context()?;
    let (raw, ds) = dataset_from_context(ctx, &a.data)?;
    let compiled = f.expr.compile(&ctx.var_names)?;
    let mut stack = Vec::new();
    let mut wr = csv::Writer::from_writer(create_file(&a.out)?);
    wr.write_record(["target_time", "actual", "predicted"]).map_err(EqlError::from)?;
    let mut abs = 0.0;
    for i in 0..ds.n_samples() {
        let pred = ctx.target.descale(compiled.eval(ds.row(i), &mut stack));
        let actual = ctx.target.descale(ds.targets()[i]);
        abs += (pred - actual).abs();
        let t = ds.target_hour(i).map(|h| raw.timestamps()[h].to_string()).unwrap_or_default();
        wr.write_record([t, format!("{actual:?}"), format!("{pred:?}")])
            .map_err(EqlError::from)?;
    }
    wr.flush().map_err(|e| EqlError::io(&a.out, e))?;
    let mae = abs / ds.n_samples() as f64;
    let args = json!({ "expr": a.expr, "data": a.data, "out": a.out });
    let mut m = Manifest::new("predict", args.clone(), args);
    m.outputs = vec![file_name(&a.out)];
    m.summary = json!({ "samples": ds.n_samples(), "mae": mae });
    write_json(&a.out.with_extension("manifest.json"), &m)?;
    log.line(format!("{} predictions, MAE {mae:.4}", ds.n_samples()));
    Ok(())
}

/// The checkpoint must have been trained on data scaled like `data`.
fn check_context(ck: &Checkpoint, data: &Prepared) -> CliResult<()> {
    let here = DataContext::of(&data.train);
    if let Some(ctx) = &ck.data {
        if ctx.var_names != here.var_names || ctx.fingerprint() != here.fingerprint() {
            return Err(EqlError::Data(
                "checkpoint was trained on differently prepared data than the config describes".into(),
            )
            .into());
        }
    }
    Ok(())
}

fn require_val(data: &Prepared) -> CliResult<()> {
    if data.val.is_empty() {
        return Err(EqlError::Data("validation split is empty; lower data.train_frac".into()).into());
    }
    Ok(())
}

fn sweep_with<T: Scalar>(
    ck: &Checkpoint,
    levels: &[f64],
    rc: &RunConfig,
    data: &Prepared,
) -> CliResult<Vec<eql_core::analysis::SweepPoint>> {
    let p: EqlParams<T> = ck.params()?;
    Ok(sparsity_sweep(&p, levels, &data.train, &data.val, &rc.train)?)
}

pub fn sweep(a: &SweepArgs, log: Log) -> CliResult<()> {
    let (lc, rc) = load_config(&a.cfg, &overrides(&a.cfg))?;
    let ck = Checkpoint::load(&a.ckpt)?;
    if ck.stage != Stage::Phase1 {
        log.line(format!("warning: checkpoint stage is {:?}, not phase1", ck.stage));
    }
    let data = load_data(&rc, log)?;
    check_context(&ck, &data)?;
    require_val(&data)?;
    let levels = a.levels.clone().unwrap_or_else(|| DEFAULT_SWEEP_LEVELS.to_vec());
    log.line(format!("sweeping {} sparsity levels", levels.len()));
    let points = match rc.precision {
        Precision::F64 => sweep_with::<f64>(&ck, &levels, &rc, &data)?,
        Precision::F32 => sweep_with::<f32>(&ck, &levels, &rc, &data)?,
    };
    ensure_dir(&a.out)?;
    let name = output_name(&rc.data.target_city, "sweep", &stamp(a.stamp.as_deref()));
    write_sweep_csv(&points, create_file(&a.out.join(&name))?)?;
    let mut m = manifest_for("sweep", &lc, &rc);
    m.outputs = vec![name.clone()];
    m.summary = json!({ "ckpt": a.ckpt, "levels": levels, "points": points });
    write_json(&a.out.join(Path::new(&name).with_extension("manifest.json")), &m)?;
    for p in &points {
        log.line(format!(
            "S={:.4} tau={:.3e} MAE={:.4} nodes={}",
            p.sparsity, p.tau, p.mae_descaled, p.expression_complexity
        ));
    }
    Ok(())
}

pub fn grid(a: &GridArgs, log: Log) -> CliResult<()> {
    let (lc, rc) = load_config(&a.cfg, &overrides(&a.cfg))?;
    let data = load_data(&rc, log)?;
    require_val(&data)?;
    log.line(format!("grid of {} cells", a.lambdas.len() * a.a_values.len()));
    let rows = match rc.precision {
        Precision::F64 => grid_search::<f64>(&a.lambdas, &a.a_values, &rc.layout, rc.depth, &data.train, &data.val, &rc.train)?,
        Precision::F32 => grid_search::<f32>(&a.lambdas, &a.a_values, &rc.layout, rc.depth, &data.train, &data.val, &rc.train)?,
    };
    ensure_dir(&a.out)?;
    let name = output_name(&rc.data.target_city, "grid", &stamp(a.stamp.as_deref()));
    write_grid_csv(&rows, create_file(&a.out.join(&name))?)?;
    let mut m = manifest_for("grid", &lc, &rc);
    m.outputs = vec![name.clone()];
    m.summary = json!({ "lambda": a.lambdas, "a": a.a_values, "rows": rows });
    write_json(&a.out.join(Path::new(&name).with_extension("manifest.json")), &m)?;
    if let Some(best) = rows.first() {
        log.line(format!(
            "best: λ={} a={} MAE={:?} status {:?}",
            best.lambda, best.a, best.mae, best.status
        ));
    }
    Ok(())
}

pub fn bench(a: &BenchArgs, log: Log) -> CliResult<()> {
    let f = ExprFile::load(&a.expr)?;
    let ctx = f.context()?;
    let (_, ds) = dataset_from_context(ctx, &a.data)?;
    let r = bench_inference(&f.expr, &ctx.var_names, ds.inputs(), a.samples, a.trials)?;
    let text = serde_json::to_string_pretty(&r).map_err(EqlError::from)?;
    println!("{text}");
    if let Some(out) = &a.out {
        write_json(out, &r)?;
        let args = json!({ "expr": a.expr, "data": a.data, "samples": a.samples, "trials": a.trials });
        let mut m = Manifest::new("bench", args.clone(), args);
        m.outputs = vec![file_name(out)];
        write_json(&out.with_extension("manifest.json"), &m)?;
    }
    log.line(format!(
        "{} samples x {} trials: mean {:.3e} s per trial",
        r.samples, r.trials, r.mean_seconds
    ));
    Ok(())
}

pub fn report(a: &ReportArgs, log: Log) -> CliResult<()> {
    let before = Checkpoint::load(&a.before)?;
    let after = Checkpoint::load(&a.after)?;
    if before.fingerprint != after.fingerprint {
        return Err(EqlError::Data("checkpoints were trained on different data".into()).into());
    }
    let ctx = after
        .data
        .as_ref()
        .ok_or_else(|| EqlError::Data("checkpoint carries no data context".into()))?;
    let (_, mut ds) = dataset_from_context(ctx, &a.data)?;
    if let Some(f) = a.train_frac {
        ds = split(&ds, f)?.1;
    }
    let pb: EqlParams<f64> = before.params()?;
    let pa: EqlParams<f64> = after.params()?;
    let r = phase_report(&pb, &pa, &ds)?;
    let city = ctx
        .lag_spec
        .as_ref()
        .map(|s| s.target_city.clone())
        .unwrap_or_else(|| "unknown".into());
    ensure_dir(&a.out)?;
    let name = output_name(&city, "report", &stamp(a.stamp.as_deref()));
    r.write_csv(create_file(&a.out.join(&name))?)?;
    let reference = published::eql(&city).map(|p| json!({ "mae": p.mae, "mae_star": p.mae_star }));
    let summary = json!({
        "samples": r.rows.len(),
        "mae_before": r.mae_before,
        "mae_after": r.mae_after,
        "fit": r.fit,
        "published": reference,
    });
    let args = json!({ "before": a.before, "after": a.after, "data": a.data, "train_frac": a.train_frac });
    let mut m = Manifest::new("report", args.clone(), args);
    m.outputs = vec![name.clone()];
    m.summary = summary.clone();
    write_json(&a.out.join(Path::new(&name).with_extension("manifest.json")), &m)?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(EqlError::from)?);
    log.line(format!(
        "MAE before {:.4}, after {:.4}; after ≈ {:.4}·before + {:.4} (rms {:.3e})",
        r.mae_before, r.mae_after, r.fit.alpha, r.fit.beta, r.fit.residual_rms
    ));
    if !log.quiet {
        eprint!("{}", published::footer());
    }
    Ok(())
}
