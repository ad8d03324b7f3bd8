//! On-disk formats written by the commands, and helpers to rebuild datasets
//! from the context stored in them.

use std::path::{Path, PathBuf};

use eql_core::data::{build_lagged, load_csv, scale, LaggedDataset, RawSeries};
use eql_core::trainer::checkpoint::DataContext;
use eql_core::{EqlError, Expr, Result, Style};
use serde::{Deserialize, Serialize};

pub const EXPR_FORMAT: &str = "eql-expr/1";

/// A saved expression. `expr` is the authoritative JSON AST; the strings
/// are conveniences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprFile {
    pub format: String,
    pub expr: Expr,
    pub machine: String,
    pub pretty: String,
    pub prune_tol: f64,
    pub node_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataContext>,
}

impl ExprFile {
    pub fn new(expr: Expr, prune_tol: f64, decimals: usize, data: Option<DataContext>) -> Self {
        ExprFile {
            format: EXPR_FORMAT.into(),
            machine: expr.to_machine_string(),
            pretty: expr.format(decimals, Style::Pretty),
            node_count: expr.node_count(),
            fingerprint: data.as_ref().map(DataContext::fingerprint),
            prune_tol,
            expr,
            data,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EqlError::io(path, e))?;
        let f: ExprFile =
            serde_json::from_str(&text).map_err(|e| EqlError::Data(format!("{}: {e}", path.display())))?;
        if f.format != EXPR_FORMAT {
            return Err(EqlError::Data(format!(
                "{}: unsupported format `{}`",
                path.display(),
                f.format
            )));
        }
        if let (Some(fp), Some(ctx)) = (&f.fingerprint, &f.data) {
            if *fp != ctx.fingerprint() {
                return Err(EqlError::Data(format!(
                    "{}: fingerprint does not match the embedded data statistics",
                    path.display()
                )));
            }
        }
        Ok(f)
    }

    pub fn context(&self) -> Result<&DataContext> {
        self.data
            .as_ref()
            .ok_or_else(|| EqlError::Data("expression file carries no data context".into()))
    }
}

/// Written next to every output. `config` is the user's input exactly as
/// given: the config file's JSON, or the command's arguments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<PathBuf>,
    pub effective: serde_json::Value,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, effective: serde_json::Value) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            config_path: None,
            effective,
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| EqlError::io(path, e))
}

pub fn create_file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| EqlError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| EqlError::io(dir, e))
}

pub fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

pub fn stamp(given: Option<&str>) -> String {
    match given {
        Some(s) => s.to_string(),
        None => chrono::Utc::now().format("%Y%m%dT%H%M%S").to_string(),
    }
}

/// Load a CSV and window it exactly as the training data was.
pub fn dataset_from_context(ctx: &DataContext, csv: &Path) -> Result<(RawSeries, LaggedDataset)> {
    let missing = |what: &str| EqlError::Data(format!("data context has no {what}"));
    let schema = ctx.schema.as_ref().ok_or_else(|| missing("schema"))?;
    let stats = ctx.stats.as_ref().ok_or_else(|| missing("scaling statistics"))?;
    let spec = ctx.lag_spec.as_ref().ok_or_else(|| missing("lag spec"))?;
    let raw = load_csv(csv, schema)?;
    let ds = build_lagged(&scale(&raw, stats)?, stats, spec)?;
    if ds.var_names() != ctx.var_names.as_slice() {
        return Err(EqlError::Data("rebuilt variables differ from the stored ones".into()));
    }
    if ds.is_empty() {
        return Err(EqlError::Data(format!(
            "{}: {} rows are too few for {} lags and horizon {}",
            csv.display(),
            raw.len(),
            spec.lags,
            spec.horizon
        )));
    }
    Ok((raw, ds))
}
