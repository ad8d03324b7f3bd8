//! JSON checkpoints. Numbers are written in shortest round-trip form, so a
//! save/load cycle is bitwise exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ColumnStats, LagSpec, LaggedDataset, ScalingStats, Schema};
use crate::eql_net::{EqlParams, Matrix};
use crate::error::{EqlError, Result};
use crate::funcset::FuncLayout;
use crate::scalar::Scalar;

pub const FORMAT: &str = "eql-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Phase1,
    Thresholded,
    Final,
}

/// What the network was trained on; enough to rebuild inputs and descale
/// predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataContext {
    pub var_names: Vec<String>,
    pub target: ColumnStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag_spec: Option<LagSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Schema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ScalingStats>,
}

impl DataContext {
    pub fn of(ds: &LaggedDataset) -> Self {
        DataContext {
            var_names: ds.var_names().to_vec(),
            target: ds.target_stats().clone(),
            lag_spec: ds.lag_spec().cloned(),
            schema: ds.schema().cloned(),
            stats: ds.stats().cloned(),
        }
    }

    /// SHA-256 of the scaling statistics, or of the target statistics and
    /// variable names when there are none.
    pub fn fingerprint(&self) -> String {
        match &self.stats {
            Some(s) => s.fingerprint(),
            None => {
                let mut h = Sha256::new();
                h.update(serde_json::to_vec(&self.target).expect("stats serialize"));
                h.update(serde_json::to_vec(&self.var_names).expect("names serialize"));
                h.finalize().iter().map(|b| format!("{b:02x}")).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub stage: Stage,
    pub layout: FuncLayout,
    pub input_dim: usize,
    pub depth: usize,
    /// `W1 … Wn`, then the head.
    pub weights: Vec<MatrixData>,
    /// `true` where the weight is trainable.
    pub masks: Vec<Vec<bool>>,
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataContext>,
}

impl Checkpoint {
    pub fn new<T: Scalar>(p: &EqlParams<T>, stage: Stage, data: Option<DataContext>) -> Self {
        let p = p.to_f64();
        Checkpoint {
            format: FORMAT.to_string(),
            stage,
            layout: p.layout().clone(),
            input_dim: p.input_dim(),
            depth: p.depth(),
            weights: p
                .weights()
                .iter()
                .map(|m| MatrixData {
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.as_slice().to_vec(),
                })
                .collect(),
            masks: p.masks().to_vec(),
            fingerprint: data.as_ref().map(DataContext::fingerprint),
            data,
        }
    }

    pub fn params<T: Scalar>(&self) -> Result<EqlParams<T>> {
        if self.format != FORMAT {
            return Err(EqlError::Checkpoint(format!(
                "unsupported format `{}` (expected `{FORMAT}`)",
                self.format
            )));
        }
        if self.weights.len() != self.depth + 1 {
            return Err(EqlError::Checkpoint(format!(
                "depth {} needs {} matrices, found {}",
                self.depth,
                self.depth + 1,
                self.weights.len()
            )));
        }
        let weights = self
            .weights
            .iter()
            .map(|m| Matrix::from_vec(m.rows, m.cols, m.data.iter().map(|v| T::of(*v)).collect()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| EqlError::Checkpoint(e.to_string()))?;
        let p = EqlParams::from_parts(self.layout.clone(), self.input_dim, weights, self.masks.clone())
            .map_err(|e| EqlError::Checkpoint(e.to_string()))?;
        if let (Some(fp), Some(ctx)) = (&self.fingerprint, &self.data) {
            if *fp != ctx.fingerprint() {
                return Err(EqlError::Checkpoint(
                    "fingerprint does not match the embedded data statistics".into(),
                ));
            }
            if ctx.var_names.len() != self.input_dim {
                return Err(EqlError::Checkpoint(format!(
                    "{} variable names for input_dim {}",
                    ctx.var_names.len(),
                    self.input_dim
                )));
            }
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| EqlError::Checkpoint(e.to_string()))
    }

    /// Write to a sibling temp file, then rename over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()?).map_err(|e| EqlError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| EqlError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EqlError::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn save_checkpoint<T: Scalar>(
    p: &EqlParams<T>,
    stage: Stage,
    data: Option<DataContext>,
    path: impl AsRef<Path>,
) -> Result<()> {
    Checkpoint::new(p, stage, data).save(path)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<EqlParams<T>> {
    Checkpoint::load(path)?.params()
}

/// Like [`load_checkpoint`] but refuses a checkpoint whose layout differs.
pub fn load_checkpoint_expecting<T: Scalar>(
    path: impl AsRef<Path>,
    layout: &FuncLayout,
) -> Result<EqlParams<T>> {
    let ck = Checkpoint::load(path)?;
    if ck.layout != *layout {
        return Err(EqlError::Checkpoint(format!(
            "checkpoint layout {:?} differs from expected {:?}",
            ck.layout.entries(),
            layout.entries()
        )));
    }
    ck.params()
}
