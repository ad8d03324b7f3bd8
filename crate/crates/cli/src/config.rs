//! The single JSON run configuration shared by `train`, `sweep` and `grid`.

use std::path::{Path, PathBuf};

use eql_core::data::{self, LagSpec, ScalingFit, Schema};
use eql_core::eql_net::DEFAULT_DEPTH;
use eql_core::extract::DEFAULT_PRUNE_TOL;
use eql_core::trainer::{preset, TrainConfig};
use eql_core::{EqlError, FuncLayout, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Wide hourly CSV. Relative paths resolve against the config file.
    pub path: Option<PathBuf>,
    pub target_city: String,
    pub target_feature: String,
    pub lags: usize,
    pub horizon: usize,
    pub train_frac: f64,
    pub scaling: ScalingFit,
    pub schema: Schema,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            target_city: "esbjerg".into(),
            target_feature: "wind_speed".into(),
            lags: data::DEFAULT_LAGS,
            horizon: data::DEFAULT_HORIZON,
            train_frac: data::DEFAULT_TRAIN_FRAC,
            scaling: ScalingFit::Full,
            schema: Schema::default(),
        }
    }
}

impl DataConfig {
    pub fn lag_spec(&self) -> LagSpec {
        LagSpec {
            lags: self.lags,
            horizon: self.horizon,
            target_city: self.target_city.clone(),
            target_feature: self.target_feature.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub prune_tol: f64,
    pub verify_samples: usize,
    pub verify_tol: f64,
    pub verify_seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            prune_tol: DEFAULT_PRUNE_TOL,
            verify_samples: 1000,
            verify_tol: 1e-9,
            verify_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    /// City preset whose λ, a and threshold replace those in `train`.
    pub preset: Option<String>,
    pub layout: FuncLayout,
    pub depth: usize,
    pub precision: Precision,
    pub train: TrainConfig,
    pub extract: ExtractConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            preset: None,
            layout: FuncLayout::default_layout(),
            depth: DEFAULT_DEPTH,
            precision: Precision::F64,
            train: TrainConfig::default(),
            extract: ExtractConfig::default(),
        }
    }
}

/// A config as read from disk plus the file's own JSON, kept for manifests.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: Option<PathBuf>,
    pub verbatim: serde_json::Value,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(LoadedConfig {
                config: RunConfig::default(),
                source: None,
                verbatim: serde_json::Value::Null,
            });
        };
        let text = std::fs::read_to_string(path).map_err(|e| EqlError::io(path, e))?;
        let verbatim: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| EqlError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_value(verbatim.clone())
            .map_err(|e| EqlError::Config(format!("{}: {e}", path.display())))?;
        if let Some(p) = &config.data.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.data.path = Some(base.join(p));
            }
        }
        Ok(LoadedConfig {
            config,
            source: Some(path.to_path_buf()),
            verbatim,
        })
    }
}

/// Flags that may override the file. Applied after the preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub data: Option<PathBuf>,
    pub target_city: Option<String>,
    pub seed: Option<u64>,
    pub epochs_p1: Option<usize>,
    pub epochs_p2: Option<usize>,
    pub lambda: Option<f64>,
    pub a: Option<f64>,
    pub threshold: Option<f64>,
}

impl RunConfig {
    /// File values, then the preset, then explicit flags.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(p) = &o.preset {
            self.preset = Some(p.clone());
        }
        if let Some(name) = &self.preset {
            let p = preset(name)?;
            self.train.apply_preset(p);
        }
        if let Some(v) = &o.data {
            self.data.path = Some(v.clone());
        }
        if let Some(v) = &o.target_city {
            self.data.target_city = v.clone();
        }
        if let Some(v) = o.seed {
            self.train.seed = v;
        }
        if let Some(v) = o.epochs_p1 {
            self.train.epochs_p1 = v;
        }
        if let Some(v) = o.epochs_p2 {
            self.train.epochs_p2 = v;
        }
        if let Some(v) = o.lambda {
            self.train.reg.lambda = v;
        }
        if let Some(v) = o.a {
            self.train.reg.a = v;
        }
        if let Some(v) = o.threshold {
            self.train.threshold = v;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.data.lag_spec().validate()?;
        if self.depth == 0 {
            return Err(EqlError::Config("depth must be at least 1".into()));
        }
        self.data.schema.column_index(&self.data.target_city, &self.data.target_feature)?;
        Ok(())
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .path
            .as_deref()
            .ok_or_else(|| EqlError::Config("no data file: set data.path or pass --data".into()))
    }
}
