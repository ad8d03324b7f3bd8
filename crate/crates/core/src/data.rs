//! Hourly multi-city weather series: ingestion, min-max scaling, lagged
//! windows and the chronological split.

use std::fmt::Write as _;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EqlError, Result};

pub const CITIES: [&str; 5] = ["aalborg", "aarhus", "esbjerg", "odense", "roskilde"];
pub const FEATURES: [&str; 4] = ["temperature", "pressure", "wind_speed", "wind_direction"];

pub const DEFAULT_LAGS: usize = 4;
pub const DEFAULT_HORIZON: usize = 6;
pub const DEFAULT_TRAIN_FRAC: f64 = 0.9;

const TIME_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
];

/// Ordered cities and features; columns are city-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub cities: Vec<String>,
    pub features: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            cities: CITIES.iter().map(|s| s.to_string()).collect(),
            features: FEATURES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Schema {
    pub fn n_columns(&self) -> usize {
        self.cities.len() * self.features.len()
    }

    pub fn column_name(city: &str, feature: &str) -> String {
        format!("{city}_{feature}")
    }

    pub fn column_names(&self) -> Vec<String> {
        self.cities
            .iter()
            .flat_map(|c| self.features.iter().map(move |f| Self::column_name(c, f)))
            .collect()
    }

    pub fn column_index(&self, city: &str, feature: &str) -> Result<usize> {
        let c = self.cities.iter().position(|x| x == city);
        let f = self.features.iter().position(|x| x == feature);
        match (c, f) {
            (Some(c), Some(f)) => Ok(c * self.features.len() + f),
            _ => Err(EqlError::Data(format!("unknown column ({city}, {feature})"))),
        }
    }

    fn city_feature(&self, col: usize) -> (&str, &str) {
        let nf = self.features.len();
        (&self.cities[col / nf], &self.features[col % nf])
    }
}

/// Hourly, gap-free series with one column per (city, feature).
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    schema: Schema,
    timestamps: Vec<NaiveDateTime>,
    columns: Vec<Vec<f64>>,
}

fn parse_time(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn check_hourly(ts: &[NaiveDateTime]) -> Result<()> {
    let hour = Duration::hours(1);
    let mut missing = Vec::new();
    for (i, w) in ts.windows(2).enumerate() {
        let step = w[1] - w[0];
        if step <= Duration::zero() {
            return Err(EqlError::Data(format!(
                "timestamps not strictly increasing at row {}: {} after {}",
                i + 2,
                w[1],
                w[0]
            )));
        }
        if step.num_seconds() % 3600 != 0 {
            return Err(EqlError::Data(format!(
                "timestamp {} at row {} is not on the hourly grid",
                w[1],
                i + 2
            )));
        }
        let mut t = w[0] + hour;
        while t < w[1] {
            missing.push(t);
            t += hour;
        }
    }
    if missing.is_empty() {
        return Ok(());
    }
    let mut msg = format!("{} missing hour(s):", missing.len());
    for t in missing.iter().take(20) {
        let _ = write!(msg, " {}", t.format("%Y-%m-%d %H:%M"));
    }
    if missing.len() > 20 {
        msg.push_str(" ...");
    }
    Err(EqlError::Data(msg))
}

impl RawSeries {
    pub fn new(schema: Schema, timestamps: Vec<NaiveDateTime>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != schema.n_columns() {
            return Err(EqlError::Dimension {
                what: "series columns",
                expected: schema.n_columns(),
                got: columns.len(),
            });
        }
        for (i, c) in columns.iter().enumerate() {
            if c.len() != timestamps.len() {
                let (city, feature) = schema.city_feature(i);
                return Err(EqlError::Data(format!(
                    "column {} has {} values, expected {}",
                    Schema::column_name(city, feature),
                    c.len(),
                    timestamps.len()
                )));
            }
        }
        check_hourly(&timestamps)?;
        Ok(RawSeries {
            schema,
            timestamps,
            columns,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// `L_total`, the number of hours.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, city: &str, feature: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.schema.column_index(city, feature)?])
    }

    /// Write in the same wide format [`read_csv`] accepts.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.schema.column_names());
        wr.write_record(&header)?;
        for (i, t) in self.timestamps.iter().enumerate() {
            let mut rec = vec![t.format("%Y-%m-%d %H:%M:%S").to_string()];
            rec.extend(self.columns.iter().map(|c| format!("{:?}", c[i])));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| EqlError::io("<csv writer>", e))?;
        Ok(())
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawSeries> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| EqlError::io(path, e))?;
    read_csv(f, schema)
}

/// Wide CSV: `timestamp` then `<city>_<feature>` columns in any order.
/// Extra columns are ignored.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<RawSeries> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rd.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let ts_col = find("timestamp").ok_or_else(|| EqlError::Data("missing column `timestamp`".into()))?;
    let names = schema.column_names();
    let mut positions = Vec::with_capacity(names.len());
    for n in &names {
        positions.push(find(n).ok_or_else(|| EqlError::Data(format!("missing column `{n}`")))?);
    }

    let mut timestamps = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 2; // header is line 1
        let raw_t = rec.get(ts_col).unwrap_or("");
        let t = parse_time(raw_t).ok_or_else(|| {
            EqlError::Data(format!("row {row}, column `timestamp`: cannot parse `{raw_t}`"))
        })?;
        timestamps.push(t);
        for ((col, &pos), name) in columns.iter_mut().zip(&positions).zip(&names) {
            let cell = rec.get(pos).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                EqlError::Data(format!("row {row}, column `{name}`: cannot parse `{cell}`"))
            })?;
            if !v.is_finite() {
                return Err(EqlError::Data(format!("row {row}, column `{name}`: non-finite value")));
            }
            col.push(v);
        }
    }
    RawSeries::new(schema.clone(), timestamps, columns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub city: String,
    pub feature: String,
    pub min: f64,
    pub max: f64,
}

impl ColumnStats {
    pub fn name(&self) -> String {
        Schema::column_name(&self.city, &self.feature)
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn descale(&self, s: f64) -> f64 {
        s * (self.max - self.min) + self.min
    }

    /// Stats under which scaling is the identity; used for synthetic data.
    pub fn identity(name: &str) -> Self {
        ColumnStats {
            city: String::new(),
            feature: name.to_string(),
            min: 0.0,
            max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub columns: Vec<ColumnStats>,
}

impl ScalingStats {
    pub fn column(&self, city: &str, feature: &str) -> Result<&ColumnStats> {
        self.columns
            .iter()
            .find(|c| c.city == city && c.feature == feature)
            .ok_or_else(|| EqlError::Data(format!("no scaling statistics for ({city}, {feature})")))
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("stats serialize");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-column min/max over every hour of the series.
pub fn fit_scaling(raw: &RawSeries) -> Result<ScalingStats> {
    fit_scaling_rows(raw, 0..raw.len())
}

/// Per-column min/max over the given hours only.
pub fn fit_scaling_rows(raw: &RawSeries, rows: Range<usize>) -> Result<ScalingStats> {
    if rows.is_empty() || rows.end > raw.len() {
        return Err(EqlError::Data(format!(
            "cannot fit scaling on rows {rows:?} of a {}-hour series",
            raw.len()
        )));
    }
    let mut out = Vec::with_capacity(raw.columns.len());
    for (i, col) in raw.columns.iter().enumerate() {
        let (city, feature) = raw.schema.city_feature(i);
        let slice = &col[rows.clone()];
        let min = slice.iter().copied().fold(f64::INFINITY, f64::min);
        let max = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(EqlError::Data(format!(
                "degenerate column ({city}, {feature}): constant value {min}"
            )));
        }
        out.push(ColumnStats {
            city: city.to_string(),
            feature: feature.to_string(),
            min,
            max,
        });
    }
    Ok(ScalingStats { columns: out })
}

/// Column-wise `(x − min)/(max − min)`; values outside the fit range are
/// not clamped.
pub fn scale(raw: &RawSeries, stats: &ScalingStats) -> Result<RawSeries> {
    let mut columns = Vec::with_capacity(raw.columns.len());
    for (i, col) in raw.columns.iter().enumerate() {
        let (city, feature) = raw.schema.city_feature(i);
        let st = stats.column(city, feature)?;
        columns.push(col.iter().map(|x| st.scale(*x)).collect());
    }
    Ok(RawSeries {
        schema: raw.schema.clone(),
        timestamps: raw.timestamps.clone(),
        columns,
    })
}

pub fn descale(value: f64, stats: &ScalingStats, city: &str, feature: &str) -> Result<f64> {
    Ok(stats.column(city, feature)?.descale(value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSpec {
    pub lags: usize,
    pub horizon: usize,
    pub target_city: String,
    pub target_feature: String,
}

impl LagSpec {
    pub fn new(target_city: &str) -> Self {
        LagSpec {
            lags: DEFAULT_LAGS,
            horizon: DEFAULT_HORIZON,
            target_city: target_city.to_string(),
            target_feature: "wind_speed".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lags == 0 || self.horizon == 0 {
            return Err(EqlError::Config(format!(
                "lags and horizon must be at least 1, got {} and {}",
                self.lags, self.horizon
            )));
        }
        Ok(())
    }

    /// `L_total − lags − horizon + 1`, or zero if the series is too short.
    pub fn n_samples(&self, l_total: usize) -> usize {
        (l_total + 1).saturating_sub(self.lags + self.horizon)
    }
}

/// Provenance of one input column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRef {
    pub city: String,
    pub feature: String,
    /// 1 is the oldest hour of the window, `lags` the most recent.
    pub lag: usize,
}

impl FeatureRef {
    pub fn var_name(&self) -> String {
        format!("{}_{}_lag{}", self.city, self.feature, self.lag)
    }
}

/// Supervised samples built from a scaled series.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
    var_names: Vec<String>,
    catalog: Vec<FeatureRef>,
    target_stats: ColumnStats,
    lag_spec: Option<LagSpec>,
    source: Option<(Schema, ScalingStats)>,
    /// series hour of sample 0's oldest input
    first_hour: usize,
}

impl LaggedDataset {
    /// Plain arrays with no scaling or windowing behind them.
    pub fn from_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>, var_names: Vec<String>) -> Result<Self> {
        let d = var_names.len();
        if d == 0 {
            return Err(EqlError::Data("need at least one input variable".into()));
        }
        if rows.len() != targets.len() {
            return Err(EqlError::Dimension {
                what: "target count",
                expected: rows.len(),
                got: targets.len(),
            });
        }
        let mut inputs = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(EqlError::Dimension {
                    what: "sample width",
                    expected: d,
                    got: r.len(),
                });
            }
            inputs.extend(r);
        }
        Ok(LaggedDataset {
            inputs,
            targets,
            input_dim: d,
            var_names,
            catalog: Vec::new(),
            target_stats: ColumnStats::identity("y"),
            lag_spec: None,
            source: None,
            first_hour: 0,
        })
    }

    /// Replace the identity target statistics of a
    /// [`from_rows`](Self::from_rows) dataset.
    pub fn with_target_stats(mut self, stats: ColumnStats) -> Self {
        self.target_stats = stats;
        self
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Scaled targets.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    /// Column provenance; empty for datasets built by [`from_rows`](Self::from_rows).
    pub fn catalog(&self) -> &[FeatureRef] {
        &self.catalog
    }

    pub fn target_stats(&self) -> &ColumnStats {
        &self.target_stats
    }

    pub fn lag_spec(&self) -> Option<&LagSpec> {
        self.lag_spec.as_ref()
    }

    pub fn schema(&self) -> Option<&Schema> {
        self.source.as_ref().map(|s| &s.0)
    }

    /// Scaling statistics of every series column, when built from a series.
    pub fn stats(&self) -> Option<&ScalingStats> {
        self.source.as_ref().map(|s| &s.1)
    }

    /// Series hours feeding sample `i`, oldest first.
    pub fn input_hours(&self, i: usize) -> Option<Range<usize>> {
        let spec = self.lag_spec.as_ref()?;
        let start = self.first_hour + i;
        Some(start..start + spec.lags)
    }

    pub fn target_hour(&self, i: usize) -> Option<usize> {
        let spec = self.lag_spec.as_ref()?;
        Some(self.first_hour + i + spec.lags - 1 + spec.horizon)
    }

    pub fn descale_target(&self, s: f64) -> f64 {
        self.target_stats.descale(s)
    }

    fn subset(&self, r: Range<usize>) -> Self {
        let d = self.input_dim;
        LaggedDataset {
            inputs: self.inputs[r.start * d..r.end * d].to_vec(),
            targets: self.targets[r.clone()].to_vec(),
            input_dim: d,
            var_names: self.var_names.clone(),
            catalog: self.catalog.clone(),
            target_stats: self.target_stats.clone(),
            lag_spec: self.lag_spec.clone(),
            source: self.source.clone(),
            first_hour: self.first_hour + r.start,
        }
    }
}

/// Catalog of input columns: city-major, then feature, then lag.
pub fn catalog(schema: &Schema, lags: usize) -> Vec<FeatureRef> {
    schema
        .cities
        .iter()
        .flat_map(|c| {
            schema.features.iter().flat_map(move |f| {
                (1..=lags).map(move |lag| FeatureRef {
                    city: c.clone(),
                    feature: f.clone(),
                    lag,
                })
            })
        })
        .collect()
}

/// Column index of `(city, feature, lag)` in the lagged input vector.
pub fn catalog_index(schema: &Schema, lags: usize, r: &FeatureRef) -> Result<usize> {
    if r.lag == 0 || r.lag > lags {
        return Err(EqlError::Data(format!("lag {} outside 1..={lags}", r.lag)));
    }
    Ok(schema.column_index(&r.city, &r.feature)? * lags + r.lag - 1)
}

/// Sample `i` reads hours `i..i+lags` (lag `k` is hour `i+k−1`) and targets
/// hour `i+lags−1+horizon`.
pub fn build_lagged(scaled: &RawSeries, stats: &ScalingStats, spec: &LagSpec) -> Result<LaggedDataset> {
    spec.validate()?;
    let schema = &scaled.schema;
    let target_col = schema.column_index(&spec.target_city, &spec.target_feature)?;
    let l_total = scaled.len();
    if l_total < spec.lags + spec.horizon {
        return Err(EqlError::Data(format!(
            "series of {l_total} hours is too short for {} lags and horizon {}",
            spec.lags, spec.horizon
        )));
    }
    let n = spec.n_samples(l_total);
    let cat = catalog(schema, spec.lags);
    let d = cat.len();
    let mut inputs = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        for col in &scaled.columns {
            inputs.extend_from_slice(&col[i..i + spec.lags]);
        }
        targets.push(scaled.columns[target_col][i + spec.lags - 1 + spec.horizon]);
    }
    Ok(LaggedDataset {
        inputs,
        targets,
        input_dim: d,
        var_names: cat.iter().map(FeatureRef::var_name).collect(),
        catalog: cat,
        target_stats: stats.column(&spec.target_city, &spec.target_feature)?.clone(),
        lag_spec: Some(spec.clone()),
        source: Some((schema.clone(), stats.clone())),
        first_hour: 0,
    })
}

/// Chronological split: the first `⌊n·train_frac⌋` samples train.
pub fn split(ds: &LaggedDataset, train_frac: f64) -> Result<(LaggedDataset, LaggedDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(EqlError::Config(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let n = ds.n_samples();
    let k = (n as f64 * train_frac).floor() as usize;
    Ok((ds.subset(0..k), ds.subset(k..n)))
}

/// Where the min/max statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingFit {
    /// Every hour of the series, validation included.
    #[default]
    Full,
    /// Only hours that feed training samples; avoids leaking validation
    /// extremes into the scaling.
    TrainOnly,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub stats: ScalingStats,
    pub full: LaggedDataset,
    pub train: LaggedDataset,
    pub val: LaggedDataset,
}

/// Scale, window and split in one go.
pub fn prepare(raw: &RawSeries, spec: &LagSpec, fit: ScalingFit, train_frac: f64) -> Result<Prepared> {
    spec.validate()?;
    let stats = match fit {
        ScalingFit::Full => fit_scaling(raw)?,
        ScalingFit::TrainOnly => {
            let n = spec.n_samples(raw.len());
            let k = (n as f64 * train_frac).floor() as usize;
            // hours touched by training samples, targets included
            let end = (k + spec.lags - 1 + spec.horizon).min(raw.len());
            fit_scaling_rows(raw, 0..end)?
        }
    };
    let scaled = scale(raw, &stats)?;
    let full = build_lagged(&scaled, &stats, spec)?;
    let (train, val) = split(&full, train_frac)?;
    Ok(Prepared {
        stats,
        full,
        train,
        val,
    })
}
