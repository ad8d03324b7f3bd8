//! Synthetic weather series shared by the CLI test targets.
#![allow(dead_code)]

use chrono::NaiveDateTime;
use eql_core::data::{RawSeries, Schema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn t0() -> NaiveDateTime {
    NaiveDateTime::parse_from_str("2021-03-01 00:00:00", "%Y-%m-%d %H:%M:%S").unwrap()
}

pub fn hourly(n: usize) -> Vec<NaiveDateTime> {
    (0..n).map(|h| t0() + chrono::Duration::hours(h as i64)).collect()
}

/// Random-walk wind shared across cities, daily temperature cycle, slow
/// pressure swings and uniform wind direction.
pub fn synthetic_series(hours: usize, seed: u64) -> RawSeries {
    let schema = Schema::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = 8.0;
    let base: Vec<f64> = (0..hours)
        .map(|_| {
            level = f64::max(level + rng.gen_range(-0.6..0.6), 0.5);
            level
        })
        .collect();
    let cols = (0..schema.n_columns())
        .map(|c| {
            base.iter()
                .enumerate()
                .map(|(h, b)| match c % 4 {
                    0 => 10.0 + 5.0 * (h as f64 / 24.0 * std::f64::consts::TAU).sin() + rng.gen_range(-1.0..1.0),
                    1 => 1010.0 + 3.0 * (h as f64 / 90.0).sin() + rng.gen_range(-0.3..0.3),
                    2 => b + rng.gen_range(-0.5..0.5) + (c / 4) as f64 * 0.2,
                    _ => rng.gen_range(0.0..360.0),
                })
                .collect()
        })
        .collect();
    RawSeries::new(schema, hourly(hours), cols).unwrap()
}


pub fn write_series(series: &RawSeries, path: &std::path::Path) {
    series.write_csv(std::fs::File::create(path).unwrap()).unwrap();
}
