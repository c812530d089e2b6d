#![allow(dead_code)]

pub mod oracle;

use crhvt_core::env::{CorruptionSpec, NoiseSpec};
use crhvt_core::{ExperimentConfig, PolicyKind};

/// Least-squares slope of `ln y(t)` against `ln t` over rounds `from..=to` (1-based).
pub fn log_log_slope(series: &[f64], from: usize, to: usize) -> f64 {
    let pts: Vec<(f64, f64)> = (from..=to)
        .map(|t| ((t as f64).ln(), series[t - 1].ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn desk(algo: &[PolicyKind], noise: NoiseSpec, budget: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk_scale(algo[0], noise, budget);
    c.algo = algo.to_vec();
    c
}

pub fn small(
    algo: &[PolicyKind],
    noise: NoiseSpec,
    budget: f64,
    horizon: usize,
    seeds: &[u64],
) -> ExperimentConfig {
    let mut c = desk(algo, noise, budget);
    c.horizon = horizon;
    c.seeds = seeds.to_vec();
    c.corruption = if budget > 0.0 {
        CorruptionSpec::ThetaFlip { budget }
    } else {
        CorruptionSpec::None
    };
    c
}

/// `summary.json` with the timing section removed.
pub fn summary_without_timing(summary: &crhvt_core::Summary) -> String {
    let mut value = serde_json::to_value(summary).unwrap();
    value.as_object_mut().unwrap().remove("timing");
    serde_json::to_string_pretty(&value).unwrap()
}

/// CSV text with the `per_round_time_ns` column zeroed.
pub fn mask_timing_column(csv: &str) -> String {
    csv.lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 {
                return line.to_string();
            }
            let mut f: Vec<&str> = line.split(',').collect();
            f[3] = "0";
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}
