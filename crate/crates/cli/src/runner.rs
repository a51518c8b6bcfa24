//! Evaluates an experiment and writes the result table.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use uplink_core::channel::SpectrumCache;
use uplink_core::monte_carlo::{mc_rate_lmmse, mc_rate_los, McRates};
use uplink_core::rate_analysis::{
    lmmse_asymptotic_rates, lmmse_power_scaled_sinr, lmmse_rates, log2_1p, los_asymptotic_rates,
    los_power_scaled_sinr, los_rates,
};
use uplink_core::{Scenario64, ScenarioConfig};

use crate::error::CliError;
use crate::experiment::{Experiment, Method, Point};

pub const CSV_HEADER: [&str; 7] = [
    "sweep_var",
    "value",
    "method",
    "per_user_rate_or_sum",
    "std_error",
    "seed",
    "wall_time_ms",
];

/// A rate that may be unbounded (large-`N` LMMSE limit without pilot sharers).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Rate {
    Finite(f64),
    Unbounded,
}

/// A rate and its standard error, if sampled.
type Entry = (Rate, Option<f64>);

/// One CSV line.
#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub sweep_var: String,
    pub value: Option<f64>,
    /// `<method>:user<k>` (1-based), `<method>:sum`, or `crossover`.
    pub method: String,
    pub rate: Rate,
    pub std_error: Option<f64>,
    pub seed: u64,
    pub wall_time_ms: f64,
}

fn rows_for(
    point: &Point,
    method: Method,
    per_user: Vec<Entry>,
    sum: Entry,
    ms: f64,
) -> Vec<Row> {
    let make = |suffix: String, (rate, se): Entry| Row {
        sweep_var: point.label.clone(),
        value: Some(point.value),
        method: format!("{}:{suffix}", method.name()),
        rate,
        std_error: se,
        seed: point.config.seed,
        wall_time_ms: ms,
    };
    let mut rows: Vec<Row> = per_user
        .into_iter()
        .enumerate()
        .map(|(k, r)| make(format!("user{}", k + 1), r))
        .collect();
    rows.push(make("sum".into(), sum));
    rows
}

fn finite(rates: Vec<f64>) -> (Vec<Entry>, Entry) {
    let sum = rates.iter().sum();
    (
        rates.into_iter().map(|r| (Rate::Finite(r), None)).collect(),
        (Rate::Finite(sum), None),
    )
}

fn from_mc(m: McRates) -> (Vec<Entry>, Entry) {
    (
        m.per_user
            .iter()
            .map(|e| (Rate::Finite(e.mean), Some(e.std_error)))
            .collect(),
        (Rate::Finite(m.sum.mean), Some(m.sum.std_error)),
    )
}

fn power_scaled(scn: &Scenario64, lmmse: bool) -> Vec<f64> {
    let ps = scn.config.power_scaling.as_ref().expect("checked when expanding points");
    let n = scn.antennas();
    let pre = scn.config.pilot_prefactor();
    (0..scn.users())
        .map(|k| {
            if lmmse {
                pre * log2_1p(lmmse_power_scaled_sinr(
                    &scn.fading,
                    &scn.spectrum,
                    &scn.ricean,
                    k,
                    ps.epsilon,
                    ps.e_u,
                    n,
                ))
            } else {
                log2_1p(los_power_scaled_sinr(&scn.fading, &scn.ricean, k, ps.epsilon, ps.e_u, n))
            }
        })
        .collect()
}

/// Evaluates every method at one point.
pub fn evaluate_point(point: &Point, methods: &[Method], cache: &SpectrumCache<f64>) -> Result<Vec<Row>, CliError> {
    let cfg = &point.config;
    let scn = Scenario64::build_cached(cfg, cache)?;
    let mut rows = Vec::new();
    for &m in methods {
        let t = Instant::now();
        let (users, sum) = match m {
            Method::LmmseMc => from_mc(mc_rate_lmmse(&scn, cfg.mc_trials, cfg.seed)?),
            Method::LosMc => from_mc(mc_rate_los(&scn, cfg.mc_trials, cfg.seed)?),
            Method::LmmseClosedForm => finite(lmmse_rates(&scn)),
            Method::LosClosedForm => finite(los_rates(&scn)),
            Method::LosAsymptotic => finite(los_asymptotic_rates(&scn)),
            Method::LmmsePowerScaled => finite(power_scaled(&scn, true)),
            Method::LosPowerScaled => finite(power_scaled(&scn, false)),
            Method::LmmseAsymptotic => {
                let r = lmmse_asymptotic_rates(&scn);
                let sum = if r.iter().all(Option::is_some) {
                    Rate::Finite(r.iter().flatten().sum())
                } else {
                    Rate::Unbounded
                };
                let users = r
                    .into_iter()
                    .map(|v| (v.map_or(Rate::Unbounded, Rate::Finite), None))
                    .collect();
                (users, (sum, None))
            }
        };
        let ms = t.elapsed().as_secs_f64() * 1e3;
        rows.extend(rows_for(point, m, users, sum, ms));
    }
    Ok(rows)
}

/// First swept `N` of each curve at which the LOS closed-form sum rate
/// exceeds the LMMSE closed-form sum rate.
pub fn crossover_rows(points: &[Point], cache: &SpectrumCache<f64>) -> Result<Vec<Row>, CliError> {
    let sums = points
        .par_iter()
        .map(|p| {
            let scn = Scenario64::build_cached(&p.config, cache)?;
            let lmmse: f64 = lmmse_rates(&scn).iter().sum();
            let los: f64 = los_rates(&scn).iter().sum();
            Ok((p.curve, p.value, los - lmmse))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let curves = points.iter().map(|p| p.curve).max().map_or(0, |c| c + 1);
    Ok((0..curves)
        .map(|c| {
            let label = points.iter().find(|p| p.curve == c).map(|p| p.label.clone()).unwrap_or_default();
            let seed = points.iter().find(|p| p.curve == c).map_or(0, |p| p.config.seed);
            let hit = sums.iter().find(|(curve, _, diff)| *curve == c && *diff > 0.0);
            Row {
                sweep_var: label,
                value: hit.map(|h| h.1),
                method: "crossover".into(),
                rate: Rate::Finite(hit.map_or(f64::NAN, |h| h.2)),
                std_error: None,
                seed,
                wall_time_ms: 0.0,
            }
        })
        .collect())
}

/// All rows of an experiment in sweep order.
pub fn run(experiment: &Experiment, seed: Option<u64>) -> Result<Vec<Row>, CliError> {
    let points = experiment.points(seed)?;
    let cache = SpectrumCache::new();
    let per_point = points
        .par_iter()
        .map(|p| evaluate_point(p, &experiment.methods, &cache))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut rows: Vec<Row> = per_point.into_iter().flatten().collect();
    if experiment.report_crossover {
        rows.extend(crossover_rows(&points, &cache)?);
    }
    Ok(rows)
}

fn sci(x: f64) -> String {
    format!("{x:.17e}")
}

/// Writes the table with the fixed header; numbers in full-precision
/// scientific notation, `std_error` empty for non-Monte-Carlo rows.
pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let rate = match r.rate {
            Rate::Finite(v) if v.is_nan() => String::new(),
            Rate::Finite(v) => sci(v),
            Rate::Unbounded => "unbounded".into(),
        };
        w.write_record([
            r.sweep_var.clone(),
            r.value.map(sci).unwrap_or_else(|| "none".into()),
            r.method.clone(),
            rate,
            r.std_error.map(sci).unwrap_or_default(),
            r.seed.to_string(),
            format!("{:.3}", r.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Resolved description written next to the CSV.
#[derive(Serialize)]
pub struct Sidecar<'a> {
    pub experiment: &'a Experiment,
    pub resolved_base: ScenarioConfig,
    pub seed: u64,
    pub points: usize,
    pub rows: usize,
    pub generator: String,
}

/// `<csv stem>.json` next to the CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Runs `experiment` and writes the CSV and its JSON sidecar.
pub fn run_to_files(experiment: &Experiment, seed: Option<u64>, out: &Path) -> Result<Vec<Row>, CliError> {
    let rows = run(experiment, seed)?;
    let file = std::fs::File::create(out)?;
    write_csv(&rows, std::io::BufWriter::new(file))?;
    let resolved_base = experiment.base_config(seed)?;
    let sidecar = Sidecar {
        experiment,
        seed: resolved_base.seed,
        resolved_base,
        points: experiment.points(seed)?.len(),
        rows: rows.len(),
        generator: format!("uplink {}", env!("CARGO_PKG_VERSION")),
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(sidecar_path(out), text)?;
    Ok(rows)
}
