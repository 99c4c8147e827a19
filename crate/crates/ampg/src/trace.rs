//! CSV traces and the per-iteration summary across seeds.

use std::path::Path;

use ampg_core::algorithms::RunTrace;
use serde::Serialize;

use crate::config::{AlgorithmId, EstimatorConfig};
use crate::format::{fmt_f64, Dec};
use crate::HarnessError;

pub const BASE_COLUMNS: [&str; 7] = ["t", "phi", "nash_gap", "c_t", "beta", "algorithm", "seed"];
pub const SAMPLED_COLUMNS: [&str; 5] = ["K", "N1", "N2", "B", "alpha"];
pub const DISTANCE_COLUMN: &str = "l1_distance";

/// Estimator columns of a sample-based run. For sampled PG `B` is the
/// trajectory length `N1 + K N2`; columns that do not apply are left empty.
fn estimator_fields(alg: AlgorithmId, e: &EstimatorConfig) -> [String; 5] {
    let alpha = fmt_f64(e.alpha.0);
    match alg {
        AlgorithmId::SampledProxq => [
            String::new(),
            e.n1.to_string(),
            String::new(),
            e.b.to_string(),
            alpha,
        ],
        _ => [
            e.k.to_string(),
            e.n1.to_string(),
            e.n2.to_string(),
            (e.n1 + e.k * e.n2).to_string(),
            alpha,
        ],
    }
}

pub fn header(sampled: bool, distance: bool) -> Vec<&'static str> {
    let mut h = BASE_COLUMNS.to_vec();
    if sampled {
        h.extend(SAMPLED_COLUMNS);
    }
    if distance {
        h.push(DISTANCE_COLUMN);
    }
    h
}

pub fn write_trace<W: std::io::Write>(
    out: W,
    trace: &RunTrace,
    alg: AlgorithmId,
    estimator: Option<&EstimatorConfig>,
) -> Result<(), csv::Error> {
    let sampled = alg.is_sampled() && estimator.is_some();
    let distance = trace.records.iter().any(|r| r.policy_distance.is_some());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(sampled, distance))?;
    for r in &trace.records {
        let mut row = vec![
            r.t.to_string(),
            fmt_f64(r.phi),
            fmt_f64(r.nash_gap),
            fmt_f64(r.c_t),
            fmt_f64(r.beta),
            trace.algorithm.clone(),
            trace.seed.to_string(),
        ];
        if sampled {
            row.extend(estimator_fields(alg, estimator.unwrap()));
        }
        if distance {
            row.push(r.policy_distance.map(fmt_f64).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(
    path: &Path,
    trace: &RunTrace,
    alg: AlgorithmId,
    estimator: Option<&EstimatorConfig>,
) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_trace(std::io::BufWriter::new(file), trace, alg, estimator)
        .map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))
}

/// Numeric columns of a trace file, keyed by header name.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TraceTable {
    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let fmt = |e: csv::Error| HarnessError::Format(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(fmt)?;
        let columns = r.headers().map_err(fmt)?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(fmt)?;
        Ok(TraceTable { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[k].parse().unwrap_or(f64::NAN))
                .collect(),
        )
    }
}

/// Mean and standard deviation at each evaluated iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub mean: Vec<Dec>,
    pub std: Vec<Dec>,
}

/// Population mean and standard deviation, computed on data shifted by the
/// first value so identical samples give exactly that value and zero.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let x0 = xs[0];
    let n = xs.len() as f64;
    let (s, s2) = xs.iter().fold((0.0, 0.0), |(s, s2), x| {
        (s + (x - x0), s2 + (x - x0) * (x - x0))
    });
    let m = s / n;
    (x0 + m, (s2 / n - m * m).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub algorithm: String,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    /// Learning rate of the first step and how it was obtained.
    pub beta: Dec,
    pub rate_rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_provenance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_gap: Option<Dec>,
    pub t: Vec<usize>,
    /// Number of seeds contributing at each `t`.
    pub count: Vec<usize>,
    pub nash_gap: Band,
    pub phi: Band,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1_distance: Option<Band>,
    /// Mean over seeds of the average squared gap over the evaluated
    /// iterates up to and including `t`.
    pub nash_regret_star: Vec<Dec>,
    pub failures: Vec<Failure>,
}

/// Aggregates traces that share an evaluation grid (shorter, aborted
/// traces contribute to the prefix they cover).
pub fn summarize(
    traces: &[RunTrace],
) -> (Vec<usize>, Vec<usize>, Band, Band, Option<Band>, Vec<Dec>) {
    let longest = traces.iter().max_by_key(|t| t.records.len());
    let grid: Vec<usize> = longest
        .map(|t| t.records.iter().map(|r| r.t).collect())
        .unwrap_or_default();
    let with_distance = traces
        .iter()
        .any(|t| t.records.iter().any(|r| r.policy_distance.is_some()));
    let mut count = Vec::new();
    let (mut gap, mut phi, mut dist) = (band(), band(), band());
    let mut regret = Vec::new();
    for (k, _) in grid.iter().enumerate() {
        let present: Vec<&RunTrace> = traces.iter().filter(|t| t.records.len() > k).collect();
        count.push(present.len());
        let col = |f: &dyn Fn(&ampg_core::algorithms::TraceRecord) -> f64| -> Vec<f64> {
            present.iter().map(|t| f(&t.records[k])).collect()
        };
        push(&mut gap, mean_std(&col(&|r| r.nash_gap)));
        push(&mut phi, mean_std(&col(&|r| r.phi)));
        push(
            &mut dist,
            mean_std(&col(&|r| r.policy_distance.unwrap_or(f64::NAN))),
        );
        let per_seed: Vec<f64> = present
            .iter()
            .map(|t| {
                t.records[..=k]
                    .iter()
                    .map(|r| r.nash_gap * r.nash_gap)
                    .sum::<f64>()
                    / (k + 1) as f64
            })
            .collect();
        regret.push(Dec(mean_std(&per_seed).0));
    }
    (grid, count, gap, phi, with_distance.then_some(dist), regret)
}

fn band() -> Band {
    Band {
        mean: Vec::new(),
        std: Vec::new(),
    }
}

fn push(b: &mut Band, (m, s): (f64, f64)) {
    b.mean.push(Dec(m));
    b.std.push(Dec(s));
}
