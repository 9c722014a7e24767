use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trustroute_core::engine::trace::{read_jsonl, TraceIoError};
use trustroute_core::engine::{StageTimings, TraceRecord};

#[derive(Debug, Error)]
pub enum LatencyError {
    #[error("no samples to summarize")]
    Empty,
    #[error("no trace files (*.jsonl) in {0}")]
    NoTraces(PathBuf),
    #[error("non-finite or negative timing in {0}")]
    BadSample(String),
    #[error("{path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceIoError,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    pub p90: f64,
    pub avg: f64,
}

/// Nearest-rank percentile: the smallest sample with at least `q` of the
/// data at or below it, i.e. `sorted[ceil(q * n) - 1]`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.max(1) - 1])
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self, LatencyError> {
        if samples.is_empty() {
            return Err(LatencyError::Empty);
        }
        if let Some(v) = samples.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(LatencyError::BadSample(v.to_string()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(LatencyStats {
            samples: sorted.len(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            p90: nearest_rank(&sorted, 0.9).expect("non-empty"),
            avg: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }
}

/// Per-stage statistics plus the per-turn total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub stages: BTreeMap<String, LatencyStats>,
    pub total: LatencyStats,
}

impl LatencyReport {
    pub fn from_timings(timings: &[StageTimings]) -> Result<Self, LatencyError> {
        if timings.is_empty() {
            return Err(LatencyError::Empty);
        }
        let mut stages = BTreeMap::new();
        for (i, name) in StageTimings::STAGES.iter().enumerate() {
            let col: Vec<f64> = timings.iter().map(|t| t.as_array()[i]).collect();
            stages.insert(name.to_string(), LatencyStats::from_samples(&col)?);
        }
        let totals: Vec<f64> = timings.iter().map(|t| t.as_array().iter().sum()).collect();
        Ok(LatencyReport { stages, total: LatencyStats::from_samples(&totals)? })
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TraceRecord>) -> Result<Self, LatencyError> {
        let timings: Vec<StageTimings> = records.into_iter().map(|r| r.timings_ms).collect();
        Self::from_timings(&timings)
    }

    /// Reads every `*.jsonl` file in `dir` (sorted by name).
    pub fn from_trace_dir(dir: &Path) -> Result<Self, LatencyError> {
        let records = read_trace_dir(dir)?;
        Self::from_records(records.iter().flat_map(|(_, r)| r.iter()))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8} {:>12} {:>12} {:>12} {:>12}", "stage", "n", "min_ms", "max_ms", "p90_ms", "avg_ms");
        let rows = StageTimings::STAGES
            .iter()
            .filter_map(|s| self.stages.get(*s).map(|v| (*s, v)))
            .chain(std::iter::once(("total", &self.total)));
        for (name, s) in rows {
            let _ = writeln!(
                out,
                "{:<10} {:>8} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
                name, s.samples, s.min, s.max, s.p90, s.avg
            );
        }
        out
    }
}

pub fn read_trace_dir(dir: &Path) -> Result<Vec<(PathBuf, Vec<TraceRecord>)>, LatencyError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    if paths.is_empty() {
        return Err(LatencyError::NoTraces(dir.to_path_buf()));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let r = read_jsonl(&p).map_err(|source| LatencyError::Trace { path: p.clone(), source })?;
            Ok((p, r))
        })
        .collect()
}
