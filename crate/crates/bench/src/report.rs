//! Run reports and their CSV/JSON rendering.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::workload::WorkloadSpec;
use crate::BenchError;

/// One run. Field order is the column order of every rendering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub threads: usize,
    pub mix: String,
    pub committed: u64,
    pub aborted: u64,
    pub abort_rate: f64,
    pub secs: f64,
    pub txns_per_sec: f64,
    pub peak_versions: i64,
    pub final_versions: i64,
}

impl RunReport {
    pub fn new(spec: &WorkloadSpec, committed: u64, aborted: u64, secs: f64, peak_versions: i64, final_versions: i64) -> Self {
        let attempts = committed + aborted;
        RunReport {
            policy: spec.policy.label(),
            threads: spec.threads,
            mix: spec.mix.to_string(),
            committed,
            aborted,
            abort_rate: if attempts == 0 { 0.0 } else { aborted as f64 / attempts as f64 },
            secs,
            txns_per_sec: if secs > 0.0 { committed as f64 / secs } else { 0.0 },
            peak_versions,
            final_versions,
        }
    }

    /// Everything except wall-clock measurements.
    pub fn deterministic_fields(&self) -> (String, usize, String, u64, u64, i64, i64) {
        (
            self.policy.clone(),
            self.threads,
            self.mix.clone(),
            self.committed,
            self.aborted,
            self.peak_versions,
            self.final_versions,
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub stdev: f64,
}

impl MeanStd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stdev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, stdev }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.stdev)
    }
}

/// Mean and standard deviation of each numeric column over repeated runs
/// of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub policy: String,
    pub threads: usize,
    pub mix: String,
    pub runs: usize,
    pub committed: MeanStd,
    pub aborted: MeanStd,
    pub abort_rate: MeanStd,
    pub secs: MeanStd,
    pub txns_per_sec: MeanStd,
    pub peak_versions: MeanStd,
    pub final_versions: MeanStd,
}

pub fn aggregate(reports: &[RunReport]) -> Result<Aggregate, BenchError> {
    let first = reports
        .first()
        .ok_or_else(|| BenchError::InvalidSpec("nothing to aggregate".into()))?;
    let col = |f: fn(&RunReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(Aggregate {
        policy: first.policy.clone(),
        threads: first.threads,
        mix: first.mix.clone(),
        runs: reports.len(),
        committed: col(|r| r.committed as f64),
        aborted: col(|r| r.aborted as f64),
        abort_rate: col(|r| r.abort_rate),
        secs: col(|r| r.secs),
        txns_per_sec: col(|r| r.txns_per_sec),
        peak_versions: col(|r| r.peak_versions as f64),
        final_versions: col(|r| r.final_versions as f64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?}: expected csv or json")),
        }
    }
}

fn render<T: Serialize>(rows: &[T], format: Format) -> Result<String, BenchError> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row)?;
            }
            let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

pub fn report(reports: &[RunReport], format: Format) -> Result<String, BenchError> {
    if reports.is_empty() {
        return Err(BenchError::InvalidSpec("nothing to report".into()));
    }
    render(reports, format)
}

/// Aggregated rows. In CSV each statistic is rendered as `mean ± stdev`;
/// JSON keeps the two numbers apart.
pub fn report_aggregates(rows: &[Aggregate], format: Format) -> Result<String, BenchError> {
    if format == Format::Json {
        return render(rows, format);
    }
    #[derive(Serialize)]
    struct Row<'a> {
        policy: &'a str,
        threads: usize,
        mix: &'a str,
        runs: usize,
        committed: String,
        aborted: String,
        abort_rate: String,
        secs: String,
        txns_per_sec: String,
        peak_versions: String,
        final_versions: String,
    }
    let flat: Vec<Row<'_>> = rows
        .iter()
        .map(|a| Row {
            policy: &a.policy,
            threads: a.threads,
            mix: &a.mix,
            runs: a.runs,
            committed: a.committed.to_string(),
            aborted: a.aborted.to_string(),
            abort_rate: a.abort_rate.to_string(),
            secs: a.secs.to_string(),
            txns_per_sec: a.txns_per_sec.to_string(),
            peak_versions: a.peak_versions.to_string(),
            final_versions: a.final_versions.to_string(),
        })
        .collect();
    render(&flat, Format::Csv)
}

pub fn parse_json(text: &str) -> Result<Vec<RunReport>, BenchError> {
    Ok(serde_json::from_str(text)?)
}
