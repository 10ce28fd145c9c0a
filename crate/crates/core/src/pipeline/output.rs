//! Report files: a long-format CSV of every round metric, the nested JSON
//! aggregate, and one plot series per metric.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::report::BenchmarkReport;

pub const RESULTS_CSV: &str = "results.csv";
pub const REPORT_JSON: &str = "report.json";
pub const SERIES_DIR: &str = "series";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns: synthesizer, epsilon, round, status, degenerate, metric, value,
/// error. One row per round and metric; undefined values are empty.
pub fn results_csv(report: &BenchmarkReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["synthesizer", "epsilon", "round", "status", "degenerate", "metric", "value", "error"])?;
    for r in std::iter::once(&report.baseline).chain(&report.rounds) {
        let eps = num(r.epsilon);
        let round = r.round.to_string();
        let status = if r.failed() { "failed" } else { "ok" };
        let degenerate = r.degenerate.to_string();
        let error = r.error.clone().unwrap_or_default();
        let mut rows = r.metrics();
        rows.push(("epsilon_spent".into(), (!r.failed()).then(|| r.epsilon_spent.iter().sum())));
        for (metric, value) in rows {
            w.write_record([
                r.synthesizer.as_str(),
                &eps,
                &round,
                status,
                &degenerate,
                &metric,
                &num(value),
                &error,
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

/// Per metric: synthesizer, epsilon, mean, std, stderr, count. The baseline
/// row has an empty epsilon.
pub fn series_csv(report: &BenchmarkReport, metric: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["synthesizer", "epsilon", "mean", "std", "stderr", "count"])?;
    for c in &report.cells {
        let Some(s) = c.metrics.get(metric) else { continue };
        w.write_record([
            c.synthesizer.as_str(),
            &num(c.epsilon),
            &num(s.mean),
            &num(s.std),
            &num(s.stderr),
            &s.count.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

/// Writes all report files under `dir`, returning their paths.
pub fn write_report(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let series_dir = dir.join(SERIES_DIR);
    fs::create_dir_all(&series_dir).map_err(io_err(&series_dir))?;
    let mut files = Vec::new();
    let mut put = |path: PathBuf, bytes: Vec<u8>| -> Result<()> {
        fs::write(&path, bytes).map_err(io_err(&path))?;
        files.push(path);
        Ok(())
    };
    put(dir.join(RESULTS_CSV), results_csv(report)?)?;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    put(dir.join(REPORT_JSON), json)?;
    let metrics: Vec<String> = report.baseline.metrics().into_iter().map(|(m, _)| m).collect();
    for m in metrics {
        put(series_dir.join(format!("{m}.csv")), series_csv(report, &m)?)?;
    }
    Ok(files)
}
