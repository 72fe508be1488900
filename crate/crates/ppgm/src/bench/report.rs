//! File output of an experiment: one CSV per completed run, a combined
//! summary, the manifest, and the two gap plots. CSV bytes are a pure
//! function of the manifest except for the `time_sec` column.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::TraceRecord;

use super::{plot, AlgoId, ExperimentBundle, RunStatus};

/// CSV schema shared by every algorithm.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    algo: String,
    iter: usize,
    time_sec: f64,
    objective: f64,
    residual: f64,
    stepsize: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub algo: AlgoId,
    #[serde(flatten)]
    pub status: RunStatus,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_gap: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub family: super::Family,
    pub seed: u64,
    pub reference_value: f64,
    pub runs: Vec<RunSummary>,
}

/// Writes `manifest.json`, one `<algo>.csv` per completed run,
/// `summary.json`, and the two SVG gap plots. Returns the created paths.
pub fn emit_report(bundle: &ExperimentBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if bundle.runs.is_empty() {
        return Err(Error::InvalidParameter("bundle has no runs".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&bundle.manifest)?)?;
    written.push(manifest_path);

    for run in &bundle.runs {
        if !matches!(run.status, RunStatus::Completed) {
            continue;
        }
        let path = out_dir.join(format!("{}.csv", run.algo));
        let mut writer = csv::Writer::from_path(&path)?;
        for rec in &run.trace {
            writer.serialize(CsvRow {
                algo: run.algo.name().to_string(),
                iter: rec.iter,
                time_sec: rec.wall_seconds,
                objective: rec.objective,
                residual: rec.residual,
                stepsize: rec.stepsize,
            })?;
        }
        writer.flush()?;
        written.push(path);
    }

    let summary = Summary {
        family: bundle.manifest.family,
        seed: bundle.manifest.seed,
        reference_value: bundle.reference_value,
        runs: bundle
            .runs
            .iter()
            .map(|run| RunSummary {
                algo: run.algo,
                status: run.status.clone(),
                iterations: run.trace.len(),
                final_objective: run.final_objective,
                final_gap: bundle
                    .gap_series(run)
                    .last()
                    .map_or(f64::NAN, |(_, gap, _)| *gap),
                wall_seconds: run.wall_seconds,
            })
            .collect(),
    };
    let summary_path = out_dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    written.push(summary_path);

    let mut iter_series = Vec::new();
    let mut time_series = Vec::new();
    for run in &bundle.runs {
        if !matches!(run.status, RunStatus::Completed) {
            continue;
        }
        let gaps = bundle.gap_series(run);
        iter_series.push((
            run.algo.name().to_string(),
            gaps.iter().map(|(it, gap, _)| (*it as f64, *gap)).collect(),
        ));
        time_series.push((
            run.algo.name().to_string(),
            gaps.iter().map(|(_, gap, sec)| (*sec, *gap)).collect(),
        ));
    }
    let family = bundle.manifest.family.to_string();
    let p1 = out_dir.join("gap_iterations.svg");
    plot::write_gap_plot(&p1, &format!("{family}: objective gap"), "iteration", &iter_series)?;
    written.push(p1);
    let p2 = out_dir.join("gap_seconds.svg");
    plot::write_gap_plot(&p2, &format!("{family}: objective gap"), "seconds", &time_series)?;
    written.push(p2);

    Ok(written)
}

/// Reads the per-algorithm traces back from a report directory.
pub fn load_traces(dir: &Path) -> Result<Vec<(String, Vec<TraceRecord>)>> {
    let mut out = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    for path in paths {
        let mut reader = csv::Reader::from_path(&path)?;
        let mut trace = Vec::new();
        let mut algo = String::new();
        for row in reader.deserialize::<CsvRow>() {
            let row = row?;
            algo = row.algo;
            trace.push(TraceRecord {
                iter: row.iter,
                objective: row.objective,
                residual: row.residual,
                stepsize: row.stepsize,
                wall_seconds: row.time_sec,
            });
        }
        if !trace.is_empty() {
            out.push((algo, trace));
        }
    }
    Ok(out)
}

/// Reads `summary.json` from a report directory.
pub fn load_summary(dir: &Path) -> Result<Summary> {
    let raw = fs::read_to_string(dir.join("summary.json"))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Regenerates the SVG plots of a report directory from its CSVs and
/// summary.
pub fn replot(dir: &Path) -> Result<Vec<PathBuf>> {
    let summary = load_summary(dir)?;
    let traces = load_traces(dir)?;
    if traces.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no trace CSVs found in {}",
            dir.display()
        )));
    }
    let mut iter_series = Vec::new();
    let mut time_series = Vec::new();
    for (algo, trace) in &traces {
        let gaps: Vec<(f64, f64, f64)> = trace
            .iter()
            .map(|r| {
                (
                    r.iter as f64,
                    (r.objective - summary.reference_value).max(super::GAP_FLOOR),
                    r.wall_seconds,
                )
            })
            .collect();
        iter_series.push((algo.clone(), gaps.iter().map(|(i, g, _)| (*i, *g)).collect()));
        time_series.push((algo.clone(), gaps.iter().map(|(_, g, s)| (*s, *g)).collect()));
    }
    let family = summary.family.to_string();
    let p1 = dir.join("gap_iterations.svg");
    plot::write_gap_plot(&p1, &format!("{family}: objective gap"), "iteration", &iter_series)?;
    let p2 = dir.join("gap_seconds.svg");
    plot::write_gap_plot(&p2, &format!("{family}: objective gap"), "seconds", &time_series)?;
    Ok(vec![p1, p2])
}

/// CSV bytes with the wall-clock column masked, for determinism
/// comparisons across reruns.
pub fn normalized_csv(path: &Path) -> Result<String> {
    let raw = fs::read_to_string(path)?;
    let mut out = String::with_capacity(raw.len());
    for (i, line) in raw.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let mut fields: Vec<&str> = line.split(',').collect();
            if fields.len() >= 3 {
                fields[2] = "-";
            }
            out.push_str(&fields.join(","));
        }
        out.push('\n');
    }
    Ok(out)
}
