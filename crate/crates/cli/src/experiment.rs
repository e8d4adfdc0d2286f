//! Runs an experiment matrix and writes its artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fatesim_core::agents::AgentConfig;
use fatesim_core::runner::{run_jobs, Job, RunRecord};
use fatesim_core::stats::{self, ComparisonReport};
use serde::Serialize;
use serde_json::json;

use crate::config::Resolved;
use crate::svg;
use crate::CliError;

pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub run_id: String,
    pub error: String,
}

#[derive(Debug)]
pub struct Outcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<Failure>,
    pub report: Option<ComparisonReport>,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    run_id: String,
    label: &'a str,
    algorithm: &'a str,
    seed: u64,
    auc: f64,
    final_coverage: f64,
    unique_crashes: usize,
    episodes: usize,
    total_reward: f64,
    duration_secs: f64,
    trace: String,
}

pub fn trace_file_name(label: &str, seed: u64) -> String {
    format!("{label}_{seed}.csv")
}

/// Runs every `(agent, repetition)` pair with seeds `seed + rep` and writes
/// traces, summary, report, chart and manifest under `out`. Failed runs are
/// listed in the manifest; the rest of the artifacts are still written.
pub fn execute(resolved: &Resolved, out: &Path) -> Result<Outcome, CliError> {
    let cfg = &resolved.config;
    let settings = cfg.settings();
    let runs_dir = out.join(RUNS_DIR);
    fs::create_dir_all(&runs_dir).map_err(|e| CliError::io(&runs_dir, e))?;

    let jobs: Vec<Job> = resolved
        .agents
        .iter()
        .flat_map(|(label, agent)| {
            (0..cfg.reps as u64).map(move |rep| Job {
                model: Arc::clone(&resolved.model),
                preset: resolved.source.clone(),
                config: agent.clone(),
                label: label.clone(),
                seed: cfg.seed + rep,
            })
        })
        .collect();
    let results = run_jobs(&jobs, &settings, cfg.jobs).map_err(|e| CliError::Run(e.to_string()))?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut files = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        let run_id = format!("{}:{}", job.label, job.seed);
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                failures.push(Failure {
                    run_id,
                    error: e.to_string(),
                });
                continue;
            }
        };
        if let Err(error) = record.verify(&settings) {
            failures.push(Failure { run_id, error });
            continue;
        }
        let path = runs_dir.join(trace_file_name(&job.label, job.seed));
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        record
            .write_trace(std::io::BufWriter::new(file))
            .map_err(|e| CliError::Run(e.to_string()))?;
        files.push(path);
        records.push(record);
    }

    let report = comparison(&records, cfg.alpha);
    let summary = json!({
        "model": resolved.source,
        "config": cfg,
        "agents": resolved
            .agents
            .iter()
            .map(|(label, a)| (label.clone(), agent_json(a)))
            .collect::<serde_json::Map<_, _>>(),
        "settings": settings,
        "seeds": (0..cfg.reps as u64).map(|r| cfg.seed + r).collect::<Vec<_>>(),
        "runs": records.iter().map(|r| RunSummary {
            run_id: r.run_id(),
            label: &r.label,
            algorithm: r.algorithm.name(),
            seed: r.seed,
            auc: r.auc(),
            final_coverage: r.final_coverage(),
            unique_crashes: r.crashes.len(),
            episodes: r.episodes(),
            total_reward: r.total_reward(),
            duration_secs: r.duration_secs,
            trace: format!("{RUNS_DIR}/{}", trace_file_name(&r.label, r.seed)),
        }).collect::<Vec<_>>(),
    });
    files.push(write_json(out, "summary.json", &summary)?);
    if let Some(report) = &report {
        files.push(write_json(out, "report.json", report)?);
        files.push(write_text(out, "report.txt", &report.to_text())?);
    }
    let mut series: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (label, _) in &resolved.agents {
        let curves: Vec<Vec<f64>> = records
            .iter()
            .filter(|r| &r.label == label)
            .map(RunRecord::coverage)
            .collect();
        if !curves.is_empty() {
            series.push((label.clone(), curves));
        }
    }
    files.push(write_text(
        out,
        "coverage.svg",
        &svg::coverage_chart(&resolved.source, &series),
    )?);

    let manifest = json!({
        "complete": failures.is_empty(),
        "runs_requested": jobs.len(),
        "runs_succeeded": records.len(),
        "failures": failures,
        "files": files.iter().map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string()).collect::<Vec<_>>(),
    });
    files.push(write_json(out, "manifest.json", &manifest)?);
    Ok(Outcome {
        records,
        failures,
        report,
        files,
    })
}

fn agent_json(agent: &AgentConfig) -> serde_json::Value {
    json!({
        "algorithm": agent.algorithm().name(),
        "parameters": agent.parameters(),
    })
}

/// AUC per label with runs ordered by seed, so the report does not depend
/// on completion order.
pub fn auc_groups<'a, I>(runs: I) -> BTreeMap<String, Vec<f64>>
where
    I: IntoIterator<Item = (&'a str, u64, f64)>,
{
    let mut by_label: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    for (label, seed, auc) in runs {
        by_label
            .entry(label.to_string())
            .or_default()
            .push((seed, auc));
    }
    by_label
        .into_iter()
        .map(|(label, mut v)| {
            v.sort_by_key(|&(seed, _)| seed);
            (label, v.into_iter().map(|(_, a)| a).collect())
        })
        .collect()
}

fn comparison(records: &[RunRecord], alpha: f64) -> Option<ComparisonReport> {
    let groups = auc_groups(records.iter().map(|r| (r.label.as_str(), r.seed, r.auc())));
    stats::compare(&groups, alpha).ok()
}

/// Recomputes the comparison from stored traces in `dir/runs`.
pub fn report_from_traces(dir: &Path, alpha: f64) -> Result<ComparisonReport, CliError> {
    let runs_dir = dir.join(RUNS_DIR);
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs_dir)
        .map_err(|e| CliError::io(&runs_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut runs: Vec<(String, u64, f64)> = Vec::new();
    for path in &paths {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Usage(format!("{}: no `{name}` column", path.display())))
        };
        let (id_col, cov_col) = (col("run_id")?, col("coverage")?);
        let mut run_id = None;
        let mut coverage = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            run_id.get_or_insert_with(|| row[id_col].to_string());
            let c: f64 = row[cov_col].parse().map_err(|e| {
                CliError::Usage(format!("{}: bad coverage value: {e}", path.display()))
            })?;
            coverage.push(c);
        }
        let Some(run_id) = run_id else { continue };
        let (label, seed) = run_id
            .rsplit_once(':')
            .and_then(|(l, s)| Some((l.to_string(), s.parse::<u64>().ok()?)))
            .ok_or_else(|| CliError::Usage(format!("{}: bad run id `{run_id}`", path.display())))?;
        let auc = stats::auc(&coverage)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        runs.push((label, seed, auc));
    }
    let groups = auc_groups(runs.iter().map(|(l, s, a)| (l.as_str(), *s, *a)));
    stats::compare(&groups, alpha).map_err(|e| CliError::Usage(e.to_string()))
}

fn write_json<T: Serialize + ?Sized>(
    dir: &Path,
    name: &str,
    value: &T,
) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
    write_text(dir, name, &(text + "\n"))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
