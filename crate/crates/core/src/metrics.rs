//! Run metrics, outcome judgment, seeded benchmarks and report emission.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::{par_map, Parallelism};
use crate::simulator::{run_episode, Outcome, PipelineConfig, RunLog, Scenario, SimConfig};
use crate::terrain::Task;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("reference and realized sequences differ in length ({refs} vs {reals})")]
    LengthMismatch { refs: usize, reals: usize },
    #[error("no samples")]
    Empty,
    #[error("tracking frequency must be positive, got {0}")]
    Frequency(f64),
    #[error("report csv: {0}")]
    Csv(String),
    #[error("report json: {0}")]
    Json(String),
}

/// Mean per-sample Euclidean error times the tracking frequency.
pub fn tracking_error_rate(refs: &[Vector3<f64>], reals: &[Vector3<f64>], f_track: f64) -> Result<f64, MetricsError> {
    if refs.len() != reals.len() {
        return Err(MetricsError::LengthMismatch { refs: refs.len(), reals: reals.len() });
    }
    if refs.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !(f_track > 0.0) {
        return Err(MetricsError::Frequency(f_track));
    }
    let sum: f64 = refs.iter().zip(reals).map(|(a, b)| (a - b).norm()).sum();
    Ok(sum / refs.len() as f64 * f_track)
}

/// Fell beats out-of-bounds beats success beats timeout.
pub fn judge(fallen: bool, out_of_bounds: bool, final_xy: (f64, f64), goal: (f64, f64), goal_radius: f64) -> Outcome {
    if fallen {
        Outcome::Fell
    } else if out_of_bounds {
        Outcome::OutOfBounds
    } else if ((final_xy.0 - goal.0).powi(2) + (final_xy.1 - goal.1).powi(2)).sqrt() <= goal_radius {
        Outcome::Success
    } else {
        Outcome::Timeout
    }
}

pub fn judge_outcome(log: &RunLog, goal_radius: f64) -> Outcome {
    judge(
        log.fallen,
        log.out_of_bounds,
        (log.final_position[0], log.final_position[1]),
        (log.goal[0], log.goal[1]),
        goal_radius,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub distance: f64,
    pub tracking_error_rate: f64,
    pub duration: f64,
    pub goal_error: f64,
}

/// Tracking error over the logged records at the controller rate `1/dt`.
pub fn log_tracking_error_rate(log: &RunLog) -> f64 {
    let refs: Vec<_> = log.records.iter().map(|r| Vector3::new(r.reference[0], r.reference[1], r.reference[2])).collect();
    let reals: Vec<_> = log.records.iter().map(|r| Vector3::new(r.actual[0], r.actual[1], r.actual[2])).collect();
    tracking_error_rate(&refs, &reals, 1.0 / log.dt).unwrap_or(0.0)
}

pub fn summarize(log: &RunLog) -> RunSummary {
    RunSummary {
        task: log.label.clone(),
        seed: log.seed,
        outcome: log.outcome,
        distance: log.distance,
        tracking_error_rate: log_tracking_error_rate(log),
        duration: log.duration.max(log.dt),
        goal_error: log.goal_error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub task: String,
    pub runs: usize,
    pub successes: usize,
    pub success_pct: f64,
    pub mean_distance: f64,
    pub mean_tracking_error_rate: f64,
    pub mean_goal_error: f64,
}

/// Aggregate over a non-empty set of runs of one task.
pub fn aggregate(task: &str, rows: &[RunSummary]) -> Option<Aggregate> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len();
    let successes = rows.iter().filter(|r| r.outcome == Outcome::Success).count();
    let mean = |f: fn(&RunSummary) -> f64| rows.iter().map(f).sum::<f64>() / n as f64;
    Some(Aggregate {
        task: task.to_string(),
        runs: n,
        successes,
        success_pct: successes as f64 / n as f64 * 100.0,
        mean_distance: mean(|r| r.distance),
        mean_tracking_error_rate: mean(|r| r.tracking_error_rate),
        mean_goal_error: mean(|r| r.goal_error),
    })
}

/// One aggregate per task label, in label order.
pub fn aggregate_by_task(rows: &[RunSummary]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<&str, Vec<RunSummary>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.task.as_str()).or_default().push(r.clone());
    }
    groups.into_iter().filter_map(|(task, rows)| aggregate(task, &rows)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub summary: RunSummary,
    pub log: RunLog,
}

/// Runs seeds `seed_base .. seed_base + n_runs` of a task. Episodes are
/// independent, so they may run concurrently; output order is by seed.
pub fn benchmark(
    task: Task,
    n_runs: usize,
    seed_base: u64,
    pipe: &PipelineConfig,
    sim: &SimConfig,
    parallelism: Parallelism,
) -> Vec<BenchRun> {
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| seed_base + i).collect();
    par_map(parallelism, &seeds, |&seed| {
        let scenario = Scenario::task(task, seed);
        let log = run_episode(&scenario, pipe, &SimConfig { seed, ..sim.clone() });
        BenchRun { summary: summarize(&log), log }
    })
}

pub fn report_csv_header() -> [&'static str; 7] {
    ["task", "seed", "outcome", "distance", "tracking_error_rate", "duration", "goal_error"]
}

/// Per-run CSV and a JSON array of per-task aggregates.
pub fn emit_report(summaries: &[RunSummary]) -> Result<(String, String), MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(report_csv_header()).map_err(|e| MetricsError::Csv(e.to_string()))?;
    for s in summaries {
        w.write_record([
            s.task.clone(),
            s.seed.to_string(),
            s.outcome.to_string(),
            s.distance.to_string(),
            s.tracking_error_rate.to_string(),
            s.duration.to_string(),
            s.goal_error.to_string(),
        ])
        .map_err(|e| MetricsError::Csv(e.to_string()))?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| MetricsError::Csv(e.to_string()))?)
        .map_err(|e| MetricsError::Csv(e.to_string()))?;
    let json = serde_json::to_string_pretty(&aggregate_by_task(summaries)).map_err(|e| MetricsError::Json(e.to_string()))?;
    Ok((csv, json))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<RunSummary>, MetricsError> {
    let err = |e: &dyn std::fmt::Display| MetricsError::Csv(e.to_string());
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(|e| err(&e))?.iter().map(String::from).collect();
    if header != report_csv_header() {
        return Err(MetricsError::Csv(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(&e))?;
        let f = |k: usize| rec[k].parse::<f64>().map_err(|e| err(&e));
        out.push(RunSummary {
            task: rec[0].to_string(),
            seed: rec[1].parse().map_err(|e| err(&e))?,
            outcome: rec[2].parse().map_err(|e: String| MetricsError::Csv(e))?,
            distance: f(3)?,
            tracking_error_rate: f(4)?,
            duration: f(5)?,
            goal_error: f(6)?,
        });
    }
    Ok(out)
}

pub fn parse_report_json(text: &str) -> Result<Vec<Aggregate>, MetricsError> {
    serde_json::from_str(text).map_err(|e| MetricsError::Json(e.to_string()))
}

/// Human-readable table: task, mean distance, success rate, tracking error.
pub fn format_table(aggregates: &[Aggregate]) -> String {
    let mut out = format!("{:<12} {:>12} {:>10} {:>16}\n", "Task", "Distance (m)", "Success", "Tracking (m/s)");
    for a in aggregates {
        out.push_str(&format!(
            "{:<12} {:>12.2} {:>9.0}% {:>16.2}\n",
            a.task, a.mean_distance, a.success_pct, a.mean_tracking_error_rate
        ));
    }
    out
}
