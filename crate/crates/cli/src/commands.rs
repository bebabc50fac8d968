//! Subcommand implementations. Each returns a one-line diagnostic on failure.

use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use quadstack::global_planner::plan_global;
use quadstack::kinematics::{joint_name, JOINT_COUNT};
use quadstack::local_planner::{check_feasibility_with, validate_plan, BodyState, FeasibilityOracle};
use quadstack::metrics::{benchmark, emit_report, format_table, parse_report_csv, summarize, tracking_error_rate, RunSummary};
use quadstack::parallel::Parallelism;
use quadstack::robot_interface::{
    apply_index_offsets, soft_calibrate, EncoderModel, Event, StateMachine, SweepParams, TimingMonitor, TimingSummary,
    CAPTURE_WINDOW,
};
use quadstack::simulator::{run_episode, run_episode_observed, EpisodeCounters, RunLog, Scenario, SimConfig};
use quadstack::terrain::{generate_task_env, parse_heightmap, serialize_heightmap, Task};

use crate::config::{parse_floats, RunArgs, RunConfig};

pub type CmdResult = Result<(), String>;

fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Metadata written next to every run log CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub format_version: u32,
    pub summary: RunSummary,
    /// File name of the per-tick CSV, relative to this file.
    pub log_csv: String,
    pub dt: f64,
    pub log_every: usize,
    pub plant: String,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub final_position: [f64; 3],
    pub counters: EpisodeCounters,
    pub seams: usize,
    pub failure: Option<String>,
}

impl RunMeta {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(log: &RunLog, log_csv: String) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            summary: summarize(log),
            log_csv,
            dt: log.dt,
            log_every: log.log_every,
            plant: log.plant.clone(),
            start: log.start,
            goal: log.goal,
            final_position: log.final_position,
            counters: log.counters,
            seams: log.seams.len(),
            failure: log.failure.clone(),
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_run(dir: &Path, stem: &str, log: &RunLog) -> Result<PathBuf, String> {
    let csv_name = format!("{stem}.csv");
    let csv_path = dir.join(&csv_name);
    write_file(&csv_path, &log.to_csv())?;
    let meta = serde_json::to_string_pretty(&RunMeta::new(log, csv_name)).map_err(|e| e.to_string())?;
    write_file(&dir.join(format!("{stem}.json")), &meta)?;
    Ok(csv_path)
}

pub fn run_stem(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}")
}

pub fn terrain_gen(task: Task, seed: u64, out: &Path) -> CmdResult {
    let map = generate_task_env(task, seed);
    write_file(out, &serialize_heightmap(&map))?;
    println!("wrote {} ({}x{} cells, task {task}, seed {seed})", out.display(), map.n_rows(), map.n_cols());
    Ok(())
}

pub fn terrain_validate(path: &Path) -> CmdResult {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let map = parse_heightmap(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let (lo, hi) = map.heights().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let (x0, x1, y0, y1) = map.extent();
    println!(
        "{}: valid, {}x{} cells at {} m, x [{x0}, {x1}] y [{y0}, {y1}], heights [{lo}, {hi}]",
        path.display(),
        map.n_rows(),
        map.n_cols(),
        map.resolution()
    );
    Ok(())
}

pub fn plan_global_cmd(args: &RunArgs, out: Option<&Path>) -> CmdResult {
    let cfg = args.resolve().map_err(|e| e.to_string())?;
    let scenario = cfg.scenario().map_err(|e| e.to_string())?;
    let pipe = cfg.pipeline().map_err(|e| e.to_string())?;
    let fss = pipe.fss_config(scenario.map.resolution());
    let plan = plan_global(&scenario.map, scenario.start, scenario.goal, &fss, &pipe.local_planner(), &pipe.model)
        .map_err(|e| format!("global planning failed: {e}"))?;
    let path = out.map_or_else(|| cfg.output_dir().join("global_plan.json"), Path::to_path_buf);
    write_file(&path, &serde_json::to_string_pretty(&plan).map_err(|e| e.to_string())?)?;
    println!(
        "wrote {}: {} cells, path length {:.3} m, {} of {} cells feasible",
        path.display(),
        plan.cells.cells.len(),
        plan.path.length,
        plan.fss.map.count_feasible(),
        scenario.map.len()
    );
    Ok(())
}

fn pose3(s: &str) -> Result<[f64; 3], String> {
    let v = parse_floats(s)?;
    <[f64; 3]>::try_from(v.as_slice()).map_err(|_| format!("expected x,y,yaw but got '{s}'"))
}

pub fn parse_pose(s: &str) -> Result<[f64; 3], String> {
    pose3(s)
}

pub fn plan_local_cmd(args: &RunArgs, from: [f64; 3], to: [f64; 3], out: Option<&Path>) -> CmdResult {
    let cfg = args.resolve().map_err(|e| e.to_string())?;
    let scenario = cfg.scenario().map_err(|e| e.to_string())?;
    let pipe = cfg.pipeline().map_err(|e| e.to_string())?;
    let planner = pipe.local_planner();
    let state = |[x, y, yaw]: [f64; 3]| -> Result<BodyState, String> {
        let o = BodyState::at_rest(Vector3::zeros(), yaw).orientation;
        let z = planner.base_height(&scenario.map, Vector2::new(x, y), &o).map_err(|e| e.to_string())?;
        Ok(BodyState::at_rest(Vector3::new(x, y, z), yaw))
    };
    let (start, goal) = (state(from)?, state(to)?);
    let plan = planner.plan(&start, &goal, &scenario.map).map_err(|e| format!("local planning failed: {e}"))?;
    let path = out.map_or_else(|| cfg.output_dir().join("local_plan.csv"), Path::to_path_buf);
    write_file(&path, &plan.to_csv())?;
    let verdict = check_feasibility_with(&plan, &pipe.model, &scenario.map, &pipe.planner);
    let valid = validate_plan(&plan, &scenario.map);
    println!("wrote {}: {} nodes over {:.2} s, verdict {:?}", path.display(), plan.nodes.len(), plan.duration(), verdict);
    if let Err(e) = valid {
        return Err(format!("plan violates node invariants: {e}"));
    }
    if !verdict.is_feasible() {
        return Err(format!("plan is infeasible: {verdict:?}"));
    }
    // The oracle view used by the global layer must agree.
    debug_assert!(planner.evaluate(&start, &goal, &scenario.map).map(|v| v.is_feasible()).unwrap_or(false));
    Ok(())
}

pub fn simulate_cmd(args: &RunArgs) -> CmdResult {
    let cfg = args.resolve().map_err(|e| e.to_string())?;
    let scenario = cfg.scenario().map_err(|e| e.to_string())?;
    let (pipe, sim) = (cfg.pipeline().map_err(|e| e.to_string())?, cfg.sim().map_err(|e| e.to_string())?);
    let log = run_episode(&scenario, &pipe, &sim);
    let dir = cfg.output_dir();
    let csv = write_run(&dir, &run_stem(&scenario.label, cfg.seed), &log)?;
    let s = summarize(&log);
    println!(
        "{} seed {}: {} after {:.2} s, distance {:.3} m, goal error {:.3} m, tracking error rate {:.3} m/s; log {}",
        s.task,
        s.seed,
        s.outcome,
        s.duration,
        s.distance,
        s.goal_error,
        s.tracking_error_rate,
        csv.display()
    );
    if let Some(f) = &log.failure {
        println!("note: {f}");
    }
    Ok(())
}

pub fn bench_cmd(task: Task, runs: usize, seed_base: u64, args: &RunArgs) -> CmdResult {
    if runs == 0 {
        return Err("--runs must be at least 1".into());
    }
    let cfg = args.resolve().map_err(|e| e.to_string())?;
    let (pipe, sim) = (cfg.pipeline().map_err(|e| e.to_string())?, cfg.sim().map_err(|e| e.to_string())?);
    let results = benchmark(task, runs, seed_base, &pipe, &sim, cfg.parallelism());
    let dir = cfg.output_dir();
    for r in &results {
        write_run(&dir.join("runs"), &run_stem(task.name(), r.summary.seed), &r.log)?;
    }
    let summaries: Vec<RunSummary> = results.into_iter().map(|r| r.summary).collect();
    let (csv, json) = emit_report(&summaries).map_err(|e| e.to_string())?;
    write_file(&dir.join("report.csv"), &csv)?;
    write_file(&dir.join("report.json"), &json)?;
    let aggregates = quadstack::metrics::aggregate_by_task(&summaries);
    print!("{}", format_table(&aggregates));
    println!("wrote {} and {}", dir.join("report.csv").display(), dir.join("report.json").display());
    Ok(())
}

/// Rebuilds a report from run logs: metadata from each `.json`, tracking
/// error recomputed from its per-tick CSV.
pub fn report_cmd(logs: &Path, out: &Path) -> CmdResult {
    let mut metas: Vec<PathBuf> = fs::read_dir(logs)
        .map_err(|e| format!("cannot list {}: {e}", logs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "report.json"))
        .collect();
    metas.sort();
    let mut rows = Vec::new();
    for path in &metas {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let Ok(meta) = serde_json::from_str::<RunMeta>(&text) else {
            continue;
        };
        let csv_path = path.with_file_name(&meta.log_csv);
        let csv = fs::read_to_string(&csv_path).map_err(|e| format!("cannot read {}: {e}", csv_path.display()))?;
        let records = RunLog::records_from_csv(&csv).map_err(|e| format!("{}: {e}", csv_path.display()))?;
        let refs: Vec<_> = records.iter().map(|r| Vector3::new(r.reference[0], r.reference[1], r.reference[2])).collect();
        let reals: Vec<_> = records.iter().map(|r| Vector3::new(r.actual[0], r.actual[1], r.actual[2])).collect();
        let rate = tracking_error_rate(&refs, &reals, 1.0 / meta.dt).unwrap_or(0.0);
        rows.push(RunSummary { tracking_error_rate: rate, ..meta.summary });
    }
    if rows.is_empty() {
        return Err(format!("no run logs found in {}", logs.display()));
    }
    let (csv, json) = emit_report(&rows).map_err(|e| e.to_string())?;
    write_file(&out.join("report.csv"), &csv)?;
    write_file(&out.join("report.json"), &json)?;
    debug_assert_eq!(parse_report_csv(&csv).map(|r| r.len()).ok(), Some(rows.len()));
    print!("{}", format_table(&quadstack::metrics::aggregate_by_task(&rows)));
    println!("{} runs; wrote {}", rows.len(), out.join("report.csv").display());
    Ok(())
}

pub fn calibrate_cmd(seed: u64, offsets: Option<&str>) -> CmdResult {
    let shifts: [i32; JOINT_COUNT] = match offsets {
        None => [0; JOINT_COUNT],
        Some(s) => {
            let v: Vec<i32> = s
                .split(',')
                .map(|p| p.trim().parse::<i32>().map_err(|e| format!("--offsets '{p}': {e}")))
                .collect::<Result<_, _>>()?;
            match v.len() {
                1 => [v[0]; JOINT_COUNT],
                JOINT_COUNT => std::array::from_fn(|j| v[j]),
                n => return Err(format!("--offsets needs 1 or {JOINT_COUNT} integers, got {n}")),
            }
        }
    };
    let mut enc = EncoderModel::random(seed, CAPTURE_WINDOW).map_err(|e| e.to_string())?;
    for (p, k) in enc.power_on.iter_mut().zip(shifts) {
        *p += k as f64 * enc.spacing;
    }
    let result = soft_calibrate(&enc, &SweepParams::default()).map_err(|e| e.to_string())?;
    println!("seed {seed}, pulse spacing {:.6} rad, resolution {:.3e} rad", result.spacing, result.resolution);
    println!("{:<8} {:>12} {:>12} {:>8}", "joint", "zero (rad)", "error (rad)", "pulses");
    for j in 0..JOINT_COUNT {
        println!("{:<8} {:>12.6} {:>12.3e} {:>8}", joint_name(j), result.zero(j), result.zero_error(j), result.pulse_error(j));
    }
    if result.is_ok() {
        println!("status: ok");
        return Ok(());
    }
    let correction: [i32; JOINT_COUNT] = std::array::from_fn(|j| -result.pulse_error(j));
    let fixed = apply_index_offsets(&result, &correction);
    println!("status: {:?}; index offsets {correction:?} applied", result.status);
    println!("status after offsets: {}", if fixed.is_ok() { "ok".to_string() } else { format!("{:?}", fixed.status) });
    if fixed.is_ok() {
        Ok(())
    } else {
        Err("calibration could not be corrected".into())
    }
}

fn print_timing(label: &str, s: &TimingSummary) {
    println!(
        "{label}: {} frames, mean {:.1} us, max {:.1} us, p99 {:.1} us, missed {}",
        s.frames, s.mean_us, s.max_us, s.p99_us, s.missed_deadlines
    );
}

/// Sweep, Hold and Run against the simulated interface. Without `auto`,
/// each transition waits for a `go` line on `input`.
pub fn console_cmd(auto: bool, seconds: f64, seed: u64, input: &mut dyn BufRead) -> CmdResult {
    if seconds.is_nan() || seconds <= 0.0 {
        return Err("--seconds must be positive".into());
    }
    let mut sm = StateMachine::default();
    println!("state: {}", sm.state);
    let enc = EncoderModel::random(seed, CAPTURE_WINDOW).map_err(|e| e.to_string())?;
    let cal = soft_calibrate(&enc, &SweepParams::default()).map_err(|e| e.to_string())?;
    let latest = cal.latch_time.iter().cloned().fold(0.0, f64::max);
    println!("sweep: all joints latched an index pulse by t = {latest:.3} s ({})", if cal.is_ok() { "ok" } else { "misaligned" });
    let mut t = latest;
    sm.fire(Event::SweepDone, t).map_err(|e| e.to_string())?;
    println!("state: {}", sm.state);

    for _ in 0..2 {
        if auto {
            sm.fire(Event::AutoGo, t).map_err(|e| e.to_string())?;
        } else {
            println!("type 'go' to continue");
            loop {
                let mut line = String::new();
                if input.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
                    return Err(format!("input closed in state {}", sm.state));
                }
                match line.trim() {
                    "go" => break,
                    "status" => println!("state: {}", sm.state),
                    "" => {}
                    other => println!("unknown command '{other}'; commands: go, status"),
                }
            }
            sm.fire(Event::UserGo, t).map_err(|e| e.to_string())?;
        }
        println!("state: {}", sm.state);
    }

    let scenario = Scenario { time_limit: seconds, ..Scenario::task(Task::Walking, seed) };
    let pipe = quadstack::simulator::PipelineConfig::default();
    let sim = SimConfig { seed, ..SimConfig::default() };
    let overall = TimingMonitor::new();
    let mut window = TimingMonitor::new();
    let mut second = 1.0;
    let log = run_episode_observed(&scenario, &pipe, &sim, &mut |tick_t, us| {
        overall.record(us);
        window.record(us);
        if tick_t + sim.dt >= second - 1e-9 {
            print_timing(&format!("t={second:.0} s"), &window.summary());
            window = TimingMonitor::new();
            second += 1.0;
        }
    });
    t += log.duration;
    print_timing("total", &overall.summary());
    println!("run finished at t = {t:.3} s: {} after {:.2} s of walking", log.outcome, log.duration);
    Ok(())
}

/// Parallel setting name for output.
pub fn parallelism_name(p: Parallelism) -> &'static str {
    match p {
        Parallelism::Serial => "serial",
        Parallelism::Parallel => "parallel",
    }
}

pub fn default_config_json() -> String {
    serde_json::to_string_pretty(&RunConfig::default()).expect("config serializes")
}
