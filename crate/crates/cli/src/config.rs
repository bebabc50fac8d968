//! Run configuration: built-in defaults, overlaid by a JSON file, overlaid by
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use quadstack::controller::{ControlMode, Gains};
use quadstack::kinematics::{IkParams, JOINT_COUNT};
use quadstack::local_planner::{GaitPattern, PlannerParams};
use quadstack::parallel::Parallelism;
use quadstack::simulator::{PipelineConfig, Scenario, SimConfig};
use quadstack::terrain::{generate_task_env, parse_heightmap, Task, TaskEnvParams};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QUADSTACK_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "quadstack-out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("conflicting settings: {0}")]
    Conflict(String),
    #[error("missing setting: {0}")]
    Missing(String),
    #[error("invalid setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Heightmap file. Exclusive with `task`.
    pub map: Option<PathBuf>,
    /// Generated task environment. Exclusive with `map`.
    pub task: Option<Task>,
    pub seed: u64,
    pub start: Option<[f64; 2]>,
    pub goal: Option<[f64; 2]>,
    /// Simulated seconds.
    pub time_limit: f64,
    pub out_dir: Option<PathBuf>,
    pub pattern: GaitPattern,
    pub planner: PlannerParams,
    /// Joint PD gains, used by the onboard loop or the host torque law.
    pub gains: Gains,
    pub ik: IkParams,
    pub fss_threshold: f64,
    pub step_size: f64,
    pub mode: ControlMode,
    pub replan_threshold: f64,
    pub goal_radius: f64,
    pub parallel: bool,
    /// Keep every n-th tick in the run log.
    pub log_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipe = PipelineConfig::default();
        Self {
            map: None,
            task: None,
            seed: 0,
            start: None,
            goal: None,
            time_limit: Scenario::TASK_TIME_LIMIT,
            out_dir: None,
            pattern: pipe.pattern,
            planner: pipe.planner,
            gains: pipe.gains,
            ik: pipe.ik,
            fss_threshold: pipe.fss_threshold,
            step_size: pipe.step_size,
            mode: pipe.mode,
            replan_threshold: pipe.replan_threshold,
            goal_radius: pipe.goal_radius,
            parallel: true,
            log_every: 1,
        }
    }
}

/// Reads a JSON config. An empty file means all defaults; unknown keys are
/// rejected with their line and column.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    if text.trim().is_empty() {
        return Ok(RunConfig::default());
    }
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::from("<config>"), message: e.to_string() })?;
    if cfg.map.is_some() && cfg.task.is_some() {
        return Err(ConfigError::Conflict("`map` and `task` are both set; keep one".into()));
    }
    Ok(cfg)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v = parse_floats(s)?;
    <[f64; 2]>::try_from(v.as_slice()).map_err(|_| format!("expected x,y but got '{s}'"))
}

pub fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"))).collect()
}

/// Flags shared by every command that runs the stack. Each mirrors a config key.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Heightmap file.
    #[arg(long, conflicts_with = "task")]
    pub map: Option<PathBuf>,
    /// Generated environment: walking, avoidance or climbing.
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start position as x,y in meters.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub start: Option<[f64; 2]>,
    /// Goal position as x,y in meters.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub goal: Option<[f64; 2]>,
    /// Simulated seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub fss_threshold: Option<f64>,
    /// Look-ahead per local segment, meters.
    #[arg(long)]
    pub step_size: Option<f64>,
    /// onboard_pd or torque.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ControlMode>,
    /// Proportional gain for every joint.
    #[arg(long)]
    pub kp: Option<f64>,
    /// Derivative gain for every joint.
    #[arg(long)]
    pub kd: Option<f64>,
    #[arg(long)]
    pub ik_lambda: Option<f64>,
    #[arg(long)]
    pub ik_tolerance: Option<f64>,
    #[arg(long)]
    pub ik_max_iterations: Option<usize>,
    #[arg(long)]
    pub cycle_duration: Option<f64>,
    #[arg(long)]
    pub duty_factor: Option<f64>,
    #[arg(long)]
    pub step_height: Option<f64>,
    #[arg(long)]
    pub replan_threshold: Option<f64>,
    #[arg(long)]
    pub goal_radius: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Run feasibility probes and benchmark episodes on one thread.
    #[arg(long)]
    pub serial: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<ControlMode, String> {
    match s {
        "onboard_pd" => Ok(ControlMode::OnboardPd),
        "torque" => Ok(ControlMode::Torque),
        other => Err(format!("unknown mode '{other}' (expected onboard_pd or torque)")),
    }
}

impl RunArgs {
    /// Defaults, then the config file, then these flags.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let base = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        Ok(self.overlay(base))
    }

    pub fn overlay(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(m) = &self.map {
            cfg.map = Some(m.clone());
            cfg.task = None;
        }
        if let Some(t) = self.task {
            cfg.task = Some(t);
            cfg.map = None;
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$($field).+ = v; })*
            };
        }
        set!(
            seed => seed,
            time_limit => time_limit,
            fss_threshold => fss_threshold,
            step_size => step_size,
            mode => mode,
            ik_lambda => ik.lambda,
            ik_tolerance => ik.tolerance,
            ik_max_iterations => ik.max_iterations,
            cycle_duration => pattern.cycle_duration,
            duty_factor => pattern.duty_factor,
            step_height => pattern.step_height,
            replan_threshold => replan_threshold,
            goal_radius => goal_radius,
            log_every => log_every,
        );
        if let Some(kp) = self.kp {
            cfg.gains.kp = [kp; JOINT_COUNT];
        }
        if let Some(kd) = self.kd {
            cfg.gains.kd = [kd; JOINT_COUNT];
        }
        if self.start.is_some() {
            cfg.start = self.start;
        }
        if self.goal.is_some() {
            cfg.goal = self.goal;
        }
        if self.serial {
            cfg.parallel = false;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        cfg
    }
}

impl RunConfig {
    pub fn parallelism(&self) -> Parallelism {
        Parallelism::from_flag(self.parallel)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, ConfigError> {
        let pipe = PipelineConfig {
            pattern: self.pattern,
            planner: self.planner,
            ik: self.ik,
            gains: self.gains,
            mode: self.mode,
            fss_threshold: self.fss_threshold,
            parallelism: self.parallelism(),
            step_size: self.step_size,
            min_step: PipelineConfig::default().min_step.min(self.step_size),
            replan_threshold: self.replan_threshold,
            goal_radius: self.goal_radius,
            ..PipelineConfig::default()
        };
        pipe.validate().map_err(ConfigError::Invalid)?;
        Ok(pipe)
    }

    pub fn sim(&self) -> Result<SimConfig, ConfigError> {
        let sim = SimConfig { seed: self.seed, onboard_gains: self.gains, log_every: self.log_every, ..SimConfig::default() };
        sim.validate().map_err(ConfigError::Invalid)?;
        Ok(sim)
    }

    /// Terrain, start, goal and time limit.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let env = TaskEnvParams::default();
        let (label, map) = match (&self.map, self.task) {
            (Some(_), Some(_)) => return Err(ConfigError::Conflict("`map` and `task` are both set; keep one".into())),
            (None, None) => return Err(ConfigError::Missing("no terrain; pass --map FILE or --task NAME".into())),
            (Some(path), None) => {
                let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                let map = parse_heightmap(&text)
                    .map_err(|e| ConfigError::Parse { path: path.clone(), message: e.to_string() })?;
                let label = path.file_stem().map_or("map".into(), |s| s.to_string_lossy().into_owned());
                (label, map)
            }
            (None, Some(task)) => (task.name().to_string(), generate_task_env(task, self.seed)),
        };
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err(ConfigError::Invalid(format!("time_limit must be positive, got {}", self.time_limit)));
        }
        let start = self.start.map_or(env.start, |[x, y]| (x, y));
        let goal = self.goal.map_or(env.goal, |[x, y]| (x, y));
        for (what, (x, y)) in [("start", start), ("goal", goal)] {
            if !map.contains(x, y) {
                return Err(ConfigError::Invalid(format!("{what} ({x}, {y}) lies outside the map")));
            }
        }
        Ok(Scenario { label, map, start, goal, time_limit: self.time_limit })
    }

    /// Flag or file value, then the environment variable, then a fixed default.
    pub fn output_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(default_out_dir)
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
        assert_eq!(parse_config("  \n").unwrap(), RunConfig::default());
        assert_eq!(parse_config("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("{\n  \"seed\": 3,\n  \"foo\": 1\n}").unwrap_err().to_string();
        assert!(err.contains("foo"), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn nested_unknown_key_is_rejected() {
        let err = parse_config(r#"{"pattern": {"cadence": 2}}"#).unwrap_err().to_string();
        assert!(err.contains("cadence"), "{err}");
    }

    #[test]
    fn map_and_task_conflict() {
        let err = parse_config(r#"{"map": "a.map", "task": "walking"}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Conflict(_)));
    }

    #[test]
    fn precedence_matrix() {
        // For each key: (default, file, flag) and which layer is present.
        let d = RunConfig::default();
        for (file_set, flag_set) in [(false, false), (true, false), (false, true), (true, true)] {
            let file = if file_set {
                parse_config(r#"{"seed": 11, "step_size": 0.25, "time_limit": 30, "mode": "torque"}"#).unwrap()
            } else {
                RunConfig::default()
            };
            let args = if flag_set {
                RunArgs {
                    seed: Some(22),
                    step_size: Some(0.2),
                    time_limit: Some(12.0),
                    mode: Some(ControlMode::OnboardPd),
                    ..RunArgs::default()
                }
            } else {
                RunArgs::default()
            };
            let cfg = args.overlay(file);
            let (seed, step, limit, mode) = match (file_set, flag_set) {
                (_, true) => (22, 0.2, 12.0, ControlMode::OnboardPd),
                (true, false) => (11, 0.25, 30.0, ControlMode::Torque),
                (false, false) => (d.seed, d.step_size, d.time_limit, d.mode),
            };
            assert_eq!((cfg.seed, cfg.step_size, cfg.time_limit, cfg.mode), (seed, step, limit, mode));
        }
    }

    #[test]
    fn terrain_flag_replaces_file_choice() {
        let file = parse_config(r#"{"task": "climbing"}"#).unwrap();
        let cfg = RunArgs { map: Some("m.map".into()), ..RunArgs::default() }.overlay(file);
        assert_eq!((cfg.map.as_deref(), cfg.task), (Some(Path::new("m.map")), None));
    }

    #[test]
    fn missing_terrain_is_an_error() {
        assert!(matches!(RunConfig::default().scenario(), Err(ConfigError::Missing(_))));
    }

    #[test]
    fn gains_flags_apply_to_every_joint() {
        let cfg = RunArgs { kp: Some(5.0), kd: Some(0.1), ..RunArgs::default() }.overlay(RunConfig::default());
        assert!(cfg.gains.kp.iter().all(|&k| k == 5.0) && cfg.gains.kd.iter().all(|&k| k == 0.1));
        assert_eq!(cfg.sim().unwrap().onboard_gains, cfg.gains);
        assert_eq!(cfg.pipeline().unwrap().gains, cfg.gains);
    }

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("0.5,-1").unwrap(), [0.5, -1.0]);
        assert!(parse_pair("1").is_err());
    }
}
