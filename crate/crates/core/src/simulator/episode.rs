//! Full-stack episodes in simulated time.
//!
//! Cadence: the plant and controller tick every `dt`; every
//! `decision_period` the global layer checks the deviation from the
//! reference and, when the active plan runs short, solves the next segment
//! from the plan's final full-contact node and stitches it there. Segment
//! solves run inline, so the loop is single-threaded and reproducible.

use std::fmt;
use std::time::Instant;

use nalgebra::{Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{ControlMode, Controller, Gains};
use crate::global_planner::{
    plan_global, replan_trigger, seam_discrepancy, segment_goal, stitch_in_place, FssConfig, GlobalPath, ReplanDecision,
};
use crate::kinematics::{IkParams, JointState, RobotModel, JOINT_COUNT, LEG_COUNT};
use crate::local_planner::{validate_plan, BodyState, GaitPattern, GaitPlan, LocalPlanner, PlannerParams, TrajectoryNode};
use crate::metrics::judge_outcome;
use crate::parallel::Parallelism;
use crate::robot_interface::{decode_command, decode_sensor, encode_command, encode_sensor, SequenceGuard};
use crate::terrain::{generate_task_env, HeightMap, Task, TaskEnvParams};

use super::plant::{step_in_place, SimConfig, SimState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: RobotModel,
    pub pattern: GaitPattern,
    pub planner: PlannerParams,
    pub ik: IkParams,
    /// Controller-side gains, used in torque mode.
    pub gains: Gains,
    pub mode: ControlMode,
    pub fss_threshold: f64,
    pub parallelism: Parallelism,
    /// Look-ahead per segment along the global path, meters.
    pub step_size: f64,
    pub min_step: f64,
    /// Base deviation from the reference that forces a re-plan, meters.
    pub replan_threshold: f64,
    pub goal_radius: f64,
    /// Seconds between global decisions.
    pub decision_period: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model: RobotModel::default(),
            pattern: GaitPattern::default(),
            planner: PlannerParams::default(),
            ik: IkParams::default(),
            gains: Gains::default(),
            mode: ControlMode::OnboardPd,
            fss_threshold: 0.1,
            parallelism: Parallelism::default(),
            step_size: 0.3,
            min_step: 0.05,
            replan_threshold: 0.1,
            goal_radius: 0.15,
            decision_period: 2.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.model.validate().map_err(|e| e.to_string())?;
        self.pattern.validate().map_err(|e| e.to_string())?;
        self.ik.validate().map_err(|e| e.to_string())?;
        self.gains.validate()?;
        for (name, v) in [
            ("fss_threshold", self.fss_threshold),
            ("step_size", self.step_size),
            ("min_step", self.min_step),
            ("replan_threshold", self.replan_threshold),
            ("goal_radius", self.goal_radius),
            ("decision_period", self.decision_period),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.min_step > self.step_size {
            return Err(format!("min_step {} exceeds step_size {}", self.min_step, self.step_size));
        }
        Ok(())
    }

    pub fn local_planner(&self) -> LocalPlanner {
        LocalPlanner::new(self.model.clone(), self.pattern, self.planner)
    }

    pub fn fss_config(&self, resolution: f64) -> FssConfig {
        FssConfig { threshold: self.fss_threshold, parallelism: self.parallelism, ..FssConfig::for_footprint(&self.model, resolution) }
    }
}

/// Map, start, goal and time budget for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub map: HeightMap,
    pub start: (f64, f64),
    pub goal: (f64, f64),
    pub time_limit: f64,
}

impl Scenario {
    pub const TASK_TIME_LIMIT: f64 = 90.0;

    pub fn task(task: Task, seed: u64) -> Self {
        let p = TaskEnvParams::default();
        Self {
            label: task.name().to_string(),
            map: generate_task_env(task, seed),
            start: p.start,
            goal: p.goal,
            time_limit: Self::TASK_TIME_LIMIT,
        }
    }

    /// Flat corridor long enough that the goal is never reached within
    /// `time_limit`, for long stitched walks.
    pub fn long_walk(time_limit: f64) -> Self {
        let length = (time_limit * 0.2).max(4.0) + 2.0;
        let cols = (length / 0.05).ceil() as usize + 1;
        Self {
            label: "long_walk".into(),
            map: HeightMap::flat(41, cols, 0.05, (0.0, -1.0)).expect("valid corridor"),
            start: (0.5, 0.0),
            goal: (length - 1.0, 0.0),
            time_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Fell,
    OutOfBounds,
    Timeout,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Fell => "fell",
            Outcome::OutOfBounds => "out_of_bounds",
            Outcome::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "success" => Ok(Outcome::Success),
            "fell" => Ok(Outcome::Fell),
            "out_of_bounds" => Ok(Outcome::OutOfBounds),
            "timeout" => Ok(Outcome::Timeout),
            other => Err(format!("unknown outcome '{other}'")),
        }
    }
}

/// Position plus roll, pitch, yaw.
pub type Pose = [f64; 6];

fn pose_of(b: &BodyState) -> Pose {
    let (r, p, y) = b.orientation.euler_angles();
    [b.position.x, b.position.y, b.position.z, r, p, y]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub reference: Pose,
    pub actual: Pose,
    pub q_ref: [f64; JOINT_COUNT],
    pub q: [f64; JOINT_COUNT],
    pub contact: [bool; LEG_COUNT],
}

impl LogRecord {
    pub fn position_error(&self) -> f64 {
        let d: f64 = (0..3).map(|i| (self.reference[i] - self.actual[i]).powi(2)).sum();
        d.sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeCounters {
    pub controller_ticks: u64,
    pub plant_steps: u64,
    pub global_decisions: u64,
    /// Every local solve attempted, accepted or not.
    pub local_solves: u64,
    pub rejected_solves: u64,
    pub reroots: u64,
    pub degraded_ticks: u64,
    pub torque_clamps: u64,
    pub packet_errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeamRecord {
    pub t: f64,
    pub discrepancy: f64,
    pub full_contact: bool,
}

/// Check results for a plan segment that was executed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentAudit {
    pub t: f64,
    pub step: f64,
    pub feasible: bool,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub label: String,
    pub seed: u64,
    pub dt: f64,
    pub log_every: usize,
    /// Fidelity note: the base is moved kinematically by its stance feet.
    pub plant: String,
    pub records: Vec<LogRecord>,
    pub outcome: Outcome,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub final_position: [f64; 3],
    /// Straight-line displacement from the start, meters.
    pub distance: f64,
    pub goal_error: f64,
    /// Simulated seconds executed.
    pub duration: f64,
    pub fallen: bool,
    pub out_of_bounds: bool,
    pub counters: EpisodeCounters,
    pub seams: Vec<SeamRecord>,
    pub audits: Vec<SegmentAudit>,
    /// Whether each executed stitched chain passed the node invariants.
    pub chains_valid: Vec<bool>,
    /// Sum of per-tick base position errors over every tick.
    pub tracking_error_sum: f64,
    pub failure: Option<String>,
}

impl RunLog {
    pub const PLANT_NOTE: &'static str = "kinematic-base";

    pub fn csv_header() -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for prefix in ["ref", "act"] {
            for f in ["x", "y", "z", "roll", "pitch", "yaw"] {
                h.push(format!("{prefix}_{f}"));
            }
        }
        for j in 0..JOINT_COUNT {
            h.push(format!("q_ref_{}", crate::kinematics::joint_name(j)));
        }
        for j in 0..JOINT_COUNT {
            h.push(format!("q_{}", crate::kinematics::joint_name(j)));
        }
        for leg in crate::kinematics::LEG_NAMES {
            h.push(format!("{leg}_contact"));
        }
        h
    }

    /// Per-tick records as CSV. Floats use shortest round-trip formatting,
    /// so identical logs give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::csv_header()).expect("in-memory write");
        for r in &self.records {
            let mut row: Vec<String> = Vec::with_capacity(41);
            row.push(r.t.to_string());
            row.extend(r.reference.iter().chain(r.actual.iter()).map(f64::to_string));
            row.extend(r.q_ref.iter().chain(r.q.iter()).map(f64::to_string));
            row.extend(r.contact.iter().map(|&c| u8::from(c).to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
    }

    /// Parses records written by [`RunLog::to_csv`].
    pub fn records_from_csv(text: &str) -> Result<Vec<LogRecord>, String> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
        if header != Self::csv_header() {
            return Err("run log header does not match the expected columns".into());
        }
        let mut out = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let f = |k: usize| -> Result<f64, String> {
                rec[k].parse::<f64>().map_err(|e| format!("row {}: column {k}: {e}", i + 1))
            };
            let mut vals = [0.0; 37];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = f(k)?;
            }
            let contact = std::array::from_fn(|l| &rec[37 + l] == "1");
            out.push(LogRecord {
                t: vals[0],
                reference: std::array::from_fn(|k| vals[1 + k]),
                actual: std::array::from_fn(|k| vals[7 + k]),
                q_ref: std::array::from_fn(|k| vals[13 + k]),
                q: std::array::from_fn(|k| vals[25 + k]),
                contact,
            });
        }
        Ok(out)
    }

    /// Mean per-tick base position error, meters.
    pub fn mean_tracking_error(&self) -> f64 {
        if self.counters.controller_ticks == 0 {
            0.0
        } else {
            self.tracking_error_sum / self.counters.controller_ticks as f64
        }
    }
}

struct Runner<'a> {
    scenario: &'a Scenario,
    pipe: &'a PipelineConfig,
    planner: LocalPlanner,
    path: Option<GlobalPath>,
    /// Arc length reached by the most recent segment goal.
    progress: f64,
    /// The final segment has been planned.
    done: bool,
    counters: EpisodeCounters,
    seams: Vec<SeamRecord>,
    audits: Vec<SegmentAudit>,
    chains_valid: Vec<bool>,
}

impl Runner<'_> {
    /// Plans from `start` toward the next goal on the path, halving the
    /// look-ahead until the segment passes the feasibility and node checks.
    fn solve_segment(&mut self, t: f64, start: &BodyState, feet: Option<&[Vector3<f64>; LEG_COUNT]>, hint: f64) -> Option<GaitPlan> {
        let map = &self.scenario.map;
        let mut step = self.pipe.step_size;
        loop {
            let (s_goal, goal) = match &self.path {
                Some(path) => segment_goal(path, start, hint, step, map, &self.pipe.model).ok()?,
                None => {
                    let (gx, gy) = self.scenario.goal;
                    (0.0, BodyState::at_rest(Vector3::new(gx, gy, start.position.z), start.yaw()))
                }
            };
            self.counters.local_solves += 1;
            if let Ok(plan) = self.planner.plan_from_feet(start, feet, &goal, map) {
                let feasible = self.planner.check(&plan, map).is_feasible();
                let valid = validate_plan(&plan, map).is_ok();
                if feasible && valid {
                    self.audits.push(SegmentAudit { t, step, feasible, valid });
                    self.progress = s_goal;
                    self.done = self.path.as_ref().is_none_or(|p| s_goal >= p.length - 1e-9);
                    return Some(plan);
                }
            }
            self.counters.rejected_solves += 1;
            step /= 2.0;
            if self.path.is_none() || step < self.pipe.min_step {
                return None;
            }
        }
    }

    /// Appends the next segment at the active plan's final node.
    fn extend(&mut self, t: f64, active: &mut GaitPlan) -> Result<(), String> {
        let end = *active.last();
        let Some(next) = self.solve_segment(t, &end.base, Some(&end.feet), self.progress) else {
            self.done = true;
            return Err(format!("no feasible segment from ({:.3}, {:.3})", end.base.position.x, end.base.position.y));
        };
        let at = active.duration();
        self.seams.push(SeamRecord { t, discrepancy: seam_discrepancy(&end, &next.nodes[0]), full_contact: end.full_contact() });
        stitch_in_place(active, &next, at).map_err(|e| e.to_string())
    }
}

fn actual_feet(state: &SimState, model: &RobotModel) -> [Vector3<f64>; LEG_COUNT] {
    std::array::from_fn(|l| if state.contact[l] { state.anchors[l] } else { state.foot_world(model, l) })
}

fn sensed(bytes: &[u8]) -> Option<JointState> {
    decode_sensor(bytes).ok().map(|p| JointState { q: p.q.map(f64::from), dq: p.dq.map(f64::from) })
}

/// Runs one episode to success, failure, plan exhaustion or the time limit.
pub fn run_episode(scenario: &Scenario, pipe: &PipelineConfig, sim: &SimConfig) -> RunLog {
    run_episode_observed(scenario, pipe, sim, &mut |_, _| {})
}

/// [`run_episode`] that reports each control frame as `(t, wall_us)`: the
/// simulated tick time and the wall-clock microseconds spent on the
/// controller tick, packet round trip and plant step. The observer does not
/// affect the log.
pub fn run_episode_observed(
    scenario: &Scenario,
    pipe: &PipelineConfig,
    sim: &SimConfig,
    observer: &mut dyn FnMut(f64, f64),
) -> RunLog {
    let map = &scenario.map;
    let model = &pipe.model;
    let dt = sim.dt;
    let mut runner = Runner {
        scenario,
        pipe,
        planner: pipe.local_planner(),
        path: None,
        progress: 0.0,
        done: false,
        counters: EpisodeCounters::default(),
        seams: Vec::new(),
        audits: Vec::new(),
        chains_valid: Vec::new(),
    };
    let mut log = RunLog {
        label: scenario.label.clone(),
        seed: sim.seed,
        dt,
        log_every: sim.log_every,
        plant: RunLog::PLANT_NOTE.into(),
        records: Vec::new(),
        outcome: Outcome::Timeout,
        start: [scenario.start.0, scenario.start.1],
        goal: [scenario.goal.0, scenario.goal.1],
        final_position: [scenario.start.0, scenario.start.1, 0.0],
        distance: 0.0,
        goal_error: 0.0,
        duration: 0.0,
        fallen: false,
        out_of_bounds: false,
        counters: EpisodeCounters::default(),
        seams: Vec::new(),
        audits: Vec::new(),
        chains_valid: Vec::new(),
        tracking_error_sum: 0.0,
        failure: None,
    };
    let fail = |mut log: RunLog, msg: String| {
        log.failure = Some(msg);
        log.goal_error = ((log.goal[0] - log.start[0]).powi(2) + (log.goal[1] - log.start[1]).powi(2)).sqrt();
        log
    };
    if let Err(e) = pipe.validate().and_then(|_| sim.validate()) {
        return fail(log, e);
    }

    // Global path. Start and goal in one cell is the null task.
    let same_cell = match (map.world_to_cell(scenario.start.0, scenario.start.1), map.world_to_cell(scenario.goal.0, scenario.goal.1)) {
        (Ok(a), Ok(b)) => a == b,
        _ => return fail(log, "start or goal outside the map".into()),
    };
    let mut heading = 0.0;
    if !same_cell {
        let fss = pipe.fss_config(map.resolution());
        match plan_global(map, scenario.start, scenario.goal, &fss, &runner.planner, model) {
            Ok(g) => {
                heading = g.path.heading_at(0.0);
                runner.path = Some(g.path);
            }
            Err(e) => return fail(log, format!("global planning failed: {e}")),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut jitter = |w: f64| if w > 0.0 { rng.gen_range(-w..=w) } else { 0.0 };
    let (dx, dy, dyaw) = (jitter(sim.start_position_noise), jitter(sim.start_position_noise), jitter(sim.start_yaw_noise));
    let (sx, sy) = if same_cell { scenario.start } else { (scenario.start.0 + dx, scenario.start.1 + dy) };
    let yaw = if same_cell { 0.0 } else { heading + dyaw };
    let start_orientation = BodyState::at_rest(Vector3::zeros(), yaw).orientation;
    let z = match runner.planner.base_height(map, nalgebra::Vector2::new(sx, sy), &start_orientation) {
        Ok(z) => z,
        Err(e) => return fail(log, e.to_string()),
    };
    let start = BodyState::at_rest(Vector3::new(sx, sy, z), yaw);

    let Some(mut active) = runner.solve_segment(0.0, &start, None, 0.0) else {
        return fail(log, "no feasible initial segment".into());
    };
    let mut state = SimState::from_node(model, active.first());
    let mut controller = Controller::new(model.clone(), pipe.ik, pipe.gains, pipe.mode, dt);
    let mut endpoint_guard = SequenceGuard::default();
    let mut joints = state.joints;

    let max_ticks = (scenario.time_limit / dt).round() as u64;
    let decision_ticks = ((pipe.decision_period / dt).round() as u64).max(1);
    let mut plan_tick: u64 = 0;
    let mut failure = None;
    let mut tick: u64 = 0;
    while tick < max_ticks {
        let t = tick as f64 * dt;
        if tick.is_multiple_of(decision_ticks) {
            runner.counters.global_decisions += 1;
            let plan_t = plan_tick as f64 * dt;
            if tick > 0 {
                if let ReplanDecision::Replan { .. } = replan_trigger(&state.base, &active, plan_t, pipe.replan_threshold) {
                    let feet = actual_feet(&state, model);
                    let from = BodyState::at_rest(state.base.position, state.base.yaw());
                    let hint = (runner.progress - pipe.step_size).max(0.0);
                    if let Some(plan) = runner.solve_segment(t, &from, Some(&feet), hint) {
                        runner.chains_valid.push(validate_plan(&active, map).is_ok());
                        active = plan;
                        plan_tick = 0;
                        controller.reset_velocity_memory();
                        runner.counters.reroots += 1;
                    }
                }
            }
            let remaining = active.duration() - plan_tick as f64 * dt;
            if !runner.done && remaining <= pipe.decision_period + 1e-9 {
                if let Err(e) = runner.extend(t, &mut active) {
                    failure.get_or_insert(e);
                }
            }
        }

        let frame_start = Instant::now();
        let plan_t = plan_tick as f64 * dt;
        let node: Option<TrajectoryNode> =
            if plan_t <= active.duration() + 1e-9 { active.sample(plan_t.min(active.duration())).ok() } else { None };
        let (packet, reference) = controller.tick(node.as_ref(), &joints);
        runner.counters.controller_ticks += 1;

        let reference_base = node.map_or(active.last().base, |n| n.base);
        let err = (reference_base.position - state.base.position).norm();
        log.tracking_error_sum += err;
        if tick.is_multiple_of(sim.log_every as u64) {
            log.records.push(LogRecord {
                t,
                reference: pose_of(&reference_base),
                actual: pose_of(&state.base),
                q_ref: reference.q_ref,
                q: state.joints.q,
                contact: state.contact,
            });
        }

        match decode_command(&encode_command(&packet)).map_err(|e| e.to_string()).and_then(|p| {
            endpoint_guard.accept(p.seq).map_err(|e| e.to_string())?;
            Ok(p)
        }) {
            Ok(p) => step_in_place(&mut state, &p, sim, map, model),
            Err(_) => {
                runner.counters.packet_errors += 1;
                let hold = crate::robot_interface::CommandPacket::torque(packet.seq, &[0.0; JOINT_COUNT]);
                step_in_place(&mut state, &hold, sim, map, model);
            }
        }
        runner.counters.plant_steps += 1;
        match sensed(&encode_sensor(&state.sensor_packet(packet.seq))) {
            Some(j) => joints = j,
            None => runner.counters.packet_errors += 1,
        }
        observer(t, frame_start.elapsed().as_secs_f64() * 1e6);

        tick += 1;
        plan_tick += 1;
        if state.fallen || state.out_of_bounds {
            break;
        }
        if runner.done && plan_tick as f64 * dt > active.duration() + 1e-9 {
            break;
        }
    }
    runner.chains_valid.push(validate_plan(&active, map).is_ok());

    runner.counters.degraded_ticks = controller.stats.degraded_ticks;
    runner.counters.torque_clamps = controller.stats.torque_clamps;
    let p = state.base.position;
    log.final_position = [p.x, p.y, p.z];
    log.distance = Point2::new(p.x, p.y).coords.metric_distance(&Point2::new(scenario.start.0, scenario.start.1).coords);
    log.goal_error = ((p.x - scenario.goal.0).powi(2) + (p.y - scenario.goal.1).powi(2)).sqrt();
    log.duration = tick as f64 * dt;
    log.fallen = state.fallen;
    log.out_of_bounds = state.out_of_bounds;
    log.counters = runner.counters;
    log.seams = runner.seams;
    log.audits = runner.audits;
    log.chains_valid = runner.chains_valid;
    log.failure = failure;
    log.outcome = judge_outcome(&log, pipe.goal_radius);
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_task_finishes_after_one_cycle() {
        let scenario = Scenario {
            label: "null".into(),
            map: HeightMap::flat(41, 41, 0.05, (-1.0, -1.0)).unwrap(),
            start: (0.0, 0.0),
            goal: (0.0, 0.0),
            time_limit: 10.0,
        };
        let log = run_episode(&scenario, &PipelineConfig::default(), &SimConfig::default());
        assert_eq!(log.outcome, Outcome::Success, "{:?}", log.failure);
        assert!((log.duration - 2.0).abs() < 0.01, "{}", log.duration);
        assert!(log.distance < 0.01);
    }

    #[test]
    fn ten_second_cadence() {
        let mut scenario = Scenario::task(Task::Walking, 0);
        scenario.time_limit = 10.0;
        let log = run_episode(&scenario, &PipelineConfig::default(), &SimConfig::default());
        assert_eq!(log.counters.controller_ticks, 10_000);
        assert_eq!(log.counters.plant_steps, 10_000);
        assert_eq!(log.counters.global_decisions, 5);
        assert_eq!(log.records.len(), 10_000);
        assert_eq!(log.outcome, Outcome::Timeout);
        assert_eq!(log.counters.packet_errors, 0);
    }

    #[test]
    fn csv_round_trip() {
        let mut scenario = Scenario::task(Task::Walking, 2);
        scenario.time_limit = 0.05;
        let log = run_episode(&scenario, &PipelineConfig::default(), &SimConfig::default());
        let csv = log.to_csv();
        assert_eq!(RunLog::records_from_csv(&csv).unwrap(), log.records);
    }
}
