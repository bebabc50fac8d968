//! Phase-based gait generation between two body states, plus the kinematic
//! feasibility verdict the global planner probes with.
//!
//! A plan is a uniformly sampled list of [`TrajectoryNode`]s. The base follows
//! a smoothstep time-scaling from start to goal; legs move in diagonal pairs,
//! swinging on a sine arc between footholds placed under the hips.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{RobotModel, LEG_COUNT, LEG_NAMES};
use crate::terrain::{HeightMap, TerrainError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{what} ({x:.3}, {y:.3}) is outside the terrain")]
    OutOfBounds { what: &'static str, x: f64, y: f64 },
    #[error("zero-duration request: {0}")]
    ZeroDuration(String),
    #[error("invalid gait pattern: {0}")]
    InvalidPattern(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("time {t} outside plan range [0, {end}]")]
    TimeOutOfRange { t: f64, end: f64 },
    #[error("plan csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl BodyState {
    pub fn at_rest(position: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }

    /// World position of a body-frame point.
    pub fn to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryNode {
    pub t: f64,
    pub base: BodyState,
    pub feet: [Vector3<f64>; LEG_COUNT],
    pub contact: [bool; LEG_COUNT],
}

impl TrajectoryNode {
    pub fn full_contact(&self) -> bool {
        self.contact.iter().all(|&c| c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitPattern {
    pub cycle_duration: f64,
    /// Swing start per leg as a fraction of the cycle.
    pub phase_offsets: [f64; LEG_COUNT],
    pub duty_factor: f64,
    /// Leading fraction of every cycle with all four feet down.
    pub full_stance_fraction: f64,
    pub step_height: f64,
}

impl Default for GaitPattern {
    /// Trot: FL+HR swing first, then FR+HL.
    fn default() -> Self {
        Self {
            cycle_duration: 2.0,
            phase_offsets: [0.15, 0.55, 0.55, 0.15],
            duty_factor: 0.6,
            full_stance_fraction: 0.15,
            step_height: 0.05,
        }
    }
}

impl GaitPattern {
    pub fn swing_fraction(&self) -> f64 {
        1.0 - self.duty_factor
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::InvalidPattern(m));
        if !(self.cycle_duration > 0.0) {
            return Err(PlanError::ZeroDuration(format!("cycle duration {}", self.cycle_duration)));
        }
        if !(self.duty_factor > 0.0 && self.duty_factor <= 1.0) {
            return bad(format!("duty factor {} outside (0, 1]", self.duty_factor));
        }
        if !(0.0..1.0).contains(&self.full_stance_fraction) {
            return bad(format!("full-stance fraction {} outside [0, 1)", self.full_stance_fraction));
        }
        if !(self.step_height >= 0.0) {
            return bad("step height must be non-negative".into());
        }
        for (leg, &off) in self.phase_offsets.iter().enumerate() {
            if !(0.0..1.0).contains(&off) {
                return bad(format!("{} phase offset {off} outside [0, 1)", LEG_NAMES[leg]));
            }
            if off < self.full_stance_fraction - 1e-12 {
                return bad(format!("{} swings during the full-stance window", LEG_NAMES[leg]));
            }
            if off + self.swing_fraction() > 1.0 + 1e-12 {
                return bad(format!("{} swing wraps past the cycle end", LEG_NAMES[leg]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Node spacing, seconds. Must divide the cycle duration.
    pub dt: f64,
    /// Largest hip travel per gait cycle, meters.
    pub max_stride: f64,
    pub max_step_height: f64,
    pub reach_margin: f64,
    /// Minimum clearance over the middle half of every swing.
    pub clearance_margin: f64,
    /// Upper bound on the swing apex above the foothold line.
    pub max_swing_height: f64,
    /// How far a foothold may move off the hip line to find flat ground, meters.
    pub foothold_search_radius: f64,
    /// Largest height spread across a foot-sized patch that counts as flat, meters.
    pub foothold_flatness: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            dt: 0.01,
            max_stride: 0.3,
            max_step_height: 0.08,
            reach_margin: 0.02,
            clearance_margin: 0.01,
            max_swing_height: 0.15,
            foothold_search_radius: 0.04,
            foothold_flatness: 0.004,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitPlan {
    pub nodes: Vec<TrajectoryNode>,
    pub dt: f64,
    pub pattern: GaitPattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InfeasibleReason {
    ReachExceeded,
    StepHeightExceeded,
    SwingPenetration,
    SwingClearance,
    Undercarriage,
}

impl fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfeasibleReason::ReachExceeded => "reach exceeded",
            InfeasibleReason::StepHeightExceeded => "step height exceeded",
            InfeasibleReason::SwingPenetration => "swing foot below terrain",
            InfeasibleReason::SwingClearance => "swing clearance below margin",
            InfeasibleReason::Undercarriage => "undercarriage below terrain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Feasible,
    Infeasible(Vec<InfeasibleReason>),
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible)
    }
}

/// Anything that can judge a start/goal pair over terrain.
pub trait FeasibilityOracle: Sync {
    fn evaluate(&self, start: &BodyState, goal: &BodyState, terrain: &HeightMap) -> Result<Verdict, PlanError>;
}

#[derive(Debug, Clone, Default)]
pub struct LocalPlanner {
    pub model: RobotModel,
    pub pattern: GaitPattern,
    pub params: PlannerParams,
}

impl FeasibilityOracle for LocalPlanner {
    fn evaluate(&self, start: &BodyState, goal: &BodyState, terrain: &HeightMap) -> Result<Verdict, PlanError> {
        let plan = self.plan(start, goal, terrain)?;
        Ok(self.check(&plan, terrain))
    }
}

fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

fn smoothstep_rate(u: f64) -> f64 {
    6.0 * u * (1.0 - u)
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn height(terrain: &HeightMap, what: &'static str, x: f64, y: f64) -> Result<f64, PlanError> {
    terrain.height_at(x, y).map_err(|_| PlanError::OutOfBounds { what, x, y })
}

/// Stance/swing timing for one leg, in node indices.
#[derive(Debug, Clone, Copy)]
struct Swing {
    lift: usize,
    touch: usize,
}

impl LocalPlanner {
    pub fn new(model: RobotModel, pattern: GaitPattern, params: PlannerParams) -> Self {
        Self { model, pattern, params }
    }

    fn nodes_per_cycle(&self) -> Result<usize, PlanError> {
        self.pattern.validate()?;
        if !(self.params.dt > 0.0) {
            return Err(PlanError::ZeroDuration(format!("node spacing {}", self.params.dt)));
        }
        let ratio = self.pattern.cycle_duration / self.params.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 {
            return Err(PlanError::InvalidPattern(format!(
                "cycle duration {} is not a whole number of node steps {}",
                self.pattern.cycle_duration, self.params.dt
            )));
        }
        Ok(n as usize)
    }

    fn swings(&self, per_cycle: usize, cycles: usize, leg: usize) -> Vec<Swing> {
        let lo = (self.pattern.phase_offsets[leg] * per_cycle as f64).round() as usize;
        let hi = ((self.pattern.phase_offsets[leg] + self.pattern.swing_fraction()) * per_cycle as f64).round() as usize;
        if hi <= lo + 1 {
            return Vec::new();
        }
        (0..cycles).map(|c| Swing { lift: c * per_cycle + lo, touch: c * per_cycle + hi }).collect()
    }

    /// Base height for a pose: mean terrain under the hips plus standing height.
    pub fn base_height(&self, terrain: &HeightMap, xy: Vector2<f64>, orientation: &UnitQuaternion<f64>) -> Result<f64, PlanError> {
        let mut sum = 0.0;
        for leg in 0..LEG_COUNT {
            let h = orientation * self.model.hip(leg);
            sum += height(terrain, "hip", xy.x + h.x, xy.y + h.y)?;
        }
        Ok(sum / LEG_COUNT as f64 + self.model.standing_height)
    }

    fn nominal_foothold(
        &self,
        terrain: &HeightMap,
        xy: Vector2<f64>,
        orientation: &UnitQuaternion<f64>,
        leg: usize,
    ) -> Result<Vector3<f64>, PlanError> {
        let h = orientation * self.model.hip(leg);
        let (x, y) = self.flat_spot(terrain, xy.x + h.x, xy.y + h.y);
        Ok(Vector3::new(x, y, height(terrain, "foothold", x, y)?))
    }

    /// Nearest point to `(x, y)` on a 1 cm lattice within the search radius
    /// whose foot patch is flat; `(x, y)` itself when none is.
    fn flat_spot(&self, terrain: &HeightMap, x: f64, y: f64) -> (f64, f64) {
        const PATCH: f64 = 0.02;
        const LATTICE: f64 = 0.01;
        let flat = |cx: f64, cy: f64| {
            let samples = [(0.0, 0.0), (PATCH, 0.0), (-PATCH, 0.0), (0.0, PATCH), (0.0, -PATCH)]
                .map(|(dx, dy)| terrain.height_at(cx + dx, cy + dy).ok());
            if samples.iter().any(Option::is_none) {
                return false;
            }
            let hs = samples.map(Option::unwrap);
            let (lo, hi) = hs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)));
            hi - lo <= self.params.foothold_flatness
        };
        if flat(x, y) {
            return (x, y);
        }
        let steps = (self.params.foothold_search_radius / LATTICE).floor() as i32;
        let mut best: Option<(f64, f64, f64)> = None;
        for i in -steps..=steps {
            for j in -steps..=steps {
                let (dx, dy) = (i as f64 * LATTICE, j as f64 * LATTICE);
                let d = dx.hypot(dy);
                if d > self.params.foothold_search_radius + 1e-12 || best.is_some_and(|b| b.0 <= d) {
                    continue;
                }
                if flat(x + dx, y + dy) {
                    best = Some((d, x + dx, y + dy));
                }
            }
        }
        best.map_or((x, y), |(_, bx, by)| (bx, by))
    }

    pub fn plan(&self, start: &BodyState, goal: &BodyState, terrain: &HeightMap) -> Result<GaitPlan, PlanError> {
        self.plan_from_feet(start, None, goal, terrain)
    }

    /// Plans with the first stance footholds taken from `feet` (snapped to the
    /// terrain) instead of the nominal stance under `start`.
    pub fn plan_from_feet(
        &self,
        start: &BodyState,
        feet: Option<&[Vector3<f64>; LEG_COUNT]>,
        goal: &BodyState,
        terrain: &HeightMap,
    ) -> Result<GaitPlan, PlanError> {
        let per_cycle = self.nodes_per_cycle()?;
        for (what, s) in [("start", start), ("goal", goal)] {
            if !s.is_finite() {
                return Err(PlanError::InvalidPlan(format!("{what} state is not finite")));
            }
            if !terrain.contains(s.position.x, s.position.y) {
                return Err(PlanError::OutOfBounds { what, x: s.position.x, y: s.position.y });
            }
        }
        let p0 = start.position.xy();
        let p1 = goal.position.xy();
        let yaw0 = start.yaw();
        let dyaw = wrap_angle(goal.yaw() - yaw0);

        let mut displacement: f64 = 0.0;
        for leg in 0..LEG_COUNT {
            let h0 = p0 + (start.orientation * self.model.hip(leg)).xy();
            let h1 = p1 + (goal.orientation * self.model.hip(leg)).xy();
            displacement = displacement.max((h1 - h0).norm());
        }
        let null = displacement < 1e-9 && feet.is_none();
        let cycles = if null { 1 } else { self.cycles_for(displacement) };
        let total = cycles * per_cycle;
        let duration = total as f64 * self.params.dt;

        let orientation_at = |u: f64| -> UnitQuaternion<f64> {
            if u <= 0.0 {
                start.orientation
            } else if u >= 1.0 {
                goal.orientation
            } else {
                UnitQuaternion::from_euler_angles(0.0, 0.0, yaw0 + dyaw * smoothstep(u))
            }
        };
        let xy_at = |u: f64| -> Vector2<f64> {
            let s = smoothstep(u);
            p0 * (1.0 - s) + p1 * s
        };

        // base trajectory
        let mut bases = Vec::with_capacity(total + 1);
        for k in 0..=total {
            let u = k as f64 / total as f64;
            let xy = xy_at(u);
            let orientation = orientation_at(u);
            let z = self.base_height(terrain, xy, &orientation)?;
            let rate = smoothstep_rate(u) / duration;
            let v = (p1 - p0) * rate;
            bases.push(BodyState {
                position: Vector3::new(xy.x, xy.y, z),
                orientation,
                linear_velocity: Vector3::new(v.x, v.y, 0.0),
                angular_velocity: Vector3::new(0.0, 0.0, dyaw * rate),
            });
        }
        for k in 0..=total {
            let vz = if k == 0 || k == total {
                0.0
            } else {
                (bases[k + 1].position.z - bases[k - 1].position.z) / (2.0 * self.params.dt)
            };
            bases[k].linear_velocity.z = vz;
        }

        let mut nodes: Vec<TrajectoryNode> = bases
            .iter()
            .enumerate()
            .map(|(k, b)| TrajectoryNode {
                t: k as f64 * self.params.dt,
                base: *b,
                feet: [Vector3::zeros(); LEG_COUNT],
                contact: [true; LEG_COUNT],
            })
            .collect();

        for leg in 0..LEG_COUNT {
            let swings = if null { Vec::new() } else { self.swings(per_cycle, cycles, leg) };
            // one foothold per stance interval
            let mut holds = Vec::with_capacity(swings.len() + 1);
            holds.push(match feet {
                Some(f) => Vector3::new(f[leg].x, f[leg].y, height(terrain, "foothold", f[leg].x, f[leg].y)?),
                None => self.nominal_foothold(terrain, p0, &start.orientation, leg)?,
            });
            for j in 1..swings.len() {
                let mid = (swings[j - 1].touch + swings[j].lift) / 2;
                let b = &bases[mid];
                holds.push(self.nominal_foothold(terrain, b.position.xy(), &b.orientation, leg)?);
            }
            if !swings.is_empty() {
                holds.push(self.nominal_foothold(terrain, p1, &goal.orientation, leg)?);
            }

            let mut interval = 0;
            let mut k = 0;
            while k <= total {
                match swings.get(interval) {
                    Some(sw) if k > sw.lift => {
                        let (a, b) = (holds[interval], holds[interval + 1]);
                        let apex = self.swing_apex(terrain, sw, &a, &b)?;
                        for kk in sw.lift + 1..sw.touch {
                            let s = (kk - sw.lift) as f64 / (sw.touch - sw.lift) as f64;
                            nodes[kk].feet[leg] = swing_point(&a, &b, apex, s);
                            nodes[kk].contact[leg] = false;
                        }
                        k = sw.touch;
                        interval += 1;
                    }
                    _ => {
                        nodes[k].feet[leg] = holds[interval];
                        k += 1;
                    }
                }
            }
        }

        Ok(GaitPlan { nodes, dt: self.params.dt, pattern: self.pattern })
    }

    fn cycles_for(&self, displacement: f64) -> usize {
        let mut n = ((displacement / self.params.max_stride) - 1e-9).ceil().max(1.0) as usize;
        // smoothstep peaks mid-plan, so check the largest per-cycle share
        loop {
            let worst = (0..n)
                .map(|c| smoothstep((c + 1) as f64 / n as f64) - smoothstep(c as f64 / n as f64))
                .fold(0.0, f64::max);
            if worst * displacement <= self.params.max_stride + 1e-9 || n > 10_000 {
                return n;
            }
            n += 1;
        }
    }

    /// Smallest apex height keeping the arc above terrain (and the margin over
    /// the middle half of the swing), capped at `max_swing_height`.
    fn swing_apex(&self, terrain: &HeightMap, sw: &Swing, a: &Vector3<f64>, b: &Vector3<f64>) -> Result<f64, PlanError> {
        let mut apex = self.pattern.step_height;
        for kk in sw.lift + 1..sw.touch {
            let s = (kk - sw.lift) as f64 / (sw.touch - sw.lift) as f64;
            let p = swing_point(a, b, 0.0, s);
            let ground = height(terrain, "swing foot", p.x, p.y)?;
            let margin = if (0.25..=0.75).contains(&s) { self.params.clearance_margin } else { 0.0 };
            let need = (ground - p.z + margin) / (PI * s).sin();
            if need > apex {
                apex = need * 1.1;
            }
        }
        Ok(apex.min(self.params.max_swing_height))
    }

    pub fn check(&self, plan: &GaitPlan, terrain: &HeightMap) -> Verdict {
        check_feasibility_with(plan, &self.model, terrain, &self.params)
    }
}

fn swing_point(a: &Vector3<f64>, b: &Vector3<f64>, apex: f64, s: f64) -> Vector3<f64> {
    let w = smoothstep(s);
    let mut p = a * (1.0 - w) + b * w;
    p.z += apex * (PI * s).sin();
    p
}

/// Generates a plan with default planner parameters.
pub fn plan_gait(
    start: &BodyState,
    goal: &BodyState,
    terrain: &HeightMap,
    pattern: &GaitPattern,
    model: &RobotModel,
) -> Result<GaitPlan, PlanError> {
    LocalPlanner::new(model.clone(), *pattern, PlannerParams::default()).plan(start, goal, terrain)
}

pub fn check_feasibility(plan: &GaitPlan, model: &RobotModel, terrain: &HeightMap) -> Verdict {
    check_feasibility_with(plan, model, terrain, &PlannerParams::default())
}

/// Kinematic proxy for solver feasibility: reach, swing clearance, body
/// clearance and terrain step per foothold transition.
pub fn check_feasibility_with(plan: &GaitPlan, model: &RobotModel, terrain: &HeightMap, params: &PlannerParams) -> Verdict {
    let mut reasons = std::collections::BTreeSet::new();
    let reach = model.reach() - params.reach_margin;
    let ground = |x: f64, y: f64| terrain.height_at(x, y).ok();

    for node in &plan.nodes {
        for leg in 0..LEG_COUNT {
            let hip = node.base.to_world(&model.hip(leg));
            if (node.feet[leg] - hip).norm() > reach + 1e-12 {
                reasons.insert(InfeasibleReason::ReachExceeded);
            }
        }
        let underside = node.base.position.z - model.body_clearance;
        let mut probes = vec![node.base.position];
        probes.extend((0..LEG_COUNT).map(|leg| node.base.to_world(&model.hip(leg))));
        for p in probes {
            match ground(p.x, p.y) {
                Some(g) if underside > g => {}
                _ => {
                    reasons.insert(InfeasibleReason::Undercarriage);
                }
            }
        }
    }

    for leg in 0..LEG_COUNT {
        let mut k = 0;
        while k < plan.nodes.len() {
            if plan.nodes[k].contact[leg] {
                k += 1;
                continue;
            }
            let lift = k.saturating_sub(1);
            let mut touch = k;
            while touch < plan.nodes.len() && !plan.nodes[touch].contact[leg] {
                touch += 1;
            }
            if touch >= plan.nodes.len() {
                // a plan must end in stance; treat a dangling swing as a bad step
                reasons.insert(InfeasibleReason::StepHeightExceeded);
                break;
            }
            let a = plan.nodes[lift].feet[leg];
            let b = plan.nodes[touch].feet[leg];
            let top = a.z.max(b.z);
            let mut step = (b.z - a.z).abs();
            for kk in lift + 1..touch {
                let s = (kk - lift) as f64 / (touch - lift) as f64;
                let f = plan.nodes[kk].feet[leg];
                let line = a.xy() * (1.0 - smoothstep(s)) + b.xy() * smoothstep(s);
                let (Some(g), Some(g_line)) = (ground(f.x, f.y), ground(line.x, line.y)) else {
                    reasons.insert(InfeasibleReason::SwingPenetration);
                    continue;
                };
                step = step.max(g_line - top);
                if f.z < g - 1e-9 {
                    reasons.insert(InfeasibleReason::SwingPenetration);
                } else if (0.25..=0.75).contains(&s) && f.z - g < params.clearance_margin - 1e-9 {
                    reasons.insert(InfeasibleReason::SwingClearance);
                }
            }
            if step > params.max_step_height + 1e-12 {
                reasons.insert(InfeasibleReason::StepHeightExceeded);
            }
            k = touch;
        }
    }

    if reasons.is_empty() {
        Verdict::Feasible
    } else {
        Verdict::Infeasible(reasons.into_iter().collect())
    }
}

/// Checks timing and per-node invariants: uniform spacing from zero, stance
/// feet on the terrain, no slip within a stance interval, full contact at
/// both ends.
pub fn validate_plan(plan: &GaitPlan, terrain: &HeightMap) -> Result<(), PlanError> {
    let bad = |m: String| Err(PlanError::InvalidPlan(m));
    if plan.nodes.is_empty() {
        return bad("no nodes".into());
    }
    if plan.nodes[0].t != 0.0 {
        return bad(format!("first node at t = {}", plan.nodes[0].t));
    }
    for (k, w) in plan.nodes.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return bad(format!("node {} time not increasing", k + 1));
        }
        if ((w[1].t - w[0].t) - plan.dt).abs() > 1e-9 {
            return bad(format!("node {} spacing {} != dt {}", k + 1, w[1].t - w[0].t, plan.dt));
        }
    }
    for (k, node) in plan.nodes.iter().enumerate() {
        if !node.base.is_finite() || node.feet.iter().any(|f| !f.iter().all(|v| v.is_finite())) {
            return bad(format!("node {k} not finite"));
        }
        for leg in 0..LEG_COUNT {
            if !node.contact[leg] {
                continue;
            }
            let f = node.feet[leg];
            let g = terrain.height_at(f.x, f.y).map_err(|e: TerrainError| PlanError::InvalidPlan(e.to_string()))?;
            if (f.z - g).abs() > 1e-6 {
                return bad(format!("node {k} {} in contact {} m off the terrain", LEG_NAMES[leg], f.z - g));
            }
            if k > 0 && plan.nodes[k - 1].contact[leg] && plan.nodes[k - 1].feet[leg].xy() != f.xy() {
                return bad(format!("node {k} {} slips during stance", LEG_NAMES[leg]));
            }
        }
    }
    if !plan.nodes[0].full_contact() || !plan.nodes[plan.nodes.len() - 1].full_contact() {
        return bad("plan must start and end in full contact".into());
    }
    Ok(())
}

impl GaitPlan {
    pub fn duration(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.t)
    }

    pub fn first(&self) -> &TrajectoryNode {
        &self.nodes[0]
    }

    pub fn last(&self) -> &TrajectoryNode {
        &self.nodes[self.nodes.len() - 1]
    }

    /// Interpolated node at time `t`; contact flags come from the earlier node.
    pub fn sample(&self, t: f64) -> Result<TrajectoryNode, PlanError> {
        let end = self.duration();
        if !(t >= 0.0 && t <= end) {
            return Err(PlanError::TimeOutOfRange { t, end });
        }
        let n = self.nodes.len();
        let mut k = ((t / self.dt).floor() as usize).min(n - 1);
        while k + 1 < n && self.nodes[k + 1].t <= t {
            k += 1;
        }
        while k > 0 && self.nodes[k].t > t {
            k -= 1;
        }
        let a = &self.nodes[k];
        if a.t == t || k + 1 == n {
            return Ok(*a);
        }
        let b = &self.nodes[k + 1];
        let w = (t - a.t) / (b.t - a.t);
        let lerp = |x: &Vector3<f64>, y: &Vector3<f64>| x * (1.0 - w) + y * w;
        Ok(TrajectoryNode {
            t,
            base: BodyState {
                position: lerp(&a.base.position, &b.base.position),
                orientation: a.base.orientation.slerp(&b.base.orientation, w),
                linear_velocity: lerp(&a.base.linear_velocity, &b.base.linear_velocity),
                angular_velocity: lerp(&a.base.angular_velocity, &b.base.angular_velocity),
            },
            feet: std::array::from_fn(|leg| lerp(&a.feet[leg], &b.feet[leg])),
            contact: a.contact,
        })
    }

    /// Times of every node with all four feet down.
    pub fn full_contact_nodes(&self) -> Vec<f64> {
        self.nodes.iter().filter(|n| n.full_contact()).map(|n| n.t).collect()
    }

    pub fn csv_header() -> Vec<String> {
        let mut cols: Vec<String> =
            ["t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"].iter().map(|s| s.to_string()).collect();
        for name in LEG_NAMES {
            for axis in ["x", "y", "z"] {
                cols.push(format!("{name}_{axis}"));
            }
        }
        for name in LEG_NAMES {
            cols.push(format!("{name}_contact"));
        }
        cols
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::csv_header()).expect("in-memory write");
        for n in &self.nodes {
            let q = n.base.orientation.quaternion();
            let mut rec: Vec<String> = Vec::with_capacity(30);
            let b = &n.base;
            for v in [
                n.t,
                b.position.x,
                b.position.y,
                b.position.z,
                q.w,
                q.i,
                q.j,
                q.k,
                b.linear_velocity.x,
                b.linear_velocity.y,
                b.linear_velocity.z,
                b.angular_velocity.x,
                b.angular_velocity.y,
                b.angular_velocity.z,
            ] {
                rec.push(v.to_string());
            }
            for f in &n.feet {
                rec.extend(f.iter().map(|v| v.to_string()));
            }
            rec.extend(n.contact.iter().map(|&c| if c { "1" } else { "0" }.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn from_csv(text: &str, pattern: GaitPattern) -> Result<GaitPlan, PlanError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers().map_err(|e| PlanError::Csv(e.to_string()))?.iter().map(String::from).collect();
        if header != Self::csv_header() {
            return Err(PlanError::Csv("unexpected header".into()));
        }
        let mut nodes = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| PlanError::Csv(e.to_string()))?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| PlanError::Csv(format!("row {}: bad number {s:?}", i + 1))))
                .collect::<Result<_, _>>()?;
            let q = nalgebra::Quaternion::new(v[4], v[5], v[6], v[7]);
            nodes.push(TrajectoryNode {
                t: v[0],
                base: BodyState {
                    position: Vector3::new(v[1], v[2], v[3]),
                    orientation: UnitQuaternion::new_unchecked(q),
                    linear_velocity: Vector3::new(v[8], v[9], v[10]),
                    angular_velocity: Vector3::new(v[11], v[12], v[13]),
                },
                feet: std::array::from_fn(|leg| Vector3::new(v[14 + 3 * leg], v[15 + 3 * leg], v[16 + 3 * leg])),
                contact: std::array::from_fn(|leg| v[26 + leg] != 0.0),
            });
        }
        if nodes.len() < 2 {
            return Err(PlanError::Csv("plan needs at least two nodes".into()));
        }
        let dt = nodes[1].t - nodes[0].t;
        Ok(GaitPlan { nodes, dt, pattern })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_task_env, Task};
    use proptest::prelude::*;

    fn flat() -> HeightMap {
        HeightMap::flat(61, 61, 0.05, (0.0, -1.5)).unwrap()
    }

    fn state(x: f64, y: f64, yaw: f64) -> BodyState {
        BodyState::at_rest(Vector3::new(x, y, 0.26), yaw)
    }

    #[test]
    fn null_displacement_is_one_full_stance_cycle() {
        let planner = LocalPlanner::default();
        let s = state(1.0, 0.0, 0.3);
        let plan = planner.plan(&s, &s, &flat()).unwrap();
        assert!((plan.duration() - 2.0).abs() < 1e-12);
        assert!(plan.nodes.iter().all(|n| n.full_contact() && n.base.position == plan.nodes[0].base.position));
        assert_eq!(plan.full_contact_nodes().len(), plan.nodes.len());
        assert_eq!(planner.check(&plan, &flat()), Verdict::Feasible);
    }

    #[test]
    fn flat_half_meter_reaches_goal_and_keeps_invariants() {
        let planner = LocalPlanner::default();
        let map = flat();
        let goal = state(1.0, 0.0, 0.0);
        let plan = planner.plan(&state(0.5, 0.0, 0.0), &goal, &map).unwrap();
        let end = plan.last().base.position;
        assert!((end.xy() - goal.position.xy()).norm() < 1e-6);
        validate_plan(&plan, &map).unwrap();
        assert_eq!(planner.check(&plan, &map), Verdict::Feasible);
        let fc = plan.full_contact_nodes();
        assert_eq!(fc[0], 0.0);
        assert_eq!(*fc.last().unwrap(), plan.duration());
    }

    #[test]
    fn climbing_footholds_sit_on_terrain() {
        let map = generate_task_env(Task::Climbing, 3);
        let planner = LocalPlanner::default();
        let mut x = 0.5;
        while x < 2.4 {
            let plan = planner.plan(&state(x, 0.0, 0.0), &state(x + 0.3, 0.0, 0.0), &map).unwrap();
            validate_plan(&plan, &map).unwrap();
            for n in &plan.nodes {
                for leg in 0..LEG_COUNT {
                    if n.contact[leg] {
                        let f = n.feet[leg];
                        assert!((f.z - map.height_at(f.x, f.y).unwrap()).abs() < 1e-12);
                    }
                }
            }
            assert!(planner.check(&plan, &map).is_feasible(), "segment at x = {x}");
            x += 0.3;
        }
    }

    #[test]
    fn wall_crossing_exceeds_step_height() {
        let mut map = flat();
        for row in 0..map.n_rows() {
            for col in 20..22 {
                map.set_cell_height(crate::terrain::CellIndex::new(row, col), 1.0);
            }
        }
        let plan = LocalPlanner::default().plan(&state(0.8, 0.0, 0.0), &state(1.3, 0.0, 0.0), &map).unwrap();
        match check_feasibility(&plan, &RobotModel::default(), &map) {
            Verdict::Infeasible(r) => assert!(r.contains(&InfeasibleReason::StepHeightExceeded)),
            v => panic!("expected infeasible, got {v:?}"),
        }
    }

    #[test]
    fn inflated_stride_exceeds_reach() {
        let map = flat();
        let mut plan = LocalPlanner::default().plan(&state(1.0, 0.0, 0.0), &state(1.3, 0.0, 0.0), &map).unwrap();
        let last = plan.nodes.len() - 1;
        plan.nodes[last].feet[0].x += 0.4;
        match check_feasibility(&plan, &RobotModel::default(), &map) {
            Verdict::Infeasible(r) => assert!(r.contains(&InfeasibleReason::ReachExceeded)),
            v => panic!("expected infeasible, got {v:?}"),
        }
        assert_eq!(InfeasibleReason::ReachExceeded.to_string(), "reach exceeded");
    }

    #[test]
    fn sample_examples() {
        let plan = LocalPlanner::default().plan(&state(1.0, 0.0, 0.0), &state(1.3, 0.0, 0.0), &flat()).unwrap();
        assert_eq!(plan.sample(plan.nodes[37].t).unwrap(), plan.nodes[37]);
        assert_eq!(plan.sample(plan.duration()).unwrap(), *plan.last());
        assert!(matches!(plan.sample(-0.01), Err(PlanError::TimeOutOfRange { .. })));
        assert!(plan.sample(plan.duration() + 0.01).is_err());

        let mut two = plan.clone();
        two.nodes.truncate(2);
        two.nodes[0].feet[0].z = 0.0;
        two.nodes[1].feet[0].z = 0.04;
        let mid = two.sample(0.005).unwrap();
        assert!((mid.feet[0].z - 0.02).abs() < 1e-15);
        assert_eq!(mid.contact, two.nodes[0].contact);
    }

    #[test]
    fn full_stance_fraction_gives_long_full_contact_runs() {
        let pattern = GaitPattern { phase_offsets: [0.2, 0.6, 0.6, 0.2], full_stance_fraction: 0.2, ..GaitPattern::default() };
        let planner = LocalPlanner { pattern, ..LocalPlanner::default() };
        let plan = planner.plan(&state(0.5, 0.0, 0.0), &state(1.3, 0.0, 0.0), &flat()).unwrap();
        let cycles = (plan.duration() / 2.0).round() as usize;
        assert!(cycles >= 2);
        for c in 0..cycles {
            let (lo, hi) = (c as f64 * 2.0, (c + 1) as f64 * 2.0);
            // longest run of consecutive full-contact nodes inside this cycle
            let mut best: f64 = 0.0;
            let mut run_start = None;
            for n in plan.nodes.iter().filter(|n| n.t >= lo - 1e-9 && n.t <= hi + 1e-9) {
                match (n.full_contact(), run_start) {
                    (true, None) => run_start = Some(n.t),
                    (true, Some(s)) => best = best.max(n.t - s),
                    (false, _) => run_start = None,
                }
            }
            assert!(best >= 0.4 - 1e-9, "cycle {c}: longest full-contact run {best}");
        }
    }

    #[test]
    fn pattern_validation() {
        assert!(GaitPattern::default().validate().is_ok());
        let wraps = GaitPattern { phase_offsets: [0.7, 0.55, 0.55, 0.15], ..GaitPattern::default() };
        assert!(wraps.validate().is_err());
        let early = GaitPattern { phase_offsets: [0.1, 0.55, 0.55, 0.15], ..GaitPattern::default() };
        assert!(early.validate().is_err());
        let zero = GaitPattern { cycle_duration: 0.0, ..GaitPattern::default() };
        assert!(matches!(zero.validate(), Err(PlanError::ZeroDuration(_))));
    }

    #[test]
    fn out_of_bounds_goal_is_an_error() {
        let r = LocalPlanner::default().plan(&state(1.0, 0.0, 0.0), &state(5.0, 0.0, 0.0), &flat());
        assert!(matches!(r, Err(PlanError::OutOfBounds { what: "goal", .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let plan = LocalPlanner::default().plan(&state(1.0, 0.0, 0.0), &state(1.2, 0.1, 0.4), &flat()).unwrap();
        let text = plan.to_csv();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 30);
        let back = GaitPlan::from_csv(&text, plan.pattern).unwrap();
        assert_eq!(back.nodes, plan.nodes);
    }

    #[test]
    fn plan_is_deterministic() {
        let p = LocalPlanner::default();
        let a = p.plan(&state(0.6, -0.2, 0.0), &state(1.4, 0.3, 1.0), &flat()).unwrap();
        let b = p.plan(&state(0.6, -0.2, 0.0), &state(1.4, 0.3, 1.0), &flat()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_cycle_solve_is_fast() {
        let map = HeightMap::flat(50, 50, 0.05, (0.0, 0.0)).unwrap();
        let started = std::time::Instant::now();
        let plan = LocalPlanner::default().plan(&state(1.0, 1.2, 0.0), &state(1.3, 1.2, 0.0), &map).unwrap();
        let _ = LocalPlanner::default().check(&plan, &map);
        assert!(started.elapsed().as_secs_f64() < 0.5);
        assert!((plan.duration() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn flat_goals_within_a_meter_are_feasible(r in 0.0f64..1.0, heading in -PI..PI, yaw in -PI..PI) {
            let map = flat();
            let start = state(1.5, 0.0, 0.0);
            let goal = state(1.5 + r * heading.cos(), r * heading.sin(), yaw);
            let planner = LocalPlanner::default();
            let plan = planner.plan(&start, &goal, &map).unwrap();
            prop_assert!(validate_plan(&plan, &map).is_ok());
            prop_assert_eq!(planner.check(&plan, &map), Verdict::Feasible);
        }
    }
}
