//! Fixed-step plant: damped double-integrator joints and a base that moves
//! so the stance feet stay put.

use nalgebra::{Matrix3, Matrix6, SMatrix, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::controller::{pd_torque, ControlMode, Gains, JointReference};
use crate::kinematics::{forward_kinematics_leg, ik_dls, IkParams, JointState, RobotModel, JOINT_COUNT, LEG_COUNT};
use crate::local_planner::{BodyState, TrajectoryNode};
use crate::robot_interface::{CommandPacket, CommandPayload, SensorPacket};
use crate::terrain::HeightMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// Reflected rotor plus link inertia per joint, kg·m².
    pub joint_inertia: f64,
    /// Viscous joint damping, N·m·s/rad.
    pub joint_damping: f64,
    pub gravity: f64,
    /// Fall when |roll| or |pitch| exceeds this, radians.
    pub max_tilt: f64,
    /// Fall when fewer than two feet have been in stance for longer than this, seconds.
    pub support_timeout: f64,
    /// The base must stay this far inside the map edge, meters.
    pub bounds_margin: f64,
    /// A swing foot touches down within this height of the terrain.
    pub touchdown_tolerance: f64,
    /// A stance foot lifts off once it sits this far above its anchor.
    pub release_tolerance: f64,
    /// Gains used by the endpoint in onboard PD mode.
    pub onboard_gains: Gains,
    pub seed: u64,
    /// Half-width of the seeded start-position perturbation, meters.
    pub start_position_noise: f64,
    /// Half-width of the seeded start-yaw perturbation, radians.
    pub start_yaw_noise: f64,
    /// Record every n-th tick in the run log.
    pub log_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            joint_inertia: 0.002,
            joint_damping: 0.02,
            gravity: 9.81,
            max_tilt: 0.6,
            support_timeout: 0.5,
            bounds_margin: 0.05,
            touchdown_tolerance: 2e-4,
            release_tolerance: 5e-4,
            onboard_gains: Gains::default(),
            seed: 0,
            start_position_noise: 0.02,
            start_yaw_noise: 0.05,
            log_every: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("dt", self.dt),
            ("joint_inertia", self.joint_inertia),
            ("max_tilt", self.max_tilt),
            ("support_timeout", self.support_timeout),
            ("touchdown_tolerance", self.touchdown_tolerance),
            ("release_tolerance", self.release_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("joint_damping", self.joint_damping),
            ("gravity", self.gravity),
            ("bounds_margin", self.bounds_margin),
            ("start_position_noise", self.start_position_noise),
            ("start_yaw_noise", self.start_yaw_noise),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.log_every == 0 {
            return Err("log_every must be at least 1".into());
        }
        self.onboard_gains.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub time: f64,
    pub steps: u64,
    pub base: BodyState,
    pub joints: JointState,
    pub contact: [bool; LEG_COUNT],
    /// World position each stance foot is pinned to.
    pub anchors: [Vector3<f64>; LEG_COUNT],
    /// Continuous time with fewer than two stance feet.
    pub low_support_time: f64,
    pub fallen: bool,
    pub out_of_bounds: bool,
}

impl SimState {
    /// All feet in stance at their current world positions.
    pub fn new(model: &RobotModel, base: BodyState, joints: JointState) -> Self {
        let anchors = std::array::from_fn(|leg| base.to_world(&forward_kinematics_leg(model, leg, joints.leg_q(leg))));
        Self {
            time: 0.0,
            steps: 0,
            base,
            joints,
            contact: [true; LEG_COUNT],
            anchors,
            low_support_time: 0.0,
            fallen: false,
            out_of_bounds: false,
        }
    }

    /// Standing at a trajectory node: joints solved so the feet sit on the
    /// node's footholds.
    pub fn from_node(model: &RobotModel, node: &TrajectoryNode) -> Self {
        let inv = node.base.orientation.inverse();
        let seed = model.standing_pose();
        let mut q = [0.0; JOINT_COUNT];
        for leg in 0..LEG_COUNT {
            let local = inv * (node.feet[leg] - node.base.position);
            let sol = ik_dls(model, leg, &local, [seed[3 * leg], seed[3 * leg + 1], seed[3 * leg + 2]], &IkParams::default());
            q[3 * leg..3 * leg + 3].copy_from_slice(&sol.q);
        }
        let mut base = node.base;
        base.linear_velocity = Vector3::zeros();
        base.angular_velocity = Vector3::zeros();
        let mut s = Self::new(model, base, JointState::at_rest(q));
        s.contact = node.contact;
        s
    }

    pub fn foot_world(&self, model: &RobotModel, leg: usize) -> Vector3<f64> {
        self.base.to_world(&forward_kinematics_leg(model, leg, self.joints.leg_q(leg)))
    }

    pub fn stance_count(&self) -> usize {
        self.contact.iter().filter(|&&c| c).count()
    }

    pub fn roll_pitch(&self) -> (f64, f64) {
        let (r, p, _) = self.base.orientation.euler_angles();
        (r, p)
    }

    pub fn sensor_packet(&self, seq: u32) -> SensorPacket {
        let w = self.base.orientation.inverse() * self.base.angular_velocity;
        SensorPacket {
            seq,
            q: self.joints.q.map(|v| v as f32),
            dq: self.joints.dq.map(|v| v as f32),
            imu_rates: [w.x as f32, w.y as f32, w.z as f32],
        }
    }
}

/// Joint torques the plant applies for a packet.
pub fn packet_torques(packet: &CommandPacket, state: &SimState, config: &SimConfig, model: &RobotModel) -> [f64; JOINT_COUNT] {
    match packet.payload {
        CommandPayload::OnboardPd { q_ref, dq_ref } => {
            let r = JointReference { q_ref: q_ref.map(f64::from), dq_ref: dq_ref.map(f64::from), mode: ControlMode::OnboardPd };
            pd_torque(&config.onboard_gains, &r, &state.joints, model.torque_limit).tau
        }
        CommandPayload::Torque { tau } => tau.map(|t| f64::from(t).clamp(-model.torque_limit, model.torque_limit)),
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Base twist that best keeps the stance feet on their anchors after the
/// joints have moved: least squares over `v + ω × r_i = (a_i − f_i)/dt`.
/// Angular rate (rad/s) charged for each stance foot left out of the support set.
const DROP_PENALTY: f64 = 0.05;

/// Distance (m) the base may sit outside its support polygon and still count as balanced.
const BALANCE_MARGIN: f64 = 0.06;
/// Charge (rad/s) for a support set that leaves the base unbalanced.
const UNBALANCED_PENALTY: f64 = 1.0;

/// Horizontal distance from `p` to the convex hull of `feet`, zero inside.
fn support_distance(feet: &[Vector3<f64>], p: &Vector3<f64>) -> f64 {
    let seg = |a: &Vector3<f64>, b: &Vector3<f64>| {
        let (ax, ay, bx, by) = (a.x, a.y, b.x, b.y);
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 { (((p.x - ax) * dx + (p.y - ay) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p.x - ax - t * dx).hypot(p.y - ay - t * dy)
    };
    match feet.len() {
        0 => f64::INFINITY,
        1 => (p.x - feet[0].x).hypot(p.y - feet[0].y),
        2 => seg(&feet[0], &feet[1]),
        _ => {
            let (cx, cy) = feet.iter().fold((0.0, 0.0), |(x, y), f| (x + f.x, y + f.y));
            let (cx, cy) = (cx / feet.len() as f64, cy / feet.len() as f64);
            let mut ring = feet.to_vec();
            ring.sort_by(|a, b| (a.y - cy).atan2(a.x - cx).total_cmp(&(b.y - cy).atan2(b.x - cx)));
            let edges = (0..ring.len()).map(|i| (ring[i], ring[(i + 1) % ring.len()]));
            let inside = edges.clone().all(|(a, b)| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0);
            if inside {
                0.0
            } else {
                edges.map(|(a, b)| seg(&a, &b)).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Rate (1/s) at which an under-constrained base is pulled level.
const LEVELLING_RATE: f64 = 4.0;
/// Squared weight of the levelling rows against unit-weight stance rows.
const LEVELLING_WEIGHT: f64 = 1e-6;

fn stance_twist(state: &SimState, support: [bool; LEG_COUNT], model: &RobotModel, dt: f64) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let mut ata = Matrix6::<f64>::zeros();
    let mut atb = Vector6::<f64>::zeros();
    let mut any = false;
    for leg in (0..LEG_COUNT).filter(|&l| support[l]) {
        any = true;
        let r = state.base.orientation * forward_kinematics_leg(model, leg, state.joints.leg_q(leg));
        let foot = state.base.position + r;
        let mut a = SMatrix::<f64, 3, 6>::zeros();
        a.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&r)));
        let b = (state.anchors[leg] - foot) / dt;
        ata += a.transpose() * a;
        atb += a.transpose() * b;
    }
    if !any {
        return None;
    }
    // One or two stance feet leave a rotation free. A weak pull toward a
    // level body settles roll and pitch along that axis the way gravity
    // would; the Tikhonov term fixes whatever remains.
    let up = state.base.orientation * Vector3::z();
    let level = up.cross(&Vector3::z()) * LEVELLING_RATE;
    for i in 0..2 {
        ata[(3 + i, 3 + i)] += LEVELLING_WEIGHT;
        atb[3 + i] += LEVELLING_WEIGHT * level[i];
    }
    ata += Matrix6::identity() * 1e-9;
    let x = ata.cholesky().map(|c| c.solve(&atb)).unwrap_or_else(Vector6::zeros);
    Some((x.fixed_rows::<3>(0).into_owned(), x.fixed_rows::<3>(3).into_owned()))
}

/// Advances the plant one tick in place.
pub fn step_in_place(state: &mut SimState, packet: &CommandPacket, config: &SimConfig, terrain: &HeightMap, model: &RobotModel) {
    let dt = config.dt;
    let tau = packet_torques(packet, state, config, model);
    for j in 0..JOINT_COUNT {
        let ddq = (tau[j] - config.joint_damping * state.joints.dq[j]) / config.joint_inertia;
        state.joints.dq[j] += ddq * dt;
        state.joints.q[j] += state.joints.dq[j] * dt;
        let [lo, hi] = model.joint_limits[j];
        if state.joints.q[j] < lo || state.joints.q[j] > hi {
            state.joints.q[j] = state.joints.q[j].clamp(lo, hi);
            state.joints.dq[j] = 0.0;
        }
    }

    // Choose the support set. Candidates are subsets of the stance feet that
    // the base can keep on their anchors (within the release tolerance)
    // without pushing any dropped foot below its anchor. The base takes the
    // candidate needing the least rotation, with a small charge per dropped
    // foot so a consistent stance set is kept whole. This lets a swinging
    // pair lift together instead of the body rolling to follow one of them.
    let (position, orientation, velocity) = (state.base.position, state.base.orientation, state.base.linear_velocity);
    let stance: Vec<usize> = (0..LEG_COUNT).filter(|&l| state.contact[l]).collect();
    let n = stance.len();
    let min_size = n.min(2);
    let mut best: Option<([bool; LEG_COUNT], f64, BodyState)> = None;
    for mask in 1u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size < min_size {
            continue;
        }
        let mut support = [false; LEG_COUNT];
        for (i, &leg) in stance.iter().enumerate() {
            support[leg] = mask & (1 << i) != 0;
        }
        state.base.position = position;
        state.base.orientation = orientation;
        let Some((v, w)) = stance_twist(state, support, model, dt) else { continue };
        state.base.linear_velocity = v;
        state.base.angular_velocity = w;
        state.base.position += v * dt;
        state.base.orientation = UnitQuaternion::from_scaled_axis(w * dt) * orientation;
        let ok = stance.iter().all(|&leg| {
            let d = state.foot_world(model, leg) - state.anchors[leg];
            if support[leg] {
                d.norm() <= config.release_tolerance
            } else {
                d.z >= -config.release_tolerance
            }
        });
        let feet: Vec<Vector3<f64>> = (0..LEG_COUNT).filter(|&l| support[l]).map(|l| state.anchors[l]).collect();
        let balanced = support_distance(&feet, &state.base.position) <= BALANCE_MARGIN;
        let score = w.norm() + DROP_PENALTY * (n - size) as f64 + if balanced { 0.0 } else { UNBALANCED_PENALTY };
        if ok && best.as_ref().is_none_or(|b| score < b.1) {
            best = Some((support, score, state.base));
        }
    }
    match best {
        Some((support, _, base)) => {
            state.base = base;
            state.contact = support;
        }
        None if n > 0 => {
            state.base.position = position;
            state.base.orientation = orientation;
            let (v, w) = stance_twist(state, state.contact, model, dt).expect("non-empty stance");
            state.base.linear_velocity = v;
            state.base.angular_velocity = w;
            state.base.position += v * dt;
            state.base.orientation = UnitQuaternion::from_scaled_axis(w * dt) * orientation;
        }
        None => {
            state.base.position = position;
            state.base.orientation = orientation;
            state.base.linear_velocity = velocity;
            state.base.linear_velocity.z -= config.gravity * dt;
            state.base.position += state.base.linear_velocity * dt;
            state.base.orientation = UnitQuaternion::from_scaled_axis(state.base.angular_velocity * dt) * orientation;
        }
    }

    for leg in 0..LEG_COUNT {
        if state.contact[leg] {
            continue;
        }
        let foot = state.foot_world(model, leg);
        if let Ok(ground) = terrain.height_at(foot.x, foot.y) {
            if foot.z <= ground + config.touchdown_tolerance {
                state.contact[leg] = true;
                state.anchors[leg] = Vector3::new(foot.x, foot.y, ground);
            }
        }
    }

    state.time = (state.steps + 1) as f64 * dt;
    state.steps += 1;
    if state.stance_count() < 2 {
        state.low_support_time += dt;
    } else {
        state.low_support_time = 0.0;
    }
    let (roll, pitch) = state.roll_pitch();
    if roll.abs() > config.max_tilt || pitch.abs() > config.max_tilt || state.low_support_time > config.support_timeout {
        state.fallen = true;
    }
    let (x0, x1, y0, y1) = terrain.extent();
    let m = config.bounds_margin;
    let (x, y) = (state.base.position.x, state.base.position.y);
    if !(x >= x0 + m && x <= x1 - m && y >= y0 + m && y <= y1 - m) {
        state.out_of_bounds = true;
    }
}

/// Pure form of [`step_in_place`].
pub fn step(state: &SimState, packet: &CommandPacket, config: &SimConfig, terrain: &HeightMap, model: &RobotModel) -> SimState {
    let mut next = *state;
    step_in_place(&mut next, packet, config, terrain, model);
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (RobotModel, HeightMap, SimState) {
        let model = RobotModel::default();
        let map = HeightMap::flat(41, 41, 0.05, (-1.0, -1.0)).unwrap();
        let base = BodyState::at_rest(Vector3::new(0.0, 0.0, 0.26), 0.3);
        let state = SimState::new(&model, base, JointState::at_rest(model.standing_pose()));
        (model, map, state)
    }

    #[test]
    fn equilibrium_is_unchanged() {
        let (model, map, s0) = fixture();
        let cfg = SimConfig { joint_damping: 0.0, gravity: 0.0, ..SimConfig::default() };
        let zero = CommandPacket::torque(1, &[0.0; 12]);
        let mut s = s0;
        for _ in 0..1000 {
            step_in_place(&mut s, &zero, &cfg, &map, &model);
        }
        assert_eq!(s.joints, s0.joints);
        assert!((s.base.position - s0.base.position).norm() < 1e-12);
        assert!(s.base.orientation.angle_to(&s0.base.orientation) < 1e-12);
        assert_eq!(s.contact, [true; 4]);
        assert_eq!(s.steps, 1000);
        assert!((s.time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_torque_double_integrator() {
        let (model, map, s0) = fixture();
        let cfg = SimConfig { joint_damping: 0.0, ..SimConfig::default() };
        let mut tau = [0.0; 12];
        tau[0] = 0.001;
        let p = CommandPacket::torque(1, &tau);
        let mut s = s0;
        let n = 300;
        for _ in 0..n {
            step_in_place(&mut s, &p, &cfg, &map, &model);
        }
        let t = n as f64 * cfg.dt;
        let a = 0.001f32 as f64 / cfg.joint_inertia;
        let analytic = s0.joints.q[0] + 0.5 * a * t * t;
        // Semi-implicit Euler overshoots by a·t·dt/2.
        assert!((s.joints.q[0] - analytic).abs() <= 0.5 * a * t * cfg.dt + 1e-12);
        assert!((s.joints.dq[0] - a * t).abs() < 1e-9);
    }

    #[test]
    fn fall_latches() {
        let (model, map, mut s) = fixture();
        let cfg = SimConfig::default();
        s.base.orientation = UnitQuaternion::from_euler_angles(0.0, 0.7, 0.0) * s.base.orientation;
        s.anchors = std::array::from_fn(|l| s.foot_world(&model, l));
        let hold = CommandPacket::onboard_pd(1, &s.joints.q, &[0.0; 12]);
        step_in_place(&mut s, &hold, &cfg, &map, &model);
        assert!(s.fallen);
        s.base.orientation = UnitQuaternion::identity();
        step_in_place(&mut s, &hold, &cfg, &map, &model);
        assert!(s.fallen);
    }

    #[test]
    fn losing_support_falls_after_timeout() {
        let (model, map, mut s) = fixture();
        let cfg = SimConfig::default();
        s.base.position.z += 0.5;
        s.contact = [false; 4];
        let hold = CommandPacket::onboard_pd(1, &s.joints.q, &[0.0; 12]);
        for _ in 0..250 {
            step_in_place(&mut s, &hold, &cfg, &map, &model);
        }
        assert!(!s.fallen);
        assert!(s.base.linear_velocity.z < -2.0);
        for _ in 0..300 {
            step_in_place(&mut s, &hold, &cfg, &map, &model);
        }
        assert!(s.stance_count() > 0 || s.fallen);
    }

    #[test]
    fn damping_dissipates_energy() {
        let (model, map, mut s) = fixture();
        let cfg = SimConfig::default();
        s.joints.dq = [0.0, 1.0, -2.0, 0.5, 0.3, -0.3, 1.2, 0.0, 0.1, -0.7, 0.4, 0.9];
        let zero = CommandPacket::torque(1, &[0.0; 12]);
        let energy = |s: &SimState| 0.5 * cfg.joint_inertia * s.joints.dq.iter().map(|v| v * v).sum::<f64>();
        let mut e = energy(&s);
        for _ in 0..200 {
            step_in_place(&mut s, &zero, &cfg, &map, &model);
            let e2 = energy(&s);
            assert!(e2 <= e);
            e = e2;
        }
    }

    #[test]
    fn step_response_within_half_a_second() {
        let (model, map, mut s) = fixture();
        let cfg = SimConfig::default();
        let mut q_ref = s.joints.q;
        q_ref[4] += 0.1;
        let p = CommandPacket::onboard_pd(1, &q_ref, &[0.0; 12]);
        for _ in 0..500 {
            step_in_place(&mut s, &p, &cfg, &map, &model);
        }
        assert!((s.joints.q[4] - q_ref[4] as f32 as f64).abs() < 1e-3);
    }

    #[test]
    fn stance_feet_stay_put_while_the_body_moves() {
        let (model, map, mut s) = fixture();
        let cfg = SimConfig::default();
        let mut q_ref = s.joints.q;
        for leg in 0..4 {
            q_ref[3 * leg + 1] += 0.05;
        }
        let p = CommandPacket::onboard_pd(1, &q_ref, &[0.0; 12]);
        for _ in 0..500 {
            let before: Vec<_> = (0..4).map(|l| s.foot_world(&model, l)).collect();
            step_in_place(&mut s, &p, &cfg, &map, &model);
            for (l, b) in before.iter().enumerate() {
                assert!((s.foot_world(&model, l) - b).norm() <= 1e-4);
            }
        }
        assert_eq!(s.contact, [true; 4]);
    }

    #[test]
    fn lifted_leg_releases_and_touches_down_again() {
        let (model, map, mut s) = fixture();
        let cfg = SimConfig::default();
        let q0 = s.joints.q;
        let mut lift = q0;
        lift[2] += 0.4;
        let up = CommandPacket::onboard_pd(1, &lift, &[0.0; 12]);
        for _ in 0..300 {
            step_in_place(&mut s, &up, &cfg, &map, &model);
        }
        assert_eq!(s.contact, [false, true, true, true]);
        let down = CommandPacket::onboard_pd(2, &q0, &[0.0; 12]);
        for _ in 0..500 {
            step_in_place(&mut s, &down, &cfg, &map, &model);
        }
        assert_eq!(s.contact, [true; 4]);
        assert!(!s.fallen);
    }
}
