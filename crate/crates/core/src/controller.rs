//! 1 kHz tracking controller: trajectory nodes to joint references through
//! per-leg IK, and joint references to torques through a PD law.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::kinematics::{forward_kinematics_leg, ik_dls, ik_velocity, IkParams, JointState, RobotModel, JOINT_COUNT, LEG_COUNT};
use crate::local_planner::{GaitPlan, TrajectoryNode};
use crate::robot_interface::CommandPacket;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub kp: [f64; JOINT_COUNT],
    pub kd: [f64; JOINT_COUNT],
}

impl Default for Gains {
    fn default() -> Self {
        Self::uniform(3.0, 0.05)
    }
}

impl Gains {
    pub fn uniform(kp: f64, kd: f64) -> Self {
        Self { kp: [kp; JOINT_COUNT], kd: [kd; JOINT_COUNT] }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kp.iter().chain(self.kd.iter()).all(|g| g.is_finite() && *g >= 0.0) {
            Ok(())
        } else {
            Err("gains must be finite and non-negative".into())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    #[default]
    OnboardPd,
    Torque,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointReference {
    pub q_ref: [f64; JOINT_COUNT],
    pub dq_ref: [f64; JOINT_COUNT],
    pub mode: ControlMode,
}

/// What the reference computation carries from one tick to the next.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceMemory {
    pub q_ref: Option<[f64; JOINT_COUNT]>,
    /// Desired feet in the base frame at the previous tick.
    pub feet: Option<[Vector3<f64>; LEG_COUNT]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOutcome {
    pub reference: JointReference,
    /// Legs whose IK did not converge and kept their previous reference.
    pub degraded: [bool; LEG_COUNT],
}

impl ReferenceOutcome {
    pub fn is_degraded(&self) -> bool {
        self.degraded.iter().any(|&d| d)
    }
}

/// Desired feet in the node's own base frame.
pub fn node_feet_in_base(node: &TrajectoryNode) -> [Vector3<f64>; LEG_COUNT] {
    let inv = node.base.orientation.inverse();
    std::array::from_fn(|leg| inv * (node.feet[leg] - node.base.position))
}

/// Joint reference for one node. IK is warm-started at the measured joint
/// angles; the velocity reference maps the finite difference of desired
/// foot positions through the leg Jacobian.
pub fn node_to_joint_reference(
    model: &RobotModel,
    node: &TrajectoryNode,
    state: &JointState,
    params: &IkParams,
    dt: f64,
    memory: &mut ReferenceMemory,
) -> ReferenceOutcome {
    let feet = node_feet_in_base(node);
    let mut q_ref = [0.0; JOINT_COUNT];
    let mut dq_ref = [0.0; JOINT_COUNT];
    let mut degraded = [false; LEG_COUNT];
    for leg in 0..LEG_COUNT {
        let q = state.leg_q(leg);
        let sol = ik_dls(model, leg, &feet[leg], q, params);
        let r = 3 * leg..3 * leg + 3;
        if sol.converged {
            q_ref[r.clone()].copy_from_slice(&sol.q);
        } else {
            degraded[leg] = true;
            let held = memory.q_ref.unwrap_or(state.q);
            q_ref[r.clone()].copy_from_slice(&held[r.clone()]);
        }
        let prev = memory.feet.map_or_else(|| forward_kinematics_leg(model, leg, q), |f| f[leg]);
        let v = if degraded[leg] { Vector3::zeros() } else { (feet[leg] - prev) / dt };
        dq_ref[r].copy_from_slice(&ik_velocity(model, leg, q, &v, params.regularization));
    }
    memory.q_ref = Some(q_ref);
    memory.feet = Some(feet);
    ReferenceOutcome { reference: JointReference { q_ref, dq_ref, mode: ControlMode::OnboardPd }, degraded }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueOutput {
    pub tau: [f64; JOINT_COUNT],
    pub clamped: [bool; JOINT_COUNT],
}

impl TorqueOutput {
    pub fn clamp_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

/// `τ = kp(q_ref − q) + kd(dq_ref − dq)`, clamped to `±torque_limit`.
pub fn pd_torque(gains: &Gains, reference: &JointReference, state: &JointState, torque_limit: f64) -> TorqueOutput {
    let mut tau = [0.0; JOINT_COUNT];
    let mut clamped = [false; JOINT_COUNT];
    for j in 0..JOINT_COUNT {
        let raw = gains.kp[j] * (reference.q_ref[j] - state.q[j]) + gains.kd[j] * (reference.dq_ref[j] - state.dq[j]);
        tau[j] = raw.clamp(-torque_limit, torque_limit);
        clamped[j] = tau[j] != raw;
    }
    TorqueOutput { tau, clamped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ControllerStats {
    pub ticks: u64,
    pub degraded_ticks: u64,
    pub hold_ticks: u64,
    pub torque_clamps: u64,
}

/// Stateful controller emitting one command packet per tick.
#[derive(Debug, Clone)]
pub struct Controller {
    pub model: RobotModel,
    pub ik: IkParams,
    pub gains: Gains,
    pub mode: ControlMode,
    pub dt: f64,
    memory: ReferenceMemory,
    last: Option<JointReference>,
    seq: u32,
    pub stats: ControllerStats,
}

impl Controller {
    pub fn new(model: RobotModel, ik: IkParams, gains: Gains, mode: ControlMode, dt: f64) -> Self {
        Self { model, ik, gains, mode, dt, memory: ReferenceMemory::default(), last: None, seq: 0, stats: ControllerStats::default() }
    }

    /// Number of ticks that cover a plan: one per `dt` of its duration.
    pub fn ticks_for(&self, plan: &GaitPlan) -> usize {
        (plan.duration() / self.dt).round() as usize
    }

    pub fn last_reference(&self) -> Option<&JointReference> {
        self.last.as_ref()
    }

    /// Forget the tracked feet after a discontinuous plan swap so the next
    /// velocity reference is not a jump.
    pub fn reset_velocity_memory(&mut self) {
        self.memory.feet = None;
    }

    /// One control tick. `None` means the plan is exhausted: hold the final
    /// reference with zero velocity.
    pub fn tick(&mut self, node: Option<&TrajectoryNode>, state: &JointState) -> (CommandPacket, JointReference) {
        let mut reference = match node {
            Some(node) => {
                let out = node_to_joint_reference(&self.model, node, state, &self.ik, self.dt, &mut self.memory);
                if out.is_degraded() {
                    self.stats.degraded_ticks += 1;
                }
                out.reference
            }
            None => {
                self.stats.hold_ticks += 1;
                let q_ref = self.last.map_or(state.q, |r| r.q_ref);
                JointReference { q_ref, dq_ref: [0.0; JOINT_COUNT], mode: self.mode }
            }
        };
        reference.mode = self.mode;
        self.last = Some(reference);
        self.stats.ticks += 1;
        self.seq = self.seq.wrapping_add(1);
        let packet = match self.mode {
            ControlMode::OnboardPd => CommandPacket::onboard_pd(self.seq, &reference.q_ref, &reference.dq_ref),
            ControlMode::Torque => {
                let out = pd_torque(&self.gains, &reference, state, self.model.torque_limit);
                self.stats.torque_clamps += out.clamp_count() as u64;
                CommandPacket::torque(self.seq, &out.tau)
            }
        };
        (packet, reference)
    }
}
