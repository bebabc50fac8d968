use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::LEG_COUNT;
use crate::local_planner::{BodyState, GaitPlan, TrajectoryNode};

/// Largest base/foot position mismatch accepted at a seam, meters.
pub const SEAM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StitchError {
    #[error("t = {at} is not a full-contact node of the current plan")]
    NotFullContact { at: f64 },
    #[error("seam mismatch of {discrepancy:e} m exceeds tolerance")]
    SeamMismatch { discrepancy: f64 },
    #[error("node spacing differs: {current} vs {next}")]
    SpacingMismatch { current: f64, next: f64 },
}

/// Largest of the base position, heading (as arc length at unit radius) and
/// foot position differences between two nodes.
pub fn seam_discrepancy(a: &TrajectoryNode, b: &TrajectoryNode) -> f64 {
    let mut d = (a.base.position - b.base.position).norm();
    d = d.max(a.base.orientation.angle_to(&b.base.orientation));
    for leg in 0..LEG_COUNT {
        d = d.max((a.feet[leg] - b.feet[leg]).norm());
    }
    d
}

fn node_index(plan: &GaitPlan, at: f64) -> Option<usize> {
    let k = (at / plan.dt).round();
    if k < 0.0 || k as usize >= plan.nodes.len() {
        return None;
    }
    let k = k as usize;
    ((plan.nodes[k].t - at).abs() <= plan.dt * 1e-6).then_some(k)
}

/// Current's nodes through `at`, followed by `next` (minus its first node)
/// shifted to continue from `at`.
pub fn stitch(current: &GaitPlan, next: &GaitPlan, at: f64) -> Result<GaitPlan, StitchError> {
    let mut out = current.clone();
    stitch_in_place(&mut out, next, at)?;
    Ok(out)
}

pub fn stitch_in_place(current: &mut GaitPlan, next: &GaitPlan, at: f64) -> Result<(), StitchError> {
    if (current.dt - next.dt).abs() > 1e-12 {
        return Err(StitchError::SpacingMismatch { current: current.dt, next: next.dt });
    }
    let k = match node_index(current, at) {
        Some(k) if current.nodes[k].full_contact() => k,
        _ => return Err(StitchError::NotFullContact { at }),
    };
    let discrepancy = seam_discrepancy(&current.nodes[k], &next.nodes[0]);
    if discrepancy > SEAM_TOLERANCE {
        return Err(StitchError::SeamMismatch { discrepancy });
    }
    current.nodes.truncate(k + 1);
    current.nodes.extend_from_slice(&next.nodes[1..]);
    let dt = current.dt;
    for (i, n) in current.nodes.iter_mut().enumerate().skip(k + 1) {
        n.t = i as f64 * dt;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReplanDecision {
    Continue,
    Replan { start: BodyState, deviation: f64 },
}

/// Compares the measured base with the plan reference at time `t`.
pub fn replan_trigger(current: &BodyState, plan: &GaitPlan, t: f64, threshold: f64) -> ReplanDecision {
    let t = t.clamp(0.0, plan.duration());
    let reference = plan.sample(t).map(|n| n.base.position).unwrap_or_else(|_| plan.last().base.position);
    let deviation = (current.position - reference).norm();
    if deviation > threshold {
        let start = BodyState { linear_velocity: Vector3::zeros(), angular_velocity: Vector3::zeros(), ..*current };
        ReplanDecision::Replan { start, deviation }
    } else {
        ReplanDecision::Continue
    }
}
