//! Leg kinematics for a 12-joint quadruped.
//!
//! Each leg is an abduction joint about the body x-axis followed by a planar
//! hip/knee chain in the leg's sagittal plane. With all joints at zero the
//! leg points straight down; a positive knee angle swings the lower link
//! toward +x.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LEG_COUNT: usize = 4;
pub const JOINT_COUNT: usize = 12;
pub const LEG_NAMES: [&str; LEG_COUNT] = ["FL", "FR", "HL", "HR"];
const JOINT_SUFFIXES: [&str; 3] = ["abd", "hip", "knee"];

/// Joint label such as `FR_knee`, for diagnostics and CSV headers.
pub fn joint_name(joint: usize) -> String {
    format!("{}_{}", LEG_NAMES[joint / 3], JOINT_SUFFIXES[joint % 3])
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid robot model: {0}")]
    Invalid(String),
    #[error("robot model config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    /// Hip joint positions in the base frame, legs ordered FL, FR, HL, HR.
    pub hip_offsets: [[f64; 3]; LEG_COUNT],
    pub upper_link: f64,
    pub lower_link: f64,
    /// `[min, max]` per joint, leg-major (abduction, hip, knee).
    pub joint_limits: [[f64; 2]; JOINT_COUNT],
    /// +1 for clockwise joint axes, -1 for counter-clockwise.
    pub axis_signs: [i8; JOINT_COUNT],
    /// Motor revolutions per joint revolution.
    pub reduction_ratio: f64,
    /// Symmetric joint torque limit, N·m.
    pub torque_limit: f64,
    /// Nominal hip height above the terrain under the base, meters.
    pub standing_height: f64,
    /// Depth of the body underside below the base origin, meters.
    pub body_clearance: f64,
    pub default_kp: f64,
    pub default_kd: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        let leg_limits = [[-0.8, 0.8], [-2.0, 2.0], [0.0, 2.9]];
        let mut joint_limits = [[0.0; 2]; JOINT_COUNT];
        for (j, lim) in joint_limits.iter_mut().enumerate() {
            *lim = leg_limits[j % 3];
        }
        Self {
            hip_offsets: [
                [0.19, 0.1046, 0.0],
                [0.19, -0.1046, 0.0],
                [-0.19, 0.1046, 0.0],
                [-0.19, -0.1046, 0.0],
            ],
            upper_link: 0.2,
            lower_link: 0.2,
            joint_limits,
            axis_signs: [1, -1, -1, -1, -1, -1, 1, 1, 1, -1, 1, 1],
            reduction_ratio: 9.0,
            torque_limit: 2.7,
            standing_height: 0.26,
            body_clearance: 0.05,
            default_kp: 3.0,
            default_kd: 0.05,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Invalid(m));
        if !(self.upper_link > 0.0 && self.lower_link > 0.0) {
            return bad("link lengths must be positive".into());
        }
        for (j, [lo, hi]) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return bad(format!("joint {j}: limit min {lo} must be below max {hi}"));
            }
        }
        if let Some(j) = self.axis_signs.iter().position(|s| s.abs() != 1) {
            return bad(format!("joint {j}: axis sign must be +1 or -1"));
        }
        if !(self.reduction_ratio > 0.0) {
            return bad("reduction ratio must be positive".into());
        }
        if !(self.torque_limit > 0.0) {
            return bad("torque limit must be positive".into());
        }
        if !(self.standing_height > 0.0 && self.standing_height < self.reach()) {
            return bad(format!("standing height must lie in (0, {})", self.reach()));
        }
        if self.default_kp < 0.0 || self.default_kd < 0.0 {
            return bad("default gains must be non-negative".into());
        }
        if self.hip_offsets.iter().flatten().any(|v| !v.is_finite()) {
            return bad("hip offsets must be finite".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: RobotModel = if text.trim().is_empty() { RobotModel::default() } else { serde_json::from_str(text)? };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Fully extended leg length.
    pub fn reach(&self) -> f64 {
        self.upper_link + self.lower_link
    }

    pub fn hip(&self, leg: usize) -> Vector3<f64> {
        Vector3::from(self.hip_offsets[leg])
    }

    pub fn leg_limits(&self, leg: usize) -> [[f64; 2]; 3] {
        [self.joint_limits[3 * leg], self.joint_limits[3 * leg + 1], self.joint_limits[3 * leg + 2]]
    }

    pub fn clamp_leg(&self, leg: usize, q: [f64; 3]) -> [f64; 3] {
        let lim = self.leg_limits(leg);
        [q[0].clamp(lim[0][0], lim[0][1]), q[1].clamp(lim[1][0], lim[1][1]), q[2].clamp(lim[2][0], lim[2][1])]
    }

    /// Nominal foot position (base frame) when standing on level ground.
    pub fn nominal_foot(&self, leg: usize) -> Vector3<f64> {
        let h = self.hip(leg);
        Vector3::new(h.x, h.y, h.z - self.standing_height)
    }

    /// Joint configuration with every foot at its nominal standing position.
    pub fn standing_pose(&self) -> [f64; JOINT_COUNT] {
        let params = IkParams { max_iterations: 200, ..IkParams::default() };
        let mut q = [0.0; JOINT_COUNT];
        for leg in 0..LEG_COUNT {
            let seed = self.clamp_leg(leg, [0.0, -0.7, 1.4]);
            let sol = ik_dls(self, leg, &self.nominal_foot(leg), seed, &params);
            q[3 * leg..3 * leg + 3].copy_from_slice(&sol.q);
        }
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: [f64; JOINT_COUNT],
    pub dq: [f64; JOINT_COUNT],
}

impl JointState {
    pub fn at_rest(q: [f64; JOINT_COUNT]) -> Self {
        Self { q, dq: [0.0; JOINT_COUNT] }
    }

    pub fn leg_q(&self, leg: usize) -> [f64; 3] {
        [self.q[3 * leg], self.q[3 * leg + 1], self.q[3 * leg + 2]]
    }

    pub fn leg_dq(&self, leg: usize) -> [f64; 3] {
        [self.dq[3 * leg], self.dq[3 * leg + 1], self.dq[3 * leg + 2]]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.dq.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkParams {
    /// Step scale applied to each least-squares update.
    pub lambda: f64,
    /// Stop once the foot position error drops below this, meters.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Tikhonov term added to `JᵀJ`.
    pub regularization: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self { lambda: 1.0, tolerance: 1e-4, max_iterations: 50, regularization: 1e-6 }
    }
}

impl IkParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda > 0.0) {
            return Err(ModelError::Invalid("IK lambda must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(ModelError::Invalid("IK tolerance must be positive".into()));
        }
        if self.max_iterations < 1 {
            return Err(ModelError::Invalid("IK max_iterations must be at least 1".into()));
        }
        if !(self.regularization >= 0.0) {
            return Err(ModelError::Invalid("IK regularization must be non-negative".into()));
        }
        Ok(())
    }
}

fn sagittal(model: &RobotModel, hip: f64, knee: f64) -> (f64, f64) {
    let px = model.upper_link * hip.sin() + model.lower_link * (hip + knee).sin();
    let pz = -model.upper_link * hip.cos() - model.lower_link * (hip + knee).cos();
    (px, pz)
}

/// Foot position in the base frame.
pub fn forward_kinematics_leg(model: &RobotModel, leg: usize, q: [f64; 3]) -> Vector3<f64> {
    let [abd, hip, knee] = q;
    let (px, pz) = sagittal(model, hip, knee);
    let (s, c) = abd.sin_cos();
    model.hip(leg) + Vector3::new(px, -s * pz, c * pz)
}

/// ∂(foot position)/∂(abduction, hip, knee).
pub fn leg_jacobian(model: &RobotModel, _leg: usize, q: [f64; 3]) -> Matrix3<f64> {
    let [abd, hip, knee] = q;
    let (lu, ll) = (model.upper_link, model.lower_link);
    let (_, pz) = sagittal(model, hip, knee);
    let (s, c) = abd.sin_cos();
    let dpx_dh = lu * hip.cos() + ll * (hip + knee).cos();
    let dpz_dh = lu * hip.sin() + ll * (hip + knee).sin();
    let dpx_dk = ll * (hip + knee).cos();
    let dpz_dk = ll * (hip + knee).sin();
    Matrix3::new(
        0.0, dpx_dh, dpx_dk,
        -c * pz, -s * dpz_dh, -s * dpz_dk,
        -s * pz, c * dpz_dh, c * dpz_dk,
    )
}

/// Damped least-squares joint velocity: solves `(JᵀJ + μI) dq = Jᵀe`.
///
/// With `μ = 0` and a rank-deficient Jacobian the minimum-norm pseudo-inverse
/// solution is returned instead.
pub fn ik_velocity(model: &RobotModel, leg: usize, q: [f64; 3], e: &Vector3<f64>, regularization: f64) -> [f64; 3] {
    let j = leg_jacobian(model, leg, q);
    let jt = j.transpose();
    let normal = jt * j + Matrix3::identity() * regularization;
    let rhs = jt * e;
    let dq = match normal.cholesky() {
        Some(ch) if regularization > 0.0 || j.determinant().abs() > 1e-12 => ch.solve(&rhs),
        _ => j.svd(true, true).solve(e, 1e-12).unwrap_or_else(|_| Vector3::zeros()),
    };
    [dq.x, dq.y, dq.z]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub q: [f64; 3],
    pub converged: bool,
    pub iterations: usize,
    /// Final foot position error norm, meters.
    pub error: f64,
}

/// Iterative DLS: `q ← clamp(q + λ·dq)` until `‖x_des − FK(q)‖ < tolerance`
/// or `max_iterations` updates have been applied.
pub fn ik_dls(model: &RobotModel, leg: usize, x_des: &Vector3<f64>, q_init: [f64; 3], params: &IkParams) -> IkSolution {
    solve(model, leg, x_des, q_init, params, |_| {})
}

/// Same as [`ik_dls`], also returning the error norm before every update.
pub fn ik_dls_traced(
    model: &RobotModel,
    leg: usize,
    x_des: &Vector3<f64>,
    q_init: [f64; 3],
    params: &IkParams,
) -> (IkSolution, Vec<f64>) {
    let mut trace = Vec::new();
    let sol = solve(model, leg, x_des, q_init, params, |e| trace.push(e));
    (sol, trace)
}

fn solve(
    model: &RobotModel,
    leg: usize,
    x_des: &Vector3<f64>,
    q_init: [f64; 3],
    params: &IkParams,
    mut on_iter: impl FnMut(f64),
) -> IkSolution {
    let mut q = model.clamp_leg(leg, q_init);
    let mut iterations = 0;
    loop {
        let e = x_des - forward_kinematics_leg(model, leg, q);
        let err = e.norm();
        on_iter(err);
        if err < params.tolerance {
            return IkSolution { q, converged: true, iterations, error: err };
        }
        if iterations >= params.max_iterations {
            return IkSolution { q, converged: false, iterations, error: err };
        }
        let dq = ik_velocity(model, leg, q, &e, params.regularization);
        q = model.clamp_leg(
            leg,
            [q[0] + params.lambda * dq[0], q[1] + params.lambda * dq[1], q[2] + params.lambda * dq[2]],
        );
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_q(model: &RobotModel, leg: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let lim = model.leg_limits(leg);
        [rng.gen_range(lim[0][0]..lim[0][1]), rng.gen_range(lim[1][0]..lim[1][1]), rng.gen_range(lim[2][0]..lim[2][1])]
    }

    #[test]
    fn fk_examples() {
        let m = RobotModel::default();
        for leg in 0..LEG_COUNT {
            let h = m.hip(leg);
            assert_relative_eq!(forward_kinematics_leg(&m, leg, [0.0, 0.0, 0.0]), h + Vector3::new(0.0, 0.0, -0.4), epsilon = 1e-12);
            assert_relative_eq!(forward_kinematics_leg(&m, leg, [0.0, 0.0, FRAC_PI_2]), h + Vector3::new(0.2, 0.0, -0.2), epsilon = 1e-12);
            assert_relative_eq!(forward_kinematics_leg(&m, leg, [FRAC_PI_2, 0.0, 0.0]), h + Vector3::new(0.0, 0.4, 0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn fk_is_bit_deterministic() {
        let m = RobotModel::default();
        let q = [0.123, -0.456, 1.789];
        assert_eq!(forward_kinematics_leg(&m, 2, q), forward_kinematics_leg(&m, 2, q));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for trial in 0..100 {
            let leg = trial % LEG_COUNT;
            let q = random_q(&m, leg, &mut rng);
            let j = leg_jacobian(&m, leg, q);
            for col in 0..3 {
                let mut qp = q;
                let mut qm = q;
                qp[col] += h;
                qm[col] -= h;
                let fd = (forward_kinematics_leg(&m, leg, qp) - forward_kinematics_leg(&m, leg, qm)) / (2.0 * h);
                for row in 0..3 {
                    assert!((j[(row, col)] - fd[row]).abs() < 1e-6, "trial {trial} J[{row},{col}]");
                }
            }
        }
    }

    #[test]
    fn straight_leg_is_singular() {
        let m = RobotModel::default();
        let j = leg_jacobian(&m, 0, [0.0, 0.0, 0.0]);
        assert!(j.determinant().abs() < 1e-12);
        // abduction column has no component along the sagittal x direction
        assert_eq!(j[(0, 0)], 0.0);
        assert!(j.column(0).dot(&Vector3::x()).abs() < 1e-15);
    }

    #[test]
    fn ik_velocity_zero_error() {
        let m = RobotModel::default();
        assert_eq!(ik_velocity(&m, 1, [0.1, -0.5, 1.2], &Vector3::zeros(), 1e-6), [0.0; 3]);
    }

    #[test]
    fn ik_velocity_undamped_residual() {
        let m = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let leg = rng.gen_range(0..LEG_COUNT);
            let q = random_q(&m, leg, &mut rng);
            let j = leg_jacobian(&m, leg, q);
            if j.determinant().abs() < 1e-4 {
                continue;
            }
            let e = Vector3::new(rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01));
            let dq = ik_velocity(&m, leg, q, &e, 0.0);
            let r = j * Vector3::from(dq) - e;
            assert!(r.norm() < 1e-9, "residual {}", r.norm());
        }
    }

    #[test]
    fn ik_velocity_damping_bound_at_singularity() {
        let m = RobotModel::default();
        let q = [0.0, 0.0, 0.0];
        let j = leg_jacobian(&m, 0, q);
        let e = Vector3::new(0.0, 0.0, -0.05);
        for mu in [1e-6, 1e-3, 1e-1] {
            let dq = Vector3::from(ik_velocity(&m, 0, q, &e, mu));
            assert!(dq.norm() <= e.norm() * j.norm() / mu + 1e-12);
        }
    }

    #[test]
    fn ik_fixed_point() {
        let m = RobotModel::default();
        let q0 = [0.1, -0.6, 1.3];
        let x = forward_kinematics_leg(&m, 3, q0);
        let sol = ik_dls(&m, 3, &x, q0, &IkParams::default());
        assert!(sol.converged && sol.iterations <= 1);
        assert_eq!(sol.q, q0);
    }

    #[test]
    fn ik_unreachable_target() {
        let m = RobotModel::default();
        let params = IkParams::default();
        let hip = m.hip(0);
        let x = hip + Vector3::new(0.1, 0.05, -0.6);
        let dist = (x - hip).norm();
        let sol = ik_dls(&m, 0, &x, [0.0, -0.7, 1.4], &params);
        assert!(!sol.converged);
        assert_eq!(sol.iterations, params.max_iterations);
        assert!(sol.error >= dist - m.reach() - params.tolerance);
    }

    #[test]
    fn ik_output_within_limits() {
        let m = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let leg = rng.gen_range(0..LEG_COUNT);
            let x = m.hip(leg) + Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.1));
            let sol = ik_dls(&m, leg, &x, [0.0, -0.7, 1.4], &IkParams::default());
            for (v, [lo, hi]) in sol.q.iter().zip(m.leg_limits(leg)) {
                assert!(*v >= lo && *v <= hi);
            }
        }
    }

    #[test]
    fn ik_error_is_non_increasing_on_most_trials() {
        let m = RobotModel::default();
        let params = IkParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut failures = 0;
        let stand = m.standing_pose();
        let mut n = 0;
        while n < 1000 {
            let leg = rng.gen_range(0..LEG_COUNT);
            // operating workspace: foot at least 0.1 m below the hip
            let target = forward_kinematics_leg(&m, leg, random_q(&m, leg, &mut rng));
            if target.z > m.hip(leg).z - 0.1 {
                continue;
            }
            n += 1;
            let seed = [stand[3 * leg], stand[3 * leg + 1], stand[3 * leg + 2]];
            let (_, trace) = ik_dls_traced(&m, leg, &target, seed, &params);
            if trace.windows(2).any(|w| w[1] > w[0] + 1e-12) {
                failures += 1;
            }
        }
        eprintln!("ik monotonicity violations: {failures}/1000");
        assert!(failures <= 10, "{failures} trials with increasing error");
    }

    #[test]
    fn standing_pose_places_feet_nominally() {
        let m = RobotModel::default();
        let q = m.standing_pose();
        for leg in 0..LEG_COUNT {
            let foot = forward_kinematics_leg(&m, leg, [q[3 * leg], q[3 * leg + 1], q[3 * leg + 2]]);
            assert!((foot - m.nominal_foot(leg)).norm() < 1e-4);
        }
    }

    #[test]
    fn model_config_round_trip_and_validation() {
        let m = RobotModel::default();
        let text = serde_json::to_string_pretty(&m).unwrap();
        assert_eq!(RobotModel::from_json(&text).unwrap(), m);
        assert_eq!(RobotModel::from_json("").unwrap(), m);
        assert!(RobotModel::from_json(r#"{"upper_link": -1.0}"#).is_err());
        assert!(RobotModel::from_json(r#"{"nonsense": 1}"#).is_err());
    }
}
