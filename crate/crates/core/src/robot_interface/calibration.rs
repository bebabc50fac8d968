//! Simulated incremental encoders with index pulses, and the soft
//! calibration sweep that recovers each joint's reference zero after power-on.
//!
//! Joint angles are measured from an arbitrary mechanical datum. Hard
//! calibration placed each reference zero on an index pulse, so pulses sit at
//! `true_zero + k·spacing`. The encoder reads zero at power-on; a pulse at
//! joint angle `φ` therefore appears at reading `φ − power_on`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{joint_name, JOINT_COUNT};

/// Index-pulse spacing in joint space: one motor turn through a 9:1 reduction.
pub const PULSE_SPACING: f64 = 2.0 * PI / 9.0;
/// Half-width of the acceptance window around the power-on reading.
pub const CAPTURE_WINDOW: f64 = PI / 9.0;
/// 4096-line quadrature encoder on the motor side.
pub const DEFAULT_COUNTS_PER_RADIAN: f64 = 16384.0 * 9.0 / (2.0 * PI);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("joint {joint}: index pulse not found within {max_time} s")]
    Timeout { joint: String, max_time: f64 },
    #[error("invalid calibration input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub spacing: f64,
    /// Hidden: datum angle of each reference zero.
    pub true_zero: [f64; JOINT_COUNT],
    pub power_on: [f64; JOINT_COUNT],
    pub counts_per_radian: f64,
}

impl EncoderModel {
    pub fn new(true_zero: [f64; JOINT_COUNT], power_on: [f64; JOINT_COUNT]) -> Result<Self, CalibrationError> {
        if !true_zero.iter().chain(power_on.iter()).all(|v| v.is_finite()) {
            return Err(CalibrationError::Invalid("encoder angles must be finite".into()));
        }
        Ok(Self { spacing: PULSE_SPACING, true_zero, power_on, counts_per_radian: DEFAULT_COUNTS_PER_RADIAN })
    }

    /// Random hidden zeros with the given power-on offsets from them.
    pub fn with_offsets(seed: u64, offsets: [f64; JOINT_COUNT]) -> Result<Self, CalibrationError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let true_zero: [f64; JOINT_COUNT] = std::array::from_fn(|_| rng.gen_range(-PI..PI));
        let power_on = std::array::from_fn(|j| true_zero[j] + offsets[j]);
        Self::new(true_zero, power_on)
    }

    /// Random hidden zeros and power-on offsets uniform in `(-max_offset, max_offset)`.
    pub fn random(seed: u64, max_offset: f64) -> Result<Self, CalibrationError> {
        if !(max_offset > 0.0) {
            return Err(CalibrationError::Invalid(format!("max offset {max_offset} must be positive")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let offsets = std::array::from_fn(|_| {
            let v: f64 = rng.gen_range(-max_offset..max_offset);
            if v == -max_offset { 0.0 } else { v }
        });
        Self::with_offsets(seed, offsets)
    }

    pub fn resolution(&self) -> f64 {
        1.0 / self.counts_per_radian
    }

    fn quantize(&self, reading: f64) -> f64 {
        (reading * self.counts_per_radian).round() / self.counts_per_radian
    }

    /// Reading at which the joint's reference zero lies. Simulation oracle only.
    pub fn true_zero_reading(&self, joint: usize) -> f64 {
        self.true_zero[joint] - self.power_on[joint]
    }

    /// Pulse readings passed when moving between readings `a` and `b`, in
    /// order of travel.
    fn pulses_crossed(&self, joint: usize, a: f64, b: f64) -> Vec<f64> {
        if a == b {
            return Vec::new();
        }
        let phase = self.true_zero_reading(joint);
        let (lo, hi) = (a.min(b), a.max(b));
        let k_lo = ((lo - phase) / self.spacing).ceil() as i64;
        let k_hi = ((hi - phase) / self.spacing).floor() as i64;
        let mut out: Vec<f64> = (k_lo..=k_hi).map(|k| phase + k as f64 * self.spacing).collect();
        if b < a {
            out.reverse();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    /// `A` in the sweep law.
    pub amplitude: f64,
    pub max_time: f64,
    pub dt: f64,
    /// Substituted for `|q|` when the power-on reading is smaller; the law
    /// is identically zero at `q = 0`.
    pub min_seed: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        // Peak excursion 9·0.01·2·2.5 = 0.45 rad covers the ±π/9 window.
        Self { amplitude: 2.5, max_time: 5.0, dt: 0.001, min_seed: 0.01 }
    }
}

/// `9·q·(A − A·cos 2πt)·sign`.
pub fn sweep_reference(q: f64, amplitude: f64, t: f64, sign: f64) -> f64 {
    9.0 * q * (amplitude - amplitude * (2.0 * PI * t).cos()) * sign
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationStatus {
    Ok,
    Misaligned(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Reading at which the accepted index pulse was latched.
    pub found_index: [f64; JOINT_COUNT],
    /// Cumulative manual pulse offsets.
    pub offsets: [i32; JOINT_COUNT],
    pub status: CalibrationStatus,
    /// Simulated time at which each joint latched its pulse.
    pub latch_time: [f64; JOINT_COUNT],
    pub spacing: f64,
    pub resolution: f64,
    /// Hidden reference zeros in reading coordinates; used only to judge status.
    pub oracle_zero: [f64; JOINT_COUNT],
}

impl CalibrationResult {
    /// Calibrated zero reading: the latched pulse shifted by the manual offset.
    pub fn zero(&self, joint: usize) -> f64 {
        self.found_index[joint] + self.offsets[joint] as f64 * self.spacing
    }

    pub fn zero_error(&self, joint: usize) -> f64 {
        self.zero(joint) - self.oracle_zero[joint]
    }

    /// Error expressed in whole pulse spacings.
    pub fn pulse_error(&self, joint: usize) -> i32 {
        (self.zero_error(joint) / self.spacing).round() as i32
    }

    fn recompute_status(&mut self) {
        let bad: Vec<usize> = (0..JOINT_COUNT).filter(|&j| self.zero_error(j).abs() >= self.resolution).collect();
        self.status = if bad.is_empty() { CalibrationStatus::Ok } else { CalibrationStatus::Misaligned(bad) };
    }

    pub fn is_ok(&self) -> bool {
        self.status == CalibrationStatus::Ok
    }
}

/// Sweeps every joint about its power-on reading, alternating direction each
/// 1 s period, and latches the first index pulse inside the ±π/9 window.
pub fn soft_calibrate(encoders: &EncoderModel, params: &SweepParams) -> Result<CalibrationResult, CalibrationError> {
    if !(params.dt > 0.0 && params.max_time > 0.0 && params.min_seed > 0.0) {
        return Err(CalibrationError::Invalid("sweep dt, max_time and min_seed must be positive".into()));
    }
    let steps = (params.max_time / params.dt).round() as usize;
    let mut found = [0.0; JOINT_COUNT];
    let mut latch = [0.0; JOINT_COUNT];
    for j in 0..JOINT_COUNT {
        // The reading is zero at power-on, so the seed always applies.
        let q = params.min_seed;
        let mut prev = 0.0;
        let mut hit = None;
        for i in 1..=steps {
            let t = i as f64 * params.dt;
            let sign = if (t - params.dt * 0.5).floor() as i64 % 2 == 0 { 1.0 } else { -1.0 };
            let cur = sweep_reference(q, params.amplitude, t, sign);
            hit = encoders
                .pulses_crossed(j, prev, cur)
                .into_iter()
                .find(|r| (-CAPTURE_WINDOW..CAPTURE_WINDOW).contains(r))
                .map(|r| (r, t));
            if hit.is_some() {
                break;
            }
            prev = cur;
        }
        let (r, t) = hit.ok_or_else(|| CalibrationError::Timeout { joint: joint_name(j), max_time: params.max_time })?;
        found[j] = encoders.quantize(r);
        latch[j] = t;
    }
    let mut result = CalibrationResult {
        found_index: found,
        offsets: [0; JOINT_COUNT],
        status: CalibrationStatus::Ok,
        latch_time: latch,
        spacing: encoders.spacing,
        resolution: encoders.resolution(),
        oracle_zero: std::array::from_fn(|j| encoders.true_zero_reading(j)),
    };
    result.recompute_status();
    Ok(result)
}

pub fn apply_index_offsets(result: &CalibrationResult, offsets: &[i32; JOINT_COUNT]) -> CalibrationResult {
    let mut out = result.clone();
    for (o, d) in out.offsets.iter_mut().zip(offsets) {
        *o += d;
    }
    out.recompute_status();
    out
}
