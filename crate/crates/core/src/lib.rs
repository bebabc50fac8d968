//! Terrain-aware trajectory planning, control and simulation for a
//! 12-joint quadruped.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Joint and leg loops index several parallel arrays at once.
#![allow(clippy::needless_range_loop)]

pub mod controller;
pub mod global_planner;
pub mod kinematics;
pub mod local_planner;
pub mod metrics;
pub mod parallel;
pub mod robot_interface;
pub mod simulator;
pub mod terrain;
