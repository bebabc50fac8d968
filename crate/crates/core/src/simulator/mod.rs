//! Deterministic plant and the episode loop that drives the full stack.

pub mod episode;
pub mod plant;

pub use episode::{
    run_episode, run_episode_observed, EpisodeCounters, LogRecord, Outcome, PipelineConfig, Pose, RunLog, Scenario, SeamRecord, SegmentAudit,
};
pub use plant::{packet_torques, step, step_in_place, SimConfig, SimState};
