//! Global planning: terrain to feasibility map, grid search, spline, and the
//! look-ahead schedule that feeds the local planner segment by segment.

pub mod astar;
pub mod fss;
pub mod hull;
pub mod spline;
pub mod stitch;

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use astar::{astar, GridPath, SearchError};
pub use fss::{
    build_feasibility_map, detect_violations, group_and_hull, probe_microtrajectories, ConvexRegion, FeasibilityMap,
    FssConfig, FssResult, ProbeReport,
};
pub use hull::Hull;
pub use spline::{fit_spline, GlobalPath};
pub use stitch::{replan_trigger, seam_discrepancy, stitch, stitch_in_place, ReplanDecision, StitchError, SEAM_TOLERANCE};

use crate::kinematics::RobotModel;
use crate::local_planner::{BodyState, FeasibilityOracle, PlanError};
use crate::terrain::{HeightMap, TerrainError};

#[derive(Debug, Error)]
pub enum GlobalPlanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("path must span at least two distinct cells")]
    DegeneratePath,
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Stitch(#[from] StitchError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchSchedule {
    /// Look-ahead distance along the path, meters.
    pub step_size: f64,
    /// Segments are never shortened below this when halving after an infeasible solve.
    pub min_step: f64,
    pub segment_id: usize,
    /// Arc length reached by the last goal; seeds the next projection.
    pub progress: f64,
}

impl Default for StitchSchedule {
    fn default() -> Self {
        Self { step_size: 0.3, min_step: 0.05, segment_id: 0, progress: 0.0 }
    }
}

impl StitchSchedule {
    pub fn new(step_size: f64) -> Result<Self, GlobalPlanError> {
        if !(step_size > 0.0) {
            return Err(GlobalPlanError::Config(format!("step size {step_size} must be positive")));
        }
        Ok(Self { step_size, ..Self::default() })
    }
}

/// Goal state `step` meters of arc length past `current`'s projection.
pub fn segment_goal(
    path: &GlobalPath,
    current: &BodyState,
    hint: f64,
    step: f64,
    map: &HeightMap,
    model: &RobotModel,
) -> Result<(f64, BodyState), GlobalPlanError> {
    let here = Point2::new(current.position.x, current.position.y);
    let s = path.project(&here, hint, 0.5, 1.0);
    let s_goal = (s + step).min(path.length);
    let p = path.point_at(s_goal);
    let z = map.height_at(p.x, p.y)? + model.standing_height;
    Ok((s_goal, BodyState::at_rest(Vector3::new(p.x, p.y, z), path.heading_at(s_goal))))
}

/// Start and goal for the next segment. The start is `current` unchanged;
/// callers pass a full-contact state.
pub fn next_segment_goal(
    path: &GlobalPath,
    current: &BodyState,
    schedule: &StitchSchedule,
    map: &HeightMap,
    model: &RobotModel,
) -> Result<(BodyState, BodyState), GlobalPlanError> {
    let (_, goal) = segment_goal(path, current, schedule.progress, schedule.step_size, map, model)?;
    Ok((*current, goal))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPlan {
    pub fss: FssResult,
    pub cells: GridPath,
    pub path: GlobalPath,
}

/// Feasibility map, A* and spline between two world positions.
pub fn plan_global(
    map: &HeightMap,
    start: (f64, f64),
    goal: (f64, f64),
    config: &FssConfig,
    oracle: &dyn FeasibilityOracle,
    model: &RobotModel,
) -> Result<GlobalPlan, GlobalPlanError> {
    let fss = build_feasibility_map(map, config, oracle, model)?;
    let s = map.world_to_cell(start.0, start.1)?;
    let g = map.world_to_cell(goal.0, goal.1)?;
    let cells = astar(&fss.map, s, g)?;
    let mut knots_path = cells.cells.clone();
    if knots_path.len() == 1 {
        return Err(GlobalPlanError::DegeneratePath);
    }
    knots_path.dedup();
    let path = fit_spline(&knots_path, map)?;
    Ok(GlobalPlan { fss, cells, path })
}
