//! Feasibility-map construction: find cells whose neighborhood height jump
//! exceeds a threshold, group them, and label each grouped cell (plus a
//! dilation ring) by probing the local planner with a short crossing move.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{Matrix3, Point2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::hull::Hull;
use super::GlobalPlanError;
use crate::kinematics::RobotModel;
use crate::local_planner::{BodyState, FeasibilityOracle, Verdict};
use crate::parallel::{par_map, Parallelism};
use crate::terrain::{CellIndex, HeightMap};

/// Probes must stay micro-trajectories.
pub const MAX_PROBE_LENGTH: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityMap {
    n_rows: usize,
    n_cols: usize,
    cells: Vec<bool>,
}

impl FeasibilityMap {
    pub fn all_true(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, cells: vec![true; n_rows * n_cols] }
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, f: impl Fn(CellIndex) -> bool) -> Self {
        let cells = (0..n_rows).flat_map(|r| (0..n_cols).map(move |c| CellIndex::new(r, c))).map(f).collect();
        Self { n_rows, n_cols, cells }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn contains_cell(&self, cell: CellIndex) -> bool {
        cell.row < self.n_rows && cell.col < self.n_cols
    }

    /// Out-of-grid cells are never feasible.
    pub fn is_feasible(&self, cell: CellIndex) -> bool {
        self.contains_cell(cell) && self.cells[cell.row * self.n_cols + cell.col]
    }

    pub fn set(&mut self, cell: CellIndex, feasible: bool) {
        assert!(self.contains_cell(cell), "cell {cell:?} outside feasibility map");
        self.cells[cell.row * self.n_cols + cell.col] = feasible;
    }

    pub fn count_feasible(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexRegion {
    pub hull: Hull,
    pub cells: Vec<CellIndex>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FssConfig {
    /// Height-deviation threshold, meters.
    pub threshold: f64,
    pub probe_length: f64,
    /// Width of the probed ring around each region, in cells.
    pub dilation: usize,
    /// Cells this close to the map edge are marked infeasible.
    pub border_clearance: usize,
    pub parallelism: Parallelism,
}

impl Default for FssConfig {
    fn default() -> Self {
        Self { threshold: 0.1, probe_length: 0.15, dilation: 1, border_clearance: 0, parallelism: Parallelism::Parallel }
    }
}

impl FssConfig {
    /// Ring and border widths large enough that a probe centered outside the
    /// ring never reaches a flagged cell with the body.
    pub fn for_footprint(model: &RobotModel, resolution: f64) -> Self {
        let base = Self::default();
        let half_length = model.hip_offsets.iter().map(|h| h[0].abs()).fold(0.0, f64::max);
        let half_width = model.hip_offsets.iter().map(|h| h[1].abs()).fold(0.0, f64::max);
        let dilation = ((half_length + base.probe_length / 2.0 + 0.05) / resolution).ceil() as usize;
        let border = ((half_length.max(half_width) + 0.05) / resolution).ceil() as usize;
        Self { dilation, border_clearance: border, ..base }
    }

    pub fn validate(&self) -> Result<(), GlobalPlanError> {
        if !(self.threshold > 0.0) {
            return Err(GlobalPlanError::Config(format!("threshold {} must be positive", self.threshold)));
        }
        if !(self.probe_length > 0.0 && self.probe_length < MAX_PROBE_LENGTH) {
            return Err(GlobalPlanError::Config(format!(
                "probe length {} must lie in (0, {MAX_PROBE_LENGTH})",
                self.probe_length
            )));
        }
        Ok(())
    }
}

/// Cells whose 8-neighborhood height deviation exceeds `threshold`.
pub fn detect_violations(map: &HeightMap, threshold: f64) -> BTreeSet<CellIndex> {
    map.cells().filter(|&c| map.height_deviation(c) > threshold).collect()
}

fn neighbors8(cell: CellIndex) -> impl Iterator<Item = (isize, isize)> {
    let (r, c) = (cell.row as isize, cell.col as isize);
    (-1..=1).flat_map(move |dr| (-1..=1).map(move |dc| (dr, dc))).filter(|&d| d != (0, 0)).map(move |(dr, dc)| (r + dr, c + dc))
}

/// 8-connected components, each sorted, ordered by their smallest cell.
pub fn connected_components(cells: &BTreeSet<CellIndex>) -> Vec<Vec<CellIndex>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &seed in cells {
        if !seen.insert(seed) {
            continue;
        }
        let mut comp = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(c) = queue.pop_front() {
            for (r, col) in neighbors8(c) {
                if r < 0 || col < 0 {
                    continue;
                }
                let n = CellIndex::new(r as usize, col as usize);
                if cells.contains(&n) && seen.insert(n) {
                    comp.push(n);
                    queue.push_back(n);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out
}

fn center(map: &HeightMap, cell: CellIndex) -> Point2<f64> {
    let (x, y) = map.cell_center(cell);
    Point2::new(x, y)
}

pub fn group_and_hull(cells: &BTreeSet<CellIndex>, map: &HeightMap) -> Vec<ConvexRegion> {
    connected_components(cells)
        .into_iter()
        .map(|comp| {
            let pts: Vec<_> = comp.iter().map(|&c| center(map, c)).collect();
            ConvexRegion { hull: Hull::from_points(&pts), cells: comp }
        })
        .collect()
}

/// Region cells plus every in-grid cell within Chebyshev distance `dilation`.
pub fn probe_cells(region: &ConvexRegion, map: &HeightMap, dilation: usize) -> BTreeSet<CellIndex> {
    let d = dilation as isize;
    let mut out = BTreeSet::new();
    for c in &region.cells {
        for dr in -d..=d {
            for dc in -d..=d {
                let (r, col) = (c.row as isize + dr, c.col as isize + dc);
                if r >= 0 && col >= 0 && (r as usize) < map.n_rows() && (col as usize) < map.n_cols() {
                    out.insert(CellIndex::new(r as usize, col as usize));
                }
            }
        }
    }
    out
}

/// Uphill direction of a least-squares plane fitted over the cells within
/// `radius` of `cell`; +x when the window is flat.
pub fn crossing_direction(map: &HeightMap, cell: CellIndex, radius: usize) -> Vector2<f64> {
    let r = radius as isize;
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for dr in -r..=r {
        for dc in -r..=r {
            let (row, col) = (cell.row as isize + dr, cell.col as isize + dc);
            if row < 0 || col < 0 || row as usize >= map.n_rows() || col as usize >= map.n_cols() {
                continue;
            }
            let h = map.cell_height(CellIndex::new(row as usize, col as usize));
            // local coordinates keep the fit well conditioned
            let a = Vector3::new(dc as f64, dr as f64, 1.0);
            ata += a * a.transpose();
            atb += a * h;
        }
    }
    let grad = ata.lu().solve(&atb).map(|s| Vector2::new(s.x, s.y)).unwrap_or_else(Vector2::zeros);
    if grad.norm() < 1e-9 {
        Vector2::x()
    } else {
        grad.normalize()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    #[serde(with = "labels_as_pairs")]
    pub labels: BTreeMap<CellIndex, bool>,
    /// Cells whose probe failed outright, with the error text.
    pub failures: Vec<(CellIndex, String)>,
}

/// JSON object keys must be strings, so labels travel as `[cell, bool]` pairs.
mod labels_as_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::terrain::CellIndex;

    pub fn serialize<S: Serializer>(labels: &BTreeMap<CellIndex, bool>, s: S) -> Result<S::Ok, S::Error> {
        labels.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<CellIndex, bool>, D::Error> {
        Ok(Vec::<(CellIndex, bool)>::deserialize(d)?.into_iter().collect())
    }
}

fn probe_one(
    map: &HeightMap,
    oracle: &dyn FeasibilityOracle,
    cell: CellIndex,
    probe_length: f64,
    window: usize,
    standing_height: f64,
) -> (bool, Option<String>) {
    let c = center(map, cell);
    let d = crossing_direction(map, cell, window);
    let yaw = d.y.atan2(d.x);
    let half = d * (probe_length / 2.0);
    let state = |p: Vector2<f64>| {
        let z = map.height_at(p.x, p.y).unwrap_or(0.0) + standing_height;
        BodyState::at_rest(Vector3::new(p.x, p.y, z), yaw)
    };
    let start = state(c.coords - half);
    let goal = state(c.coords + half);
    match oracle.evaluate(&start, &goal, map) {
        Ok(Verdict::Feasible) => (true, None),
        Ok(Verdict::Infeasible(_)) => (false, None),
        Err(e) => (false, Some(e.to_string())),
    }
}

fn probe_set(
    cells: &BTreeSet<CellIndex>,
    map: &HeightMap,
    oracle: &dyn FeasibilityOracle,
    config: &FssConfig,
    standing_height: f64,
) -> ProbeReport {
    let list: Vec<CellIndex> = cells.iter().copied().collect();
    let window = config.dilation + 1;
    let results =
        par_map(config.parallelism, &list, |&c| probe_one(map, oracle, c, config.probe_length, window, standing_height));
    let mut report = ProbeReport::default();
    for (cell, (ok, failure)) in list.into_iter().zip(results) {
        report.labels.insert(cell, ok);
        if let Some(msg) = failure {
            report.failures.push((cell, msg));
        }
    }
    report
}

/// Labels the region's cells and its dilation ring by probing `oracle`.
///
/// # Panics
/// If `config.probe_length` is not below [`MAX_PROBE_LENGTH`].
pub fn probe_microtrajectories(
    region: &ConvexRegion,
    map: &HeightMap,
    oracle: &dyn FeasibilityOracle,
    config: &FssConfig,
    model: &RobotModel,
) -> ProbeReport {
    assert!(config.probe_length < MAX_PROBE_LENGTH, "probe length {} is not a micro-trajectory", config.probe_length);
    probe_set(&probe_cells(region, map, config.dilation), map, oracle, config, model.standing_height)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FssResult {
    pub map: FeasibilityMap,
    pub regions: Vec<ConvexRegion>,
    pub probes: ProbeReport,
}

pub fn build_feasibility_map(
    map: &HeightMap,
    config: &FssConfig,
    oracle: &dyn FeasibilityOracle,
    model: &RobotModel,
) -> Result<FssResult, GlobalPlanError> {
    config.validate()?;
    let regions = group_and_hull(&detect_violations(map, config.threshold), map);
    let mut cells = BTreeSet::new();
    for region in &regions {
        cells.extend(probe_cells(region, map, config.dilation));
    }
    let probes = probe_set(&cells, map, oracle, config, model.standing_height);
    let b = config.border_clearance;
    let mut fmap = FeasibilityMap::from_fn(map.n_rows(), map.n_cols(), |c| {
        c.row >= b && c.col >= b && c.row + b < map.n_rows() && c.col + b < map.n_cols()
    });
    for (&cell, &ok) in &probes.labels {
        if !ok {
            fmap.set(cell, false);
        }
    }
    Ok(FssResult { map: fmap, regions, probes })
}
