//! 2.5D height-map terrain.
//!
//! A [`HeightMap`] is a regular grid of cell-center heights. Cell `(row, col)`
//! sits at world `(origin.x + col * resolution, origin.y + row * resolution)`,
//! so columns run along +x and rows along +y. The map covers the squares around
//! each cell center, i.e. half a cell beyond the outermost centers.
//!
//! The text format is two header lines followed by one line per row:
//!
//! ```text
//! resolution 0.05
//! origin 0 -1.5
//! 0 0 0 0.1
//! 0 0 0.1 0.1
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerrainError {
    #[error("{msg} at line {line}")]
    Parse { line: usize, msg: String },
    #[error("point ({x}, {y}) is outside the map")]
    OutOfBounds { x: f64, y: f64 },
    #[error("cell ({row}, {col}) is outside the map")]
    CellOutOfBounds { row: usize, col: usize },
    #[error("invalid height map: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightMap {
    n_rows: usize,
    n_cols: usize,
    resolution: f64,
    origin: (f64, f64),
    heights: Vec<f64>,
}

impl HeightMap {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        resolution: f64,
        origin: (f64, f64),
        heights: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(TerrainError::Invalid("map must have at least one cell".into()));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(TerrainError::Invalid(format!("resolution must be positive, got {resolution}")));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(TerrainError::Invalid("origin must be finite".into()));
        }
        if heights.len() != n_rows * n_cols {
            return Err(TerrainError::Invalid(format!(
                "expected {} heights for a {n_rows}x{n_cols} grid, got {}",
                n_rows * n_cols,
                heights.len()
            )));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(TerrainError::Invalid(format!("height #{i} is not finite")));
        }
        Ok(Self { n_rows, n_cols, resolution, origin, heights })
    }

    /// All-zero map.
    pub fn flat(n_rows: usize, n_cols: usize, resolution: f64, origin: (f64, f64)) -> Result<Self, TerrainError> {
        Self::new(n_rows, n_cols, resolution, origin, vec![0.0; n_rows * n_cols])
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn contains_cell(&self, cell: CellIndex) -> bool {
        cell.row < self.n_rows && cell.col < self.n_cols
    }

    /// Height stored at a cell. Panics on an out-of-range cell.
    pub fn cell_height(&self, cell: CellIndex) -> f64 {
        assert!(self.contains_cell(cell), "cell {cell} outside {}x{} map", self.n_rows, self.n_cols);
        self.heights[cell.row * self.n_cols + cell.col]
    }

    pub fn set_cell_height(&mut self, cell: CellIndex, h: f64) {
        assert!(self.contains_cell(cell) && h.is_finite());
        self.heights[cell.row * self.n_cols + cell.col] = h;
    }

    /// World-frame extent `(x_min, x_max, y_min, y_max)`, including the half
    /// cell around the outermost centers.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let half = 0.5 * self.resolution;
        let (x0, y0) = self.origin;
        (
            x0 - half,
            x0 + (self.n_cols as f64 - 0.5) * self.resolution,
            y0 - half,
            y0 + (self.n_rows as f64 - 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x_min, x_max, y_min, y_max) = self.extent();
        x >= x_min && x <= x_max && y >= y_min && y <= y_max
    }

    /// Nearest cell center.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Result<CellIndex, TerrainError> {
        if !self.contains(x, y) {
            return Err(TerrainError::OutOfBounds { x, y });
        }
        let col = ((x - self.origin.0) / self.resolution).round().max(0.0) as usize;
        let row = ((y - self.origin.1) / self.resolution).round().max(0.0) as usize;
        Ok(CellIndex::new(row.min(self.n_rows - 1), col.min(self.n_cols - 1)))
    }

    pub fn cell_to_world(&self, cell: CellIndex) -> Result<(f64, f64), TerrainError> {
        if !self.contains_cell(cell) {
            return Err(TerrainError::CellOutOfBounds { row: cell.row, col: cell.col });
        }
        Ok(self.cell_center(cell))
    }

    pub(crate) fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        (
            self.origin.0 + cell.col as f64 * self.resolution,
            self.origin.1 + cell.row as f64 * self.resolution,
        )
    }

    /// Bilinear interpolation between the four surrounding cell centers.
    /// Within the outer half cell the edge value is held.
    pub fn height_at(&self, x: f64, y: f64) -> Result<f64, TerrainError> {
        if !(x.is_finite() && y.is_finite()) || !self.contains(x, y) {
            return Err(TerrainError::OutOfBounds { x, y });
        }
        let fx = ((x - self.origin.0) / self.resolution).clamp(0.0, (self.n_cols - 1) as f64);
        let fy = ((y - self.origin.1) / self.resolution).clamp(0.0, (self.n_rows - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.n_cols.saturating_sub(2));
        let r0 = (fy.floor() as usize).min(self.n_rows.saturating_sub(2));
        let c1 = (c0 + 1).min(self.n_cols - 1);
        let r1 = (r0 + 1).min(self.n_rows - 1);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let h = |r: usize, c: usize| self.heights[r * self.n_cols + c];
        let bottom = h(r0, c0) * (1.0 - tx) + h(r0, c1) * tx;
        let top = h(r1, c0) * (1.0 - tx) + h(r1, c1) * tx;
        Ok(bottom * (1.0 - ty) + top * ty)
    }

    pub fn neighbors8(&self, cell: CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
        let (r, c) = (cell.row as isize, cell.col as isize);
        (-1isize..=1)
            .flat_map(move |dr| (-1isize..=1).map(move |dc| (dr, dc)))
            .filter(|&(dr, dc)| dr != 0 || dc != 0)
            .filter_map(move |(dr, dc)| {
                let (nr, nc) = (r + dr, c + dc);
                (nr >= 0 && nc >= 0 && (nr as usize) < self.n_rows && (nc as usize) < self.n_cols)
                    .then(|| CellIndex::new(nr as usize, nc as usize))
            })
    }

    /// Largest absolute height step to any of the (up to 8) neighbors.
    pub fn height_deviation(&self, cell: CellIndex) -> f64 {
        let h = self.cell_height(cell);
        self.neighbors8(cell)
            .map(|n| (h - self.cell_height(n)).abs())
            .fold(0.0, f64::max)
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (0..self.n_rows).flat_map(move |r| (0..self.n_cols).map(move |c| CellIndex::new(r, c)))
    }
}

pub fn parse_heightmap(text: &str) -> Result<HeightMap, TerrainError> {
    let mut resolution: Option<f64> = None;
    let mut origin: Option<(f64, f64)> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut first_body_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let first = tokens.next().unwrap_or_default();
        let err = |msg: String| TerrainError::Parse { line: line_no, msg };
        match first {
            "resolution" => {
                if !rows.is_empty() {
                    return Err(err("header after grid rows".into()));
                }
                let v = parse_number(tokens.next(), line_no, "resolution value")?;
                if tokens.next().is_some() {
                    return Err(err("trailing tokens after resolution".into()));
                }
                if !(v > 0.0) {
                    return Err(err(format!("resolution must be positive, got {v}")));
                }
                resolution = Some(v);
            }
            "origin" => {
                if !rows.is_empty() {
                    return Err(err("header after grid rows".into()));
                }
                let x = parse_number(tokens.next(), line_no, "origin x")?;
                let y = parse_number(tokens.next(), line_no, "origin y")?;
                if tokens.next().is_some() {
                    return Err(err("trailing tokens after origin".into()));
                }
                origin = Some((x, y));
            }
            _ => {
                if rows.is_empty() {
                    first_body_line = line_no;
                }
                let row = line
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| err(format!("non-numeric cell '{tok}'")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if let Some(prev) = rows.first() {
                    if prev.len() != row.len() {
                        return Err(err("ragged row".into()));
                    }
                }
                rows.push(row);
            }
        }
    }

    let header_line = if first_body_line == 0 { text.lines().count().max(1) } else { first_body_line };
    let resolution = resolution.ok_or(TerrainError::Parse {
        line: header_line,
        msg: "missing header 'resolution'".into(),
    })?;
    let origin = origin.ok_or(TerrainError::Parse { line: header_line, msg: "missing header 'origin'".into() })?;
    if rows.is_empty() {
        return Err(TerrainError::Parse { line: header_line, msg: "no grid rows".into() });
    }
    let n_rows = rows.len();
    let n_cols = rows[0].len();
    HeightMap::new(n_rows, n_cols, resolution, origin, rows.into_iter().flatten().collect())
}

fn parse_number(tok: Option<&str>, line: usize, what: &str) -> Result<f64, TerrainError> {
    let tok = tok.ok_or_else(|| TerrainError::Parse { line, msg: format!("missing {what}") })?;
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| TerrainError::Parse { line, msg: format!("invalid {what} '{tok}'") })
}

/// Writes the map in the text format. Numbers use the shortest representation
/// that parses back to the same `f64`.
pub fn serialize_heightmap(map: &HeightMap) -> String {
    let mut out = String::with_capacity(map.len() * 4 + 64);
    out.push_str(&format!("resolution {}\n", map.resolution));
    out.push_str(&format!("origin {} {}\n", map.origin.0, map.origin.1));
    for row in map.heights.chunks(map.n_cols) {
        let line: Vec<String> = row.iter().map(|h| format!("{h}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Walking,
    Avoidance,
    Climbing,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Walking, Task::Avoidance, Task::Climbing];

    pub fn name(self) -> &'static str {
        match self {
            Task::Walking => "walking",
            Task::Avoidance => "avoidance",
            Task::Climbing => "climbing",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "walking" => Ok(Task::Walking),
            "avoidance" => Ok(Task::Avoidance),
            "climbing" => Ok(Task::Climbing),
            other => Err(format!("unknown task '{other}' (expected walking, avoidance or climbing)")),
        }
    }
}

/// Layout of the generated task environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEnvParams {
    pub cells: usize,
    pub resolution: f64,
    pub origin: (f64, f64),
    pub start: (f64, f64),
    pub goal: (f64, f64),
    pub wall_height: f64,
    pub plateau_height: f64,
}

impl Default for TaskEnvParams {
    fn default() -> Self {
        Self {
            cells: 61,
            resolution: 0.05,
            origin: (0.0, -1.5),
            start: (0.5, 0.0),
            goal: (2.5, 0.0),
            wall_height: 1.0,
            plateau_height: 0.06,
        }
    }
}

pub fn generate_task_env(task: Task, seed: u64) -> HeightMap {
    generate_task_env_with(task, seed, &TaskEnvParams::default())
}

/// Deterministic in `(task, seed, params)`.
///
/// Avoidance places two 2-cell-thick walls hanging from opposite map edges
/// whose free ends overlap in y, so the route has to weave between them.
/// Climbing lays one or two full-width plateaus across the route.
pub fn generate_task_env_with(task: Task, seed: u64, params: &TaskEnvParams) -> HeightMap {
    let n = params.cells;
    let mut map = HeightMap::flat(n, n, params.resolution, params.origin).expect("valid task-env params");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ task_salt(task));
    let col_at = |x: f64| ((x - params.origin.0) / params.resolution).round() as isize;
    let row_at = |y: f64| ((y - params.origin.1) / params.resolution).round() as isize;
    let clamp_idx = |i: isize| i.clamp(0, n as isize - 1) as usize;

    match task {
        Task::Walking => {}
        Task::Avoidance => {
            // first wall: from the -y edge up to y in [0.0, 0.3], x in [1.0, 1.1]
            let c1 = clamp_idx(col_at(1.0) + rng.gen_range(0..=2));
            let r1_end = clamp_idx(row_at(0.0) + rng.gen_range(0..=6));
            // second wall: from the +y edge down to y in [-0.3, 0.0], x in [1.85, 1.95]
            let c2 = clamp_idx(col_at(1.85) + rng.gen_range(0..=2));
            let r2_start = clamp_idx(row_at(-0.3) + rng.gen_range(0..=6));
            for row in 0..=r1_end {
                for col in c1..=(c1 + 1).min(n - 1) {
                    map.set_cell_height(CellIndex::new(row, col), params.wall_height);
                }
            }
            for row in r2_start..n {
                for col in c2..=(c2 + 1).min(n - 1) {
                    map.set_cell_height(CellIndex::new(row, col), params.wall_height);
                }
            }
        }
        Task::Climbing => {
            let count = rng.gen_range(1..=2);
            let last_col = clamp_idx(col_at(2.2));
            let mut start_col = clamp_idx(col_at(0.9) + rng.gen_range(0..=6));
            for _ in 0..count {
                let len = rng.gen_range(6..=12);
                let end_col = (start_col + len).min(last_col);
                if end_col <= start_col {
                    break;
                }
                for row in 0..n {
                    for col in start_col..end_col {
                        map.set_cell_height(CellIndex::new(row, col), params.plateau_height);
                    }
                }
                start_col = end_col + rng.gen_range(4..=8);
                if start_col >= last_col {
                    break;
                }
            }
        }
    }
    map
}

fn task_salt(task: Task) -> u64 {
    match task {
        Task::Walking => 0x57A1_4B00,
        Task::Avoidance => 0xA70D_0C30,
        Task::Climbing => 0xC11B_0001,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map_2x2(h: [f64; 4]) -> HeightMap {
        HeightMap::new(2, 2, 0.1, (0.0, 0.0), h.to_vec()).unwrap()
    }

    #[test]
    fn parses_zero_grid() {
        let m = parse_heightmap("resolution 0.1\norigin 0 0\n0 0\n0 0\n").unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (2, 2));
        assert_eq!(m.resolution(), 0.1);
        assert!(m.heights().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn ragged_row_names_line() {
        let err = parse_heightmap("resolution 0.1\norigin 0 0\n0 0\n0 0 0\n").unwrap_err();
        assert_eq!(err.to_string(), "ragged row at line 4");
    }

    #[test]
    fn non_numeric_and_missing_header() {
        let err = parse_heightmap("resolution 0.1\norigin 0 0\n0 x\n").unwrap_err();
        assert!(matches!(err, TerrainError::Parse { line: 3, .. }), "{err}");
        let err = parse_heightmap("origin 0 0\n0 0\n").unwrap_err();
        assert!(err.to_string().contains("resolution"), "{err}");
        let err = parse_heightmap("resolution 0.1\n0 0\n").unwrap_err();
        assert!(err.to_string().contains("origin"), "{err}");
    }

    #[test]
    fn serialize_single_cell() {
        let m = HeightMap::flat(1, 1, 0.1, (0.0, 0.0)).unwrap();
        assert_eq!(serialize_heightmap(&m), "resolution 0.1\norigin 0 0\n0\n");
    }

    #[test]
    fn serialize_row_major_position() {
        let text = serialize_heightmap(&map_2x2([0.0, 0.0, 0.0, 0.5]));
        let body: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(body, vec!["0 0", "0 0.5"]);
    }

    #[test]
    fn height_at_examples() {
        let flat = HeightMap::flat(4, 4, 0.1, (0.0, 0.0)).unwrap();
        assert_eq!(flat.height_at(0.13, 0.27).unwrap(), 0.0);

        let mut bump = HeightMap::flat(3, 3, 0.1, (0.0, 0.0)).unwrap();
        bump.set_cell_height(CellIndex::new(1, 1), 0.1);
        assert_eq!(bump.height_at(0.1, 0.1).unwrap(), 0.1);

        let ramp = HeightMap::new(1, 2, 0.1, (0.0, 0.0), vec![0.0, 0.2]).unwrap();
        assert!((ramp.height_at(0.05, 0.0).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn height_at_out_of_bounds_carries_point() {
        let m = HeightMap::flat(2, 2, 0.1, (0.0, 0.0)).unwrap();
        assert_eq!(m.height_at(0.5, 0.0), Err(TerrainError::OutOfBounds { x: 0.5, y: 0.0 }));
    }

    #[test]
    fn deviation_examples() {
        let flat = HeightMap::flat(3, 3, 0.1, (0.0, 0.0)).unwrap();
        assert!(flat.cells().all(|c| flat.height_deviation(c) == 0.0));

        let mut spike = flat.clone();
        spike.set_cell_height(CellIndex::new(1, 1), 1.0);
        assert_eq!(spike.height_deviation(CellIndex::new(1, 1)), 1.0);

        let corner = map_2x2([0.0, 0.3, 0.2, 0.7]);
        assert_eq!(corner.neighbors8(CellIndex::new(0, 0)).count(), 3);
        assert_eq!(corner.height_deviation(CellIndex::new(0, 0)), 0.7);
    }

    #[test]
    fn cell_world_conversions() {
        let m = HeightMap::flat(5, 5, 0.1, (0.0, 0.0)).unwrap();
        assert_eq!(m.world_to_cell(0.0, 0.0).unwrap(), CellIndex::new(0, 0));
        assert_eq!(m.cell_to_world(CellIndex::new(0, 0)).unwrap(), (0.0, 0.0));
        assert_eq!(m.world_to_cell(0.149, 0.0).unwrap(), CellIndex::new(0, 1));
        assert!(m.world_to_cell(-0.2, 0.0).is_err());
        assert!(m.cell_to_world(CellIndex::new(5, 0)).is_err());
    }

    #[test]
    fn walking_env_is_flat_and_envs_are_deterministic() {
        for seed in [0, 1, 99] {
            assert!(generate_task_env(Task::Walking, seed).heights().iter().all(|&h| h == 0.0));
        }
        assert_eq!(generate_task_env(Task::Avoidance, 7), generate_task_env(Task::Avoidance, 7));
        assert_eq!(generate_task_env(Task::Climbing, 3), generate_task_env(Task::Climbing, 3));
    }

    /// Flood-fill oracle, independent of the planner's grouping code.
    fn wall_components(map: &HeightMap, h: f64) -> usize {
        let mut seen = vec![false; map.len()];
        let mut count = 0;
        for cell in map.cells() {
            let i = cell.row * map.n_cols() + cell.col;
            if seen[i] || map.cell_height(cell) != h {
                continue;
            }
            count += 1;
            let mut stack = vec![cell];
            seen[i] = true;
            while let Some(c) = stack.pop() {
                for nb in map.neighbors8(c) {
                    let j = nb.row * map.n_cols() + nb.col;
                    if !seen[j] && map.cell_height(nb) == h {
                        seen[j] = true;
                        stack.push(nb);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn avoidance_has_two_walls() {
        let params = TaskEnvParams::default();
        for seed in [7, 0, 1, 2, 3, 42] {
            let map = generate_task_env(Task::Avoidance, seed);
            assert_eq!(wall_components(&map, params.wall_height), 2, "seed {seed}");
        }
    }

    #[test]
    fn climbing_plateaus_respect_step_height() {
        let params = TaskEnvParams::default();
        for seed in 0..20 {
            let map = generate_task_env(Task::Climbing, seed);
            let max = map.heights().iter().cloned().fold(0.0, f64::max);
            assert!(max > 0.0 && max <= params.plateau_height, "seed {seed}");
            assert_eq!(map.height_at(params.start.0, params.start.1).unwrap(), 0.0);
            assert_eq!(map.height_at(params.goal.0, params.goal.1).unwrap(), 0.0);
        }
    }

    fn arb_map() -> impl Strategy<Value = HeightMap> {
        (1usize..6, 1usize..6, 0.01f64..1.0, -5.0f64..5.0, -5.0f64..5.0).prop_flat_map(|(r, c, res, ox, oy)| {
            proptest::collection::vec(-2.0f64..2.0, r * c)
                .prop_map(move |h| HeightMap::new(r, c, res, (ox, oy), h).unwrap())
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(map in arb_map()) {
            let text = serialize_heightmap(&map);
            let back = parse_heightmap(&text).unwrap();
            prop_assert_eq!(&back, &map);
            prop_assert_eq!(serialize_heightmap(&back), text);
        }

        #[test]
        fn height_at_is_continuous(map in arb_map(), fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            let (x0, x1, y0, y1) = map.extent();
            let x = x0 + (x1 - x0) * fx;
            let y = y0 + (y1 - y0) * fy;
            let eps = 1e-7 * map.resolution();
            if map.contains(x + eps, y) {
                let a = map.height_at(x, y).unwrap();
                let b = map.height_at(x + eps, y).unwrap();
                // bilinear slope is bounded by 2 * max|h| / resolution
                prop_assert!((a - b).abs() <= 4.0 * 2.0 / map.resolution() * eps + 1e-12);
            }
        }

        #[test]
        fn deviation_is_symmetric(map in arb_map()) {
            for cell in map.cells() {
                for nb in map.neighbors8(cell) {
                    let step = (map.cell_height(cell) - map.cell_height(nb)).abs();
                    prop_assert!(map.height_deviation(cell) >= step);
                    prop_assert!(map.height_deviation(nb) >= step);
                }
            }
        }
    }
}
