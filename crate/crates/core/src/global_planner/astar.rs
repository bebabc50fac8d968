use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fss::FeasibilityMap;
use crate::terrain::CellIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("goal unreachable from start")]
    Unreachable,
    #[error("precondition failed: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub cells: Vec<CellIndex>,
    /// Path cost in cell units: 1 per axis move, √2 per diagonal.
    pub cost: f64,
}

/// Octile distance, admissible and consistent for 1/√2 move costs.
pub fn octile(a: CellIndex, b: CellIndex) -> f64 {
    let dr = a.row.abs_diff(b.row) as f64;
    let dc = a.col.abs_diff(b.col) as f64;
    dr.max(dc) + (SQRT_2 - 1.0) * dr.min(dc)
}

/// The eight moves, filtered so diagonals never cut a blocked corner.
pub fn moves(fmap: &FeasibilityMap, cell: CellIndex) -> impl Iterator<Item = (CellIndex, f64)> + '_ {
    let at = move |dr: isize, dc: isize| -> Option<CellIndex> {
        let (r, c) = (cell.row as isize + dr, cell.col as isize + dc);
        if r < 0 || c < 0 {
            return None;
        }
        let n = CellIndex::new(r as usize, c as usize);
        fmap.is_feasible(n).then_some(n)
    };
    (-1isize..=1).flat_map(move |dr| (-1isize..=1).map(move |dc| (dr, dc))).filter_map(move |(dr, dc)| {
        if (dr, dc) == (0, 0) {
            return None;
        }
        let n = at(dr, dc)?;
        if dr != 0 && dc != 0 {
            at(dr, 0)?;
            at(0, dc)?;
            Some((n, SQRT_2))
        } else {
            Some((n, 1.0))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    h: f64,
    cell: CellIndex,
}

impl Eq for Entry {}

impl Ord for Entry {
    // BinaryHeap is a max-heap: reverse so the smallest (f, h, row, col) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then(other.h.total_cmp(&self.h)).then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest 8-connected path over feasible cells without corner cutting.
/// Ties pop by smaller heuristic, then row-major cell order.
pub fn astar(fmap: &FeasibilityMap, start: CellIndex, goal: CellIndex) -> Result<GridPath, SearchError> {
    for (what, c) in [("start", start), ("goal", goal)] {
        if !fmap.is_feasible(c) {
            return Err(SearchError::Precondition(format!("{what} cell ({}, {}) is not feasible", c.row, c.col)));
        }
    }
    let idx = |c: CellIndex| c.row * fmap.n_cols() + c.col;
    let n = fmap.n_rows() * fmap.n_cols();
    let mut g = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<CellIndex>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[idx(start)] = 0.0;
    let h0 = octile(start, goal);
    open.push(Entry { f: h0, h: h0, cell: start });

    while let Some(Entry { cell, .. }) = open.pop() {
        if closed[idx(cell)] {
            continue;
        }
        closed[idx(cell)] = true;
        if cell == goal {
            let mut cells = vec![goal];
            let mut cur = goal;
            while let Some(p) = parent[idx(cur)] {
                cells.push(p);
                cur = p;
            }
            cells.reverse();
            return Ok(GridPath { cells, cost: g[idx(goal)] });
        }
        let gc = g[idx(cell)];
        for (next, step) in moves(fmap, cell) {
            let i = idx(next);
            let cand = gc + step;
            if !closed[i] && cand < g[i] {
                g[i] = cand;
                parent[i] = Some(cell);
                let h = octile(next, goal);
                open.push(Entry { f: cand + h, h, cell: next });
            }
        }
    }
    Err(SearchError::Unreachable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain Dijkstra over the same move set, O(V²) scan with no heap.
    fn dijkstra(fmap: &FeasibilityMap, start: CellIndex, goal: CellIndex) -> Option<f64> {
        let cols = fmap.n_cols();
        let n = fmap.n_rows() * cols;
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[start.row * cols + start.col] = 0.0;
        loop {
            let (mut best, mut bi) = (f64::INFINITY, usize::MAX);
            for i in 0..n {
                if !done[i] && dist[i] < best {
                    best = dist[i];
                    bi = i;
                }
            }
            if bi == usize::MAX {
                return None;
            }
            let cell = CellIndex::new(bi / cols, bi % cols);
            if cell == goal {
                return Some(best);
            }
            done[bi] = true;
            for (m, w) in moves(fmap, cell) {
                let j = m.row * cols + m.col;
                dist[j] = dist[j].min(best + w);
            }
        }
    }

    fn random_map(rng: &mut ChaCha8Rng, size: usize, blocked: f64) -> FeasibilityMap {
        let cells: Vec<bool> = (0..size * size).map(|_| !rng.gen_bool(blocked)).collect();
        FeasibilityMap::from_fn(size, size, |c| cells[c.row * size + c.col])
    }

    #[test]
    fn pure_diagonal() {
        let fmap = FeasibilityMap::all_true(3, 3);
        let p = astar(&fmap, CellIndex::new(0, 0), CellIndex::new(2, 2)).unwrap();
        assert_eq!(p.cost, 2.0 * SQRT_2);
        assert_eq!(p.cells.len(), 3);
    }

    #[test]
    fn blocked_goal_column_is_unreachable() {
        let fmap = FeasibilityMap::from_fn(5, 5, |c| c.col != 3);
        assert_eq!(astar(&fmap, CellIndex::new(0, 0), CellIndex::new(2, 4)), Err(SearchError::Unreachable));
    }

    #[test]
    fn infeasible_endpoint_is_a_precondition_error() {
        let fmap = FeasibilityMap::from_fn(5, 5, |c| c != CellIndex::new(4, 4));
        assert!(matches!(astar(&fmap, CellIndex::new(0, 0), CellIndex::new(4, 4)), Err(SearchError::Precondition(_))));
    }

    #[test]
    fn no_corner_cutting() {
        // diagonal neighbors separated by two blocked axis cells
        let fmap = FeasibilityMap::from_fn(2, 2, |c| c.row == c.col);
        assert_eq!(astar(&fmap, CellIndex::new(0, 0), CellIndex::new(1, 1)), Err(SearchError::Unreachable));
    }

    #[test]
    fn matches_dijkstra_on_random_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let mut fmap = random_map(&mut rng, 20, 0.3);
            let (s, g) = (CellIndex::new(0, 0), CellIndex::new(19, 19));
            fmap.set(s, true);
            fmap.set(g, true);
            match (astar(&fmap, s, g), dijkstra(&fmap, s, g)) {
                (Ok(p), Some(d)) => {
                    assert!((p.cost - d).abs() < 1e-9);
                    assert!(p.cells.iter().all(|&c| fmap.is_feasible(c)));
                }
                (Err(SearchError::Unreachable), None) => {}
                (a, d) => panic!("disagreement: {a:?} vs {d:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn paths_are_connected_and_cost_consistent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fmap = random_map(&mut rng, 12, 0.25);
            let (s, g) = (CellIndex::new(rng.gen_range(0..12), 0), CellIndex::new(rng.gen_range(0..12), 11));
            fmap.set(s, true);
            fmap.set(g, true);
            if let Ok(p) = astar(&fmap, s, g) {
                let mut cost = 0.0;
                for w in p.cells.windows(2) {
                    let step = moves(&fmap, w[0]).find(|(n, _)| *n == w[1]);
                    prop_assert!(step.is_some());
                    cost += step.unwrap().1;
                }
                prop_assert!((cost - p.cost).abs() < 1e-9);
                prop_assert_eq!(astar(&fmap, s, g).unwrap(), p);
            }
        }
    }
}
