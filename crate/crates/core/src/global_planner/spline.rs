use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use super::GlobalPlanError;
use crate::terrain::{CellIndex, HeightMap};

/// Arc-length table subdivisions per knot interval.
const SUBDIVISIONS: usize = 16;

const GL_NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

/// Natural cubic spline through the knots, parameterized by cumulative chord
/// length and evaluated by arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPath {
    pub knots: Vec<Point2<f64>>,
    /// Chord parameter at each knot.
    params: Vec<f64>,
    /// Second derivatives (x, y) at each knot.
    second: Vec<Vector2<f64>>,
    /// (chord parameter, arc length) pairs, increasing.
    table: Vec<(f64, f64)>,
    pub length: f64,
}

/// Drops interior cells that continue the previous move direction.
pub fn prune_collinear(cells: &[CellIndex]) -> Vec<CellIndex> {
    if cells.len() <= 2 {
        return cells.to_vec();
    }
    let dir = |a: CellIndex, b: CellIndex| (b.row as isize - a.row as isize, b.col as isize - a.col as isize);
    let mut out = vec![cells[0]];
    for w in cells.windows(3) {
        if dir(w[0], w[1]) != dir(w[1], w[2]) {
            out.push(w[1]);
        }
    }
    out.push(cells[cells.len() - 1]);
    out
}

pub fn fit_spline(path: &[CellIndex], map: &HeightMap) -> Result<GlobalPath, GlobalPlanError> {
    if path.len() < 2 {
        return Err(GlobalPlanError::DegeneratePath);
    }
    let knots: Vec<Point2<f64>> = prune_collinear(path)
        .into_iter()
        .map(|c| map.cell_to_world(c).map(|(x, y)| Point2::new(x, y)))
        .collect::<Result<_, _>>()?;
    GlobalPath::from_knots(knots)
}

impl GlobalPath {
    pub fn from_knots(knots: Vec<Point2<f64>>) -> Result<Self, GlobalPlanError> {
        if knots.len() < 2 {
            return Err(GlobalPlanError::DegeneratePath);
        }
        let mut params = vec![0.0];
        for w in knots.windows(2) {
            let h = (w[1] - w[0]).norm();
            if h == 0.0 {
                return Err(GlobalPlanError::DegeneratePath);
            }
            params.push(params[params.len() - 1] + h);
        }
        let second = natural_second_derivatives(&knots, &params);
        let mut path = GlobalPath { knots, params, second, table: Vec::new(), length: 0.0 };
        path.build_table();
        Ok(path)
    }

    fn build_table(&mut self) {
        let mut table = vec![(0.0, 0.0)];
        let mut s = 0.0;
        for i in 0..self.knots.len() - 1 {
            let (a, b) = (self.params[i], self.params[i + 1]);
            for k in 0..SUBDIVISIONS {
                let u0 = a + (b - a) * k as f64 / SUBDIVISIONS as f64;
                let u1 = if k + 1 == SUBDIVISIONS { b } else { a + (b - a) * (k + 1) as f64 / SUBDIVISIONS as f64 };
                s += self.speed_integral(u0, u1);
                table.push((u1, s));
            }
        }
        self.length = s;
        self.table = table;
    }

    fn speed_integral(&self, u0: f64, u1: f64) -> f64 {
        let (mid, half) = ((u0 + u1) / 2.0, (u1 - u0) / 2.0);
        GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, w)| w * self.derivative_param(mid + half * x).norm()).sum::<f64>() * half
    }

    fn interval(&self, u: f64) -> usize {
        let n = self.params.len() - 1;
        self.params.partition_point(|&p| p <= u).clamp(1, n) - 1
    }

    pub fn chord_length(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    /// Position at chord parameter `u` (clamped to the curve).
    pub fn point_param(&self, u: f64) -> Point2<f64> {
        let u = u.clamp(0.0, self.chord_length());
        let i = self.interval(u);
        let h = self.params[i + 1] - self.params[i];
        let a = (self.params[i + 1] - u) / h;
        let b = (u - self.params[i]) / h;
        let (p0, p1) = (self.knots[i].coords, self.knots[i + 1].coords);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        // anchor at the nearer knot so knots and straight runs reproduce exactly
        let linear = if b <= 0.5 { p0 + (p1 - p0) * b } else { p1 - (p1 - p0) * a };
        Point2::from(linear + (m0 * (a * a * a - a) + m1 * (b * b * b - b)) * (h * h / 6.0))
    }

    pub fn derivative_param(&self, u: f64) -> Vector2<f64> {
        let u = u.clamp(0.0, self.chord_length());
        let i = self.interval(u);
        let h = self.params[i + 1] - self.params[i];
        let a = (self.params[i + 1] - u) / h;
        let b = (u - self.params[i]) / h;
        let (p0, p1) = (self.knots[i].coords, self.knots[i + 1].coords);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        (p1 - p0) / h - m0 * ((3.0 * a * a - 1.0) * h / 6.0) + m1 * ((3.0 * b * b - 1.0) * h / 6.0)
    }

    pub fn second_derivative_param(&self, u: f64) -> Vector2<f64> {
        let u = u.clamp(0.0, self.chord_length());
        let i = self.interval(u);
        let h = self.params[i + 1] - self.params[i];
        let a = (self.params[i + 1] - u) / h;
        self.second[i] * a + self.second[i + 1] * (1.0 - a)
    }

    /// One-sided derivatives at interior knot `i`, from the left and right intervals.
    pub fn knot_derivatives(&self, i: usize) -> (Vector2<f64>, Vector2<f64>) {
        let eval = |j: usize, a: f64, b: f64| {
            let h = self.params[j + 1] - self.params[j];
            (self.knots[j + 1].coords - self.knots[j].coords) / h - self.second[j] * ((3.0 * a * a - 1.0) * h / 6.0)
                + self.second[j + 1] * ((3.0 * b * b - 1.0) * h / 6.0)
        };
        (eval(i - 1, 0.0, 1.0), eval(i, 1.0, 0.0))
    }

    pub fn knot_param(&self, i: usize) -> f64 {
        self.params[i]
    }

    /// Chord parameter at arc length `s`.
    pub fn param_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length);
        let k = self.table.partition_point(|&(_, ts)| ts <= s).clamp(1, self.table.len() - 1);
        let (u0, s0) = self.table[k - 1];
        let (u1, s1) = self.table[k];
        let mut u = if s1 > s0 { u0 + (u1 - u0) * (s - s0) / (s1 - s0) } else { u0 };
        for _ in 0..8 {
            let speed = self.derivative_param(u).norm();
            if speed < 1e-12 {
                break;
            }
            let f = s0 + self.speed_integral(u0, u) - s;
            let next = (u - f / speed).clamp(u0, u1);
            if (next - u).abs() < 1e-14 {
                u = next;
                break;
            }
            u = next;
        }
        u
    }

    pub fn point_at(&self, s: f64) -> Point2<f64> {
        if s >= self.length {
            return self.knots[self.knots.len() - 1];
        }
        if s <= 0.0 {
            return self.knots[0];
        }
        self.point_param(self.param_at(s))
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Vector2<f64> {
        self.derivative_param(self.param_at(s)).normalize()
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let t = self.tangent_at(s);
        t.y.atan2(t.x)
    }

    /// Arc length of the closest curve point to `p`, searched within
    /// `[hint - back, hint + ahead]`.
    pub fn project(&self, p: &Point2<f64>, hint: f64, back: f64, ahead: f64) -> f64 {
        let lo = (hint - back).max(0.0);
        let hi = (hint + ahead).min(self.length);
        let step = 0.01;
        let n = (((hi - lo) / step).ceil() as usize).max(1);
        let dist = |s: f64| (self.point_at(s) - p).norm_squared();
        let mut best = (lo, dist(lo));
        for k in 1..=n {
            let s = (lo + (hi - lo) * k as f64 / n as f64).min(hi);
            let d = dist(s);
            if d < best.1 {
                best = (s, d);
            }
        }
        // golden-section refinement around the coarse minimum
        let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..40 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if dist(c) <= dist(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let s = (a + b) / 2.0;
        if dist(s) <= best.1 {
            s
        } else {
            best.0
        }
    }
}

fn natural_second_derivatives(knots: &[Point2<f64>], params: &[f64]) -> Vec<Vector2<f64>> {
    let n = knots.len();
    let mut m = vec![Vector2::zeros(); n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let h: Vec<f64> = params.windows(2).map(|w| w[1] - w[0]).collect();
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    let mut rhs = vec![Vector2::zeros(); inner];
    for i in 1..n - 1 {
        diag[i - 1] = 2.0 * (h[i - 1] + h[i]);
        upper[i - 1] = h[i];
        rhs[i - 1] = ((knots[i + 1] - knots[i]) / h[i] - (knots[i] - knots[i - 1]) / h[i - 1]) * 6.0;
    }
    for i in 1..inner {
        let lower = h[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        let prev = rhs[i - 1];
        rhs[i] -= prev * w;
    }
    m[inner] = rhs[inner - 1] / diag[inner - 1];
    for i in (0..inner - 1).rev() {
        m[i + 1] = (rhs[i] - m[i + 2] * upper[i]) / diag[i];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_length(p: &GlobalPath) -> f64 {
        let n = 200_000;
        let l = p.chord_length();
        (0..n).map(|k| (p.point_param(l * (k + 1) as f64 / n as f64) - p.point_param(l * k as f64 / n as f64)).norm()).sum()
    }

    #[test]
    fn collinear_path_is_the_straight_segment() {
        let map = HeightMap::flat(5, 40, 0.05, (0.0, 0.0)).unwrap();
        let cells: Vec<_> = (0..40).map(|c| CellIndex::new(2, c)).collect();
        let path = fit_spline(&cells, &map).unwrap();
        assert_eq!(path.knots.len(), 2);
        assert!((path.length - 1.95).abs() < 1e-12);
        for k in 0..=100 {
            let p = path.point_at(path.length * k as f64 / 100.0);
            assert_eq!(p.y, 0.1);
        }
        let diag: Vec<_> = (0..20).map(|k| CellIndex::new(k % 5, k)).take(5).collect();
        let path = fit_spline(&diag, &map).unwrap();
        for k in 0..=50 {
            let p = path.point_at(path.length * k as f64 / 50.0);
            assert!((p.x - p.y).abs() < 1e-15);
        }
        assert!((path.length - 0.2 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn l_shaped_path_hits_the_corner() {
        let map = HeightMap::flat(20, 20, 0.05, (0.0, 0.0)).unwrap();
        let cells: Vec<_> = (0..10).map(|c| CellIndex::new(0, c)).chain((1..10).map(|r| CellIndex::new(r, 9))).collect();
        let path = fit_spline(&cells, &map).unwrap();
        assert_eq!(path.knots.len(), 3);
        assert_eq!(path.point_param(path.knot_param(1)), Point2::new(0.45, 0.0));
    }

    #[test]
    fn single_cell_is_degenerate() {
        let map = HeightMap::flat(3, 3, 0.05, (0.0, 0.0)).unwrap();
        assert!(matches!(fit_spline(&[CellIndex::new(1, 1)], &map), Err(GlobalPlanError::DegeneratePath)));
    }

    #[test]
    fn arc_length_matches_dense_polyline() {
        let knots = vec![Point2::new(0.0, 0.0), Point2::new(0.5, 0.3), Point2::new(1.0, -0.2), Point2::new(1.6, 0.4)];
        let path = GlobalPath::from_knots(knots).unwrap();
        let dense = dense_length(&path);
        assert!(((path.length - dense) / dense).abs() < 1e-3);
        // and point_at is consistent with arc length along the way
        let half = path.point_at(path.length / 2.0);
        let u = path.param_at(path.length / 2.0);
        assert!((half - path.point_param(u)).norm() < 1e-12);
    }

    #[test]
    fn heading_matches_finite_difference() {
        let knots = vec![Point2::new(0.0, 0.0), Point2::new(0.5, 0.4), Point2::new(1.0, 0.0)];
        let path = GlobalPath::from_knots(knots).unwrap();
        for s in [0.1, 0.4, 0.7, 1.0] {
            let h = 1e-6;
            let d = path.point_at(s + h) - path.point_at(s - h);
            assert!((path.heading_at(s) - d.y.atan2(d.x)).abs() < 1e-5);
        }
    }

    #[test]
    fn projection_recovers_curve_points() {
        let knots = vec![Point2::new(0.0, 0.0), Point2::new(0.5, 0.4), Point2::new(1.0, 0.0), Point2::new(1.5, 0.2)];
        let path = GlobalPath::from_knots(knots).unwrap();
        for k in 0..20 {
            let s = path.length * k as f64 / 19.0;
            let found = path.project(&path.point_at(s), s, 0.3, 0.3);
            assert!((found - s).abs() < 1e-6, "s {s} found {found}");
        }
    }

    proptest! {
        #[test]
        fn spline_interpolates_and_is_c2(raw in prop::collection::vec((0.05f64..0.5, -0.4f64..0.4), 2..10)) {
            let mut knots = vec![Point2::new(0.0, 0.0)];
            for (dx, y) in raw {
                let last = knots[knots.len() - 1];
                knots.push(Point2::new(last.x + dx, y));
            }
            let path = GlobalPath::from_knots(knots.clone()).unwrap();
            for (i, k) in knots.iter().enumerate() {
                prop_assert!((path.point_param(path.knot_param(i)) - k).norm() == 0.0);
            }
            for i in 1..knots.len() - 1 {
                let (l, r) = path.knot_derivatives(i);
                prop_assert!((l - r).norm() < 1e-9);
            }
            prop_assert!(path.second_derivative_param(0.0).norm() < 1e-12);
            prop_assert!(path.second_derivative_param(path.chord_length()).norm() < 1e-12);
        }
    }
}
