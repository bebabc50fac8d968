use nalgebra::Point2;
use serde::{Deserialize, Serialize};

/// Convex hull of a point set. Degenerate sets keep their own variants so
/// callers never see a polygon with fewer than three vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Hull {
    Point(Point2<f64>),
    Segment(Point2<f64>, Point2<f64>),
    /// Counter-clockwise, strictly convex.
    Polygon(Vec<Point2<f64>>),
}

fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

impl Hull {
    /// Andrew's monotone chain. Collinear points are dropped.
    ///
    /// # Panics
    /// On an empty input.
    pub fn from_points(points: &[Point2<f64>]) -> Hull {
        assert!(!points.is_empty(), "hull of an empty point set");
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup();
        if pts.len() == 1 {
            return Hull::Point(pts[0]);
        }
        let mut lower: Vec<Point2<f64>> = Vec::new();
        for p in &pts {
            while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
                lower.pop();
            }
            lower.push(*p);
        }
        let mut upper: Vec<Point2<f64>> = Vec::new();
        for p in pts.iter().rev() {
            while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
                upper.pop();
            }
            upper.push(*p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        match lower.len() {
            1 => Hull::Point(lower[0]),
            2 => Hull::Segment(lower[0], lower[1]),
            _ => Hull::Polygon(lower),
        }
    }

    pub fn vertices(&self) -> Vec<Point2<f64>> {
        match self {
            Hull::Point(p) => vec![*p],
            Hull::Segment(a, b) => vec![*a, *b],
            Hull::Polygon(v) => v.clone(),
        }
    }

    /// Inside-or-on test with absolute tolerance `tol`.
    pub fn contains(&self, p: &Point2<f64>, tol: f64) -> bool {
        match self {
            Hull::Point(a) => (p - a).norm() <= tol,
            Hull::Segment(a, b) => {
                let ab = b - a;
                let w = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - (a + ab * w)).norm() <= tol
            }
            Hull::Polygon(v) => (0..v.len()).all(|i| {
                let (a, b) = (&v[i], &v[(i + 1) % v.len()]);
                cross(a, b, p) / (b - a).norm() >= -tol
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_block() {
        let pts: Vec<_> = (0..3).flat_map(|i| (0..3).map(move |j| Point2::new(i as f64, j as f64))).collect();
        let Hull::Polygon(v) = Hull::from_points(&pts) else { panic!("expected polygon") };
        assert_eq!(v, vec![Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(2.0, 2.0), Point2::new(0.0, 2.0)]);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(Hull::from_points(&[Point2::new(1.0, 1.0)]), Hull::Point(Point2::new(1.0, 1.0)));
        let line: Vec<_> = (0..5).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        assert_eq!(Hull::from_points(&line), Hull::Segment(Point2::new(0.0, 0.0), Point2::new(4.0, 8.0)));
    }

    proptest! {
        #[test]
        fn hull_is_ccw_strictly_convex_and_covers_inputs(raw in prop::collection::vec((-20i32..20, -20i32..20), 1..40)) {
            let pts: Vec<_> = raw.iter().map(|&(x, y)| Point2::new(x as f64 * 0.05, y as f64 * 0.05)).collect();
            let hull = Hull::from_points(&pts);
            for p in &pts {
                prop_assert!(hull.contains(p, 1e-9));
            }
            if let Hull::Polygon(v) = &hull {
                for i in 0..v.len() {
                    let c = cross(&v[i], &v[(i + 1) % v.len()], &v[(i + 2) % v.len()]);
                    prop_assert!(c > 0.0);
                }
            }
        }
    }
}
