//! Points, segment geometry, and a uniform hash grid for radius queries.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Point in continuous pixel coordinates. The raster convention places
/// pixel `(ix, iy)` at coordinates `(ix as S, iy as S)`, i.e. integer
/// coordinates are pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Point<S> {
    pub fn new(x: S, y: S) -> Self {
        Point { x, y }
    }

    pub fn dist_sq(self, other: Self) -> S {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Self) -> S {
        self.dist_sq(other).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Linear interpolation `self + t * (other - self)`.
    pub fn lerp(self, other: Self, t: S) -> Self {
        Point::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }

    pub fn to_f64(self) -> Point<f64> {
        Point::new(self.x.to_f64_lossy(), self.y.to_f64_lossy())
    }

    pub fn cast<T: Scalar>(self) -> Point<T> {
        Point::new(T::of(self.x.to_f64_lossy()), T::of(self.y.to_f64_lossy()))
    }
}

/// Distance from `p` to the closed segment `a..b`. Degenerate segments
/// collapse to point distance, so round end caps come for free.
pub fn dist_point_segment<S: Scalar>(p: Point<S>, a: Point<S>, b: Point<S>) -> S {
    nearest_on_segment(p, a, b).1
}

/// Nearest point on the closed segment `a..b` to `p`, with its distance
/// and the segment parameter `t` in `[0, 1]`.
pub fn nearest_on_segment<S: Scalar>(p: Point<S>, a: Point<S>, b: Point<S>) -> (Point<S>, S, S) {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let len_sq = abx * abx + aby * aby;
    if len_sq == S::zero() {
        return (a, p.dist(a), S::zero());
    }
    let t = ((p.x - a.x) * abx + (p.y - a.y) * aby) / len_sq;
    let t = t.max(S::zero()).min(S::one());
    let q = a.lerp(b, t);
    (q, p.dist(q), t)
}

/// Clip segment `a..b` to the axis-aligned rectangle `[min, max]`
/// (Liang-Barsky). Returns the clipped endpoints and the parameters
/// `t0 <= t1` of the kept sub-interval, or `None` when the segment
/// misses the rectangle entirely.
pub fn clip_segment_to_rect<S: Scalar>(
    a: Point<S>,
    b: Point<S>,
    min: Point<S>,
    max: Point<S>,
) -> Option<(Point<S>, Point<S>, S, S)> {
    let mut t0 = S::zero();
    let mut t1 = S::one();
    let d = [b.x - a.x, b.y - a.y];
    let checks = [
        (-d[0], a.x - min.x),
        (d[0], max.x - a.x),
        (-d[1], a.y - min.y),
        (d[1], max.y - a.y),
    ];
    for (p, q) in checks {
        if p == S::zero() {
            if q < S::zero() {
                return None;
            }
        } else {
            let r = q / p;
            if p < S::zero() {
                if r > t1 {
                    return None;
                }
                if r > t0 {
                    t0 = r;
                }
            } else {
                if r < t0 {
                    return None;
                }
                if r < t1 {
                    t1 = r;
                }
            }
        }
    }
    Some((a.lerp(b, t0), a.lerp(b, t1), t0, t1))
}

/// Proper intersection of segments `a1..a2` and `b1..b2`. Returns the
/// parameters `(t, u)` along each segment when the interiors cross;
/// parallel and collinear pairs return `None`.
pub fn segment_intersection<S: Scalar>(
    a1: Point<S>,
    a2: Point<S>,
    b1: Point<S>,
    b2: Point<S>,
) -> Option<(S, S)> {
    let rx = a2.x - a1.x;
    let ry = a2.y - a1.y;
    let sx = b2.x - b1.x;
    let sy = b2.y - b1.y;
    let denom = rx * sy - ry * sx;
    if denom.abs() < S::of(1e-12) {
        return None;
    }
    let qpx = b1.x - a1.x;
    let qpy = b1.y - a1.y;
    let t = (qpx * sy - qpy * sx) / denom;
    let u = (qpx * ry - qpy * rx) / denom;
    if t >= S::zero() && t <= S::one() && u >= S::zero() && u <= S::one() {
        Some((t, u))
    } else {
        None
    }
}

/// Uniform hash grid over point ids. Coordinates are hashed at a fixed
/// cell size; queries visit every id whose cell touches the query disc's
/// bounding box, leaving exact distance tests to the caller.
#[derive(Debug)]
pub struct PointGrid {
    cell: f64,
    map: HashMap<(i64, i64), Vec<u32>>,
}

impl PointGrid {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell size must be positive");
        PointGrid { cell, map: HashMap::new() }
    }

    pub fn build<S: Scalar>(points: &[Point<S>], cell: f64) -> Self {
        let mut grid = PointGrid::new(cell);
        for (i, p) in points.iter().enumerate() {
            grid.insert(i as u32, *p);
        }
        grid
    }

    fn key(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64)
    }

    pub fn insert<S: Scalar>(&mut self, id: u32, p: Point<S>) {
        let k = self.key(p.x.to_f64_lossy(), p.y.to_f64_lossy());
        self.map.entry(k).or_default().push(id);
    }

    /// Visit candidate ids near `p` (every id stored in a cell that
    /// overlaps the disc's bounding box, without distance filtering).
    pub fn for_each_candidate<S: Scalar>(&self, p: Point<S>, radius: f64, mut f: impl FnMut(u32)) {
        let x = p.x.to_f64_lossy();
        let y = p.y.to_f64_lossy();
        let (x0, y0) = self.key(x - radius, y - radius);
        let (x1, y1) = self.key(x + radius, y + radius);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                if let Some(ids) = self.map.get(&(cx, cy)) {
                    for &id in ids {
                        f(id);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_interior_and_caps() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(10.0, 0.0);
        assert_eq!(dist_point_segment(Point::new(5.0, 3.0), a, b), 3.0);
        assert_eq!(dist_point_segment(Point::new(-3.0, 4.0), a, b), 5.0);
        assert_eq!(dist_point_segment(Point::new(13.0, 4.0), a, b), 5.0);
        // Degenerate segment behaves as a point.
        assert_eq!(dist_point_segment(Point::new(3.0, 4.0), a, a), 5.0);
    }

    #[test]
    fn clip_keeps_inside_and_cuts_crossing() {
        let min = Point::new(0.0, 0.0);
        let max = Point::new(10.0, 10.0);
        let (p, q, t0, t1) =
            clip_segment_to_rect(Point::new(2.0, 2.0), Point::new(8.0, 8.0), min, max).unwrap();
        assert_eq!((p, q), (Point::new(2.0, 2.0), Point::new(8.0, 8.0)));
        assert_eq!((t0, t1), (0.0, 1.0));

        let (p, q, t0, t1) =
            clip_segment_to_rect(Point::new(-5.0, 5.0), Point::new(15.0, 5.0), min, max).unwrap();
        assert_eq!((p, q), (Point::new(0.0, 5.0), Point::new(10.0, 5.0)));
        assert!(t0 > 0.0 && t1 < 1.0);

        assert!(clip_segment_to_rect(Point::new(-5.0, -1.0), Point::new(15.0, -1.0), min, max)
            .is_none());
    }

    #[test]
    fn intersection_finds_crossing_and_rejects_parallel() {
        let (t, u) = segment_intersection(
            Point::<f64>::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(5.0, -5.0),
            Point::new(5.0, 5.0),
        )
        .unwrap();
        assert!((t - 0.5).abs() < 1e-12 && (u - 0.5).abs() < 1e-12);

        assert!(segment_intersection(
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(10.0, 1.0),
        )
        .is_none());
    }

    #[test]
    fn grid_candidates_cover_disc() {
        let points: Vec<Point<f64>> =
            (0..100).map(|i| Point::new((i % 10) as f64 * 3.0, (i / 10) as f64 * 3.0)).collect();
        let grid = PointGrid::build(&points, 4.0);
        let center = Point::new(14.0, 14.0);
        let radius = 7.5;
        let mut candidates = Vec::new();
        grid.for_each_candidate(center, radius, |id| candidates.push(id));
        // Every point actually inside the disc must be among the candidates.
        for (i, p) in points.iter().enumerate() {
            if p.dist(center) <= radius {
                assert!(candidates.contains(&(i as u32)), "missing candidate {i}");
            }
        }
    }
}
