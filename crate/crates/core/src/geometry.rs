//! Planar geometry in millimetres, dish-centred coordinates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn offset(self, angle: f64, length: f64) -> Point {
        Point::new(self.x + length * angle.cos(), self.y + length * angle.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    /// True when the two closed segments share at least one point.
    pub fn intersects(&self, other: &Segment) -> bool {
        segments_intersect(self.a, self.b, other.a, other.b)
    }
}

/// Axis-aligned rectangle described by its centre and extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center: Point,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn min(&self) -> Point {
        Point::new(self.center.x - self.width / 2.0, self.center.y - self.height / 2.0)
    }

    pub fn max(&self) -> Point {
        Point::new(self.center.x + self.width / 2.0, self.center.y + self.height / 2.0)
    }

    pub fn contains(&self, p: Point) -> bool {
        let (lo, hi) = (self.min(), self.max());
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
    }

    pub fn corners(&self) -> [Point; 4] {
        let (lo, hi) = (self.min(), self.max());
        [lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)]
    }

    /// Distance from `p` to the nearest point of the rectangle (0 inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        let (lo, hi) = (self.min(), self.max());
        let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
        let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
        dx.hypot(dy)
    }
}

fn orientation(p: Point, q: Point, r: Point) -> f64 {
    (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
}

fn on_segment(p: Point, q: Point, r: Point) -> bool {
    r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
}

/// Closed-segment intersection test using orientation signs.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    if (0.0..tau).contains(&theta) {
        return theta;
    }
    let w = theta.rem_euclid(tau);
    if w >= tau {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_segments_intersect() {
        let s = Segment::new(Point::new(-1.0, 0.0), Point::new(1.0, 0.0));
        let t = Segment::new(Point::new(0.0, -1.0), Point::new(0.0, 1.0));
        assert!(s.intersects(&t));
    }

    #[test]
    fn parallel_segments_do_not_intersect() {
        let s = Segment::new(Point::new(0.0, 0.0), Point::new(1.0, 0.0));
        let t = Segment::new(Point::new(0.0, 1.0), Point::new(1.0, 1.0));
        assert!(!s.intersects(&t));
    }

    #[test]
    fn touching_endpoint_counts() {
        let s = Segment::new(Point::new(0.0, 0.0), Point::new(1.0, 0.0));
        let t = Segment::new(Point::new(1.0, 0.0), Point::new(2.0, 5.0));
        assert!(s.intersects(&t));
    }

    #[test]
    fn rect_distance() {
        let r = Rect { center: Point::new(0.0, 0.0), width: 2.0, height: 2.0 };
        assert_eq!(r.distance_to(Point::new(0.5, 0.5)), 0.0);
        assert!((r.distance_to(Point::new(4.0, 5.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_stays_in_range() {
        for k in -20..20 {
            let w = wrap_angle(k as f64 * 1.7);
            assert!((0.0..std::f64::consts::TAU).contains(&w));
        }
        assert_eq!(wrap_angle(-1e-18), 0.0);
    }
}
