//! Planar geometry: points, polylines, convex polygons and oriented boxes.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Rotates counterclockwise about `center`.
    pub fn rotate_about(self, center: Vec2, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        let d = self - center;
        center + Vec2::new(c * d.x - s * d.y, s * d.x + c * d.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(p: [f64; 2]) -> Self {
        Vec2::new(p[0], p[1])
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Distance from `p` to segment `a`-`b`, plus the clamped projection parameter.
pub fn segment_projection(p: Vec2, a: Vec2, b: Vec2) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let closest = a + ab * t;
    (p.distance(closest), t)
}

/// Where a point projects onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection {
    /// Euclidean distance from the point to the polyline.
    pub distance: f64,
    /// Arc length from the first vertex to the projected point.
    pub arc_length: f64,
    /// The projection landed on the final vertex.
    pub at_end: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec2>,
}

impl Polyline {
    pub fn new(points: Vec<Vec2>) -> Self {
        Self { points }
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn first(&self) -> Vec2 {
        self.points[0]
    }

    pub fn last(&self) -> Vec2 {
        *self.points.last().expect("polyline has at least one point")
    }

    /// Heading of the first segment.
    pub fn start_heading(&self) -> f64 {
        let d = self.points[1] - self.points[0];
        d.y.atan2(d.x)
    }

    /// Nearest point on the polyline. Ties resolve to the earliest segment.
    pub fn project(&self, p: Vec2) -> PolylineProjection {
        let mut best = PolylineProjection {
            distance: f64::INFINITY,
            arc_length: 0.0,
            at_end: false,
        };
        let mut travelled = 0.0;
        let n = self.points.len();
        for (i, w) in self.points.windows(2).enumerate() {
            let seg_len = w[0].distance(w[1]);
            let (d, t) = segment_projection(p, w[0], w[1]);
            if d < best.distance {
                best = PolylineProjection {
                    distance: d,
                    arc_length: travelled + t * seg_len,
                    at_end: i + 2 == n && t >= 1.0,
                };
            }
            travelled += seg_len;
        }
        best
    }

    /// Minimum distance from `p` to any segment.
    pub fn distance(&self, p: Vec2) -> f64 {
        self.points
            .windows(2)
            .map(|w| segment_projection(p, w[0], w[1]).0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn rotated(&self, center: Vec2, angle: f64) -> Self {
        Self::new(
            self.points
                .iter()
                .map(|p| p.rotate_about(center, angle))
                .collect(),
        )
    }
}

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    pub vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    pub fn new(mut vertices: Vec<Vec2>) -> Self {
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Self { vertices }
    }

    pub fn rect(min: Vec2, max: Vec2) -> Self {
        Self::new(vec![
            min,
            Vec2::new(max.x, min.y),
            max,
            Vec2::new(min.x, max.y),
        ])
    }

    /// Inclusive containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= -1e-12
        })
    }

    pub fn rotated(&self, center: Vec2, angle: f64) -> Self {
        Self::new(
            self.vertices
                .iter()
                .map(|p| p.rotate_about(center, angle))
                .collect(),
        )
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Rectangle of given length (along heading) and width centred on `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: length * 0.5,
            half_width: width * 0.5,
        }
    }

    fn axes(&self) -> (Vec2, Vec2) {
        let f = Vec2::from_angle(self.heading);
        (f, Vec2::new(-f.y, f.x))
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (f, l) = self.axes();
        let a = f * self.half_length;
        let b = l * self.half_width;
        [
            self.center + a + b,
            self.center - a + b,
            self.center - a - b,
            self.center + a - b,
        ]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (f, l) = self.axes();
        let d = p - self.center;
        d.dot(f).abs() <= self.half_length && d.dot(l).abs() <= self.half_width
    }

    /// Separating-axis overlap test. Touching boxes count as overlapping.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let (f1, l1) = self.axes();
        let (f2, l2) = other.axes();
        let t = other.center - self.center;
        for axis in [f1, l1, f2, l2] {
            let r1 = self.half_length * f1.dot(axis).abs() + self.half_width * l1.dot(axis).abs();
            let r2 =
                other.half_length * f2.dot(axis).abs() + other.half_width * l2.dot(axis).abs();
            if t.dot(axis).abs() > r1 + r2 {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5 - 4.0 * PI) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn polyline_projection_arc_length() {
        let line = Polyline::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(10.0, 10.0),
        ]);
        assert_eq!(line.length(), 20.0);
        let p = line.project(Vec2::new(4.0, 1.0));
        assert!((p.arc_length - 4.0).abs() < 1e-12);
        assert!((p.distance - 1.0).abs() < 1e-12);
        let q = line.project(Vec2::new(12.0, 5.0));
        assert!((q.arc_length - 15.0).abs() < 1e-12);
        assert!(!q.at_end);
        assert!(line.project(Vec2::new(10.0, 14.0)).at_end);
    }

    #[test]
    fn polygon_contains_and_orientation() {
        let cw = ConvexPolygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 2.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(2.0, 0.0),
        ]);
        assert!(cw.contains(Vec2::new(1.0, 1.0)));
        assert!(cw.contains(Vec2::new(2.0, 1.0)));
        assert!(!cw.contains(Vec2::new(2.1, 1.0)));
    }

    #[test]
    fn box_overlap_cases() {
        let a = OrientedBox::new(Vec2::new(0.0, 0.0), 0.0, 4.5, 2.0);
        let b = OrientedBox::new(Vec2::new(4.0, 0.0), 0.0, 4.5, 2.0);
        let c = OrientedBox::new(Vec2::new(5.0, 0.0), 0.0, 4.5, 2.0);
        assert!(a.overlaps(&b) && b.overlaps(&a));
        assert!(!a.overlaps(&c) && !c.overlaps(&a));
        // Rotated box poking a corner into `a`.
        let d = OrientedBox::new(Vec2::new(3.2, 2.2), PI / 4.0, 4.5, 2.0);
        assert_eq!(a.overlaps(&d), d.overlaps(&a));
        let e = OrientedBox::new(Vec2::new(0.0, 2.1), PI / 2.0, 4.5, 2.0);
        assert!(a.overlaps(&e));
    }
}
