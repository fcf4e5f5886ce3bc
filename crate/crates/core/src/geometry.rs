//! Segment geometry: points, segments, groups and z-axis rotations.
//!
//! All coordinates are `f64` meters. Single precision only appears once a
//! segment has been voxelized.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (*self - *other).norm_sq().sqrt()
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        (*self - *other).norm_sq()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s, self.z * s)
    }
}

/// A cluster of points together with the sensor position it was observed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub segment_id: u64,
    pub points: Vec<Point>,
    pub observer_position: Point,
    pub frame_index: u32,
    pub run_id: String,
}

impl Segment {
    /// Builds a segment, rejecting empty or non-finite point sets.
    pub fn new(
        segment_id: u64,
        points: Vec<Point>,
        observer_position: Point,
        frame_index: u32,
        run_id: impl Into<String>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateSegment(format!("segment {segment_id} has no points")));
        }
        if !observer_position.is_finite() || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::DegenerateSegment(format!(
                "segment {segment_id} has non-finite coordinates"
            )));
        }
        Ok(Segment {
            segment_id,
            points,
            observer_position,
            frame_index,
            run_id: run_id.into(),
        })
    }

    pub fn centroid(&self) -> Point {
        centroid(&self.points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rotates points and observer about the vertical axis through `pivot`.
    pub fn rotated(&self, rotation: RigidZRotation, pivot: Point) -> Segment {
        Segment {
            points: rotate_about_z(&self.points, rotation, pivot),
            observer_position: rotation.apply(self.observer_position, pivot),
            ..self.clone()
        }
    }
}

/// Segments observed across frames that belong to the same physical surface.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentGroup {
    group_id: u64,
    member_ids: Vec<u64>,
}

impl SegmentGroup {
    pub fn new(group_id: u64, member_ids: Vec<u64>) -> Result<Self> {
        if member_ids.is_empty() {
            return Err(Error::config("member_ids", format!("group {group_id} has no members")));
        }
        Ok(SegmentGroup { group_id, member_ids })
    }

    pub fn group_id(&self) -> u64 {
        self.group_id
    }

    pub fn member_ids(&self) -> &[u64] {
        &self.member_ids
    }

    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    pub(crate) fn push(&mut self, id: u64) {
        self.member_ids.push(id);
    }
}

/// Checks that no segment id appears in more than one group.
pub fn check_disjoint(groups: &[SegmentGroup]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for g in groups {
        for &id in g.member_ids() {
            if !seen.insert(id) {
                return Err(Error::DuplicateSegmentId(id));
            }
        }
    }
    Ok(())
}

/// A rotation about the z-axis, in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidZRotation {
    pub angle: f64,
}

impl RigidZRotation {
    pub fn new(angle: f64) -> Self {
        RigidZRotation { angle }
    }

    pub fn inverse(self) -> Self {
        RigidZRotation { angle: -self.angle }
    }

    pub fn apply(self, p: Point, pivot: Point) -> Point {
        let (s, c) = self.angle.sin_cos();
        let dx = p.x - pivot.x;
        let dy = p.y - pivot.y;
        Point::new(pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy, p.z)
    }
}

/// Arithmetic mean of the points. An empty slice yields the origin.
pub fn centroid(points: &[Point]) -> Point {
    if points.is_empty() {
        return Point::ORIGIN;
    }
    let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
    for p in points {
        sx += p.x;
        sy += p.y;
        sz += p.z;
    }
    let n = points.len() as f64;
    Point::new(sx / n, sy / n, sz / n)
}

/// Maps each point to `pivot + Rz(angle) (p - pivot)`.
pub fn rotate_about_z(points: &[Point], rotation: RigidZRotation, pivot: Point) -> Vec<Point> {
    points.iter().map(|&p| rotation.apply(p, pivot)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Point, b: Point, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol && (a.z - b.z).abs() <= tol
    }

    #[test]
    fn centroid_examples() {
        let c = centroid(&[Point::new(0.0, 0.0, 0.0), Point::new(2.0, 0.0, 0.0)]);
        assert_eq!(c, Point::new(1.0, 0.0, 0.0));
        assert_eq!(centroid(&[Point::new(1.0, 1.0, 1.0)]), Point::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn centroid_matches_independent_accumulation() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(11);
        let pts: Vec<Point> = (0..100)
            .map(|_| {
                Point::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-5.0..5.0),
                )
            })
            .collect();
        // Oracle: per-axis Kahan summation over a separately collected array.
        let axis = |f: fn(&Point) -> f64| {
            let (mut s, mut comp) = (0.0f64, 0.0f64);
            for v in pts.iter().map(f) {
                let y = v - comp;
                let t = s + y;
                comp = (t - s) - y;
                s = t;
            }
            s / pts.len() as f64
        };
        let oracle = Point::new(axis(|p| p.x), axis(|p| p.y), axis(|p| p.z));
        assert!(close(centroid(&pts), oracle, 1e-12));
    }

    #[test]
    fn rotation_examples() {
        let r = rotate_about_z(
            &[Point::new(1.0, 0.0, 0.0)],
            RigidZRotation::new(FRAC_PI_2),
            Point::ORIGIN,
        );
        assert!(close(r[0], Point::new(0.0, 1.0, 0.0), 1e-15));
        let p = Point::new(3.0, -2.0, 7.0);
        assert_eq!(
            rotate_about_z(&[p], RigidZRotation::new(0.0), Point::new(1.0, 1.0, 1.0))[0],
            p
        );
    }

    #[test]
    fn segment_rejects_empty_points() {
        assert!(Segment::new(1, vec![], Point::ORIGIN, 0, "r").is_err());
        assert!(SegmentGroup::new(0, vec![]).is_err());
    }

    fn cloud() -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec(
            (-100.0f64..100.0, -100.0f64..100.0, -10.0f64..10.0).prop_map(|(x, y, z)| Point::new(x, y, z)),
            1..40,
        )
    }

    proptest! {
        #[test]
        fn rotation_is_an_isometry(pts in cloud(), angle in -10.0f64..10.0, px in -50.0f64..50.0, py in -50.0f64..50.0) {
            let pivot = Point::new(px, py, 0.0);
            let out = rotate_about_z(&pts, RigidZRotation::new(angle), pivot);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    let d0 = pts[i].distance(&pts[j]);
                    let d1 = out[i].distance(&out[j]);
                    prop_assert!((d0 - d1).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn rotation_inverse_restores(pts in cloud(), angle in -10.0f64..10.0) {
            let r = RigidZRotation::new(angle);
            let back = rotate_about_z(&rotate_about_z(&pts, r, Point::ORIGIN), r.inverse(), Point::ORIGIN);
            for (a, b) in pts.iter().zip(&back) {
                prop_assert!(close(*a, *b, 1e-9));
            }
        }

        #[test]
        fn rotation_about_centroid_fixes_centroid(pts in cloud(), angle in -10.0f64..10.0) {
            let c = centroid(&pts);
            let rotated = rotate_about_z(&pts, RigidZRotation::new(angle), c);
            prop_assert!(close(centroid(&rotated), c, 1e-9));
        }
    }
}
