//! Small geometric vocabulary shared by every stage: points, planes and
//! polylines in millimetres.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;

/// Tolerance used when checking that a caller-supplied direction is unit length.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// An oriented plane given by a point on it and a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Point,
    pub normal: Vector,
}

impl Plane {
    /// Builds a plane, rejecting normals that are not unit length.
    pub fn new(point: Point, normal: Vector) -> Result<Self> {
        if !normal.iter().all(|c| c.is_finite()) || (normal.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "plane normal must be unit length, got |n| = {}",
                normal.norm()
            )));
        }
        Ok(Plane { point, normal })
    }

    /// Builds a plane from an arbitrary non-zero normal, normalizing it.
    pub fn from_normal(point: Point, normal: Vector) -> Result<Self> {
        let len = normal.norm();
        if !(len > 1e-15) {
            return Err(Error::Degenerate("zero plane normal".into()));
        }
        Ok(Plane {
            point,
            normal: normal / len,
        })
    }

    pub fn signed_distance(&self, p: &Point) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    pub fn project(&self, p: &Point) -> Point {
        p - self.normal * self.signed_distance(p)
    }
}

/// Ordered sequence of points; `closed` adds the segment from last to first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline3D {
    pub points: Vec<Point>,
    pub closed: bool,
}

impl Polyline3D {
    /// Builds a polyline, dropping consecutive duplicates (and a closing
    /// duplicate when `closed`). Fails when fewer than two points remain.
    pub fn new(points: Vec<Point>, closed: bool) -> Result<Self> {
        let mut out: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            if out.last().is_none_or(|q| (p - q).norm() > 1e-12) {
                out.push(p);
            }
        }
        if closed && out.len() > 1 && (out[0] - out[out.len() - 1]).norm() <= 1e-12 {
            out.pop();
        }
        if out.len() < 2 {
            return Err(Error::Degenerate(
                "polyline needs at least two distinct points".into(),
            ));
        }
        Ok(Polyline3D {
            points: out,
            closed,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sum of segment lengths, including the closing segment when closed.
    pub fn length(&self) -> f64 {
        let open: f64 = self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        if self.closed && self.points.len() > 2 {
            open + (self.points[0] - self.points[self.points.len() - 1]).norm()
        } else {
            open
        }
    }

    /// Iterates over the segments, including the closing one when closed.
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.points.len();
        let count = if self.closed && n > 2 {
            n
        } else {
            n.saturating_sub(1)
        };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }
}

/// Length of a polyline.
pub fn polyline_length(p: &Polyline3D) -> f64 {
    p.length()
}

/// Arithmetic mean of a point set.
pub fn centroid(points: &[Point]) -> Result<Point> {
    if points.is_empty() {
        return Err(Error::Empty("centroid of an empty point set"));
    }
    let sum = points.iter().fold(Vector::zeros(), |acc, p| acc + p.coords);
    Ok(Point::from(sum / points.len() as f64))
}

/// Any unit vector orthogonal to `v` (which must be non-zero).
pub fn any_orthogonal(v: &Vector) -> Vector {
    let a = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Vector::x()
    } else if v.y.abs() <= v.z.abs() {
        Vector::y()
    } else {
        Vector::z()
    };
    v.cross(&a).normalize()
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to the nearest segment of a polyline.
pub fn point_polyline_distance(p: &Point, line: &Polyline3D) -> f64 {
    line.segments()
        .map(|(a, b)| point_segment_distance(p, &a, &b))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_square_length() {
        let sq = Polyline3D::new(
            vec![
                Point::new(0.0, 0.0, 0.0),
                Point::new(1.0, 0.0, 0.0),
                Point::new(1.0, 1.0, 0.0),
                Point::new(0.0, 1.0, 0.0),
            ],
            true,
        )
        .unwrap();
        assert_eq!(sq.length(), 4.0);
        assert_eq!(polyline_length(&sq), 4.0);
    }

    #[test]
    fn centroid_of_two_points() {
        let c = centroid(&[Point::new(0.0, 0.0, 0.0), Point::new(2.0, 0.0, 0.0)]).unwrap();
        assert_eq!(c, Point::new(1.0, 0.0, 0.0));
        assert!(centroid(&[]).is_err());
    }

    #[test]
    fn polyline_dedups_and_rejects_single_point() {
        let p = Point::new(1.0, 2.0, 3.0);
        assert!(Polyline3D::new(vec![p, p, p], false).is_err());
        let l = Polyline3D::new(vec![p, p, Point::new(2.0, 2.0, 3.0)], false).unwrap();
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn plane_rejects_non_unit_normal() {
        assert!(Plane::new(Point::origin(), Vector::new(0.0, 0.0, 2.0)).is_err());
        let pl = Plane::new(Point::origin(), Vector::z()).unwrap();
        assert_eq!(pl.signed_distance(&Point::new(1.0, 1.0, -3.0)), -3.0);
    }
}
