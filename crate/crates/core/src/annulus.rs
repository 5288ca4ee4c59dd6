//! Annulus refinement: valve frame, half-plane skeletonization, closed
//! spline fit and radial tube expansion.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Isometry3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, Plane, Point, Vector};
use crate::mesh::{section_points, TriangleMesh};
use crate::spline::AnnulusCurve;

/// Default angular step between skeleton sections, degrees.
pub const DEFAULT_THETA_OFFSET_DEG: f64 = 15.0;
/// Default radius of the reconstructed annulus tube, mm.
pub const DEFAULT_TUBE_RADIUS: f64 = 1.0;

/// Orifice-centred frame. Local coordinates are `(u, v, h)` along
/// `radial`, `normal × radial` and `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValveFrame {
    pub center: Point,
    pub normal: Vector,
    pub radial: Vector,
}

impl ValveFrame {
    /// Builds a frame, orthonormalizing `radial` against `normal`.
    pub fn new(center: Point, normal: Vector, radial: Vector) -> Result<Self> {
        let n = normal
            .try_normalize(1e-15)
            .ok_or_else(|| Error::Degenerate("zero frame normal".into()))?;
        let r = (radial - n * radial.dot(&n))
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("radial direction parallel to normal".into()))?;
        Ok(ValveFrame {
            center,
            normal: n,
            radial: r,
        })
    }

    /// `normal × radial`, completing the right-handed triad (r, t, n).
    pub fn tangential(&self) -> Vector {
        self.normal.cross(&self.radial)
    }

    /// The orifice plane Π.
    pub fn plane(&self) -> Plane {
        Plane {
            point: self.center,
            normal: self.normal,
        }
    }

    pub fn to_local(&self, p: &Point) -> Vector {
        let d = p - self.center;
        Vector::new(
            d.dot(&self.radial),
            d.dot(&self.tangential()),
            d.dot(&self.normal),
        )
    }

    pub fn from_local(&self, u: f64, v: f64, h: f64) -> Point {
        self.center + self.radial * u + self.tangential() * v + self.normal * h
    }

    /// Height along the normal.
    pub fn height(&self, p: &Point) -> f64 {
        (p - self.center).dot(&self.normal)
    }

    /// Direction at angle θ in Π, measured from `radial` toward `tangential`.
    pub fn direction(&self, theta: f64) -> Vector {
        self.radial * theta.cos() + self.tangential() * theta.sin()
    }

    /// Angle of a point's projection into Π.
    pub fn angle_of(&self, p: &Point) -> f64 {
        let l = self.to_local(p);
        l.y.atan2(l.x)
    }

    /// Reverses the normal, keeping `radial`.
    pub fn flipped(&self) -> ValveFrame {
        ValveFrame {
            normal: -self.normal,
            ..*self
        }
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> ValveFrame {
        ValveFrame {
            center: iso * self.center,
            normal: iso.rotation * self.normal,
            radial: iso.rotation * self.radial,
        }
    }
}

/// Sign that makes the third central moment of `values` non-negative, with
/// a coordinate-based fallback for symmetric sets.
fn skew_sign(values: impl Iterator<Item = f64>, axis: &Vector, scale: f64) -> f64 {
    let m3: f64 = values.map(|x| x * x * x).sum();
    if m3.abs() > 1e-9 * scale {
        m3.signum()
    } else {
        let k = axis.iamax();
        if axis[k] >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Orifice frame from the principal directions of a point cloud: the
/// largest singular direction is `radial`, the smallest is `normal`.
/// Both are signed by the skewness of the points along them; the normal is
/// normally re-oriented afterwards with [`orient_normal`].
pub fn fit_valve_frame(points: &[Point]) -> Result<ValveFrame> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let c = centroid(points)?;
    let mut d = DMatrix::<f64>::zeros(points.len(), 3);
    for (i, p) in points.iter().enumerate() {
        let v = p - c;
        d[(i, 0)] = v.x;
        d[(i, 1)] = v.y;
        d[(i, 2)] = v.z;
    }
    let svd = d.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V");
    let sv = &svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    let (big, mid) = (sv[order[0]], sv[order[1]]);
    if !(big > 0.0) || mid <= 1e-9 * big {
        return Err(Error::RankDeficient(
            "points are collinear or coincident".into(),
        ));
    }
    let row = |k: usize| Vector::new(vt[(k, 0)], vt[(k, 1)], vt[(k, 2)]).normalize();
    let mut r = row(order[0]);
    let mut n = row(order[2]);
    let scale = big.powi(3) / (points.len() as f64).sqrt();
    r *= skew_sign(points.iter().map(|p| (p - c).dot(&r)), &r, scale);
    n *= skew_sign(points.iter().map(|p| (p - c).dot(&n)), &n, scale);
    ValveFrame::new(c, n, r)
}

/// Flips the normal so the leaflets lie on its negative side.
pub fn orient_normal(frame: &ValveFrame, leaflets: &[&TriangleMesh]) -> Result<ValveFrame> {
    let (mut sum, mut count) = (0.0, 0usize);
    for m in leaflets {
        for p in &m.vertices {
            sum += frame.height(p);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty(
            "no leaflet vertices to orient the valve normal",
        ));
    }
    let mean = sum / count as f64;
    if mean.abs() < 1e-9 {
        return Err(Error::Degenerate(
            "leaflets are balanced about the orifice plane; supply the atrial direction explicitly"
                .into(),
        ));
    }
    Ok(if mean > 0.0 { frame.flipped() } else { *frame })
}

/// Flips the normal so it points along `atrial` (which must not lie in Π).
pub fn orient_normal_toward(frame: &ValveFrame, atrial: &Vector) -> Result<ValveFrame> {
    let d = frame.normal.dot(atrial);
    if d.abs() < 1e-9 * atrial.norm().max(1e-300) {
        return Err(Error::Degenerate(
            "atrial hint lies in the orifice plane".into(),
        ));
    }
    Ok(if d < 0.0 { frame.flipped() } else { *frame })
}

/// Ordered section centres with the angle of the half-plane that produced
/// each.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub thetas: Vec<f64>,
    pub centers: Vec<Point>,
}

impl Skeleton {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Half-plane sectioning around the frame axis. For each θ step the
/// centroid of the section points is kept; steps without a section are
/// skipped.
pub fn extract_skeleton(
    mesh: &TriangleMesh,
    frame: &ValveFrame,
    theta_offset_deg: f64,
) -> Result<Skeleton> {
    if mesh.is_empty() {
        return Err(Error::Empty("skeleton of an empty annulus mesh"));
    }
    if !(theta_offset_deg > 0.0 && theta_offset_deg <= 90.0) {
        return Err(Error::InvalidInput(format!(
            "theta offset must be in (0, 90] degrees, got {theta_offset_deg}"
        )));
    }
    let steps = (360.0 / theta_offset_deg - 1e-9).ceil() as usize;
    let mut thetas = Vec::with_capacity(steps);
    let mut centers = Vec::with_capacity(steps);
    for k in 0..steps {
        let theta = (k as f64 * theta_offset_deg).to_radians();
        let dir = frame.direction(theta);
        let plane = Plane::from_normal(frame.center, frame.normal.cross(&dir))?;
        let pts = section_points(mesh, &plane, Some(&dir))?;
        if pts.is_empty() {
            log::debug!("no annulus section at θ = {:.1}°", theta.to_degrees());
            continue;
        }
        thetas.push(theta);
        centers.push(centroid(&pts)?);
    }
    if centers.len() < 4 {
        return Err(Error::Degenerate(format!(
            "only {} non-empty annulus sections; at least 4 are needed",
            centers.len()
        )));
    }
    Ok(Skeleton { thetas, centers })
}

/// Closed spline through the skeleton, parameterized by section angle.
pub fn fit_skeleton_curve(skeleton: &Skeleton) -> Result<AnnulusCurve> {
    AnnulusCurve::fit(&skeleton.thetas, &skeleton.centers)
}

/// Tube of the given radius swept around the curve with rotation-minimizing
/// frames; the residual twist after one loop is spread along the curve.
pub fn expand_tube(curve: &AnnulusCurve, radius: f64) -> Result<TriangleMesh> {
    expand_tube_with(curve, radius, 32, 0.5)
}

/// [`expand_tube`] with explicit resolution: `around` vertices per ring and
/// rings at most `step` mm apart.
pub fn expand_tube_with(
    curve: &AnnulusCurve,
    radius: f64,
    around: usize,
    step: f64,
) -> Result<TriangleMesh> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tube radius must be positive, got {radius}"
        )));
    }
    if around < 3 || !(step > 0.0) {
        return Err(Error::InvalidInput("tube resolution too coarse".into()));
    }
    let rings = ((curve.length() / step).ceil() as usize).max(8);
    let samples = curve.sample_by_arc_length(rings);
    let pts: Vec<Point> = samples.iter().map(|s| s.1).collect();
    let tangents: Vec<Vector> = samples
        .iter()
        .map(|s| curve.derivative(s.0).normalize())
        .collect();

    // Double-reflection propagation of the normal.
    let mut normals = Vec::with_capacity(rings + 1);
    normals.push(crate::geometry::any_orthogonal(&tangents[0]));
    for i in 0..rings {
        let j = (i + 1) % rings;
        let v1 = pts[j] - pts[i];
        let c1 = v1.norm_squared();
        let r = normals[i];
        let (rl, tl) = if c1 > 0.0 {
            (
                r - v1 * (2.0 * v1.dot(&r) / c1),
                tangents[i] - v1 * (2.0 * v1.dot(&tangents[i]) / c1),
            )
        } else {
            (r, tangents[i])
        };
        let v2 = tangents[j] - tl;
        let c2 = v2.norm_squared();
        let next = if c2 > 0.0 {
            rl - v2 * (2.0 * v2.dot(&rl) / c2)
        } else {
            rl
        };
        normals.push((next - tangents[j] * next.dot(&tangents[j])).normalize());
    }
    let b0 = tangents[0].cross(&normals[0]);
    let twist = normals[rings]
        .dot(&b0)
        .atan2(normals[rings].dot(&normals[0]));

    let mut vertices = Vec::with_capacity(rings * around);
    for i in 0..rings {
        let t = tangents[i];
        let corr = -twist * i as f64 / rings as f64;
        let n0 = normals[i];
        let b = t.cross(&n0);
        let n = n0 * corr.cos() + b * corr.sin();
        let b = t.cross(&n);
        for k in 0..around {
            let phi = TAU * k as f64 / around as f64;
            vertices.push(pts[i] + (n * phi.cos() + b * phi.sin()) * radius);
        }
    }
    let id = |i: usize, k: usize| ((i % rings) * around + (k % around)) as u32;
    let mut triangles = Vec::with_capacity(2 * rings * around);
    for i in 0..rings {
        for k in 0..around {
            triangles.push([id(i, k), id(i + 1, k), id(i + 1, k + 1)]);
            triangles.push([id(i, k), id(i + 1, k + 1), id(i, k + 1)]);
        }
    }
    let mut mesh = TriangleMesh::new(vertices, triangles)?;
    if mesh.enclosed_volume() < 0.0 {
        mesh.triangles.iter_mut().for_each(|t| t.swap(1, 2));
    }
    Ok(mesh)
}

/// Parameters of the refinement stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    pub theta_offset_deg: f64,
    pub tube_radius: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            theta_offset_deg: DEFAULT_THETA_OFFSET_DEG,
            tube_radius: DEFAULT_TUBE_RADIUS,
        }
    }
}

/// Output of the refinement stage.
#[derive(Debug, Clone)]
pub struct RefinedAnnulus {
    /// Frame re-centred on the corrected curve.
    pub frame: ValveFrame,
    pub skeleton: Skeleton,
    pub curve: AnnulusCurve,
    pub tube: TriangleMesh,
}

/// Frame of a closed curve from arc-length-uniform samples, with axis signs
/// matched to `like`.
pub fn curve_frame(curve: &AnnulusCurve, like: &ValveFrame) -> Result<ValveFrame> {
    let pts: Vec<Point> = curve
        .sample_by_arc_length(720)
        .into_iter()
        .map(|s| s.1)
        .collect();
    let f = fit_valve_frame(&pts)?;
    let n = if f.normal.dot(&like.normal) < 0.0 {
        -f.normal
    } else {
        f.normal
    };
    let r = if f.radial.dot(&like.radial) < 0.0 {
        -f.radial
    } else {
        f.radial
    };
    ValveFrame::new(f.center, n, r)
}

/// Skeleton, spline and tube. A gap in the annulus pulls the vertex
/// centroid away from the true orifice centre, which skews the angular
/// parameterization, so the skeleton is extracted a second time around the
/// centre of the first corrected curve.
pub fn refine_annulus(
    mesh: &TriangleMesh,
    frame: &ValveFrame,
    params: &RefineParams,
) -> Result<RefinedAnnulus> {
    let first = fit_skeleton_curve(&extract_skeleton(mesh, frame, params.theta_offset_deg)?)?;
    let frame = curve_frame(&first, frame)?;
    let skeleton = extract_skeleton(mesh, &frame, params.theta_offset_deg)?;
    let curve = fit_skeleton_curve(&skeleton)?;
    let tube = expand_tube(&curve, params.tube_radius)?;
    Ok(RefinedAnnulus {
        frame,
        skeleton,
        curve,
        tube,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_shapes::torus;
    use crate::mesh::{connected_components, surface_area};
    use crate::spline::fit_periodic_spline;
    fn circle_points(r: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                Point::new(r * t.cos(), r * t.sin(), 0.0)
            })
            .collect()
    }

    fn rotation() -> Isometry3<f64> {
        Isometry3::new(Vector::new(3.0, -7.0, 11.0), Vector::new(0.4, -1.1, 0.7))
    }

    fn parallel(a: &Vector, b: &Vector, tol: f64) -> bool {
        a.cross(b).norm() < tol
    }

    #[test]
    fn circle_frame() {
        let f = fit_valve_frame(&circle_points(10.0, 100)).unwrap();
        assert!(parallel(&f.normal, &Vector::z(), 1e-6));
        assert!(f.center.coords.norm() < 1e-6);
        assert!((f.normal.norm() - 1.0).abs() < 1e-12 && (f.radial.norm() - 1.0).abs() < 1e-12);
        assert!(f.normal.dot(&f.radial).abs() < 1e-9);
    }

    #[test]
    fn frame_is_equivariant() {
        // Mildly elliptic so the radial axis is well defined.
        let pts: Vec<Point> = (0..100)
            .map(|i| {
                let t = TAU * i as f64 / 100.0;
                Point::new(12.0 * t.cos(), 10.0 * t.sin(), 0.0)
            })
            .collect();
        let iso = rotation();
        let f = fit_valve_frame(&pts).unwrap();
        let moved: Vec<Point> = pts.iter().map(|p| iso * p).collect();
        let g = fit_valve_frame(&moved).unwrap();
        assert!(parallel(&g.normal, &(iso.rotation * f.normal), 1e-6));
        assert!(parallel(&g.radial, &(iso.rotation * f.radial), 1e-6));
        assert!((g.center - iso * f.center).norm() < 1e-6);
    }

    #[test]
    fn saddle_ring_normal() {
        let pts: Vec<Point> = (0..360)
            .map(|i| {
                let t = TAU * i as f64 / 360.0;
                Point::new(15.0 * t.cos(), 15.0 * t.sin(), 2.0 * (2.0 * t).cos())
            })
            .collect();
        let f = fit_valve_frame(&pts).unwrap();
        let angle = f.normal.dot(&Vector::z()).abs().acos().to_degrees();
        assert!(angle < 2.0, "{angle}");
    }

    #[test]
    fn collinear_points_are_rejected() {
        let line: Vec<Point> = (0..10)
            .map(|i| Point::new(i as f64, 2.0 * i as f64, 0.0))
            .collect();
        assert!(matches!(
            fit_valve_frame(&line),
            Err(Error::RankDeficient(_))
        ));
        assert!(fit_valve_frame(&[Point::origin(); 5]).is_err());
    }

    fn flat_leaflet(z: f64) -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point::new(0.0, 0.0, z),
                Point::new(1.0, 0.0, z),
                Point::new(0.0, 1.0, z),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn orientation_from_leaflets() {
        let leaf = flat_leaflet(-5.0);
        let down = ValveFrame::new(Point::origin(), -Vector::z(), Vector::x()).unwrap();
        let up = orient_normal(&down, &[&leaf]).unwrap();
        assert_eq!(up.normal, Vector::z());
        let same = orient_normal(&up, &[&leaf]).unwrap();
        assert_eq!(same, up);
        let flat = flat_leaflet(0.0);
        assert!(orient_normal(&up, &[&flat]).is_err());
        let hinted = orient_normal_toward(&down, &Vector::new(0.1, 0.0, 1.0)).unwrap();
        assert_eq!(hinted.normal, Vector::z());
    }

    fn torus_frame() -> ValveFrame {
        ValveFrame::new(Point::origin(), Vector::z(), Vector::x()).unwrap()
    }

    #[test]
    fn torus_skeleton() {
        let t = torus(15.0, 1.0, 120, 24);
        let s = extract_skeleton(&t, &torus_frame(), 15.0).unwrap();
        assert_eq!(s.len(), 24);
        for c in &s.centers {
            let radial = (c.x * c.x + c.y * c.y).sqrt();
            assert!(((radial - 15.0).powi(2) + c.z * c.z).sqrt() < 0.1, "{c}");
        }
        assert_eq!(extract_skeleton(&t, &torus_frame(), 90.0).unwrap().len(), 4);
        assert!(extract_skeleton(&t, &torus_frame(), 0.0).is_err());
        assert!(extract_skeleton(&t, &torus_frame(), 120.0).is_err());
    }

    /// Torus with the triangles of one angular sector removed.
    fn gapped_torus(start_deg: f64, arc_deg: f64) -> TriangleMesh {
        let t = torus(15.0, 1.0, 120, 24);
        let tris: Vec<[u32; 3]> = t
            .triangles
            .iter()
            .filter(|tri| {
                let c = t.corners(tri);
                let m = (c[0].coords + c[1].coords + c[2].coords) / 3.0;
                let a = m.y.atan2(m.x).to_degrees().rem_euclid(360.0);
                (a - start_deg).rem_euclid(360.0) > arc_deg
            })
            .copied()
            .collect();
        TriangleMesh::new(t.vertices.clone(), tris).unwrap()
    }

    #[test]
    fn skeleton_skips_gap() {
        let g = gapped_torus(100.0, 60.0);
        let s = extract_skeleton(&g, &torus_frame(), 15.0).unwrap();
        assert!(s.len() >= 20, "{}", s.len());
        for c in &s.centers {
            let a = c.y.atan2(c.x).to_degrees().rem_euclid(360.0);
            assert!((a - 100.0).rem_euclid(360.0) >= 60.0 - 1e-9, "{a}");
        }
    }

    #[test]
    fn gap_changes_curve_little() {
        let full = torus(15.0, 1.0, 120, 24);
        let reference =
            fit_skeleton_curve(&extract_skeleton(&full, &torus_frame(), 15.0).unwrap()).unwrap();
        for (start, arc) in [(10.0, 30.0), (200.0, 60.0), (37.0, 90.0)] {
            let g = gapped_torus(start, arc);
            let frame = fit_valve_frame(&g.vertices).unwrap();
            let curve = refine_annulus(&g, &frame, &RefineParams::default())
                .unwrap()
                .curve;
            let dense = curve.sample_by_arc_length(720);
            let ref_dense: Vec<Point> = reference
                .sample_by_arc_length(2000)
                .into_iter()
                .map(|s| s.1)
                .collect();
            let worst = dense
                .iter()
                .map(|(_, p)| {
                    ref_dense
                        .iter()
                        .map(|q| (p - q).norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            assert!(worst < 1.0, "gap {arc}° deviates by {worst}");
        }
    }

    #[test]
    fn skeleton_is_rigidly_equivariant() {
        let t = torus(15.0, 1.0, 96, 16);
        // Stretched and bent so that no principal axis has a symmetric sign.
        let pts: Vec<Point> = t
            .vertices
            .iter()
            .map(|p| Point::new(p.x * 1.2 + 0.02 * p.y * p.y, p.y, p.z + 0.05 * p.x))
            .collect();
        let t = TriangleMesh::new(pts, t.triangles.clone()).unwrap();
        let iso = rotation();
        let f = fit_valve_frame(&t.vertices).unwrap();
        let moved = t.transformed(&iso);
        let g = fit_valve_frame(&moved.vertices).unwrap();
        let a = extract_skeleton(&t, &f, 15.0).unwrap();
        let b = extract_skeleton(&moved, &g, 15.0).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.centers.iter().zip(&b.centers) {
            assert!((iso * p - q).norm() < 1e-6);
        }
    }

    #[test]
    fn tube_geometry() {
        let curve = fit_periodic_spline(&circle_points(15.0, 24)).unwrap();
        let tube = expand_tube(&curve, 1.0).unwrap();
        assert!(tube.is_closed());
        assert_eq!(connected_components(&tube).unwrap().len(), 1);
        let area = surface_area(&tube).unwrap();
        let expect = (TAU * 15.0) * (TAU * 1.0);
        assert!((area / expect - 1.0).abs() < 0.02, "{area} vs {expect}");
        assert!(tube.enclosed_volume() > 0.0);
        let dense: Vec<Point> = curve
            .sample_by_arc_length(4000)
            .into_iter()
            .map(|s| s.1)
            .collect();
        for v in tube.vertices.iter().step_by(7) {
            let d = dense
                .iter()
                .map(|q| (v - q).norm())
                .fold(f64::INFINITY, f64::min);
            assert!((0.98..=1.02).contains(&d), "{d}");
        }
        assert!(expand_tube(&curve, 0.0).is_err());
    }

    #[test]
    fn tube_has_no_twist_seam() {
        let pts: Vec<Point> = (0..16)
            .map(|i| {
                let t = TAU * i as f64 / 16.0;
                Point::new(
                    18.0 * t.cos(),
                    12.0 * t.sin(),
                    4.0 * (2.0 * t).cos() + 1.5 * t.cos(),
                )
            })
            .collect();
        let curve = fit_periodic_spline(&pts).unwrap();
        let tube = expand_tube(&curve, 1.0).unwrap();
        let max_edge = tube
            .edge_incidence()
            .keys()
            .map(|&(a, b)| (tube.vertices[a as usize] - tube.vertices[b as usize]).norm())
            .fold(0.0, f64::max);
        assert!(max_edge < 0.8, "{max_edge}");
        assert!(tube.is_closed());
    }

    #[test]
    fn refinement_is_idempotent() {
        let pts: Vec<Point> = (0..24)
            .map(|i| {
                let t = TAU * i as f64 / 24.0;
                Point::new(16.0 * t.cos(), 13.0 * t.sin(), 3.0 * (2.0 * t).cos())
            })
            .collect();
        let first = fit_periodic_spline(&pts).unwrap();
        let tube = expand_tube(&first, 1.0).unwrap();
        let frame = fit_valve_frame(&tube.vertices).unwrap();
        let again = refine_annulus(&tube, &frame, &RefineParams::default()).unwrap();
        let tube2 = expand_tube(&again.curve, 1.0).unwrap();
        let frame2 = fit_valve_frame(&tube2.vertices).unwrap();
        let third = extract_skeleton(&tube2, &frame2, 15.0).unwrap();
        let ms: f64 = third
            .centers
            .iter()
            .map(|a| {
                again
                    .skeleton
                    .centers
                    .iter()
                    .map(|b| (a - b).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / third.len() as f64;
        assert!(ms.sqrt() < 0.2, "{}", ms.sqrt());
        assert!((again.curve.length() / first.length() - 1.0).abs() < 0.01);
    }
}
