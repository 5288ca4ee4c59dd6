//! Mesh/plane intersection assembled into ordered polylines.
//!
//! Vertices exactly on the plane are treated as lying on the positive side,
//! so every triangle is cut by zero or two of its edges and crossing points
//! are shared between neighbouring triangles through the edge key.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{Plane, Point, Polyline3D, Vector, UNIT_TOLERANCE};

use super::TriangleMesh;

type EdgeKey = (u32, u32);

struct Crossings {
    /// Crossing point for each cut mesh edge.
    points: HashMap<EdgeKey, Point>,
    /// Segments as pairs of cut edges, in triangle order.
    segments: Vec<(EdgeKey, EdgeKey)>,
}

fn check_inputs(plane: &Plane, half_space_dir: Option<&Vector>) -> Result<()> {
    Plane::new(plane.point, plane.normal)?;
    if let Some(d) = half_space_dir {
        if (d.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "half-space direction must be unit length, got |d| = {}",
                d.norm()
            )));
        }
        if d.dot(&plane.normal).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidInput(
                "half-space direction must be orthogonal to the plane normal".into(),
            ));
        }
    }
    Ok(())
}

fn crossings(mesh: &TriangleMesh, plane: &Plane, half_space_dir: Option<&Vector>) -> Crossings {
    let d: Vec<f64> = mesh
        .vertices
        .iter()
        .map(|p| plane.signed_distance(p))
        .collect();
    let positive = |i: u32| d[i as usize] >= 0.0;
    let mut points = HashMap::new();
    let mut segments = Vec::new();

    let cut = |a: u32, b: u32, points: &mut HashMap<EdgeKey, Point>| -> EdgeKey {
        let key = (a.min(b), a.max(b));
        points.entry(key).or_insert_with(|| {
            let (i, j) = key;
            let (pi, pj) = (mesh.vertices[i as usize], mesh.vertices[j as usize]);
            let (di, dj) = (d[i as usize], d[j as usize]);
            let t = di / (di - dj);
            pi + (pj - pi) * t
        });
        key
    };

    for tri in &mesh.triangles {
        let mut ends = [(0u32, 0u32); 2];
        let mut n = 0;
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if positive(a) != positive(b) {
                ends[n] = cut(a, b, &mut points);
                n += 1;
            }
        }
        if n != 2 {
            continue;
        }
        if let Some(dir) = half_space_dir {
            let mid = Point::from((points[&ends[0]].coords + points[&ends[1]].coords) * 0.5);
            if (mid - plane.point).dot(dir) <= 0.0 {
                continue;
            }
        }
        segments.push((ends[0], ends[1]));
    }
    Crossings { points, segments }
}

/// Intersects a mesh with a plane and chains the cut segments into
/// polylines. With `half_space_dir`, only segments whose midpoint lies on
/// the positive side of that direction are kept, turning the plane into a
/// half-plane bounded by the line through `plane.point`.
pub fn plane_section(
    mesh: &TriangleMesh,
    plane: &Plane,
    half_space_dir: Option<&Vector>,
) -> Result<Vec<Polyline3D>> {
    check_inputs(plane, half_space_dir)?;
    let Crossings { points, segments } = crossings(mesh, plane, half_space_dir);

    let mut incident: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(s);
        incident.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];

    let walk =
        |start_seg: usize, start_node: EdgeKey, used: &mut Vec<bool>| -> (Vec<Point>, bool) {
            let mut pts = vec![points[&start_node]];
            let (mut seg, mut node) = (start_seg, start_node);
            loop {
                used[seg] = true;
                let (a, b) = segments[seg];
                node = if a == node { b } else { a };
                if node == start_node {
                    return (pts, true);
                }
                pts.push(points[&node]);
                match incident[&node].iter().find(|&&s| !used[s]) {
                    Some(&next) => seg = next,
                    None => return (pts, false),
                }
            }
        };

    let mut out = Vec::new();
    // Open chains first, starting from their free ends.
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let (a, b) = segments[s];
        let start = if incident[&a].len() == 1 {
            Some(a)
        } else if incident[&b].len() == 1 {
            Some(b)
        } else {
            None
        };
        if let Some(node) = start {
            let (pts, closed) = walk(s, node, &mut used);
            if let Ok(p) = Polyline3D::new(pts, closed) {
                out.push(p);
            }
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let (pts, closed) = walk(s, segments[s].0, &mut used);
            if let Ok(p) = Polyline3D::new(pts, closed) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// The distinct crossing points of the kept segments, in segment order.
pub fn section_points(
    mesh: &TriangleMesh,
    plane: &Plane,
    half_space_dir: Option<&Vector>,
) -> Result<Vec<Point>> {
    check_inputs(plane, half_space_dir)?;
    let Crossings { points, segments } = crossings(mesh, plane, half_space_dir);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (a, b) in segments {
        for key in [a, b] {
            if seen.insert(key) {
                out.push(points[&key]);
            }
        }
    }
    Ok(out)
}
