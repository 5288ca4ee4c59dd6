//! Windowed-sinc low-pass filtering of mesh geometry.
//!
//! The transfer function is a Hamming-windowed sinc expanded in Chebyshev
//! polynomials of the umbrella Laplacian, evaluated with the three-term
//! recurrence. Closed surfaces keep their volume far better than with plain
//! Laplacian smoothing. Boundary vertices are smoothed only along the
//! boundary, and boundary corners sharper than [`BOUNDARY_CORNER_DEG`] stay
//! fixed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

use super::TriangleMesh;

/// Boundary vertices whose two boundary edges turn by more than this are
/// held in place.
pub const BOUNDARY_CORNER_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub iterations: usize,
    pub passband: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams {
            iterations: 20,
            passband: 0.1,
        }
    }
}

fn windowed_sinc(iterations: usize, cutoff: f64) -> Vec<f64> {
    let n = iterations;
    let mut c: Vec<f64> = (0..=n)
        .map(|i| {
            let window = 0.54 + 0.46 * (i as f64 * PI / (n as f64 + 1.0)).cos();
            let sinc = if i == 0 {
                cutoff / PI
            } else {
                2.0 * (i as f64 * cutoff).sin() / (i as f64 * PI)
            };
            window * sinc
        })
        .collect();
    // Unit gain at zero frequency: a rigid translation passes unchanged.
    let sum: f64 = c.iter().sum();
    c.iter_mut().for_each(|x| *x /= sum);
    c
}

fn response(c: &[f64], theta: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(i, ci)| ci * (i as f64 * theta).cos())
        .sum()
}

/// Chebyshev coefficients of the low-pass filter. The window widens the
/// transition band, so the cutoff is moved outward until the gain at the
/// passband edge reaches one.
fn filter_coefficients(iterations: usize, passband: f64) -> Vec<f64> {
    let theta_pb = (1.0 - 0.5 * passband).acos();
    let gap = |cutoff: f64| response(&windowed_sinc(iterations, cutoff), theta_pb) - (1.0 - 1e-3);
    let (mut lo, mut hi) = (theta_pb, theta_pb);
    let step = 0.01;
    while gap(hi) < 0.0 {
        lo = hi;
        hi += step;
        if hi >= PI {
            return windowed_sinc(iterations, theta_pb);
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    windowed_sinc(iterations, hi)
}

/// Per-vertex smoothing stencil; an empty list means the vertex is fixed.
fn stencils(mesh: &TriangleMesh) -> Vec<Vec<u32>> {
    let n = mesh.vertices.len();
    let incidence = mesh.edge_incidence();
    let mut all: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut boundary: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut non_manifold = vec![false; n];
    for (&(a, b), &count) in &incidence {
        all[a as usize].push(b);
        all[b as usize].push(a);
        match count {
            1 => {
                boundary[a as usize].push(b);
                boundary[b as usize].push(a);
            }
            2 => {}
            _ => {
                non_manifold[a as usize] = true;
                non_manifold[b as usize] = true;
            }
        }
    }
    let corner_cos = (PI - BOUNDARY_CORNER_DEG.to_radians()).cos();
    (0..n)
        .map(|v| {
            if non_manifold[v] {
                return Vec::new();
            }
            let mut s = if boundary[v].is_empty() {
                std::mem::take(&mut all[v])
            } else if boundary[v].len() == 2 {
                let p = mesh.vertices[v];
                let a = (mesh.vertices[boundary[v][0] as usize] - p).normalize();
                let b = (mesh.vertices[boundary[v][1] as usize] - p).normalize();
                // a·b = -1 for a straight boundary.
                if a.dot(&b) > corner_cos {
                    Vec::new()
                } else {
                    std::mem::take(&mut boundary[v])
                }
            } else {
                Vec::new()
            };
            // Deterministic summation order regardless of hash iteration.
            s.sort_unstable();
            s
        })
        .collect()
}

/// Windowed-sinc smoothing; connectivity is untouched.
pub fn smooth_windowed_sinc(
    mesh: &TriangleMesh,
    iterations: usize,
    passband: f64,
) -> Result<TriangleMesh> {
    if mesh.is_empty() {
        return Err(Error::Empty("smoothing an empty mesh"));
    }
    if !(passband > 0.0 && passband <= 2.0) {
        return Err(Error::InvalidInput(format!(
            "passband must be in (0, 2], got {passband}"
        )));
    }
    if iterations == 0 {
        return Ok(mesh.clone());
    }
    let c = filter_coefficients(iterations, passband);
    let stencil = stencils(mesh);
    let n = mesh.vertices.len();

    let apply_w = |x: &[Point], out: &mut Vec<Point>| {
        out.clear();
        out.extend((0..n).map(|v| {
            let s = &stencil[v];
            if s.is_empty() {
                x[v]
            } else {
                let sum = s.iter().fold(nalgebra::Vector3::zeros(), |acc, &u| {
                    acc + x[u as usize].coords
                });
                Point::from(sum / s.len() as f64)
            }
        }));
    };

    let x0 = mesh.vertices.clone();
    let mut wx = Vec::with_capacity(n);
    apply_w(&x0, &mut wx);
    let x1: Vec<Point> = x0
        .iter()
        .zip(&wx)
        .map(|(a, b)| Point::from((a.coords + b.coords) * 0.5))
        .collect();
    let mut acc: Vec<nalgebra::Vector3<f64>> = x0
        .iter()
        .zip(&x1)
        .map(|(a, b)| a.coords * c[0] + b.coords * c[1])
        .collect();

    let (mut prev, mut cur) = (x0, x1);
    for ci in c.iter().skip(2) {
        apply_w(&cur, &mut wx);
        let next: Vec<Point> = (0..n)
            .map(|v| Point::from(cur[v].coords + wx[v].coords - prev[v].coords))
            .collect();
        for (a, p) in acc.iter_mut().zip(&next) {
            *a += p.coords * *ci;
        }
        prev = std::mem::replace(&mut cur, next);
    }

    Ok(TriangleMesh {
        vertices: acc.into_iter().map(Point::from).collect(),
        triangles: mesh.triangles.clone(),
        normals: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_shapes::{planar_grid, uv_sphere};

    #[test]
    fn coefficients_have_unit_dc_gain() {
        let c = filter_coefficients(20, 0.1);
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let edge = (1.0f64 - 0.05).acos();
        assert!((response(&c, edge) - 1.0).abs() < 2e-3);
        assert!(response(&c, PI).abs() < 0.01);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let s = uv_sphere(Point::origin(), 3.0, 8, 12);
        assert_eq!(smooth_windowed_sinc(&s, 0, 0.1).unwrap(), s);
    }

    #[test]
    fn plane_is_a_fixed_point() {
        let g = planar_grid(12, 0.5);
        let out = smooth_windowed_sinc(&g, 20, 0.1).unwrap();
        for (a, b) in g.vertices.iter().zip(&out.vertices) {
            assert!((a - b).norm() < 1e-9, "{a} -> {b}");
        }
    }

    #[test]
    fn sphere_volume_is_preserved() {
        let s = uv_sphere(Point::new(2.0, -1.0, 0.5), 10.0, 24, 48);
        let v0 = s.enclosed_volume();
        let out = smooth_windowed_sinc(&s, 20, 0.1).unwrap();
        assert_eq!(out.vertex_count(), s.vertex_count());
        assert_eq!(out.triangles, s.triangles);
        let v1 = out.enclosed_volume();
        assert!((v1 / v0 - 1.0).abs() < 0.02, "{v0} -> {v1}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = uv_sphere(Point::origin(), 1.0, 6, 6);
        assert!(smooth_windowed_sinc(&s, 5, 0.0).is_err());
        assert!(smooth_windowed_sinc(&s, 5, 2.5).is_err());
        assert!(smooth_windowed_sinc(&TriangleMesh::from_parts(vec![], vec![]), 5, 0.1).is_err());
    }
}
