//! Scalar fields over a regular grid in the orifice plane.
//!
//! Grid nodes sit at integer multiples of the resolution in the frame's
//! `(u, v)` coordinates, so fields built independently on the same frame
//! and resolution line up node for node.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::annulus::ValveFrame;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::TriangleMesh;

/// Sub-samples per cell edge used to estimate footprint coverage.
pub const COVERAGE_SUBSAMPLES: usize = 4;

/// Node lattice: node `(i, j)` is at `(origin[0] + i·res, origin[1] + j·res)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub dims: [usize; 2],
}

impl GridSpec {
    /// Smallest aligned grid covering `points` with `margin` to spare.
    pub fn covering(
        points: impl IntoIterator<Item = [f64; 2]>,
        resolution: f64,
        margin: f64,
    ) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid resolution must be positive, got {resolution}"
            )));
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if !(lo[0].is_finite() && hi[0].is_finite() && lo[1].is_finite() && hi[1].is_finite()) {
            return Err(Error::Empty("grid over an empty point set"));
        }
        let mut origin = [0.0; 2];
        let mut dims = [0usize; 2];
        for k in 0..2 {
            let i0 = ((lo[k] - margin) / resolution).floor();
            let i1 = ((hi[k] + margin) / resolution).ceil();
            origin[k] = i0 * resolution;
            dims[k] = (i1 - i0) as usize + 1;
        }
        Ok(GridSpec {
            origin,
            resolution,
            dims,
        })
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn cell_dims(&self) -> [usize; 2] {
        [self.dims[0] - 1, self.dims[1] - 1]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.dims[0] + i
    }

    #[inline]
    pub fn node_uv(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.resolution,
            self.origin[1] + j as f64 * self.resolution,
        ]
    }

    /// Node positions, row by row.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, [f64; 2])> + '_ {
        (0..self.dims[1])
            .flat_map(move |j| (0..self.dims[0]).map(move |i| (i, j, self.node_uv(i, j))))
    }
}

/// Region of the plane a field is defined on.
#[derive(Debug, Clone)]
pub enum Footprint {
    /// Union of projected triangles.
    Triangles(Vec<[[f64; 2]; 3]>),
    /// Interior of a simple closed polygon.
    Polygon(Vec<[f64; 2]>),
}

impl Footprint {
    /// Projection of a mesh onto the frame's plane.
    pub fn of_mesh(mesh: &TriangleMesh, frame: &ValveFrame) -> Footprint {
        let uv: Vec<[f64; 2]> = mesh
            .vertices
            .iter()
            .map(|p| {
                let l = frame.to_local(p);
                [l.x, l.y]
            })
            .collect();
        Footprint::Triangles(
            mesh.triangles
                .iter()
                .map(|t| [uv[t[0] as usize], uv[t[1] as usize], uv[t[2] as usize]])
                .collect(),
        )
    }

    /// Membership of the sample lattice `origin + (i, j)·step`, `i < nx`, `j < ny`.
    pub fn raster(&self, origin: [f64; 2], step: f64, nx: usize, ny: usize) -> Vec<bool> {
        let mut out = vec![false; nx * ny];
        match self {
            Footprint::Triangles(tris) => {
                for t in tris {
                    raster_triangle(t, origin, step, nx, ny, &mut out);
                }
            }
            Footprint::Polygon(poly) => raster_polygon(poly, origin, step, nx, ny, &mut out),
        }
        out
    }
}

fn raster_triangle(
    t: &[[f64; 2]; 3],
    origin: [f64; 2],
    step: f64,
    nx: usize,
    ny: usize,
    out: &mut [bool],
) {
    let cross = |a: [f64; 2], b: [f64; 2], p: [f64; 2]| {
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    };
    let area = cross(t[0], t[1], t[2]);
    if area == 0.0 {
        return;
    }
    let range = |k: usize, n: usize| {
        let lo = t.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = t.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        let a = ((lo - origin[k]) / step).ceil().max(0.0) as usize;
        let b = ((hi - origin[k]) / step).floor();
        if b < 0.0 {
            return (1, 0);
        }
        (a, (b as usize).min(n.saturating_sub(1)))
    };
    let (i0, i1) = range(0, nx);
    let (j0, j1) = range(1, ny);
    let s = area.signum();
    // Relative slack so samples exactly on a shared edge are claimed.
    let eps = 1e-12 * area.abs();
    for j in j0..=j1.min(ny.saturating_sub(1)) {
        if j1 < j0 {
            break;
        }
        for i in i0..=i1 {
            if i1 < i0 {
                break;
            }
            let p = [origin[0] + i as f64 * step, origin[1] + j as f64 * step];
            if s * cross(t[0], t[1], p) >= -eps
                && s * cross(t[1], t[2], p) >= -eps
                && s * cross(t[2], t[0], p) >= -eps
            {
                out[j * nx + i] = true;
            }
        }
    }
}

fn raster_polygon(
    poly: &[[f64; 2]],
    origin: [f64; 2],
    step: f64,
    nx: usize,
    ny: usize,
    out: &mut [bool],
) {
    let n = poly.len();
    let mut xs = Vec::new();
    for j in 0..ny {
        let y = origin[1] + j as f64 * step;
        xs.clear();
        for k in 0..n {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            if (a[1] <= y) != (b[1] <= y) {
                xs.push(a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in xs.chunks_exact(2) {
            let i0 = ((pair[0] - origin[0]) / step).ceil().max(0.0) as usize;
            let i1 = ((pair[1] - origin[0]) / step).floor();
            if i1 < 0.0 {
                continue;
            }
            for i in i0..=(i1 as usize).min(nx - 1) {
                out[j * nx + i] = true;
            }
        }
    }
}

/// Height along the frame normal over a grid, with the footprint it is
/// meaningful on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub frame: ValveFrame,
    pub grid: GridSpec,
    /// One value per node, `i` fastest.
    pub values: Vec<f64>,
    /// Nodes inside the footprint.
    pub mask: Vec<bool>,
    /// Fraction of each cell inside the footprint.
    pub coverage: Vec<f64>,
}

impl HeightField {
    /// Evaluates `f(u, v)` on every node and rasterizes the footprint.
    pub fn from_fn(
        frame: ValveFrame,
        grid: GridSpec,
        footprint: &Footprint,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let values: Vec<f64> = grid.nodes().map(|(_, _, uv)| f(uv[0], uv[1])).collect();
        let mask = footprint.raster(grid.origin, grid.resolution, grid.dims[0], grid.dims[1]);
        let coverage = coverage(&grid, footprint);
        HeightField {
            frame,
            grid,
            values,
            mask,
            coverage,
        }
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node(i, j)]
    }

    pub fn masked(&self, i: usize, j: usize) -> bool {
        self.mask[self.grid.node(i, j)]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// 3D position of a node on the surface.
    pub fn node_point(&self, i: usize, j: usize) -> Point {
        let [u, v] = self.grid.node_uv(i, j);
        self.frame.from_local(u, v, self.value(i, j))
    }

    pub fn same_grid(&self, other: &HeightField) -> bool {
        self.grid == other.grid && self.frame == other.frame
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn bilinear(&self, u: f64, v: f64) -> Option<f64> {
        let (fi, fj) = self.cell_coords(u, v)?;
        let (i, j) = (fi.floor() as usize, fj.floor() as usize);
        let (i, j) = (i.min(self.grid.dims[0] - 2), j.min(self.grid.dims[1] - 2));
        let (a, b) = (fi - i as f64, fj - j as f64);
        Some(
            self.value(i, j) * (1.0 - a) * (1.0 - b)
                + self.value(i + 1, j) * a * (1.0 - b)
                + self.value(i, j + 1) * (1.0 - a) * b
                + self.value(i + 1, j + 1) * a * b,
        )
    }

    /// Coverage of the cell containing `(u, v)`; zero outside the grid.
    pub fn coverage_at(&self, u: f64, v: f64) -> f64 {
        match self.cell_coords(u, v) {
            Some((fi, fj)) => {
                let c = self.grid.cell_dims();
                let (i, j) = (
                    (fi.floor() as usize).min(c[0] - 1),
                    (fj.floor() as usize).min(c[1] - 1),
                );
                self.coverage[j * c[0] + i]
            }
            None => 0.0,
        }
    }

    fn cell_coords(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let fi = (u - self.grid.origin[0]) / self.grid.resolution;
        let fj = (v - self.grid.origin[1]) / self.grid.resolution;
        let inside = |f: f64, n: usize| f >= 0.0 && f <= (n - 1) as f64;
        (inside(fi, self.grid.dims[0]) && inside(fj, self.grid.dims[1])).then_some((fi, fj))
    }

    /// Surface area of the field over its footprint: each cell contributes
    /// the 3D area of its two triangles weighted by its coverage.
    pub fn area(&self) -> Result<f64> {
        let c = self.grid.cell_dims();
        if self.coverage.iter().all(|&x| x == 0.0) {
            return Err(Error::Empty("height field footprint is empty"));
        }
        let mut total = 0.0;
        for j in 0..c[1] {
            for i in 0..c[0] {
                let w = self.coverage[j * c[0] + i];
                if w == 0.0 {
                    continue;
                }
                let p00 = self.node_point(i, j);
                let p10 = self.node_point(i + 1, j);
                let p01 = self.node_point(i, j + 1);
                let p11 = self.node_point(i + 1, j + 1);
                let a = 0.5 * (p10 - p00).cross(&(p11 - p00)).norm()
                    + 0.5 * (p11 - p00).cross(&(p01 - p00)).norm();
                total += w * a;
            }
        }
        Ok(total)
    }

    /// Min, max and mean of the masked node values.
    pub fn summary(&self) -> Option<FieldSummary> {
        let vals: Vec<f64> = self
            .values
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .collect();
        if vals.is_empty() {
            return None;
        }
        Some(FieldSummary {
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
        })
    }

    /// CSV with one row per node: `i,j,u,v,value,mask`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,u,v,value,mask\n");
        for (i, j, uv) in self.grid.nodes() {
            let _ = writeln!(
                s,
                "{i},{j},{},{},{},{}",
                uv[0],
                uv[1],
                self.value(i, j),
                u8::from(self.masked(i, j))
            );
        }
        s
    }

    /// Triangulated surface of the cells touching the footprint, positioned
    /// by `geometry` (node heights of that field), with this field's values
    /// as per-vertex scalars in the same order as the vertices.
    pub fn surface_mesh(&self, geometry: &HeightField) -> Result<(TriangleMesh, Vec<f64>)> {
        if !self.same_grid(geometry) {
            return Err(Error::GridMismatch(
                "surface geometry lies on a different grid".into(),
            ));
        }
        let c = self.grid.cell_dims();
        let mut index = vec![u32::MAX; self.grid.node_count()];
        let mut vertices = Vec::new();
        let mut scalars = Vec::new();
        let mut triangles = Vec::new();
        let mut id = |i: usize, j: usize, vertices: &mut Vec<Point>, scalars: &mut Vec<f64>| {
            let k = self.grid.node(i, j);
            if index[k] == u32::MAX {
                index[k] = vertices.len() as u32;
                vertices.push(geometry.node_point(i, j));
                scalars.push(self.values[k]);
            }
            index[k]
        };
        for j in 0..c[1] {
            for i in 0..c[0] {
                if self.coverage[j * c[0] + i] == 0.0 {
                    continue;
                }
                let a = id(i, j, &mut vertices, &mut scalars);
                let b = id(i + 1, j, &mut vertices, &mut scalars);
                let cc = id(i + 1, j + 1, &mut vertices, &mut scalars);
                let d = id(i, j + 1, &mut vertices, &mut scalars);
                triangles.push([a, b, cc]);
                triangles.push([a, cc, d]);
            }
        }
        let mesh = TriangleMesh {
            vertices,
            triangles,
            normals: None,
        };
        Ok((mesh, scalars))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Per-cell footprint coverage from a regular sub-sample lattice.
pub fn coverage(grid: &GridSpec, footprint: &Footprint) -> Vec<f64> {
    let k = COVERAGE_SUBSAMPLES;
    let c = grid.cell_dims();
    let step = grid.resolution / k as f64;
    let origin = [grid.origin[0] + 0.5 * step, grid.origin[1] + 0.5 * step];
    let (nx, ny) = (c[0] * k, c[1] * k);
    let hits = footprint.raster(origin, step, nx, ny);
    let mut cov = vec![0.0; c[0] * c[1]];
    for sj in 0..ny {
        for si in 0..nx {
            if hits[sj * nx + si] {
                cov[(sj / k) * c[0] + si / k] += 1.0;
            }
        }
    }
    let norm = (k * k) as f64;
    cov.iter_mut().for_each(|x| *x /= norm);
    cov
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector;
    use std::f64::consts::PI;

    fn frame() -> ValveFrame {
        ValveFrame::new(Point::new(1.0, 2.0, 3.0), Vector::z(), Vector::x()).unwrap()
    }

    fn square(x0: f64, y0: f64, side: f64) -> Footprint {
        Footprint::Polygon(vec![
            [x0, y0],
            [x0 + side, y0],
            [x0 + side, y0 + side],
            [x0, y0 + side],
        ])
    }

    #[test]
    fn grid_is_aligned() {
        let g = GridSpec::covering([[0.3, -1.1], [4.2, 2.05]], 0.5, 0.0).unwrap();
        assert_eq!(g.origin, [0.0, -1.5]);
        assert_eq!(g.dims, [10, 9]);
        assert!(GridSpec::covering([[0.0, 0.0]], 0.0, 1.0).is_err());
        assert!(GridSpec::covering(Vec::<[f64; 2]>::new(), 1.0, 1.0).is_err());
    }

    #[test]
    fn flat_unit_square() {
        let g = GridSpec::covering([[-2.0, -2.0], [3.0, 3.0]], 0.5, 0.0).unwrap();
        let f = HeightField::from_fn(frame(), g, &square(0.0, 0.0, 1.0), |_, _| 7.5);
        assert!((f.area().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tilted_plane_secant() {
        let g = GridSpec::covering([[-2.0, -2.0], [3.0, 3.0]], 0.25, 0.0).unwrap();
        let slope = (60f64).to_radians().tan();
        let f = HeightField::from_fn(frame(), g, &square(0.0, 0.0, 1.0), |u, _| slope * u);
        assert!((f.area().unwrap() - 2.0).abs() < 0.02);
    }

    #[test]
    fn spherical_cap() {
        let g = GridSpec::covering([[-7.0, -7.0], [7.0, 7.0]], 0.25, 0.0).unwrap();
        let disc: Vec<[f64; 2]> = (0..720)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 720.0;
                [6.0 * t.cos(), 6.0 * t.sin()]
            })
            .collect();
        let f = HeightField::from_fn(frame(), g, &Footprint::Polygon(disc), |u, v| {
            (100.0 - u * u - v * v).max(0.0).sqrt()
        });
        let h = 10.0 - 8.0;
        let expect = 2.0 * PI * 10.0 * h;
        let got = f.area().unwrap();
        assert!((got / expect - 1.0).abs() < 0.01, "{got} vs {expect}");
    }

    #[test]
    fn triangle_raster_matches_polygon() {
        let tris = Footprint::Triangles(vec![
            [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0]],
            [[0.0, 0.0], [2.0, 2.0], [0.0, 2.0]],
        ]);
        let g = GridSpec::covering([[-1.0, -1.0], [3.0, 3.0]], 0.5, 0.0).unwrap();
        let a = HeightField::from_fn(frame(), g, &tris, |_, _| 0.0);
        let b = HeightField::from_fn(frame(), g, &square(0.0, 0.0, 2.0), |_, _| 0.0);
        assert_eq!(a.coverage, b.coverage);
        assert!((a.area().unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(a.masked_count(), 25);
    }

    #[test]
    fn bilinear_and_summary() {
        let g = GridSpec::covering([[0.0, 0.0], [4.0, 4.0]], 1.0, 0.0).unwrap();
        let f = HeightField::from_fn(frame(), g, &square(0.0, 0.0, 2.0), |u, v| 2.0 * u - v + 1.0);
        assert!((f.bilinear(1.25, 2.5).unwrap() - (2.5 - 2.5 + 1.0)).abs() < 1e-12);
        assert!(f.bilinear(-0.1, 0.0).is_none());
        let s = f.summary().unwrap();
        // Scanlines are half-open, so the top edge row is outside.
        assert_eq!((s.min, s.max), (0.0, 5.0));
        let empty = HeightField::from_fn(frame(), g, &square(10.0, 10.0, 1.0), |_, _| 0.0);
        assert!(empty.area().is_err());
        assert!(empty.summary().is_none());
    }

    #[test]
    fn exports() {
        let g = GridSpec::covering([[0.0, 0.0], [2.0, 2.0]], 1.0, 0.0).unwrap();
        let f = HeightField::from_fn(frame(), g, &square(0.0, 0.0, 1.0), |u, _| u);
        assert_eq!(f.to_csv().lines().count(), 1 + 9);
        let (mesh, scalars) = f.surface_mesh(&f).unwrap();
        assert_eq!(mesh.triangle_count(), 2);
        assert_eq!(scalars.len(), mesh.vertex_count());
    }
}
