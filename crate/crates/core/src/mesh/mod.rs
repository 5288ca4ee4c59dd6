//! Indexed triangle meshes and the primitives the pipeline builds on them.

mod marching_cubes;
mod section;
mod smoothing;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Isometry3;

use crate::error::{Error, Result};
use crate::geometry::{Point, Vector};

pub use marching_cubes::{extract_surface, extract_surface_where};
pub use section::{plane_section, section_points};
pub use smoothing::{smooth_windowed_sinc, SmoothingParams};

/// Triangles with area below this are dropped during construction.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle surface, vertex positions in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vector>>,
}

#[inline]
fn tri_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl TriangleMesh {
    /// Builds a mesh, validating indices, dropping degenerate triangles and
    /// removing vertices no triangle references.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles
            .iter()
            .find(|t| t.iter().any(|&i| i as usize >= n))
        {
            return Err(Error::InvalidInput(format!(
                "triangle {t:?} references a vertex outside 0..{n}"
            )));
        }
        let kept: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| {
                t[0] != t[1]
                    && t[1] != t[2]
                    && t[0] != t[2]
                    && tri_area(
                        &vertices[t[0] as usize],
                        &vertices[t[1] as usize],
                        &vertices[t[2] as usize],
                    ) >= DEGENERATE_AREA
            })
            .collect();
        Ok(Self::compact(vertices, kept))
    }

    /// Mesh without validation or cleanup; used when connectivity is already
    /// known to be valid.
    pub(crate) fn from_parts(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> Self {
        TriangleMesh {
            vertices,
            triangles,
            normals: None,
        }
    }

    fn compact(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> Self {
        let mut remap = vec![u32::MAX; vertices.len()];
        let mut out_v = Vec::new();
        let mut out_t = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let mut nt = [0u32; 3];
            for (k, &i) in t.iter().enumerate() {
                let slot = &mut remap[i as usize];
                if *slot == u32::MAX {
                    *slot = out_v.len() as u32;
                    out_v.push(vertices[i as usize]);
                }
                nt[k] = *slot;
            }
            out_t.push(nt);
        }
        TriangleMesh::from_parts(out_v, out_t)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn corners(&self, t: &[u32; 3]) -> [Point; 3] {
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// Signed volume enclosed by the mesh (divergence theorem); positive for
    /// closed meshes with outward winding.
    pub fn enclosed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    /// Undirected edges with the number of incident triangles.
    pub fn edge_incidence(&self) -> HashMap<(u32, u32), u32> {
        let mut edges = HashMap::with_capacity(self.triangles.len() * 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_incidence().len() as i64
            + self.triangles.len() as i64
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.is_empty() && self.edge_incidence().values().all(|&c| c == 2)
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|p| iso * p).collect(),
            triangles: self.triangles.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| iso.rotation * n).collect()),
        }
    }

    pub fn scaled(&self, k: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point::from(p.coords * k))
                .collect(),
            triangles: self.triangles.clone(),
            normals: self.normals.clone(),
        }
    }

    /// Area-weighted vertex normals.
    pub fn with_vertex_normals(mut self) -> TriangleMesh {
        let mut acc = vec![Vector::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = self.corners(t);
            let n = (b - a).cross(&(c - a));
            for &i in t {
                acc[i as usize] += n;
            }
        }
        for n in acc.iter_mut() {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        self.normals = Some(acc);
        self
    }

    /// Concatenates meshes without merging vertices.
    pub fn merged(meshes: &[TriangleMesh]) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for m in meshes {
            let off = vertices.len() as u32;
            vertices.extend_from_slice(&m.vertices);
            triangles.extend(
                m.triangles
                    .iter()
                    .map(|t| [t[0] + off, t[1] + off, t[2] + off]),
            );
        }
        TriangleMesh::from_parts(vertices, triangles)
    }

    /// Wavefront OBJ text (vertices and faces, 1-based indices).
    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 40 + self.triangles.len() * 24);
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        if let Some(ns) = &self.normals {
            for n in ns {
                let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
            }
            for t in &self.triangles {
                let _ = writeln!(
                    s,
                    "f {0}//{0} {1}//{1} {2}//{2}",
                    t[0] + 1,
                    t[1] + 1,
                    t[2] + 1
                );
            }
        } else {
            for t in &self.triangles {
                let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
            }
        }
        s
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_obj()).map_err(|e| Error::io(path, e))
    }
}

/// Sum of triangle areas.
pub fn surface_area(mesh: &TriangleMesh) -> Result<f64> {
    if mesh.is_empty() {
        return Err(Error::Empty("surface area of an empty mesh"));
    }
    Ok(mesh
        .triangles
        .iter()
        .map(|t| {
            let [a, b, c] = mesh.corners(t);
            tri_area(&a, &b, &c)
        })
        .sum())
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

/// Splits a mesh into vertex-connected components, ordered by their first
/// triangle.
pub fn connected_components(mesh: &TriangleMesh) -> Result<Vec<TriangleMesh>> {
    if mesh.is_empty() {
        return Err(Error::Empty("components of an empty mesh"));
    }
    let mut parent: Vec<u32> = (0..mesh.vertices.len() as u32).collect();
    for t in &mesh.triangles {
        let a = find(&mut parent, t[0]);
        for &v in &t[1..] {
            let b = find(&mut parent, v);
            if a != b {
                parent[b as usize] = a;
            }
        }
    }
    let mut order: HashMap<u32, usize> = HashMap::new();
    let mut groups: Vec<Vec<[u32; 3]>> = Vec::new();
    for t in &mesh.triangles {
        let root = find(&mut parent, t[0]);
        let idx = *order.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[idx].push(*t);
    }
    Ok(groups
        .into_iter()
        .map(|tris| TriangleMesh::compact(mesh.vertices.clone(), tris))
        .collect())
}

/// Uniformly subsamples the surface so that sample spacing is at most
/// `spacing` (vertices are always included).
pub fn sample_surface(mesh: &TriangleMesh, spacing: f64) -> Vec<Point> {
    let mut out = mesh.vertices.clone();
    for t in &mesh.triangles {
        let [a, b, c] = mesh.corners(t);
        let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
        let m = (longest / spacing).ceil() as usize;
        if m < 2 {
            continue;
        }
        for i in 0..=m {
            for j in 0..=(m - i) {
                let k = m - i - j;
                // Corners are already present as vertices.
                if i == m || j == m || k == m {
                    continue;
                }
                let (wa, wb, wc) = (
                    i as f64 / m as f64,
                    j as f64 / m as f64,
                    k as f64 / m as f64,
                );
                out.push(Point::from(a.coords * wa + b.coords * wb + c.coords * wc));
            }
        }
    }
    out
}
