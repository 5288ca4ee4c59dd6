//! Leaflet middle surfaces, near-contact point set and coaptation line.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::annulus::ValveFrame;
use crate::error::{Error, Result};
use crate::geometry::{Point, Polyline3D, Vector};
use crate::heightfield::{Footprint, GridSpec, HeightField};
use crate::landmarks::AnnularLandmarks;
use crate::mesh::TriangleMesh;
use crate::rbf::{Kernel, Rbf};

/// Default contact tolerance, mm.
pub const DEFAULT_EPSILON: f64 = 0.001;
/// Largest tolerance tried before giving up on coaptation.
pub const MAX_EPSILON: f64 = 1.0;
/// Default grid resolution, mm.
pub const DEFAULT_GRID_RESOLUTION: f64 = 0.5;
/// Degree of the coaptation polynomials.
pub const LINE_DEGREE: usize = 5;
/// Points on the sampled coaptation polyline.
pub const LINE_SAMPLES: usize = 100;
/// Minimum fraction of footprint bins passing the single-valuedness check.
pub const FOOTPRINT_PASS_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiddleSurfaceParams {
    /// Ridge weight; `None` picks 1e-3·N·s̄⁵ from the site count N and the
    /// mean nearest-neighbour spacing s̄.
    pub lambda: Option<f64>,
    /// Vertices are averaged in square bins of this size before fitting;
    /// `None` fits every vertex.
    pub bin_size: Option<f64>,
}

impl Default for MiddleSurfaceParams {
    fn default() -> Self {
        MiddleSurfaceParams {
            lambda: None,
            bin_size: Some(1.0),
        }
    }
}

fn bin_key(u: f64, v: f64, size: f64) -> (i64, i64) {
    ((u / size).floor() as i64, (v / size).floor() as i64)
}

/// Averages `(u, v, h)` samples per square bin, in key order.
fn bin_average(samples: &[Vector], size: f64) -> Vec<Vector> {
    let mut bins: BTreeMap<(i64, i64), (Vector, usize)> = BTreeMap::new();
    for s in samples {
        let e = bins
            .entry(bin_key(s.x, s.y, size))
            .or_insert((Vector::zeros(), 0));
        e.0 += s;
        e.1 += 1;
    }
    bins.into_values().map(|(sum, n)| sum / n as f64).collect()
}

fn mean_nearest_spacing(sites: &[[f64; 2]]) -> f64 {
    if sites.len() < 2 {
        return 0.0;
    }
    let total: f64 = sites
        .iter()
        .enumerate()
        .map(|(i, a)| {
            sites
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / sites.len() as f64
}

/// Smooth height function h(u, v) through a leaflet mesh, evaluated on
/// `grid`. A thickened leaflet has two walls over most of its footprint;
/// binning and the ridge term put the fitted surface between them.
pub fn fit_middle_surface(
    mesh: &TriangleMesh,
    frame: &ValveFrame,
    grid: &GridSpec,
    params: &MiddleSurfaceParams,
) -> Result<HeightField> {
    if mesh.is_empty() {
        return Err(Error::Empty("middle surface of an empty mesh"));
    }
    let local: Vec<Vector> = mesh.vertices.iter().map(|p| frame.to_local(p)).collect();
    let data = match params.bin_size {
        Some(b) if b > 0.0 => bin_average(&local, b),
        Some(b) => {
            return Err(Error::InvalidInput(format!(
                "bin size must be positive, got {b}"
            )))
        }
        None => local.clone(),
    };
    let sites: Vec<[f64; 2]> = data.iter().map(|d| [d.x, d.y]).collect();
    let values: Vec<f64> = data.iter().map(|d| d.z).collect();
    let lambda = params
        .lambda
        .unwrap_or_else(|| 1e-3 * sites.len() as f64 * mean_nearest_spacing(&sites).powi(5));
    let rbf = Rbf::fit(Kernel::Polyharmonic5, &sites, &values, lambda)?;

    check_single_valued(
        mesh,
        &local,
        &rbf,
        params.bin_size.unwrap_or(1.0),
        grid.resolution,
    )?;

    let footprint = Footprint::of_mesh(mesh, frame);
    Ok(HeightField::from_fn(*frame, *grid, &footprint, |u, v| {
        rbf.eval(u, v)
    }))
}

/// Rejects meshes that fold over the plane: in at least 90% of the bins the
/// spread of vertex heights about the fitted surface must stay below twice
/// the vertical wall thickness, i.e. the wall thickness (2·volume/area for
/// closed meshes) scaled by √(1 + |∇h|²) of the fitted surface.
fn check_single_valued(
    mesh: &TriangleMesh,
    local: &[Vector],
    rbf: &Rbf,
    bin: f64,
    resolution: f64,
) -> Result<()> {
    let thickness = if mesh.is_closed() {
        let area = crate::mesh::surface_area(mesh)?;
        2.0 * mesh.enclosed_volume().abs() / area
    } else {
        0.0
    };
    let slack = 0.25 * resolution;
    let mut bins: BTreeMap<(i64, i64), (f64, f64)> = BTreeMap::new();
    for p in local {
        let r = p.z - rbf.eval(p.x, p.y);
        let e = bins
            .entry(bin_key(p.x, p.y, bin))
            .or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(r);
        e.1 = e.1.max(r);
    }
    let limit = |key: &(i64, i64)| {
        let (u, v) = ((key.0 as f64 + 0.5) * bin, (key.1 as f64 + 0.5) * bin);
        let d = 0.25 * bin;
        let gu = (rbf.eval(u + d, v) - rbf.eval(u - d, v)) / (2.0 * d);
        let gv = (rbf.eval(u, v + d) - rbf.eval(u, v - d)) / (2.0 * d);
        2.0 * thickness * (1.0 + gu * gu + gv * gv).sqrt() + slack
    };
    let pass = bins
        .iter()
        .filter(|(k, (lo, hi))| hi - lo < limit(k))
        .count();
    let frac = pass as f64 / bins.len() as f64;
    if frac < FOOTPRINT_PASS_FRACTION {
        return Err(Error::Degenerate(format!(
            "leaflet is not a height function over the orifice plane: {:.0}% of footprint bins within twice the wall thickness",
            100.0 * frac
        )));
    }
    Ok(())
}

/// Near-contact points of two middle surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaptationCandidates {
    pub points: Vec<Point>,
    /// Tolerance at which the set became non-empty (or the maximum tried).
    pub epsilon: f64,
}

/// Nodes where the two masks are dilated by this margin still count as
/// shared footprint; the leaflets only touch along their free edges.
pub const CONTACT_MARGIN: f64 = 1.0;

fn dilate(mask: &[bool], dims: [usize; 2], radius: usize) -> Vec<bool> {
    let [nx, ny] = dims;
    let mut rows = vec![false; mask.len()];
    for j in 0..ny {
        for i in 0..nx {
            if mask[j * nx + i] {
                for ii in i.saturating_sub(radius)..=(i + radius).min(nx - 1) {
                    rows[j * nx + ii] = true;
                }
            }
        }
    }
    let mut out = vec![false; mask.len()];
    for j in 0..ny {
        for i in 0..nx {
            if rows[j * nx + i] {
                for jj in j.saturating_sub(radius)..=(j + radius).min(ny - 1) {
                    out[jj * nx + i] = true;
                }
            }
        }
    }
    out
}

/// Width of the strips the contact band is cut into along its length.
pub const STRIP_WIDTH: f64 = 1.0;

/// Points where the anterior and posterior middle surfaces meet: grid nodes
/// with |h_AL − h_PL| < ε, plus sign changes of the difference along grid
/// edges, each lifted to the mean height. The search is restricted to the
/// shared (slightly dilated) footprint, which is cut into strips of
/// [`STRIP_WIDTH`] along its principal axis. A strip with nothing at ε
/// doubles its own tolerance up to [`MAX_EPSILON`], so a seam whose surfaces
/// fall just short of crossing is still represented along its whole length.
pub fn find_coaptation_candidates(
    al: &HeightField,
    pl: &HeightField,
    epsilon: f64,
) -> Result<CoaptationCandidates> {
    if !al.same_grid(pl) {
        return Err(Error::GridMismatch(
            "leaflet height fields lie on different grids".into(),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "contact tolerance must be positive, got {epsilon}"
        )));
    }
    let g = al.grid;
    let radius = (CONTACT_MARGIN / g.resolution).round() as usize;
    let ma = dilate(&al.mask, g.dims, radius);
    let mp = dilate(&pl.mask, g.dims, radius);
    let shared: Vec<usize> = (0..g.node_count()).filter(|&k| ma[k] && mp[k]).collect();
    if shared.is_empty() {
        return Ok(CoaptationCandidates {
            points: Vec::new(),
            epsilon: MAX_EPSILON,
        });
    }
    let in_band = |k: usize| ma[k] && mp[k];
    let diff: Vec<f64> = al
        .values
        .iter()
        .zip(&pl.values)
        .map(|(a, b)| a - b)
        .collect();
    let mean = |k: usize| 0.5 * (al.values[k] + pl.values[k]);
    let uv = |k: usize| g.node_uv(k % g.dims[0], k / g.dims[0]);

    let axis = principal_axis(shared.iter().map(|&k| uv(k)));
    let proj = |p: [f64; 2]| p[0] * axis[0] + p[1] * axis[1];
    let lo = shared
        .iter()
        .map(|&k| proj(uv(k)))
        .fold(f64::INFINITY, f64::min);
    let strip = |p: [f64; 2]| ((proj(p) - lo) / STRIP_WIDTH).floor().max(0.0) as usize;

    // (uv, height) per strip: crossings first, then nodes.
    let mut crossings: BTreeMap<usize, Vec<([f64; 2], f64)>> = BTreeMap::new();
    for &k in &shared {
        let (i, j) = (k % g.dims[0], k / g.dims[0]);
        for (di, dj) in [(1usize, 0usize), (0, 1)] {
            let (i2, j2) = (i + di, j + dj);
            if i2 >= g.dims[0] || j2 >= g.dims[1] {
                continue;
            }
            let k2 = g.node(i2, j2);
            if in_band(k2) && diff[k] * diff[k2] < 0.0 {
                let t = diff[k] / (diff[k] - diff[k2]);
                let [u0, v0] = g.node_uv(i, j);
                let [u1, v1] = g.node_uv(i2, j2);
                let at = [u0 + t * (u1 - u0), v0 + t * (v1 - v0)];
                crossings
                    .entry(strip(at))
                    .or_default()
                    .push((at, mean(k) + t * (mean(k2) - mean(k))));
            }
        }
    }
    let mut nodes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &k in &shared {
        nodes.entry(strip(uv(k))).or_default().push(k);
    }

    let mut points = Vec::new();
    let mut widest = epsilon;
    for (id, ks) in &nodes {
        let mut eps = epsilon;
        let crossed = crossings.get(id).map_or(0, Vec::len) > 0;
        loop {
            let before = points.len();
            points.extend(ks.iter().filter(|&&k| diff[k].abs() < eps).map(|&k| {
                let [u, v] = uv(k);
                al.frame.from_local(u, v, mean(k))
            }));
            if crossed || points.len() > before || eps >= MAX_EPSILON {
                break;
            }
            eps = (2.0 * eps).min(MAX_EPSILON);
        }
        if let Some(cs) = crossings.get(id) {
            points.extend(
                cs.iter()
                    .map(|(at, h)| al.frame.from_local(at[0], at[1], *h)),
            );
        }
        if eps > widest {
            log::debug!("contact strip {id}: tolerance widened to {eps} mm");
            widest = eps;
        }
    }
    if points.is_empty() {
        log::info!("no coaptation points up to {MAX_EPSILON} mm");
    }
    Ok(CoaptationCandidates {
        points,
        epsilon: widest,
    })
}

/// Unit direction of largest spread of a planar point set, sign fixed so the
/// larger component is positive.
fn principal_axis(points: impl Iterator<Item = [f64; 2]>) -> [f64; 2] {
    let pts: Vec<[f64; 2]> = points.collect();
    let n = pts.len() as f64;
    let c = pts
        .iter()
        .fold([0.0; 2], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &pts {
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let a = [theta.cos(), theta.sin()];
    let big = if a[0].abs() >= a[1].abs() { a[0] } else { a[1] };
    if big < 0.0 {
        [-a[0], -a[1]]
    } else {
        a
    }
}

/// Coaptation line as two quintics of the inter-commissural coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaptationCurve {
    pub origin: Point,
    /// Inter-commissural direction projected into the orifice plane.
    pub axis_u: Vector,
    /// `normal × axis_u`.
    pub axis_v: Vector,
    pub normal: Vector,
    pub u_range: [f64; 2],
    /// Coefficients in the scaled variable s ∈ [−1, 1], constant term first.
    pub coeff_v: Vec<f64>,
    pub coeff_h: Vec<f64>,
    pub rms: f64,
    pub n_points: usize,
    pub polyline: Polyline3D,
}

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &x| acc * s + x)
}

impl CoaptationCurve {
    pub fn scaled_param(&self, u: f64) -> f64 {
        (2.0 * u - self.u_range[0] - self.u_range[1]) / (self.u_range[1] - self.u_range[0])
    }

    /// Curve point at inter-commissural coordinate `u`.
    pub fn point_at(&self, u: f64) -> Point {
        let s = self.scaled_param(u);
        self.origin
            + self.axis_u * u
            + self.axis_v * horner(&self.coeff_v, s)
            + self.normal * horner(&self.coeff_h, s)
    }
}

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-12 * max) {
        return Err(Error::RankDeficient(
            "coaptation points do not determine a quintic".into(),
        ));
    }
    svd.solve(b, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))
}

/// Least-squares quintics v(u) and h(u) through the candidate points, with
/// u along the commissure-to-commissure direction.
pub fn fit_coaptation_line(
    points: &[Point],
    landmarks: &AnnularLandmarks,
    frame: &ValveFrame,
) -> Result<CoaptationCurve> {
    let need = 2 * (LINE_DEGREE + 1);
    if points.len() < need {
        return Err(Error::Degenerate(format!(
            "coaptation fit needs at least {need} points, got {}",
            points.len()
        )));
    }
    let d = landmarks.lc.point - landmarks.mc.point;
    let n = frame.normal;
    let axis_u = (d - n * d.dot(&n))
        .try_normalize(1e-12)
        .ok_or_else(|| Error::Degenerate("commissures coincide in the orifice plane".into()))?;
    let axis_v = n.cross(&axis_u);
    let origin = frame.center;
    let local: Vec<[f64; 3]> = points
        .iter()
        .map(|p| {
            let r = p - origin;
            [r.dot(&axis_u), r.dot(&axis_v), r.dot(&n)]
        })
        .collect();
    let lo = local.iter().map(|l| l[0]).fold(f64::INFINITY, f64::min);
    let hi = local.iter().map(|l| l[0]).fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-9) {
        return Err(Error::Degenerate(
            "coaptation points have no extent along the commissural axis".into(),
        ));
    }
    let scale = |u: f64| (2.0 * u - lo - hi) / (hi - lo);
    let m = LINE_DEGREE + 1;
    let mut a = DMatrix::<f64>::zeros(local.len(), m);
    for (r, l) in local.iter().enumerate() {
        let s = scale(l[0]);
        let mut p = 1.0;
        for c in 0..m {
            a[(r, c)] = p;
            p *= s;
        }
    }
    let bv = DVector::from_iterator(local.len(), local.iter().map(|l| l[1]));
    let bh = DVector::from_iterator(local.len(), local.iter().map(|l| l[2]));
    let cv = lstsq(&a, &bv)?;
    let ch = lstsq(&a, &bh)?;
    let rv = &a * &cv - &bv;
    let rh = &a * &ch - &bh;
    let rms = ((rv.norm_squared() + rh.norm_squared()) / local.len() as f64).sqrt();

    let mut curve = CoaptationCurve {
        origin,
        axis_u,
        axis_v,
        normal: n,
        u_range: [lo, hi],
        coeff_v: cv.iter().copied().collect(),
        coeff_h: ch.iter().copied().collect(),
        rms,
        n_points: points.len(),
        polyline: Polyline3D {
            points: Vec::new(),
            closed: false,
        },
    };
    let samples: Vec<Point> = (0..LINE_SAMPLES)
        .map(|k| curve.point_at(lo + (hi - lo) * k as f64 / (LINE_SAMPLES - 1) as f64))
        .collect();
    curve.polyline = Polyline3D::new(samples, false)?;
    Ok(curve)
}
