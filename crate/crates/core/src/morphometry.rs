//! Annulus and leaflet measurements.

use serde::{Deserialize, Serialize};

use crate::annulus::ValveFrame;
use crate::error::{Error, Result};
use crate::geometry::{Plane, Point};
use crate::heightfield::{FieldSummary, Footprint, GridSpec, HeightField};
use crate::landmarks::AnnularLandmarks;
use crate::mesh::section_points;
use crate::mesh::TriangleMesh;
use crate::rbf::{Kernel, Rbf};
use crate::spline::AnnulusCurve;

/// Curve samples used as thin-plate sites for the orifice surface.
pub const ORIFICE_SITES: usize = 120;
/// Vertices of the projected annulus polygon bounding the orifice surface.
pub const ORIFICE_OUTLINE: usize = 720;
/// Samples used to find the height extremes of the annulus.
pub const HEIGHT_SAMPLES: usize = 3600;
/// Largest allowed gap between a length endpoint and the leaflet footprint, mm.
pub const BRACKET_TOLERANCE: f64 = 2.0;
/// Margin around the annulus and leaflets when building the shared grid, mm.
pub const GRID_MARGIN: f64 = 2.0;

/// `(D_AP, D_CC)`: SH to PAM and MC to LC distances.
pub fn annular_diameters(lm: &AnnularLandmarks) -> (f64, f64) {
    (
        (lm.sh.point - lm.pam.point).norm(),
        (lm.mc.point - lm.lc.point).norm(),
    )
}

pub fn annular_length(curve: &AnnulusCurve) -> f64 {
    curve.length()
}

/// Extent of the curve along the frame normal.
pub fn annular_height(curve: &AnnulusCurve, frame: &ValveFrame) -> f64 {
    let t0 = curve.start();
    let step = std::f64::consts::TAU / HEIGHT_SAMPLES as f64;
    let h = |t: f64| frame.height(&curve.point(t));
    let hs: Vec<f64> = (0..HEIGHT_SAMPLES)
        .map(|i| h(t0 + step * i as f64))
        .collect();
    let arg = |better: fn(f64, f64) -> bool| {
        (1..hs.len()).fold(0, |best, i| if better(hs[i], hs[best]) { i } else { best })
    };
    // Parabolic refinement through the extreme sample and its neighbours.
    let refine = |i: usize| {
        let n = hs.len();
        let (a, b, c) = (hs[(i + n - 1) % n], hs[i], hs[(i + 1) % n]);
        let den = a - 2.0 * b + c;
        if den.abs() < 1e-15 {
            return b;
        }
        let x = (0.5 * (a - c) / den).clamp(-1.0, 1.0);
        h(t0 + step * (i as f64 + x))
    };
    let hi = refine(arg(|a, b| a > b)).max(hs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let lo = refine(arg(|a, b| a < b)).min(hs.iter().copied().fold(f64::INFINITY, f64::min));
    hi - lo
}

fn segments_cross(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let (d1, d2) = (orient(p, q, r), orient(p, q, s));
    let (d3, d4) = (orient(r, s, p), orient(r, s, q));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Projection of the annulus onto the orifice plane as `(u, v)` polygon
/// vertices; fails if the projection crosses itself.
pub fn orifice_outline(curve: &AnnulusCurve, frame: &ValveFrame) -> Result<Vec<[f64; 2]>> {
    let poly: Vec<[f64; 2]> = curve
        .sample_by_arc_length(ORIFICE_OUTLINE)
        .into_iter()
        .map(|(_, p)| {
            let l = frame.to_local(&p);
            [l.x, l.y]
        })
        .collect();
    let n = poly.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return Err(Error::Degenerate("projected annulus crosses itself".into()));
            }
        }
    }
    Ok(poly)
}

/// Grid over the projected annulus and leaflets, with a fixed margin.
pub fn valve_grid(
    curve: &AnnulusCurve,
    frame: &ValveFrame,
    leaflets: &[&TriangleMesh],
    resolution: f64,
) -> Result<GridSpec> {
    let project = |p: &Point| {
        let l = frame.to_local(p);
        [l.x, l.y]
    };
    let pts = curve
        .sample_by_arc_length(ORIFICE_OUTLINE)
        .into_iter()
        .map(|(_, p)| project(&p))
        .chain(leaflets.iter().flat_map(|m| m.vertices.iter().map(project)))
        .collect::<Vec<_>>();
    GridSpec::covering(pts, resolution, GRID_MARGIN)
}

/// Thin-plate surface through the annulus heights over the projected
/// annulus, and its area.
pub fn orifice_surface(
    curve: &AnnulusCurve,
    frame: &ValveFrame,
    grid: &GridSpec,
) -> Result<(HeightField, f64)> {
    let outline = orifice_outline(curve, frame)?;
    let (lo, hi) = (
        grid.node_uv(0, 0),
        grid.node_uv(grid.dims[0] - 1, grid.dims[1] - 1),
    );
    if outline
        .iter()
        .any(|p| p[0] < lo[0] || p[0] > hi[0] || p[1] < lo[1] || p[1] > hi[1])
    {
        return Err(Error::InvalidInput(
            "grid does not cover the projected annulus".into(),
        ));
    }
    let (sites, values): (Vec<[f64; 2]>, Vec<f64>) = curve
        .sample_by_arc_length(ORIFICE_SITES)
        .into_iter()
        .map(|(_, p)| {
            let l = frame.to_local(&p);
            ([l.x, l.y], l.z)
        })
        .unzip();
    let tps = Rbf::fit(Kernel::ThinPlate, &sites, &values, 0.0)?;
    let field = HeightField::from_fn(*frame, *grid, &Footprint::Polygon(outline), |u, v| {
        tps.eval(u, v)
    });
    let area = field.area()?;
    Ok((field, area))
}

/// Arc length of the section of `field` with the vertical plane through
/// `anchor` and `tip`, between the projections of the two points. The
/// samples inside the leaflet footprint must form one run reaching both
/// ends to within [`BRACKET_TOLERANCE`].
pub fn leaflet_length(
    field: &HeightField,
    plane: &Plane,
    anchor: &Point,
    tip: &Point,
) -> Result<f64> {
    let frame = &field.frame;
    if plane.normal.dot(&frame.normal).abs() > 1e-6 {
        return Err(Error::InvalidInput(
            "length plane must contain the valve axis".into(),
        ));
    }
    let (a, b) = (frame.to_local(anchor), frame.to_local(tip));
    let span = (b.xy() - a.xy()).norm();
    if span < 1e-9 {
        return Err(Error::Degenerate(
            "anchor and tip project to the same point".into(),
        ));
    }
    let step = field.grid.resolution / 4.0;
    let n = (span / step).ceil() as usize;
    let mut pts = Vec::with_capacity(n + 1);
    let mut inside = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let (u, v) = (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        let h = field.bilinear(u, v).ok_or_else(|| {
            Error::NoIntersection("length path leaves the height-field grid".into())
        })?;
        pts.push(frame.from_local(u, v, h));
        inside.push(field.coverage_at(u, v) > 0.0);
    }
    let first = inside
        .iter()
        .position(|&x| x)
        .ok_or_else(|| Error::NoIntersection("length plane misses the leaflet".into()))?;
    let last = inside.iter().rposition(|&x| x).unwrap();
    if inside[first..=last].iter().any(|&x| !x) {
        return Err(Error::NoIntersection(
            "leaflet section between anchor and tip is not connected".into(),
        ));
    }
    let gap = |k: usize| span * k as f64 / n as f64;
    if gap(first) > BRACKET_TOLERANCE || gap(n - last) > BRACKET_TOLERANCE {
        return Err(Error::NoIntersection(
            "anchor or tip lies off the leaflet section".into(),
        ));
    }
    Ok(pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
}

/// Alternative length on the leaflet mesh itself: section points of the
/// mesh with `plane` are binned along the anchor-tip direction and the mean
/// point of each bin is joined into a polyline from anchor to tip. Empty
/// runs longer than [`BRACKET_TOLERANCE`] count as a break.
pub fn leaflet_length_on_mesh(
    mesh: &TriangleMesh,
    plane: &Plane,
    frame: &ValveFrame,
    anchor: &Point,
    tip: &Point,
    bin: f64,
) -> Result<f64> {
    let (a, b) = (frame.to_local(anchor), frame.to_local(tip));
    let dir = b.xy() - a.xy();
    let span = dir.norm();
    if span < 1e-9 || !(bin > 0.0) {
        return Err(Error::Degenerate("empty length span".into()));
    }
    let dir = dir / span;
    let nbins = (span / bin).ceil() as usize;
    let mut sums = vec![(nalgebra::Vector3::zeros(), 0usize); nbins];
    for p in section_points(mesh, plane, None)? {
        let l = frame.to_local(&p);
        let t = (l.xy() - a.xy()).dot(&dir);
        if (0.0..span).contains(&t) {
            let k = ((t / bin) as usize).min(nbins - 1);
            sums[k].0 += p.coords;
            sums[k].1 += 1;
        }
    }
    let filled: Vec<usize> = (0..nbins).filter(|&k| sums[k].1 > 0).collect();
    let (Some(&f), Some(&l)) = (filled.first(), filled.last()) else {
        return Err(Error::NoIntersection(
            "length plane misses the leaflet mesh".into(),
        ));
    };
    if filled
        .windows(2)
        .any(|w| (w[1] - w[0] - 1) as f64 * bin > BRACKET_TOLERANCE)
    {
        return Err(Error::NoIntersection(
            "leaflet section between anchor and tip is not connected".into(),
        ));
    }
    if f as f64 * bin > BRACKET_TOLERANCE || (nbins - 1 - l) as f64 * bin > BRACKET_TOLERANCE {
        return Err(Error::NoIntersection(
            "anchor or tip lies off the leaflet section".into(),
        ));
    }
    let mut pts = vec![*anchor];
    pts.extend(
        filled
            .iter()
            .map(|&k| Point::from(sums[k].0 / sums[k].1 as f64)),
    );
    pts.push(*tip);
    Ok(pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
}

pub fn leaflet_area(field: &HeightField) -> Result<f64> {
    field.area()
}

/// Signed height of a leaflet above the orifice surface on the overlap of
/// their footprints; positive values point to the atrium.
pub fn leaflet_height_field(leaflet: &HeightField, orifice: &HeightField) -> Result<HeightField> {
    if !leaflet.same_grid(orifice) {
        return Err(Error::GridMismatch(
            "leaflet and orifice surfaces lie on different grids".into(),
        ));
    }
    let mask: Vec<bool> = leaflet
        .mask
        .iter()
        .zip(&orifice.mask)
        .map(|(a, b)| *a && *b)
        .collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::Empty(
            "leaflet and orifice footprints do not overlap",
        ));
    }
    Ok(HeightField {
        frame: leaflet.frame,
        grid: leaflet.grid,
        values: leaflet
            .values
            .iter()
            .zip(&orifice.values)
            .map(|(a, b)| a - b)
            .collect(),
        mask,
        coverage: leaflet
            .coverage
            .iter()
            .zip(&orifice.coverage)
            .map(|(a, b)| a.min(*b))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusMeasures {
    pub d_cc_mm: f64,
    pub d_ap_mm: f64,
    pub height_mm: f64,
    pub length_mm: f64,
    pub area_mm2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafletMeasures {
    pub length_mm: f64,
    pub area_mm2: f64,
    pub height_min_mm: f64,
    pub height_max_mm: f64,
    pub height_mean_mm: f64,
}

impl LeafletMeasures {
    pub fn new(length_mm: f64, area_mm2: f64, height: FieldSummary) -> Self {
        LeafletMeasures {
            length_mm,
            area_mm2,
            height_min_mm: height.min,
            height_max_mm: height.max,
            height_mean_mm: height.mean,
        }
    }
}
