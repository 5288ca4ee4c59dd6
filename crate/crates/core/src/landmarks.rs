//! Annular landmarks (saddle horn, posterior midpoint, commissures) and
//! leaflet tips.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::annulus::ValveFrame;
use crate::error::{Error, Result};
use crate::geometry::{Plane, Point};
use crate::mesh::{plane_section, TriangleMesh};
use crate::spline::AnnulusCurve;

/// Height samples per turn used to bracket the extrema.
const HEIGHT_SAMPLES: usize = 3600;
/// Minimum angular separation between the two commissures.
pub const COMMISSURE_SEPARATION_DEG: f64 = 60.0;
/// PAM snaps to a curvature minimum only within this window.
pub const PAM_SNAP_DEG: f64 = 10.0;
/// Annuli with a height range below this are considered flat.
pub const FLAT_TOLERANCE: f64 = 1e-6;

/// A point on the annulus curve with its parameter and arc-length position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub point: Point,
    pub param: f64,
    pub arc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnularLandmarks {
    pub sh: CurvePoint,
    pub pam: CurvePoint,
    pub mc: CurvePoint,
    pub lc: CurvePoint,
}

impl AnnularLandmarks {
    /// Name and point of each landmark in report order.
    pub fn named(&self) -> [(&'static str, Point); 4] {
        [
            ("SH", self.sh.point),
            ("PAM", self.pam.point),
            ("MC", self.mc.point),
            ("LC", self.lc.point),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafletTips {
    pub anterior: Point,
    pub posterior: Point,
    /// Plane through SH and PAM perpendicular to the orifice plane.
    pub plane: Plane,
}

/// Angular distance on the circle, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn curve_point(curve: &AnnulusCurve, t: f64) -> CurvePoint {
    let t = curve.start() + (t - curve.start()).rem_euclid(TAU);
    CurvePoint {
        point: curve.point(t),
        param: t,
        arc: curve.arc_length_at(t),
    }
}

/// Local minima of a cyclic sequence (plateaus report their first index).
fn cyclic_minima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let (p, q) = (values[(i + n - 1) % n], values[(i + 1) % n]);
            values[i] < p && values[i] <= q
        })
        .collect()
}

/// SH is the highest curve point along the frame normal, MC and LC the two
/// lowest local height minima at least 60° apart, PAM the point half the
/// perimeter from SH (moved to a nearby curvature minimum within 10°).
pub fn detect_annular_landmarks(
    curve: &AnnulusCurve,
    frame: &ValveFrame,
) -> Result<AnnularLandmarks> {
    let t0 = curve.start();
    let step = TAU / HEIGHT_SAMPLES as f64;
    let height = |t: f64| frame.height(&curve.point(t));
    let hs: Vec<f64> = (0..HEIGHT_SAMPLES)
        .map(|i| height(t0 + step * i as f64))
        .collect();
    let (lo, hi) = hs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &h| {
            (a.min(h), b.max(h))
        });
    if hi - lo < FLAT_TOLERANCE {
        return Err(Error::Degenerate(
            "annulus is flat: no distinct height minima".into(),
        ));
    }

    let imax = (0..HEIGHT_SAMPLES)
        .max_by(|&a, &b| hs[a].partial_cmp(&hs[b]).unwrap())
        .unwrap();
    let tc = t0 + step * imax as f64;
    let t_sh = golden_min(|t| -height(t), tc - step, tc + step);

    let mut minima: Vec<(f64, f64)> = cyclic_minima(&hs)
        .into_iter()
        .map(|i| {
            let tc = t0 + step * i as f64;
            let t = golden_min(height, tc - step, tc + step);
            (t, height(t))
        })
        .collect();
    minima.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let first = *minima
        .first()
        .ok_or_else(|| Error::Degenerate("annulus height has no local minimum".into()))?;
    let sep = COMMISSURE_SEPARATION_DEG.to_radians();
    let second = *minima
        .iter()
        .skip(1)
        .find(|m| angular_distance(m.0, first.0) >= sep)
        .ok_or_else(|| Error::Degenerate("fewer than two distinct annulus height minima".into()))?;

    let length = curve.length();
    let mut t_pam = curve.param_at_arc_length(curve.arc_length_at(t_sh) + 0.5 * length);
    if let Some(t) = curvature_minimum_near(curve, t_pam, PAM_SNAP_DEG.to_radians()) {
        t_pam = t;
    }

    let sh = curve_point(curve, t_sh);
    let pam = curve_point(curve, t_pam);
    let (a, b) = (curve_point(curve, first.0), curve_point(curve, second.0));
    let chirality = |c: &CurvePoint| {
        (frame.center - sh.point)
            .cross(&(c.point - frame.center))
            .dot(&frame.normal)
    };
    let (lc, mc) = if chirality(&a) > 0.0 { (a, b) } else { (b, a) };
    let lm = AnnularLandmarks { sh, pam, mc, lc };
    if !cyclic_order_holds(&lm) {
        return Err(Error::Degenerate(
            "posterior midpoint does not lie between the commissures opposite the saddle horn"
                .into(),
        ));
    }
    Ok(lm)
}

/// The closest local curvature minimum within `window` of `t`, if any.
fn curvature_minimum_near(curve: &AnnulusCurve, t: f64, window: f64) -> Option<f64> {
    let n = 200;
    let ts: Vec<f64> = (0..=n)
        .map(|i| t - window + 2.0 * window * i as f64 / n as f64)
        .collect();
    let ks: Vec<f64> = ts.iter().map(|&s| curve.curvature(s)).collect();
    let h = 2.0 * window / n as f64;
    (1..n)
        .filter(|&i| ks[i] < ks[i - 1] && ks[i] <= ks[i + 1])
        .map(|i| golden_min(|s| curve.curvature(s), ts[i] - h, ts[i] + h))
        .min_by(|a, b| (a - t).abs().partial_cmp(&(b - t).abs()).unwrap())
}

/// True when the landmarks appear as SH, commissure, PAM, commissure along
/// the curve.
pub fn cyclic_order_holds(lm: &AnnularLandmarks) -> bool {
    let rel = |c: &CurvePoint| (c.param - lm.sh.param).rem_euclid(TAU);
    let (p, a, b) = (rel(&lm.pam), rel(&lm.mc), rel(&lm.lc));
    let (a, b) = (a.min(b), a.max(b));
    a < p && p < b
}

/// Vertical plane through SH and PAM used for tips and leaflet lengths.
pub fn length_plane(landmarks: &AnnularLandmarks, frame: &ValveFrame) -> Result<Plane> {
    let (sh, pam) = (landmarks.sh.point, landmarks.pam.point);
    if (pam - sh).norm() < 1e-9 {
        return Err(Error::Degenerate("SH and PAM coincide".into()));
    }
    Plane::from_normal(sh, (pam - sh).cross(&frame.normal))
}

/// Point of the leaflet's section with `plane` farthest from `anchor`.
pub fn leaflet_tip(mesh: &TriangleMesh, plane: &Plane, anchor: &Point) -> Result<Point> {
    if mesh.is_empty() {
        return Err(Error::Empty("leaflet mesh is empty"));
    }
    plane_section(mesh, plane, None)?
        .iter()
        .flat_map(|p| p.points.iter().copied())
        .max_by(|a, b| (a - anchor).norm().total_cmp(&(b - anchor).norm()))
        .ok_or_else(|| Error::NoIntersection("leaflet does not cross the SH-PAM plane".into()))
}

/// Tips as the points of each leaflet's section with the SH–PAM plane
/// farthest from SH (anterior) and from PAM (posterior).
pub fn detect_leaflet_tips(
    anterior: &TriangleMesh,
    posterior: &TriangleMesh,
    landmarks: &AnnularLandmarks,
    frame: &ValveFrame,
) -> Result<LeafletTips> {
    let plane = length_plane(landmarks, frame)?;
    let tag = |name: &str, e: Error| match e {
        Error::NoIntersection(_) => {
            Error::NoIntersection(format!("{name} leaflet does not cross the SH-PAM plane"))
        }
        e => e,
    };
    Ok(LeafletTips {
        anterior: leaflet_tip(anterior, &plane, &landmarks.sh.point)
            .map_err(|e| tag("anterior", e))?,
        posterior: leaflet_tip(posterior, &plane, &landmarks.pam.point)
            .map_err(|e| tag("posterior", e))?,
        plane,
    })
}
