//! Synthetic labeled valves with known geometry.
//!
//! The annulus centreline is the ellipse `(a cos θ, b sin θ)` with semi-axes
//! `D_AP/2` along x (the saddle horn side) and `D_CC/2` along y, lifted by
//! `z(θ) = h1 cos 2θ + (h2/3) cos 3θ`. The orifice surface
//! `z_O = h1 (x²/a² − y²/b²) + (h2/3)(4x³/a³ − 3x/a)` restricts to `z(θ)` on
//! the ellipse. Writing points inside the ellipse as `x = a w s`, `y = b sinφ`
//! with `w = cos φ`, the contact arc is `s = −κ`; the anterior leaflet
//! covers `s ∈ [−κ, 1]` and the posterior `s ∈ [−1, −κ]`. Each middle
//! surface dips linearly below `z_O` from the annulus to a depth `d·w²` at
//! the arc, so the two leaflets meet there in a V.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Vector};
use crate::volume::{Label, LabeledVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    /// Design inter-commissural axis of the centreline ellipse, mm.
    pub d_cc: f64,
    /// Design antero-posterior axis, mm.
    pub d_ap: f64,
    /// Saddle amplitude, mm.
    pub h1: f64,
    /// Anterior-posterior asymmetry, mm; positive puts the horn at θ = 0.
    pub h2: f64,
    pub tube_radius: f64,
    pub leaflet_thickness: f64,
    /// Contact arc position κ ∈ (0, 1) as a fraction of the half axis
    /// behind the centre.
    pub coaptation_offset: f64,
    /// Depth of the contact arc below the orifice surface at its middle, mm.
    pub coaptation_depth: f64,
    /// Height of the posterior bulge above the orifice surface, mm.
    pub prolapse_bump: f64,
    pub spacing: f64,
    /// Arc of annulus left unlabeled, degrees.
    pub gap_arc: f64,
    /// Centre of the removed arc, degrees of θ.
    pub gap_center: f64,
    /// Background margin around the structures, mm.
    pub margin: f64,
    /// Fixed grid size centred on the valve; derived from the extent if unset.
    pub dims: Option<[usize; 3]>,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            d_cc: 36.0,
            d_ap: 30.0,
            h1: 3.0,
            h2: 1.5,
            tube_radius: 1.5,
            leaflet_thickness: 1.6,
            coaptation_offset: 0.35,
            coaptation_depth: 6.0,
            prolapse_bump: 0.0,
            spacing: 0.4,
            gap_arc: 0.0,
            gap_center: 135.0,
            margin: 3.0,
            dims: None,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_cc", self.d_cc),
            ("d_ap", self.d_ap),
            ("tube_radius", self.tube_radius),
            ("leaflet_thickness", self.leaflet_thickness),
            ("coaptation_depth", self.coaptation_depth),
            ("spacing", self.spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.h1 >= 0.0
            && self.h2.is_finite()
            && self.prolapse_bump >= 0.0
            && self.margin >= 0.0)
        {
            return Err(Error::InvalidInput(
                "h1, prolapse_bump and margin must be non-negative".into(),
            ));
        }
        if !(self.coaptation_offset > 0.0 && self.coaptation_offset < 1.0) {
            return Err(Error::InvalidInput(format!(
                "coaptation_offset must lie in (0, 1), got {}",
                self.coaptation_offset
            )));
        }
        if !(0.0..360.0).contains(&self.gap_arc) {
            return Err(Error::InvalidInput(format!(
                "gap_arc must lie in [0, 360), got {}",
                self.gap_arc
            )));
        }
        if self.spacing > self.tube_radius || 2.0 * self.spacing > self.leaflet_thickness {
            return Err(Error::InvalidInput(format!(
                "spacing {} cannot resolve a {} mm tube or {} mm leaflets",
                self.spacing, self.tube_radius, self.leaflet_thickness
            )));
        }
        if 2.0 * self.tube_radius >= self.d_cc.min(self.d_ap) / 2.0 {
            return Err(Error::InvalidInput(
                "tube is too thick for the annulus".into(),
            ));
        }
        Ok(())
    }

    fn a(&self) -> f64 {
        self.d_ap / 2.0
    }

    fn b(&self) -> f64 {
        self.d_cc / 2.0
    }

    pub fn ring_height(&self, theta: f64) -> f64 {
        self.h1 * (2.0 * theta).cos() + self.h2 / 3.0 * (3.0 * theta).cos()
    }

    /// Annulus centreline.
    pub fn centerline(&self, theta: f64) -> Point {
        Point::new(
            self.a() * theta.cos(),
            self.b() * theta.sin(),
            self.ring_height(theta),
        )
    }

    fn centerline_d1(&self, t: f64) -> Vector {
        Vector::new(
            -self.a() * t.sin(),
            self.b() * t.cos(),
            -2.0 * self.h1 * (2.0 * t).sin() - self.h2 * (3.0 * t).sin(),
        )
    }

    fn centerline_d2(&self, t: f64) -> Vector {
        Vector::new(
            -self.a() * t.cos(),
            -self.b() * t.sin(),
            -4.0 * self.h1 * (2.0 * t).cos() - 3.0 * self.h2 * (3.0 * t).cos(),
        )
    }

    pub fn centerline_curvature(&self, t: f64) -> f64 {
        let (d1, d2) = (self.centerline_d1(t), self.centerline_d2(t));
        d1.cross(&d2).norm() / d1.norm().powi(3)
    }

    /// Orifice surface height.
    pub fn orifice_height(&self, x: f64, y: f64) -> f64 {
        let (xa, yb) = (x / self.a(), y / self.b());
        self.h1 * (xa * xa - yb * yb) + self.h2 / 3.0 * (4.0 * xa.powi(3) - 3.0 * xa)
    }

    fn orifice_gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let (a, b) = (self.a(), self.b());
        [
            2.0 * self.h1 * x / (a * a) + self.h2 / 3.0 * (12.0 * x * x / a.powi(3) - 3.0 / a),
            -2.0 * self.h1 * y / (b * b),
        ]
    }

    /// `(s, w)` of a point inside the ellipse, `None` outside.
    fn sheet_coords(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let w2 = 1.0 - (y / self.b()).powi(2);
        if w2 <= 0.0 {
            return None;
        }
        let w = w2.sqrt();
        let s = x / (self.a() * w);
        (s.abs() <= 1.0).then_some((s, w))
    }

    fn bump(&self, x: f64, y: f64) -> f64 {
        let k = self.coaptation_offset;
        let (xb, sigma) = (-self.a() * (1.0 + k) / 2.0, self.a() * (1.0 - k) / 4.0);
        (-((x - xb).powi(2) + y * y) / (2.0 * sigma * sigma)).exp()
    }

    /// Leaflet owning the column at `(x, y)` and its middle-surface height.
    pub fn leaflet_height(&self, x: f64, y: f64) -> Option<(Label, f64)> {
        let (s, w) = self.sheet_coords(x, y)?;
        let k = self.coaptation_offset;
        let dip = self.coaptation_depth * w * w;
        let zo = self.orifice_height(x, y);
        if s >= -k {
            Some((Label::Anterior, zo - dip * (1.0 - s) / (1.0 + k)))
        } else {
            let g = if self.prolapse_bump > 0.0 {
                self.bump(x, y)
            } else {
                0.0
            };
            Some((
                Label::Posterior,
                zo - dip * (s + 1.0) / (1.0 - k) * (1.0 - g) + self.prolapse_bump * g,
            ))
        }
    }

    /// Middle-surface height of a given leaflet, continued past its own
    /// footprint where needed for slopes.
    fn sheet_height(&self, label: Label, x: f64, y: f64) -> f64 {
        let w2 = (1.0 - (y / self.b()).powi(2)).max(0.0);
        let w = w2.sqrt().max(1e-12);
        let s = x / (self.a() * w);
        let k = self.coaptation_offset;
        let dip = self.coaptation_depth * w2;
        let zo = self.orifice_height(x, y);
        match label {
            Label::Anterior => zo - dip * (1.0 - s) / (1.0 + k),
            _ => {
                let g = if self.prolapse_bump > 0.0 {
                    self.bump(x, y)
                } else {
                    0.0
                };
                zo - dip * (s + 1.0) / (1.0 - k) * (1.0 - g) + self.prolapse_bump * g
            }
        }
    }

    fn sheet_slope(&self, label: Label, x: f64, y: f64) -> f64 {
        let e = 1e-5;
        let gx =
            (self.sheet_height(label, x + e, y) - self.sheet_height(label, x - e, y)) / (2.0 * e);
        let gy =
            (self.sheet_height(label, x, y + e) - self.sheet_height(label, x, y - e)) / (2.0 * e);
        (1.0 + gx * gx + gy * gy).sqrt()
    }

    /// Designed contact arc from one commissure to the other.
    pub fn coaptation_arc(&self, n: usize) -> Vec<Point> {
        let k = self.coaptation_offset;
        (0..n)
            .map(|i| {
                let phi = -FRAC_PI_2 + PI * i as f64 / (n - 1) as f64;
                let (x, y) = (-k * self.a() * phi.cos(), self.b() * phi.sin());
                Point::new(
                    x,
                    y,
                    self.orifice_height(x, y) - self.coaptation_depth * phi.cos().powi(2),
                )
            })
            .collect()
    }

    fn in_gap(&self, theta: f64) -> bool {
        if self.gap_arc <= 0.0 {
            return false;
        }
        let d = (theta - self.gap_center.to_radians()).rem_euclid(TAU);
        d.min(TAU - d) <= self.gap_arc.to_radians() / 2.0
    }

    /// Parameter of the closest centreline point and its distance.
    fn nearest_on_centerline(&self, p: &Point) -> (f64, f64) {
        let t0 = (p.y / self.b()).atan2(p.x / self.a());
        let f = |t: f64| (self.centerline(t) - p).norm_squared();
        let mut best = (t0, f(t0));
        for k in -8..=8 {
            let t = t0 + 0.05 * k as f64;
            let v = f(t);
            if v < best.1 {
                best = (t, v);
            }
        }
        let t = golden(f, best.0 - 0.05, best.0 + 0.05);
        (t.rem_euclid(TAU), f(t).sqrt())
    }

    /// True when the annulus label covers `p`.
    fn in_tube(&self, p: &Point) -> bool {
        let (t, d) = self.nearest_on_centerline(p);
        d <= self.tube_radius && !self.in_gap(t)
    }

    /// True when the leaflet inserts into the tube at `(x, y)`: its middle
    /// surface lies inside the annulus there, so the column is not drawn.
    fn column_covered(&self, label: Label, x: f64, y: f64) -> bool {
        self.in_tube(&Point::new(x, y, self.sheet_height(label, x, y)))
    }
}

fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
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

/// Composite 8-point Gauss-Legendre rule on `[a, b]`.
fn gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_2,
    ];
    const W: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let m = a + h * (p as f64 + 0.5);
        for (x, w) in X.iter().zip(W) {
            total += w * (f(m - 0.5 * h * x) + f(m + 0.5 * h * x));
        }
    }
    0.5 * h * total
}

/// Reference measurements of a phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticTruth {
    pub d_cc_mm: f64,
    pub d_ap_mm: f64,
    pub height_mm: f64,
    pub length_mm: f64,
    pub annulus_area_mm2: f64,
    pub anterior_length_mm: f64,
    pub posterior_length_mm: f64,
    /// Middle-surface area of each leaflet outside the annulus tube.
    pub anterior_area_mm2: f64,
    pub posterior_area_mm2: f64,
    /// Highest point of the posterior middle surface above the orifice surface.
    pub posterior_height_max_mm: f64,
    /// Centreline parameters of SH, PAM, MC and LC.
    pub landmark_params: [f64; 4],
    pub sh: Point,
    pub pam: Point,
    pub mc: Point,
    pub lc: Point,
    pub anterior_tip: Point,
    pub posterior_tip: Point,
    pub coaptation_arc: Vec<Point>,
    /// Least-squares plane normal of the centreline, pointing to the atrium.
    pub atrial_direction: Vector,
    pub center: Point,
}

/// Samples of the truth centreline used for the reference frame and extrema.
const TRUTH_SAMPLES: usize = 36_000;

struct TruthFrame {
    center: Point,
    normal: Vector,
    radial: Vector,
}

impl TruthFrame {
    fn angle(&self, p: &Point) -> f64 {
        let r = p - self.center;
        let t = self.normal.cross(&self.radial);
        r.dot(&t).atan2(r.dot(&self.radial))
    }
}

fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn truth_frame(p: &PhantomParams) -> TruthFrame {
    // Arc-length weighted moments of the centreline.
    let n = TRUTH_SAMPLES;
    let pts: Vec<Point> = (0..n)
        .map(|i| p.centerline(TAU * i as f64 / n as f64))
        .collect();
    let w: Vec<f64> = (0..n).map(|i| (pts[(i + 1) % n] - pts[i]).norm()).collect();
    let total: f64 = w.iter().sum();
    let mids: Vec<Point> = (0..n)
        .map(|i| nalgebra::center(&pts[i], &pts[(i + 1) % n]))
        .collect();
    let center = Point::from(
        mids.iter()
            .zip(&w)
            .map(|(m, w)| m.coords * *w)
            .sum::<Vector>()
            / total,
    );
    let mut cov = Matrix3::zeros();
    for (m, w) in mids.iter().zip(&w) {
        let d = m - center;
        cov += d * d.transpose() * *w;
    }
    let eig = SymmetricEigen::new(cov / total);
    let k = eig.eigenvalues.imin();
    let mut normal: Vector = eig.eigenvectors.column(k).into_owned();
    if normal.z < 0.0 {
        normal = -normal;
    }
    let radial = (Vector::x() - normal * normal.x).normalize();
    TruthFrame {
        center,
        normal,
        radial,
    }
}

/// Perimeter of the centreline by composite Gauss-Legendre quadrature.
pub fn perimeter(p: &PhantomParams, panels: usize) -> f64 {
    gauss(|t| p.centerline_d1(t).norm(), 0.0, TAU, panels)
}

/// Landmark parameters `[SH, PAM, MC, LC]` on the analytic centreline, by
/// the same rules the detector applies to a fitted curve.
fn truth_landmarks(p: &PhantomParams, f: &TruthFrame) -> [f64; 4] {
    let n = TRUTH_SAMPLES;
    let step = TAU / n as f64;
    let h = |t: f64| (p.centerline(t) - f.center).dot(&f.normal);
    let hs: Vec<f64> = (0..n).map(|i| h(step * i as f64)).collect();
    let (lo, hi) = hs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    if hi - lo < 1e-9 {
        return [0.0, PI, 1.5 * PI, FRAC_PI_2];
    }
    let imax = (0..n).max_by(|&a, &b| hs[a].total_cmp(&hs[b])).unwrap();
    let t_sh = golden(
        |t| -h(t),
        step * (imax as f64 - 1.0),
        step * (imax as f64 + 1.0),
    )
    .rem_euclid(TAU);
    let mut minima: Vec<(f64, f64)> = (0..n)
        .filter(|&i| hs[i] < hs[(i + n - 1) % n] && hs[i] <= hs[(i + 1) % n])
        .map(|i| {
            let t = golden(h, step * (i as f64 - 1.0), step * (i as f64 + 1.0)).rem_euclid(TAU);
            (t, h(t))
        })
        .collect();
    minima.sort_by(|a, b| a.1.total_cmp(&b.1));
    let ang = |t: f64| f.angle(&p.centerline(t));
    let (c1, c2) = match minima.first() {
        Some(&first) => match minima
            .iter()
            .skip(1)
            .find(|m| angular_gap(ang(m.0), ang(first.0)) >= 60f64.to_radians())
        {
            Some(&second) => (first.0, second.0),
            None => return [0.0, PI, 1.5 * PI, FRAC_PI_2],
        },
        None => return [0.0, PI, 1.5 * PI, FRAC_PI_2],
    };

    // Half the perimeter from SH, then the nearest curvature minimum whose
    // angle lies within 10° of it.
    let total = perimeter(p, 256);
    let target = 0.5 * total;
    let mut t_pam = t_sh + PI;
    let (mut lo_t, mut hi_t) = (t_sh, t_sh + TAU);
    for _ in 0..60 {
        let mid = 0.5 * (lo_t + hi_t);
        if gauss(|t| p.centerline_d1(t).norm(), t_sh, mid, 32) < target {
            lo_t = mid;
        } else {
            hi_t = mid;
        }
        t_pam = mid;
    }
    let a0 = ang(t_pam);
    let window = 10f64.to_radians();
    let m = 400;
    let ts: Vec<f64> = (0..=m)
        .map(|i| t_pam - 0.4 + 0.8 * i as f64 / m as f64)
        .collect();
    let ks: Vec<f64> = ts.iter().map(|&t| p.centerline_curvature(t)).collect();
    let snapped = (1..m)
        .filter(|&i| {
            ks[i] < ks[i - 1] && ks[i] <= ks[i + 1] && angular_gap(ang(ts[i]), a0) <= window
        })
        .map(|i| golden(|t| p.centerline_curvature(t), ts[i - 1], ts[i + 1]))
        .filter(|&t| angular_gap(ang(t), a0) <= window)
        .min_by(|x, y| (x - t_pam).abs().total_cmp(&(y - t_pam).abs()));
    if let Some(t) = snapped {
        t_pam = t;
    }

    let sh = p.centerline(t_sh);
    let chir = |t: f64| {
        (f.center - sh)
            .cross(&(p.centerline(t) - f.center))
            .dot(&f.normal)
    };
    let (lc, mc) = if chir(c1) > 0.0 { (c1, c2) } else { (c2, c1) };
    [t_sh, t_pam.rem_euclid(TAU), mc, lc]
}

/// Middle-surface path from `from` to `to` inside the plane containing both
/// and the normal, cut where it crosses the contact arc. Returns the
/// lengths from each end to the crossing and the crossing point.
fn leaflet_lengths(
    p: &PhantomParams,
    f: &TruthFrame,
    from: Point,
    to: Point,
) -> (f64, f64, Point, Point) {
    let m = (to - from).cross(&f.normal).normalize();
    let horiz = Vector::new(m.x, m.y, 0.0).normalize();
    // Each leaflet is followed on its own sheet up to the crossing, so a
    // step between the free edges is not counted.
    let surface_of = |label: Label, tau: f64| -> Point {
        // Walk along the chord in xy, then slide along the horizontal plane
        // normal until the surface point lies in the plane.
        let q = from + (to - from) * tau;
        let on = |eta: f64| {
            let (x, y) = (q.x + eta * horiz.x, q.y + eta * horiz.y);
            Point::new(x, y, p.sheet_height(label, x, y))
        };
        let g = |eta: f64| m.dot(&(on(eta) - from));
        let mut eta = 0.0;
        for _ in 0..50 {
            let e = 1e-7;
            let d = (g(eta + e) - g(eta - e)) / (2.0 * e);
            let step = g(eta) / d;
            eta -= step;
            if step.abs() < 1e-13 {
                break;
            }
        }
        on(eta)
    };
    let k = p.coaptation_offset;
    let side = |tau: f64| {
        let s = surface_of(Label::Anterior, tau);
        p.sheet_coords(s.x, s.y).map(|(s, _)| s + k).unwrap_or(1.0)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if side(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tc = 0.5 * (lo + hi);
    let path = |label: Label, a: f64, b: f64| {
        let n = 20_000;
        let at = |i: usize| surface_of(label, a + (b - a) * i as f64 / n as f64);
        (0..n).map(|i| (at(i + 1) - at(i)).norm()).sum::<f64>()
    };
    (
        path(Label::Anterior, 0.0, tc),
        path(Label::Posterior, tc, 1.0),
        surface_of(Label::Anterior, tc),
        surface_of(Label::Posterior, tc),
    )
}

/// Area of one leaflet's middle surface over the part of its footprint not
/// hidden by the annulus tube.
fn leaflet_area(p: &PhantomParams, label: Label) -> f64 {
    let (a, b, k) = (p.a(), p.b(), p.coaptation_offset);
    let point = |s: f64, phi: f64| (a * phi.cos() * s, b * phi.sin());
    let covered = |s: f64, phi: f64| {
        let (x, y) = point(s, phi);
        p.column_covered(label, x, y)
    };
    // Footprint along s for one φ: from the contact arc out to where the
    // tube starts covering the leaflet.
    let (inner, outer) = match label {
        Label::Anterior => (-k, 1.0),
        _ => (-k, -1.0),
    };
    let extent = |phi: f64| -> Option<f64> {
        if covered(inner, phi) {
            return None;
        }
        if !covered(outer, phi) {
            return Some(outer);
        }
        let steps = 200;
        let mut prev = inner;
        for i in 1..=steps {
            let s = inner + (outer - inner) * i as f64 / steps as f64;
            if covered(s, phi) {
                let (mut lo, mut hi) = (prev, s);
                for _ in 0..50 {
                    let mid = 0.5 * (lo + hi);
                    if covered(mid, phi) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            prev = s;
        }
        Some(outer)
    };
    let element = |s: f64, phi: f64| {
        let (x, y) = point(s, phi);
        p.sheet_slope(label, x, y) * a * b * phi.cos().powi(2)
    };
    gauss(
        |phi| match extent(phi) {
            Some(end) => gauss(|s| element(s, phi), inner.min(end), inner.max(end), 16),
            None => 0.0,
        },
        -FRAC_PI_2,
        FRAC_PI_2,
        128,
    )
}

/// Area of the analytic orifice surface over the centreline ellipse.
fn orifice_area(p: &PhantomParams) -> f64 {
    let (a, b) = (p.a(), p.b());
    gauss(
        |phi| {
            gauss(
                |r| {
                    let (x, y) = (a * r * phi.cos(), b * r * phi.sin());
                    let g = p.orifice_gradient(x, y);
                    (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt() * a * b * r
                },
                0.0,
                1.0,
                16,
            )
        },
        0.0,
        TAU,
        64,
    )
}

fn posterior_height_max(p: &PhantomParams) -> f64 {
    let (a, b) = (p.a(), p.b());
    let mut best = f64::NEG_INFINITY;
    let n = 400;
    for i in 0..=n {
        for j in 0..=n {
            let (x, y) = (
                -a + a * i as f64 / n as f64,
                -b + 2.0 * b * j as f64 / n as f64,
            );
            if let Some((Label::Posterior, z)) = p.leaflet_height(x, y) {
                if !p.column_covered(Label::Posterior, x, y) {
                    best = best.max(z - p.orifice_height(x, y));
                }
            }
        }
    }
    if p.prolapse_bump > 0.0 {
        // The bump centre sits exactly at the designed height.
        best = best.max(p.prolapse_bump);
    }
    best
}

/// Closed-form and quadrature reference values for `p`.
pub fn analytic_measurements(p: &PhantomParams) -> Result<AnalyticTruth> {
    p.validate()?;
    let f = truth_frame(p);
    let lm = truth_landmarks(p, &f);
    let [sh, pam, mc, lc] = lm.map(|t| p.centerline(t));
    let h = |t: f64| (p.centerline(t) - f.center).dot(&f.normal);
    let n = TRUTH_SAMPLES;
    let hs: Vec<f64> = (0..n).map(|i| h(TAU * i as f64 / n as f64)).collect();
    let step = TAU / n as f64;
    let imax = (0..n).max_by(|&a, &b| hs[a].total_cmp(&hs[b])).unwrap();
    let imin = (0..n).min_by(|&a, &b| hs[a].total_cmp(&hs[b])).unwrap();
    let hmax = -(-h(golden(
        |t| -h(t),
        step * (imax as f64 - 1.0),
        step * (imax as f64 + 1.0),
    )))
    .min(-hs[imax]);
    let hmin = h(golden(
        h,
        step * (imin as f64 - 1.0),
        step * (imin as f64 + 1.0),
    ))
    .min(hs[imin]);
    let (ant_len, post_len, anterior_tip, posterior_tip) = leaflet_lengths(p, &f, sh, pam);

    Ok(AnalyticTruth {
        d_cc_mm: (mc - lc).norm(),
        d_ap_mm: (sh - pam).norm(),
        height_mm: hmax - hmin,
        length_mm: perimeter(p, 256),
        annulus_area_mm2: orifice_area(p),
        anterior_length_mm: ant_len,
        posterior_length_mm: post_len,
        anterior_area_mm2: leaflet_area(p, Label::Anterior),
        posterior_area_mm2: leaflet_area(p, Label::Posterior),
        posterior_height_max_mm: posterior_height_max(p),
        landmark_params: lm,
        sh,
        pam,
        mc,
        lc,
        anterior_tip,
        posterior_tip,
        coaptation_arc: p.coaptation_arc(201),
        atrial_direction: f.normal,
        center: f.center,
    })
}

/// Voxel grid enclosing the valve: `(dims, origin)`.
fn layout(p: &PhantomParams) -> ([usize; 3], Point) {
    let (a, b) = (p.a(), p.b());
    let reach = p.tube_radius + p.leaflet_thickness + p.margin;
    let (mut zlo, mut zhi) = (f64::INFINITY, f64::NEG_INFINITY);
    let n = 200;
    for i in 0..=n {
        for j in 0..=n {
            let (x, y) = (
                -a + 2.0 * a * i as f64 / n as f64,
                -b + 2.0 * b * j as f64 / n as f64,
            );
            if let Some((_, z)) = p.leaflet_height(x, y) {
                zlo = zlo.min(z);
                zhi = zhi.max(z);
            }
        }
    }
    for i in 0..720 {
        let z = p.ring_height(TAU * i as f64 / 720.0);
        zlo = zlo.min(z);
        zhi = zhi.max(z);
    }
    let lo = Point::new(-a - reach, -b - reach, zlo - reach);
    let hi = Point::new(a + reach, b + reach, zhi + reach);
    match p.dims {
        Some(d) => {
            let mid = nalgebra::center(&lo, &hi);
            let half = Vector::new(d[0] as f64 - 1.0, d[1] as f64 - 1.0, d[2] as f64 - 1.0)
                * (0.5 * p.spacing);
            (d, mid - half)
        }
        None => {
            let d = (hi - lo) / p.spacing;
            (
                [
                    d.x.ceil() as usize + 1,
                    d.y.ceil() as usize + 1,
                    d.z.ceil() as usize + 1,
                ],
                lo,
            )
        }
    }
}

/// Labeled volume of the phantom described by `p`.
pub fn voxelize(p: &PhantomParams) -> Result<LabeledVolume> {
    p.validate()?;
    let (dims, origin) = layout(p);
    let [nx, ny, nz] = dims;
    let h = p.spacing;
    let mut labels = vec![0u8; nx * ny * nz];
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let zk = |z: f64| (z - origin.z) / h;

    for j in 0..ny {
        let y = origin.y + h * j as f64;
        for i in 0..nx {
            let x = origin.x + h * i as f64;
            let Some((label, z)) = p.leaflet_height(x, y) else {
                continue;
            };
            if p.column_covered(label, x, y) {
                continue;
            }
            let half = 0.5 * p.leaflet_thickness * p.sheet_slope(label, x, y);
            let k0 = zk(z - half).ceil().max(0.0) as usize;
            let k1 = zk(z + half).floor().min(nz as f64 - 1.0);
            if k1 < 0.0 {
                continue;
            }
            for k in k0..=k1 as usize {
                labels[idx(i, j, k)] = label.code();
            }
        }
    }

    // Tube: voxels within the radius of a dense centreline polyline.
    let perim = perimeter(p, 64);
    let segs = ((perim / (0.25 * h)).ceil() as usize).max(720);
    let mut dist = vec![f32::INFINITY; labels.len()];
    let mut param = vec![0f32; labels.len()];
    let r = p.tube_radius;
    let pts: Vec<Point> = (0..=segs)
        .map(|s| p.centerline(TAU * s as f64 / segs as f64))
        .collect();
    for s in 0..segs {
        let (a, b) = (pts[s], pts[s + 1]);
        let lo = a.inf(&b) - Vector::repeat(r + h);
        let hi = a.sup(&b) + Vector::repeat(r + h);
        let range = |l: f64, u: f64, o: f64, n: usize| {
            let i0 = ((l - o) / h).ceil().max(0.0) as usize;
            let i1 = (((u - o) / h).floor() as isize).min(n as isize - 1);
            (i0, i1)
        };
        let (i0, i1) = range(lo.x, hi.x, origin.x, nx);
        let (j0, j1) = range(lo.y, hi.y, origin.y, ny);
        let (k0, k1) = range(lo.z, hi.z, origin.z, nz);
        let ab = b - a;
        let len2 = ab.norm_squared();
        for k in k0 as isize..=k1 {
            for j in j0 as isize..=j1 {
                for i in i0 as isize..=i1 {
                    let q = origin + Vector::new(i as f64, j as f64, k as f64) * h;
                    let t = ((q - a).dot(&ab) / len2).clamp(0.0, 1.0);
                    let d = (q - (a + ab * t)).norm() as f32;
                    let n = idx(i as usize, j as usize, k as usize);
                    if d < dist[n] {
                        dist[n] = d;
                        param[n] = (TAU * (s as f64 + t) / segs as f64) as f32;
                    }
                }
            }
        }
    }
    for n in 0..labels.len() {
        if dist[n] as f64 <= r && !p.in_gap(param[n] as f64) {
            labels[n] = Label::Annulus.code();
        }
    }
    LabeledVolume::new(dims, [h; 3], origin, labels)
}

/// Volume and truth record of one phantom.
pub fn generate_phantom(p: &PhantomParams) -> Result<(LabeledVolume, AnalyticTruth)> {
    Ok((voxelize(p)?, analytic_measurements(p)?))
}
