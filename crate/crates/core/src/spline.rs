//! Closed interpolating cubic splines in 3D with arc-length lookup.
//!
//! The curve parameter is an angle in radians with period 2π. Knots may be
//! unevenly spaced, which is how angular gaps in the annulus sections are
//! bridged: the spline simply spans the missing sector with one longer
//! segment.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Isometry3};

use crate::error::{Error, Result};
use crate::geometry::{Point, Vector};

/// Consecutive control points closer than this are merged.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

/// Quadrature subintervals per spline segment in the arc-length table.
const SUBDIVISIONS: usize = 16;

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for k in 0..4 {
        s += GL_W[k] * (f(m - r * GL_X[k]) + f(m + r * GL_X[k]));
    }
    s * r
}

/// Adaptive Gauss-Legendre: split until the two halves agree with the whole.
pub(crate) fn adaptive_integral(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (gauss_legendre(f, a, m), gauss_legendre(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= tol {
            l + r
        } else {
            rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
        }
    }
    rec(f, a, b, gauss_legendre(f, a, b), tol, 30)
}

/// Closed C² cubic spline through ordered control points.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusCurve {
    knots: Vec<f64>,
    points: Vec<Point>,
    second: Vec<Vector>,
    /// Parameter and cumulative arc length at each table node; the last
    /// entry closes the loop at `knots[0] + 2π`.
    table_t: Vec<f64>,
    table_s: Vec<f64>,
}

/// Fits a closed spline with uniformly spaced parameters.
pub fn fit_periodic_spline(centers: &[Point]) -> Result<AnnulusCurve> {
    let n = centers.len();
    let params: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
    AnnulusCurve::fit(&params, centers)
}

impl AnnulusCurve {
    /// Fits a closed spline with the given strictly increasing parameters
    /// spanning less than one period. Consecutive duplicate points are
    /// merged, keeping the first.
    pub fn fit(params: &[f64], points: &[Point]) -> Result<Self> {
        if params.len() != points.len() {
            return Err(Error::InvalidInput(
                "parameter and point counts differ".into(),
            ));
        }
        if points
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
            || params.iter().any(|t| !t.is_finite())
        {
            return Err(Error::InvalidInput("non-finite spline input".into()));
        }
        let mut knots: Vec<f64> = Vec::with_capacity(points.len());
        let mut pts: Vec<Point> = Vec::with_capacity(points.len());
        for (&t, p) in params.iter().zip(points) {
            if let Some(&last) = knots.last() {
                if t <= last {
                    return Err(Error::InvalidInput(
                        "spline parameters must be strictly increasing".into(),
                    ));
                }
            }
            if pts
                .last()
                .is_some_and(|q: &Point| (p - q).norm() <= DEDUP_TOLERANCE)
            {
                continue;
            }
            knots.push(t);
            pts.push(*p);
        }
        while pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() <= DEDUP_TOLERANCE {
            pts.pop();
            knots.pop();
        }
        if pts.len() < 4 {
            return Err(Error::Degenerate(format!(
                "a closed spline needs at least 4 distinct points, got {}",
                pts.len()
            )));
        }
        if knots[knots.len() - 1] - knots[0] >= TAU {
            return Err(Error::InvalidInput(
                "spline parameters must span less than 2π".into(),
            ));
        }
        let second = solve_second_derivatives(&knots, &pts)?;
        let mut curve = AnnulusCurve {
            knots,
            points: pts,
            second,
            table_t: Vec::new(),
            table_s: Vec::new(),
        };
        curve.build_table();
        Ok(curve)
    }

    fn n(&self) -> usize {
        self.points.len()
    }

    fn h(&self, i: usize) -> f64 {
        let n = self.n();
        if i + 1 < n {
            self.knots[i + 1] - self.knots[i]
        } else {
            self.knots[0] + TAU - self.knots[n - 1]
        }
    }

    /// Wraps `t` into `[knots[0], knots[0] + 2π)` and returns the segment.
    fn locate(&self, t: f64) -> (usize, f64) {
        let t = self.knots[0] + (t - self.knots[0]).rem_euclid(TAU);
        let i = match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (i, t - self.knots[i])
    }

    fn eval(&self, t: f64, order: u8) -> Vector {
        let (i, x) = self.locate(t);
        let j = (i + 1) % self.n();
        let h = self.h(i);
        let (y0, y1) = (self.points[i].coords, self.points[j].coords);
        let (m0, m1) = (self.second[i], self.second[j]);
        let a = h - x;
        match order {
            0 => {
                m0 * (a * a * a / (6.0 * h))
                    + m1 * (x * x * x / (6.0 * h))
                    + (y0 / h - m0 * (h / 6.0)) * a
                    + (y1 / h - m1 * (h / 6.0)) * x
            }
            1 => {
                -m0 * (a * a / (2.0 * h)) + m1 * (x * x / (2.0 * h)) + (y1 - y0) / h
                    - (m1 - m0) * (h / 6.0)
            }
            _ => m0 * (a / h) + m1 * (x / h),
        }
    }

    pub fn point(&self, t: f64) -> Point {
        Point::from(self.eval(t, 0))
    }

    /// dC/dt.
    pub fn derivative(&self, t: f64) -> Vector {
        self.eval(t, 1)
    }

    /// d²C/dt².
    pub fn second_derivative(&self, t: f64) -> Vector {
        self.eval(t, 2)
    }

    /// Curvature κ = |C' × C''| / |C'|³.
    pub fn curvature(&self, t: f64) -> f64 {
        let d1 = self.derivative(t);
        let d2 = self.second_derivative(t);
        let s = d1.norm();
        if s == 0.0 {
            return 0.0;
        }
        d1.cross(&d2).norm() / (s * s * s)
    }

    pub fn control_points(&self) -> &[Point] {
        &self.points
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Parameter value where the curve starts; the period is 2π.
    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    fn speed_fn(&self) -> impl Fn(f64) -> f64 + '_ {
        move |t| self.derivative(t).norm()
    }

    fn build_table(&mut self) {
        let n = self.n();
        let mut ts = Vec::with_capacity(n * SUBDIVISIONS + 1);
        let mut ss = Vec::with_capacity(n * SUBDIVISIONS + 1);
        let mut s = 0.0;
        let scale = self
            .points
            .iter()
            .map(|p| (p - self.points[0]).norm())
            .fold(0.0, f64::max)
            .max(1e-300);
        for i in 0..n {
            let h = self.h(i);
            for k in 0..SUBDIVISIONS {
                let a = self.knots[i] + h * k as f64 / SUBDIVISIONS as f64;
                let b = self.knots[i] + h * (k + 1) as f64 / SUBDIVISIONS as f64;
                ts.push(a);
                ss.push(s);
                // Evaluate strictly inside the segment so wrap-around does not
                // pick the neighbouring one at the right end.
                let seg = |t: f64| {
                    let t = t.min(self.knots[i] + h * (1.0 - 1e-15));
                    self.derivative(t).norm()
                };
                s += adaptive_integral(&seg, a, b, 1e-13 * scale);
            }
        }
        ts.push(self.knots[0] + TAU);
        ss.push(s);
        self.table_t = ts;
        self.table_s = ss;
    }

    /// Total arc length.
    pub fn length(&self) -> f64 {
        self.table_s[self.table_s.len() - 1]
    }

    /// Arc length from the curve start to parameter `t`, in `[0, L)`.
    pub fn arc_length_at(&self, t: f64) -> f64 {
        let t = self.knots[0] + (t - self.knots[0]).rem_euclid(TAU);
        let k = match self
            .table_t
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(k) => return self.table_s[k],
            Err(k) => k - 1,
        };
        self.table_s[k]
            + adaptive_integral(&self.speed_fn(), self.table_t[k], t, 1e-13 * self.length())
    }

    /// Parameter at arc length `s` from the curve start (wrapped).
    pub fn param_at_arc_length(&self, s: f64) -> f64 {
        let total = self.length();
        let s = s.rem_euclid(total);
        let k = match self
            .table_s
            .binary_search_by(|x| x.partial_cmp(&s).unwrap())
        {
            Ok(k) => return self.table_t[k.min(self.table_t.len() - 2)],
            Err(k) => k - 1,
        };
        let base = self.table_t[k];
        let (mut lo, mut hi) = (base, self.table_t[k + 1]);
        let speed = self.speed_fn();
        let target = s - self.table_s[k];
        let mut t = lo + (hi - lo) * target / (self.table_s[k + 1] - self.table_s[k]).max(1e-300);
        for _ in 0..60 {
            let f = gauss_legendre(&speed, base, t) - target;
            if f.abs() <= 1e-13 * total.max(1.0) {
                break;
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let newton = t - f / speed(t).max(1e-300);
            t = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        t
    }

    /// `n` points equally spaced in arc length, with their parameters.
    pub fn sample_by_arc_length(&self, n: usize) -> Vec<(f64, Point)> {
        let l = self.length();
        (0..n)
            .map(|i| {
                let t = self.param_at_arc_length(l * i as f64 / n as f64);
                (t, self.point(t))
            })
            .collect()
    }

    /// `n` points equally spaced in parameter, starting at the curve start.
    pub fn sample_by_param(&self, n: usize) -> Vec<(f64, Point)> {
        (0..n)
            .map(|i| {
                let t = self.knots[0] + TAU * i as f64 / n as f64;
                (t, self.point(t))
            })
            .collect()
    }

    /// The same curve after a rigid motion (the spline is affine-equivariant).
    pub fn transformed(&self, iso: &Isometry3<f64>) -> AnnulusCurve {
        AnnulusCurve {
            knots: self.knots.clone(),
            points: self.points.iter().map(|p| iso * p).collect(),
            second: self.second.iter().map(|m| iso.rotation * m).collect(),
            table_t: self.table_t.clone(),
            table_s: self.table_s.clone(),
        }
    }

    pub fn scaled(&self, k: f64) -> AnnulusCurve {
        AnnulusCurve {
            knots: self.knots.clone(),
            points: self
                .points
                .iter()
                .map(|p| Point::from(p.coords * k))
                .collect(),
            second: self.second.iter().map(|m| m * k).collect(),
            table_t: self.table_t.clone(),
            table_s: self.table_s.iter().map(|s| s * k.abs()).collect(),
        }
    }
}

/// Periodic spline moments from the cyclic tridiagonal system
/// h₋ M₋ + 2(h₋ + h) M + h M₊ = 6((y₊ − y)/h − (y − y₋)/h₋).
fn solve_second_derivatives(knots: &[f64], pts: &[Point]) -> Result<Vec<Vector>> {
    let n = pts.len();
    let h = |i: usize| {
        if i + 1 < n {
            knots[i + 1] - knots[i]
        } else {
            knots[0] + TAU - knots[n - 1]
        }
    };
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, 3);
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        let (hp, hi) = (h(prev), h(i));
        a[(i, prev)] += hp;
        a[(i, i)] += 2.0 * (hp + hi);
        a[(i, next)] += hi;
        let r = (pts[next] - pts[i]) / hi - (pts[i] - pts[prev]) / hp;
        for c in 0..3 {
            rhs[(i, c)] = 6.0 * r[c];
        }
    }
    // Strictly diagonally dominant, so LU without pivoting trouble.
    let lu = a.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular periodic spline system".into()))?;
    Ok((0..n)
        .map(|i| Vector::new(sol[(i, 0)], sol[(i, 1)], sol[(i, 2)]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(r: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                Point::new(r * t.cos(), r * t.sin(), 0.0)
            })
            .collect()
    }

    #[test]
    fn circle_length() {
        let c = fit_periodic_spline(&circle(15.0, 24)).unwrap();
        let l = c.length();
        assert!((l / (TAU * 15.0) - 1.0).abs() < 1e-3, "{l}");
    }

    #[test]
    fn interpolates_control_points() {
        let sq = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        let c = fit_periodic_spline(&sq).unwrap();
        for (i, p) in sq.iter().enumerate() {
            assert!((c.point(TAU * i as f64 / 4.0) - p).norm() < 1e-9);
        }
        // Closed: start and one period later coincide.
        assert!((c.point(0.0) - c.point(TAU)).norm() < 1e-12);
        assert!((c.derivative(-1e-12) - c.derivative(1e-12)).norm() < 1e-6);
    }

    #[test]
    fn duplicates_are_merged() {
        let mut pts = circle(5.0, 6);
        pts.insert(3, pts[2]);
        let c = fit_periodic_spline(&pts).unwrap();
        assert_eq!(c.control_points().len(), 6);
        let few = vec![
            Point::origin(),
            Point::origin(),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        assert!(fit_periodic_spline(&few).is_err());
        assert!(fit_periodic_spline(&circle(1.0, 3)).is_err());
    }

    #[test]
    fn arc_length_inverse() {
        let pts: Vec<Point> = (0..10)
            .map(|i| {
                let t = TAU * i as f64 / 10.0;
                Point::new(18.0 * t.cos(), 13.0 * t.sin(), 3.0 * (2.0 * t).cos())
            })
            .collect();
        let c = fit_periodic_spline(&pts).unwrap();
        let l = c.length();
        for k in 0..37 {
            let s = l * k as f64 / 37.0;
            let t = c.param_at_arc_length(s);
            assert!((c.arc_length_at(t) - s).abs() < 1e-8, "{s}");
        }
    }

    #[test]
    fn uneven_knots_bridge_gaps() {
        // Circle samples with a 90° gap; parameters are the true angles.
        let ts: Vec<f64> = (0..24)
            .map(|i| i as f64 * PI / 12.0)
            .filter(|t| *t < 1.2 || *t > 1.2 + PI / 2.0)
            .collect();
        let pts: Vec<Point> = ts
            .iter()
            .map(|t| Point::new(15.0 * t.cos(), 15.0 * t.sin(), 0.0))
            .collect();
        let c = AnnulusCurve::fit(&ts, &pts).unwrap();
        let worst = (0..720)
            .map(|i| (c.point(TAU * i as f64 / 720.0).coords.norm() - 15.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1.0, "{worst}");
    }

    #[test]
    fn scaling_and_motion() {
        let c = fit_periodic_spline(&circle(4.0, 8)).unwrap();
        assert!((c.scaled(2.0).length() - 2.0 * c.length()).abs() < 1e-12);
        let iso = Isometry3::new(Vector::new(1.0, 2.0, 3.0), Vector::new(0.3, -0.2, 0.9));
        let m = c.transformed(&iso);
        assert!((m.point(0.7) - iso * c.point(0.7)).norm() < 1e-9);
    }
}
