//! Scattered-data interpolation in the plane with polyharmonic radial basis
//! functions.
//!
//! Sites are shifted to their mean and scaled by their half extent before
//! solving, which keeps the saddle-point system well conditioned regardless
//! of the units of the input. The regularization weight is rescaled to
//! match, so results do not depend on the coordinate origin or units.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial kernel and its polynomial drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    /// φ(ρ) = ρ⁵ with quadratic drift (conditionally positive definite of
    /// order 3, so an affine drift is not enough for a unique solution).
    Polyharmonic5,
    /// φ(ρ) = ρ² log ρ with affine drift.
    ThinPlate,
}

impl Kernel {
    fn phi(self, r: f64) -> f64 {
        match self {
            Kernel::Polyharmonic5 => r.powi(5),
            Kernel::ThinPlate => {
                if r > 0.0 {
                    r * r * r.ln()
                } else {
                    0.0
                }
            }
        }
    }

    /// Homogeneity degree used to rescale λ.
    fn degree(self) -> i32 {
        match self {
            Kernel::Polyharmonic5 => 5,
            Kernel::ThinPlate => 2,
        }
    }

    /// Sign making `sign·φ` conditionally positive definite; the ridge term
    /// must carry it or the smoothed system can pass through singularity.
    fn ridge_sign(self) -> f64 {
        match self {
            Kernel::Polyharmonic5 => -1.0,
            Kernel::ThinPlate => 1.0,
        }
    }

    fn drift_terms(self) -> usize {
        match self {
            Kernel::Polyharmonic5 => 6,
            Kernel::ThinPlate => 3,
        }
    }

    fn drift(self, x: f64, y: f64, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = x;
        out[2] = y;
        if self == Kernel::Polyharmonic5 {
            out[3] = x * x;
            out[4] = x * y;
            out[5] = y * y;
        }
    }
}

/// A fitted interpolant h(u, v).
#[derive(Debug, Clone, PartialEq)]
pub struct Rbf {
    kernel: Kernel,
    shift: [f64; 2],
    scale: f64,
    sites: Vec<[f64; 2]>,
    weights: Vec<f64>,
    poly: Vec<f64>,
}

/// Relative pivot size below which the system is declared rank-deficient.
const PIVOT_TOLERANCE: f64 = 1e-15;

impl Rbf {
    /// Solves `(Φ ± λI) w + P c = h`, `Pᵀ w = 0`, with the sign of the
    /// kernel's definiteness. With `lambda = 0` the result interpolates the
    /// data exactly.
    pub fn fit(kernel: Kernel, sites: &[[f64; 2]], values: &[f64], lambda: f64) -> Result<Rbf> {
        let n = sites.len();
        if n != values.len() {
            return Err(Error::InvalidInput("site and value counts differ".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "smoothing weight must be ≥ 0, got {lambda}"
            )));
        }
        let m = kernel.drift_terms();
        if n < m {
            return Err(Error::RankDeficient(format!(
                "{n} sites cannot determine {m} drift terms"
            )));
        }
        if sites.iter().flatten().chain(values).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite interpolation data".into()));
        }

        let shift = [
            sites.iter().map(|s| s[0]).sum::<f64>() / n as f64,
            sites.iter().map(|s| s[1]).sum::<f64>() / n as f64,
        ];
        let scale = sites
            .iter()
            .map(|s| (s[0] - shift[0]).abs().max((s[1] - shift[1]).abs()))
            .fold(0.0, f64::max);
        if !(scale > 0.0) {
            return Err(Error::RankDeficient("all sites coincide".into()));
        }
        let scaled: Vec<[f64; 2]> = sites
            .iter()
            .map(|s| [(s[0] - shift[0]) / scale, (s[1] - shift[1]) / scale])
            .collect();
        if lambda == 0.0 {
            check_duplicates(&scaled, values)?;
        }
        let lam = lambda / scale.powi(kernel.degree());

        let size = n + m;
        let mut a = DMatrix::<f64>::zeros(size, size);
        let mut row = vec![0.0; m];
        for i in 0..n {
            for j in 0..i {
                let d = ((scaled[i][0] - scaled[j][0]).powi(2)
                    + (scaled[i][1] - scaled[j][1]).powi(2))
                .sqrt();
                let p = kernel.phi(d);
                a[(i, j)] = p;
                a[(j, i)] = p;
            }
            a[(i, i)] = kernel.ridge_sign() * lam;
            kernel.drift(scaled[i][0], scaled[i][1], &mut row);
            for (k, &r) in row.iter().enumerate() {
                a[(i, n + k)] = r;
                a[(n + k, i)] = r;
            }
        }
        let mut b = DVector::<f64>::zeros(size);
        for (i, &v) in values.iter().enumerate() {
            b[i] = v;
        }

        let lu = a.full_piv_lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..size).map(|i| u[(i, i)].abs()).collect();
        let biggest = diag.iter().copied().fold(0.0, f64::max);
        let smallest = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smallest > PIVOT_TOLERANCE * biggest) {
            return Err(Error::RankDeficient(format!(
                "RBF system pivot ratio {:.1e}",
                smallest / biggest.max(f64::MIN_POSITIVE)
            )));
        }
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::RankDeficient("RBF system is singular".into()))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient("RBF solution is not finite".into()));
        }
        Ok(Rbf {
            kernel,
            shift,
            scale,
            sites: scaled,
            weights: x.rows(0, n).iter().copied().collect(),
            poly: x.rows(n, m).iter().copied().collect(),
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let (x, y) = (
            (u - self.shift[0]) / self.scale,
            (v - self.shift[1]) / self.scale,
        );
        let mut row = [0.0; 6];
        self.kernel.drift(x, y, &mut row);
        let mut s: f64 = self.poly.iter().zip(&row).map(|(c, r)| c * r).sum();
        for (site, w) in self.sites.iter().zip(&self.weights) {
            let d = ((x - site[0]).powi(2) + (y - site[1]).powi(2)).sqrt();
            s += w * self.kernel.phi(d);
        }
        s
    }
}

/// Coincident sites with different values make the interpolation
/// conditions contradictory.
fn check_duplicates(scaled: &[[f64; 2]], values: &[f64]) -> Result<()> {
    let mut order: Vec<usize> = (0..scaled.len()).collect();
    order.sort_by(|&a, &b| scaled[a].partial_cmp(&scaled[b]).unwrap());
    for w in order.windows(2) {
        let (a, b) = (scaled[w[0]], scaled[w[1]]);
        if (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12 {
            return Err(Error::RankDeficient(format!(
                "duplicate site with values {} and {} and no smoothing",
                values[w[0]], values[w[1]]
            )));
        }
    }
    Ok(())
}
