//! Segmentation overlap, mean surface distance and agreement statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::kdtree::KdTree;
use crate::mesh::{extract_surface_where, sample_surface, TriangleMesh};
use crate::volume::{Label, LabeledVolume};

/// Surface sampling step for the dense distance variant, mm.
pub const DENSE_SPACING: f64 = 0.2;

/// Which voxels enter the overlap score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Label(u8),
    /// Every non-background voxel.
    Complete,
}

impl Selection {
    fn contains(self, code: u8) -> bool {
        match self {
            Selection::Label(l) => code == l,
            Selection::Complete => code != 0,
        }
    }
}

fn check_same_grid(a: &LabeledVolume, b: &LabeledVolume) -> Result<()> {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
    let same = a.dims() == b.dims()
        && a.spacing()
            .iter()
            .zip(b.spacing())
            .all(|(x, y)| close(*x, y))
        && (a.origin() - b.origin()).norm() <= 1e-9
        && (a.direction() - b.direction()).norm() <= 1e-9;
    if same {
        Ok(())
    } else {
        Err(Error::GridMismatch(
            "volumes differ in dims, spacing, origin or axes".into(),
        ))
    }
}

/// 2|A∩B| / (|A| + |B|).
pub fn dice(a: &LabeledVolume, b: &LabeledVolume, sel: Selection) -> Result<f64> {
    check_same_grid(a, b)?;
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        let (ia, ib) = (sel.contains(x), sel.contains(y));
        na += ia as usize;
        nb += ib as usize;
        both += (ia && ib) as usize;
    }
    if na + nb == 0 {
        return Err(Error::Empty("both selections are empty"));
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Symmetric mean of nearest-point distances between two point sets.
pub fn msd(s: &[Point], t: &[Point]) -> Result<f64> {
    if s.is_empty() || t.is_empty() {
        return Err(Error::Empty(
            "surface distance needs two non-empty point sets",
        ));
    }
    let (ts, tt) = (KdTree::new(s), KdTree::new(t));
    let a: f64 = s.iter().map(|p| tt.nearest_distance(p)).sum();
    let b: f64 = t.iter().map(|p| ts.nearest_distance(p)).sum();
    Ok((a + b) / (s.len() + t.len()) as f64)
}

/// Mesh vertices, plus points spread over the triangles every
/// [`DENSE_SPACING`] when `dense` is set.
pub fn surface_samples(mesh: &TriangleMesh, dense: bool) -> Vec<Point> {
    let mut pts = mesh.vertices.clone();
    if dense {
        pts.extend(sample_surface(mesh, DENSE_SPACING));
    }
    pts
}

pub fn mesh_msd(a: &TriangleMesh, b: &TriangleMesh, dense: bool) -> Result<f64> {
    msd(&surface_samples(a, dense), &surface_samples(b, dense))
}

/// Bias and 95% limits of agreement of `b − a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n: usize,
    pub bias: f64,
    /// Sample standard deviation of the differences; `None` for one pair.
    pub sd: Option<f64>,
    pub loa_low: Option<f64>,
    pub loa_high: Option<f64>,
}

pub fn bland_altman(pairs: &[(f64, f64)]) -> Result<AgreementStats> {
    if pairs.is_empty() {
        return Err(Error::Empty("agreement needs at least one pair"));
    }
    let d: Vec<f64> = pairs.iter().map(|(a, b)| b - a).collect();
    let n = d.len();
    let bias = d.iter().sum::<f64>() / n as f64;
    let sd = (n >= 2)
        .then(|| (d.iter().map(|x| (x - bias).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Ok(AgreementStats {
        n,
        bias,
        sd,
        loa_low: sd.map(|s| bias - 1.96 * s),
        loa_high: sd.map(|s| bias + 1.96 * s),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub name: String,
    pub dice: Option<f64>,
    pub msd_mm: Option<f64>,
}

/// Dice and surface distance for each structure and for the complete mask.
/// Entries are `None` where a score is undefined (a structure missing from
/// one or both volumes).
pub fn segmentation_scores(
    a: &LabeledVolume,
    b: &LabeledVolume,
    dense: bool,
) -> Result<Vec<SegmentationScore>> {
    check_same_grid(a, b)?;
    let score = |name: &str, sel: Selection| -> Result<SegmentationScore> {
        let dice = match dice(a, b, sel) {
            Ok(d) => Some(d),
            Err(Error::Empty(_)) => None,
            Err(e) => return Err(e),
        };
        let sa = extract_surface_where(a, |c| sel.contains(c));
        let sb = extract_surface_where(b, |c| sel.contains(c));
        let msd_mm = match (sa, sb) {
            (Ok(x), Ok(y)) if !x.is_empty() && !y.is_empty() => Some(mesh_msd(&x, &y, dense)?),
            _ => None,
        };
        Ok(SegmentationScore {
            name: name.to_string(),
            dice,
            msd_mm,
        })
    };
    let mut out = Vec::new();
    for l in Label::STRUCTURES {
        out.push(score(l.name(), Selection::Label(l.code()))?);
    }
    out.push(score("complete", Selection::Complete)?);
    Ok(out)
}
