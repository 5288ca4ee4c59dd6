//! Labeled voxel volumes and the label contract the pipeline relies on.

use std::collections::BTreeMap;

use nalgebra::{Isometry3, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Vector};

/// Label codes of a mitral valve segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Background = 0,
    Annulus = 1,
    Anterior = 2,
    Posterior = 3,
}

impl Label {
    pub const STRUCTURES: [Label; 3] = [Label::Annulus, Label::Anterior, Label::Posterior];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Background),
            1 => Some(Label::Annulus),
            2 => Some(Label::Anterior),
            3 => Some(Label::Posterior),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Background => "background",
            Label::Annulus => "annulus",
            Label::Anterior => "anterior",
            Label::Posterior => "posterior",
        }
    }
}

/// Source codes of the three structures in a mask that does not follow the
/// default 1/2/3 convention. Background is always 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub annulus: u8,
    pub anterior: u8,
    pub posterior: u8,
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap {
            annulus: 1,
            anterior: 2,
            posterior: 3,
        }
    }
}

impl LabelMap {
    pub fn is_identity(&self) -> bool {
        *self == LabelMap::default()
    }

    fn validate(&self) -> Result<()> {
        let codes = [self.annulus, self.anterior, self.posterior];
        if codes.contains(&0)
            || codes[0] == codes[1]
            || codes[0] == codes[2]
            || codes[1] == codes[2]
        {
            return Err(Error::InvalidInput(format!(
                "label map codes must be distinct and non-zero, got {codes:?}"
            )));
        }
        Ok(())
    }

    /// Translates a raw source code into the canonical label code.
    pub fn translate(&self, raw: u8) -> Result<u8> {
        match raw {
            0 => Ok(0),
            c if c == self.annulus => Ok(1),
            c if c == self.anterior => Ok(2),
            c if c == self.posterior => Ok(3),
            c => Err(Error::InvalidInput(format!(
                "label value {c} is not in the label map"
            ))),
        }
    }
}

/// Dense 3D grid of label codes, x-fastest.
///
/// Voxel `(i, j, k)` sits at `origin + direction * (index ⊙ spacing)`. Files
/// only carry axis-aligned grids; `direction` is a proper rotation that lets a
/// volume be placed rigidly in a different world frame without resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: Point,
    direction: Matrix3<f64>,
    labels: Vec<u8>,
}

impl LabeledVolume {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: Point,
        labels: Vec<u8>,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidInput(format!(
                "every dimension must be >= 2, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if !origin.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("origin must be finite".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        if labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} labels for dims {dims:?}, got {}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 3) {
            return Err(Error::InvalidInput(format!("label value {bad} > 3")));
        }
        Ok(LabeledVolume {
            dims,
            spacing,
            origin,
            direction: Matrix3::identity(),
            labels,
        })
    }

    /// All-background volume.
    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], origin: Point) -> Result<Self> {
        LabeledVolume::new(dims, spacing, origin, vec![0; dims.iter().product()])
    }

    /// Builds a volume from raw source codes, translating them through `map`.
    pub fn from_raw(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: Point,
        raw: Vec<u8>,
        map: &LabelMap,
    ) -> Result<Self> {
        map.validate()?;
        let labels = if map.is_identity() {
            raw
        } else {
            raw.into_iter()
                .map(|c| map.translate(c))
                .collect::<Result<Vec<_>>>()?
        };
        LabeledVolume::new(dims, spacing, origin, labels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn direction(&self) -> &Matrix3<f64> {
        &self.direction
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.direction == Matrix3::identity()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.labels[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, label: u8) -> Result<()> {
        if label > 3 {
            return Err(Error::InvalidInput(format!("label value {label} > 3")));
        }
        let idx = self.index(i, j, k);
        self.labels[idx] = label;
        Ok(())
    }

    /// World position of a (possibly fractional) voxel index.
    #[inline]
    pub fn world(&self, fi: f64, fj: f64, fk: f64) -> Point {
        let local = Vector::new(
            fi * self.spacing[0],
            fj * self.spacing[1],
            fk * self.spacing[2],
        );
        self.origin + self.direction * local
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Same labels placed in a rigidly transformed world frame.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> LabeledVolume {
        let rot = iso.rotation.to_rotation_matrix();
        LabeledVolume {
            dims: self.dims,
            spacing: self.spacing,
            origin: iso * self.origin,
            direction: rot.matrix() * self.direction,
            labels: self.labels.clone(),
        }
    }

    /// Per-label voxel counts (only labels that occur are present).
    pub fn census(&self) -> BTreeMap<u8, usize> {
        label_census(self)
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Copy with every voxel of `label` set to background.
    pub fn without_label(&self, label: u8) -> LabeledVolume {
        let mut out = self.clone();
        for l in out.labels.iter_mut() {
            if *l == label {
                *l = 0;
            }
        }
        out
    }
}

/// Voxel count per label value.
pub fn label_census(volume: &LabeledVolume) -> BTreeMap<u8, usize> {
    let mut counts = [0usize; 256];
    for &l in volume.labels() {
        counts[l as usize] += 1;
    }
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(l, &c)| (l as u8, c))
        .collect()
}
