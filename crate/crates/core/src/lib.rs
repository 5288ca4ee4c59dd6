//! Mitral valve morphometry from labeled voxel segmentations.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annulus;
pub mod coaptation;
pub mod error;
pub mod geometry;
pub mod heightfield;
pub mod kdtree;
pub mod landmarks;
pub mod mesh;
pub mod metrics;
pub mod morphometry;
pub mod nrrd;
pub mod phantom;
pub mod pipeline;
pub mod rbf;
pub mod report;
pub mod spline;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{Plane, Point, Polyline3D, Vector};
pub use mesh::TriangleMesh;
pub use volume::{Label, LabelMap, LabeledVolume};
