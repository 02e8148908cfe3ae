//! Point-cloud data: synthetic scans, normals, segmentation, descriptors and
//! the per-object segment graph.

mod fpfh;
mod graph;
pub mod io;
mod normals;
mod segment;
pub(crate) mod spatial;
mod synth;

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use fpfh::{fpfh, fpfh_indices, FPFH_BINS, FPFH_SUBBINS};
pub use graph::{build_object_graph, describe_object, DescribedObject, DescriptorParams, ObjectGraph, SegmentVertex};
pub use normals::{estimate_normals, median_spacing};
pub use segment::{label_agreement, region_grow_segment, region_grow_segment_with, RegionGrowParams};
pub use synth::{generate_synthetic_scan, PlacedPrimitive, Primitive, ShapeSpec, Viewpoint, MIN_PATCH_POINTS};

/// Additive smoothing applied to every descriptor bin before normalization.
pub const DESCRIPTOR_SMOOTHING: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("point cloud has no normals; run normal estimation first")]
    MissingNormals,
    #[error("no neighbor pairs within radius {radius} in a segment of {points} points")]
    IsolatedPoints { radius: f64, points: usize },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("segment index set is empty")]
    EmptySegment,
    #[error(transparent)]
    Dictionary(#[from] crate::dictionary::DictionaryError),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Points in meters, in the sensor frame (sensor at the origin).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vector3<f64>>>,
    /// Surface variation `λ_min / Σλ` of each point's neighborhood, filled in
    /// by normal estimation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_ids: Option<Vec<Option<u32>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            *p += offset;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u32,
    pub point_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentedObject {
    pub cloud: PointCloud,
    pub segments: Vec<Segment>,
    /// Undirected adjacency as `(lo, hi)` segment-id pairs.
    pub adjacency: BTreeSet<(u32, u32)>,
    #[serde(default)]
    pub category_label: Option<String>,
}

impl SegmentedObject {
    /// Builds an object from per-point segment ids already present in the
    /// cloud. Adjacency is left empty.
    pub fn from_labeled_cloud(cloud: PointCloud, category_label: Option<String>) -> Self {
        let mut by_id: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
        if let Some(ids) = &cloud.segment_ids {
            for (i, id) in ids.iter().enumerate() {
                if let Some(id) = id {
                    by_id.entry(*id).or_default().push(i);
                }
            }
        }
        let segments = by_id
            .into_iter()
            .map(|(id, point_indices)| Segment { id, point_indices })
            .collect();
        Self {
            cloud,
            segments,
            adjacency: BTreeSet::new(),
            category_label,
        }
    }

    pub fn segment(&self, id: u32) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    /// Checks the structural invariants: non-empty, pairwise-disjoint
    /// segments; adjacency over valid ids without self-loops.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let mut seen = vec![false; self.cloud.len()];
        let ids: BTreeSet<u32> = self.segments.iter().map(|s| s.id).collect();
        if ids.len() != self.segments.len() {
            return Err(GeometryError::InvalidParameter("duplicate segment id".into()));
        }
        for s in &self.segments {
            if s.point_indices.is_empty() {
                return Err(GeometryError::EmptySegment);
            }
            for &i in &s.point_indices {
                if i >= seen.len() || seen[i] {
                    return Err(GeometryError::InvalidParameter(format!(
                        "point {i} is out of range or shared between segments"
                    )));
                }
                seen[i] = true;
            }
        }
        for &(a, b) in &self.adjacency {
            if a >= b || !ids.contains(&a) || !ids.contains(&b) {
                return Err(GeometryError::InvalidParameter(format!(
                    "bad adjacency edge ({a}, {b})"
                )));
            }
        }
        Ok(())
    }
}

/// A 33-bin L1-normalized histogram (three 11-bin angular histograms).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    /// Validates an already-normalized histogram.
    pub fn new(bins: Vec<f64>) -> Result<Self, GeometryError> {
        if bins.len() != FPFH_BINS {
            return Err(GeometryError::InvalidDescriptor(format!(
                "expected {FPFH_BINS} bins, got {}",
                bins.len()
            )));
        }
        if bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(GeometryError::InvalidDescriptor("negative or non-finite bin".into()));
        }
        let sum: f64 = bins.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidDescriptor(format!("bins sum to {sum}")));
        }
        Ok(Self(bins))
    }

    /// Smooths raw non-negative bin masses and normalizes them to sum 1.
    pub fn from_counts(counts: &[f64]) -> Result<Self, GeometryError> {
        let smoothed: Vec<f64> = counts.iter().map(|c| c + DESCRIPTOR_SMOOTHING).collect();
        let sum: f64 = smoothed.iter().sum();
        Self::new(smoothed.into_iter().map(|b| b / sum).collect())
    }

    pub fn bins(&self) -> &[f64] {
        &self.0
    }

    /// Arithmetic mean of descriptors; the mean of distributions is a distribution.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Descriptor>) -> Option<Descriptor> {
        let mut acc = vec![0.0; FPFH_BINS];
        let mut n = 0usize;
        for d in items {
            for (a, b) in acc.iter_mut().zip(&d.0) {
                *a += b;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let sum: f64 = acc.iter().sum();
        Some(Descriptor(acc.into_iter().map(|a| a / sum).collect()))
    }

    pub fn l2_sq(&self, other: &Descriptor) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl TryFrom<Vec<f64>> for Descriptor {
    type Error = GeometryError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Descriptor::new(v)
    }
}

impl From<Descriptor> for Vec<f64> {
    fn from(d: Descriptor) -> Self {
        d.0
    }
}
