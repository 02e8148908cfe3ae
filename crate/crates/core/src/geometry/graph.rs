use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{estimate_normals, fpfh, median_spacing, Descriptor, GeometryError, SegmentedObject};
use crate::dictionary::{Dictionary, DictionaryError, WordId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorParams {
    /// Neighbors used for normal estimation when the cloud has none.
    pub normal_k: usize,
    /// FPFH radius as a multiple of the median point spacing.
    pub radius_factor: f64,
    /// Fixed FPFH radius in meters; overrides `radius_factor`.
    pub radius: Option<f64>,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        Self {
            normal_k: 16,
            radius_factor: 4.0,
            radius: None,
        }
    }
}

/// A segmented object with normals and one descriptor per segment, before
/// word assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescribedObject {
    pub object: SegmentedObject,
    pub radius: f64,
    /// Parallel to `object.segments`.
    pub descriptors: Vec<Descriptor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentVertex {
    pub segment_id: u32,
    pub descriptor: Descriptor,
    /// Word at each dictionary level, `words[f - 1]` for level `f`.
    pub words: Vec<WordId>,
}

/// An object as a graph of segments carrying visual words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectGraph {
    pub object: SegmentedObject,
    /// FPFH radius used for the segment descriptors; reused for merged
    /// constellations.
    pub radius: f64,
    pub vertices: Vec<SegmentVertex>,
    pub edges: BTreeSet<(u32, u32)>,
}

pub fn describe_object(obj: &SegmentedObject, params: &DescriptorParams) -> Result<DescribedObject, GeometryError> {
    if obj.segments.is_empty() {
        return Err(GeometryError::EmptySegment);
    }
    obj.validate()?;
    let mut object = obj.clone();
    if object.cloud.normals.is_none() {
        object.cloud = estimate_normals(&object.cloud, params.normal_k)?;
    }
    let radius = match params.radius {
        Some(r) => r,
        None => {
            let spacing = median_spacing(&object.cloud).ok_or(GeometryError::InsufficientPoints {
                needed: 2,
                got: object.cloud.len(),
            })?;
            params.radius_factor * spacing
        }
    };
    if !(radius > 0.0) {
        return Err(GeometryError::InvalidParameter(format!("descriptor radius must be > 0, got {radius}")));
    }
    let descriptors = object
        .segments
        .iter()
        .map(|s| fpfh(s, &object.cloud, radius))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DescribedObject {
        object,
        radius,
        descriptors,
    })
}

impl DescribedObject {
    pub fn into_graph(self, dict: &Dictionary) -> Result<ObjectGraph, GeometryError> {
        if !dict.is_trained() {
            return Err(DictionaryError::Untrained.into());
        }
        let vertices = self
            .object
            .segments
            .iter()
            .zip(self.descriptors)
            .map(|(s, descriptor)| {
                Ok(SegmentVertex {
                    segment_id: s.id,
                    words: dict.assign_words(&descriptor)?,
                    descriptor,
                })
            })
            .collect::<Result<Vec<_>, DictionaryError>>()?;
        Ok(ObjectGraph {
            edges: self.object.adjacency.clone(),
            object: self.object,
            radius: self.radius,
            vertices,
        })
    }
}

/// Describes every segment with default parameters and assigns words.
pub fn build_object_graph(obj: &SegmentedObject, dict: &Dictionary) -> Result<ObjectGraph, GeometryError> {
    if !dict.is_trained() {
        return Err(DictionaryError::Untrained.into());
    }
    describe_object(obj, &DescriptorParams::default())?.into_graph(dict)
}

impl ObjectGraph {
    pub fn vertex(&self, segment_id: u32) -> Option<&SegmentVertex> {
        self.vertices.iter().find(|v| v.segment_id == segment_id)
    }

    pub fn depth(&self) -> usize {
        self.vertices.first().map_or(0, |v| v.words.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::train_dictionary;
    use crate::geometry::{generate_synthetic_scan, PointCloud, Segment, ShapeSpec, Viewpoint};
    use nalgebra::Vector3;

    fn trained(objs: &[&SegmentedObject], depth: usize) -> Dictionary {
        let corpus: Vec<Descriptor> = objs
            .iter()
            .flat_map(|o| describe_object(o, &DescriptorParams::default()).unwrap().descriptors)
            .collect();
        train_dictionary(&corpus, depth, 0, 20).unwrap()
    }

    #[test]
    fn box_has_three_vertices_with_words_per_level() {
        let obj = generate_synthetic_scan(&ShapeSpec::Box { size: [0.2, 0.15, 0.25] }, &Viewpoint::default(), 0.0, 1).unwrap();
        let sphere = generate_synthetic_scan(&ShapeSpec::Sphere { radius: 0.1 }, &Viewpoint::default(), 0.0, 1).unwrap();
        let dict = trained(&[&obj, &sphere], 3);
        let g = build_object_graph(&obj, &dict).unwrap();
        assert_eq!(g.vertices.len(), 3);
        assert!(g.vertices.iter().all(|v| v.words.len() == 3));
        assert_eq!(g.edges, obj.adjacency);
    }

    #[test]
    fn sphere_is_a_single_vertex() {
        let sphere = generate_synthetic_scan(&ShapeSpec::Sphere { radius: 0.1 }, &Viewpoint::default(), 0.0, 1).unwrap();
        let dict = trained(&[&sphere], 2);
        let g = build_object_graph(&sphere, &dict).unwrap();
        assert_eq!(g.vertices.len(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn identical_segments_get_identical_words() {
        // two copies of one flat patch, far apart
        let patch: Vec<Vector3<f64>> = (0..8)
            .flat_map(|i| (0..8).map(move |j| Vector3::new(i as f64 * 0.01, j as f64 * 0.01, 1.0)))
            .collect();
        let mut pts = patch.clone();
        pts.extend(patch.iter().map(|p| p + Vector3::new(0.5, 0.0, 0.0)));
        let mut cloud = PointCloud::new(pts);
        cloud.normals = Some(vec![-Vector3::z(); 128]);
        let obj = SegmentedObject {
            cloud,
            segments: vec![
                Segment { id: 0, point_indices: (0..64).collect() },
                Segment { id: 1, point_indices: (64..128).collect() },
            ],
            adjacency: BTreeSet::new(),
            category_label: None,
        };
        let box_obj = generate_synthetic_scan(&ShapeSpec::Box { size: [0.2, 0.2, 0.2] }, &Viewpoint::default(), 0.0, 1).unwrap();
        let dict = trained(&[&obj, &box_obj], 3);
        let g = build_object_graph(&obj, &dict).unwrap();
        assert_eq!(g.vertices[0].words, g.vertices[1].words);
    }

    #[test]
    fn untrained_dictionary_is_rejected() {
        let sphere = generate_synthetic_scan(&ShapeSpec::Sphere { radius: 0.1 }, &Viewpoint::default(), 0.0, 1).unwrap();
        assert!(matches!(
            build_object_graph(&sphere, &Dictionary::default()),
            Err(GeometryError::Dictionary(DictionaryError::Untrained))
        ));
    }
}
