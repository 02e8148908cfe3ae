//! Single-pass region growing over normals.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::spatial::GridIndex;
use super::{GeometryError, PointCloud, Segment, SegmentedObject};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionGrowParams {
    /// Maximum angle between neighboring normals, in degrees.
    pub angle_thresh_deg: f64,
    /// Neighbor radius in meters.
    pub dist_thresh: f64,
    /// Points whose surface variation exceeds this join a region but do not
    /// grow it further. `None` lets every point grow.
    pub curvature_thresh: Option<f64>,
    /// Raises the curvature gate to this multiple of the cloud's median
    /// curvature, so uniformly curved surfaces still grow.
    pub relative_curvature: Option<f64>,
    /// Regions smaller than this are merged into their most-connected
    /// neighbor, or dropped if they touch none.
    pub min_segment_size: usize,
    /// Also raises the minimum size to this share of the cloud.
    pub min_segment_fraction: f64,
}

impl RegionGrowParams {
    pub fn new(angle_thresh_deg: f64, dist_thresh: f64) -> Self {
        Self {
            angle_thresh_deg,
            dist_thresh,
            curvature_thresh: Some(0.05),
            relative_curvature: Some(2.0),
            min_segment_size: 10,
            min_segment_fraction: 0.02,
        }
    }
}

/// Region growing with the default curvature gate and minimum segment size.
pub fn region_grow_segment(
    cloud: &PointCloud,
    angle_thresh_deg: f64,
    dist_thresh: f64,
) -> Result<SegmentedObject, GeometryError> {
    region_grow_segment_with(cloud, &RegionGrowParams::new(angle_thresh_deg, dist_thresh))
}

pub fn region_grow_segment_with(
    cloud: &PointCloud,
    params: &RegionGrowParams,
) -> Result<SegmentedObject, GeometryError> {
    let normals = cloud.normals.as_ref().ok_or(GeometryError::MissingNormals)?;
    if !(params.dist_thresh > 0.0) || !(params.angle_thresh_deg >= 0.0) || !(0.0..1.0).contains(&params.min_segment_fraction) {
        return Err(GeometryError::InvalidParameter(
            "dist_thresh must be > 0, angle_thresh >= 0 and min_segment_fraction in [0, 1)".into(),
        ));
    }
    let n = cloud.len();
    let cos_thresh = params.angle_thresh_deg.to_radians().cos();
    let index = GridIndex::over_subset(&cloud.points, (0..n).collect(), Some(params.dist_thresh));
    let neighbors: Vec<Vec<usize>> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .radius(p, params.dist_thresh)
                .into_iter()
                .filter(|&j| j != i)
                .collect()
        })
        .collect();

    let curvature = cloud.curvature.as_deref();
    let gate = match (params.curvature_thresh, curvature) {
        (Some(t), Some(c)) if !c.is_empty() => {
            let mut sorted = c.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[sorted.len() / 2];
            Some(params.relative_curvature.map_or(t, |r| t.max(r * median)))
        }
        _ => None,
    };
    let can_grow = |i: usize| match (gate, curvature) {
        (Some(t), Some(c)) => c[i] <= t,
        _ => true,
    };
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(c) = curvature {
        order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
    }

    let mut region = vec![usize::MAX; n];
    let mut regions: Vec<Vec<usize>> = Vec::new();
    for &seed in &order {
        if region[seed] != usize::MAX {
            continue;
        }
        let id = regions.len();
        region[seed] = id;
        let mut members = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(cur) = queue.pop_front() {
            for &nb in &neighbors[cur] {
                if region[nb] != usize::MAX {
                    continue;
                }
                if normals[cur].dot(&normals[nb]) >= cos_thresh {
                    region[nb] = id;
                    members.push(nb);
                    if can_grow(nb) {
                        queue.push_back(nb);
                    }
                }
            }
        }
        regions.push(members);
    }

    let min_size = params
        .min_segment_size
        .max((params.min_segment_fraction * n as f64).ceil() as usize);
    merge_small_regions(&mut region, regions.len(), &neighbors, min_size);

    // Renumber by smallest member index.
    let mut first_seen: BTreeMap<usize, u32> = BTreeMap::new();
    for &r in &region {
        if r != usize::MAX && !first_seen.contains_key(&r) {
            let next = first_seen.len() as u32;
            first_seen.insert(r, next);
        }
    }
    let ids: Vec<Option<u32>> = region
        .iter()
        .map(|r| (*r != usize::MAX).then(|| first_seen[r]))
        .collect();
    let mut segments: Vec<Segment> = (0..first_seen.len() as u32)
        .map(|id| Segment {
            id,
            point_indices: Vec::new(),
        })
        .collect();
    for (i, id) in ids.iter().enumerate() {
        if let Some(id) = id {
            segments[*id as usize].point_indices.push(i);
        }
    }

    let mut out = cloud.clone();
    out.segment_ids = Some(ids);
    let adjacency = segment_adjacency(&out, &segments, params.dist_thresh);
    Ok(SegmentedObject {
        cloud: out,
        segments,
        adjacency,
        category_label: None,
    })
}

fn merge_small_regions(region: &mut [usize], count: usize, neighbors: &[Vec<usize>], min_size: usize) {
    loop {
        let mut sizes = vec![0usize; count];
        for &r in region.iter() {
            if r != usize::MAX {
                sizes[r] += 1;
            }
        }
        // smallest live region below the threshold, ties by id
        let Some(small) = (0..count)
            .filter(|&r| sizes[r] > 0 && sizes[r] < min_size)
            .min_by_key(|&r| (sizes[r], r))
        else {
            return;
        };
        let mut contacts: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, &r) in region.iter().enumerate() {
            if r != small {
                continue;
            }
            for &nb in &neighbors[i] {
                let other = region[nb];
                if other != usize::MAX && other != small {
                    *contacts.entry(other).or_default() += 1;
                }
            }
        }
        let target = contacts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(r, _)| r)
            .unwrap_or(usize::MAX);
        for r in region.iter_mut() {
            if *r == small {
                *r = target;
            }
        }
    }
}

impl SegmentedObject {
    /// Segment pairs with at least one point pair within `contact` meters,
    /// the rule region growing uses for its adjacency.
    pub fn contact_adjacency(&self, contact: f64) -> BTreeSet<(u32, u32)> {
        segment_adjacency(&self.cloud, &self.segments, contact)
    }
}

/// Segment pairs with at least one point pair within `contact` meters.
pub(crate) fn segment_adjacency(cloud: &PointCloud, segments: &[Segment], contact: f64) -> BTreeSet<(u32, u32)> {
    let mut owner = vec![None; cloud.len()];
    for s in segments {
        for &i in &s.point_indices {
            owner[i] = Some(s.id);
        }
    }
    let index = GridIndex::over_subset(&cloud.points, (0..cloud.len()).collect(), Some(contact));
    let mut edges = BTreeSet::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let Some(a) = owner[i] else { continue };
        for j in index.radius(p, contact) {
            if let Some(b) = owner[j] {
                if a != b {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    edges
}

/// Fraction of points whose predicted segment, mapped to its majority
/// ground-truth segment, equals the ground truth. Unlabeled predictions count
/// as misses.
pub fn label_agreement(predicted: &[Option<u32>], truth: &[Option<u32>]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    let mut votes: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (p, t) in predicted.iter().zip(truth) {
        if let (Some(p), Some(t)) = (p, t) {
            *votes.entry(*p).or_default().entry(*t).or_default() += 1;
        }
    }
    let majority: BTreeMap<u32, u32> = votes
        .into_iter()
        .map(|(p, counts)| {
            let best = counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(t, _)| t)
                .expect("non-empty vote");
            (p, best)
        })
        .collect();
    let labeled = truth.iter().filter(|t| t.is_some()).count();
    if labeled == 0 {
        return 1.0;
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| matches!((p, t), (Some(p), Some(t)) if majority.get(p) == Some(t)))
        .count();
    hits as f64 / labeled as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{estimate_normals, generate_synthetic_scan, median_spacing, ShapeSpec, Viewpoint};
    use nalgebra::Vector3;

    fn grid_plane(n: usize, f: impl Fn(f64, f64) -> Vector3<f64>) -> Vec<Vector3<f64>> {
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i as f64 * 0.01, j as f64 * 0.01)))
            .map(|(u, v)| f(u, v))
            .collect()
    }

    fn with_normals(points: Vec<Vector3<f64>>) -> PointCloud {
        estimate_normals(&PointCloud::new(points), 12).unwrap()
    }

    #[test]
    fn one_plane_is_one_segment() {
        let cloud = with_normals(grid_plane(15, |u, v| Vector3::new(u, v, 1.0)));
        let obj = region_grow_segment(&cloud, 15.0, 0.015).unwrap();
        assert_eq!(obj.segments.len(), 1);
        assert!(obj.adjacency.is_empty());
    }

    #[test]
    fn perpendicular_planes_are_two_segments() {
        // floor z = 1.0 and wall x = 0.15, both facing the origin side
        let mut pts = grid_plane(16, |u, v| Vector3::new(u, v - 0.075, 1.0));
        pts.retain(|p| p.x < 0.145);
        pts.extend(grid_plane(16, |u, v| Vector3::new(0.15, v - 0.075, 1.0 - u)));
        let cloud = with_normals(pts);
        let obj = region_grow_segment(&cloud, 15.0, 0.015).unwrap();
        assert_eq!(obj.segments.len(), 2, "{:?}", obj.segments.iter().map(|s| s.point_indices.len()).collect::<Vec<_>>());
        assert_eq!(obj.adjacency.len(), 1);
        obj.validate().unwrap();
    }

    #[test]
    fn box_scan_matches_ground_truth() {
        let truth = generate_synthetic_scan(
            &ShapeSpec::Box { size: [0.2, 0.15, 0.25] },
            &Viewpoint::new(45.0, 35.0),
            0.002,
            11,
        )
        .unwrap();
        let cloud = estimate_normals(&truth.cloud, 16).unwrap();
        let spacing = median_spacing(&cloud).unwrap();
        let obj = region_grow_segment(&cloud, 15.0, 5.0 * spacing).unwrap();
        assert_eq!(obj.segments.len(), 3);
        let agreement = label_agreement(
            obj.cloud.segment_ids.as_ref().unwrap(),
            truth.cloud.segment_ids.as_ref().unwrap(),
        );
        assert!(agreement >= 0.9, "agreement {agreement}");
        obj.validate().unwrap();
        let reloaded = SegmentedObject::from_labeled_cloud(obj.cloud.clone(), None);
        assert_eq!(reloaded.contact_adjacency(5.0 * spacing), obj.adjacency);
    }

    #[test]
    fn adjacency_is_symmetric_and_loop_free() {
        let truth = generate_synthetic_scan(&ShapeSpec::teddy(0.07), &Viewpoint::new(80.0, 25.0), 0.001, 2).unwrap();
        let cloud = estimate_normals(&truth.cloud, 16).unwrap();
        let obj = region_grow_segment(&cloud, 15.0, 0.02).unwrap();
        for &(a, b) in &obj.adjacency {
            assert!(a < b);
        }
        obj.validate().unwrap();
    }

    #[test]
    fn missing_normals_is_a_precondition_error() {
        let cloud = PointCloud::new(vec![Vector3::zeros(); 5]);
        assert!(matches!(
            region_grow_segment(&cloud, 10.0, 0.1),
            Err(GeometryError::MissingNormals)
        ));
    }

    #[test]
    fn agreement_of_identical_labelings_is_one() {
        let t = vec![Some(0), Some(0), Some(1), None];
        assert_eq!(label_agreement(&t, &t), 1.0);
        let p = vec![Some(5), Some(5), Some(5), None];
        assert!((label_agreement(&p, &t) - 2.0 / 3.0).abs() < 1e-12);
    }
}
