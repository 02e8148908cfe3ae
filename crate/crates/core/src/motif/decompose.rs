use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MotifError;
use crate::dictionary::WordId;
use crate::geometry::{fpfh_indices, Descriptor, ObjectGraph};

/// Per object and level, at most this many instances are kept (the
/// lexicographically smallest segment-id sets).
pub const MAX_INSTANCES_PER_LEVEL: usize = 512;

/// A connected segment constellation with the descriptor of its merged cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Sorted segment ids.
    pub segments: Vec<u32>,
    pub descriptor: Descriptor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotifLevel {
    pub instances: Vec<Instance>,
    /// Adjacent instance index pairs `(i, j)` with `i < j`.
    pub adjacency: Vec<(usize, usize)>,
}

/// The word-independent part of a decomposition, shared by all hierarchies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposedObject {
    /// `levels[l - 1]` holds the constellations of `l` segments.
    pub levels: Vec<MotifLevel>,
    /// Words of each segment per dictionary level.
    pub words: BTreeMap<u32, Vec<WordId>>,
}

/// An instance seen through one dictionary level.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMotif {
    pub segments: Vec<u32>,
    pub level: usize,
    /// Sorted word multiset.
    pub motif: Vec<WordId>,
    pub descriptor: Descriptor,
}

/// Constellations level by level: single segments first; each later level
/// holds the distinct unions of adjacent instances that add exactly one
/// segment. Above level 1, instances are adjacent when they share a segment.
pub fn decompose_object(g: &ObjectGraph) -> Result<DecomposedObject, MotifError> {
    if g.vertices.is_empty() {
        return Err(MotifError::EmptyObject);
    }
    let total = g.vertices.len();
    let mut points: BTreeMap<u32, &[usize]> = BTreeMap::new();
    for s in &g.object.segments {
        points.insert(s.id, &s.point_indices);
    }

    let mut vertices: Vec<_> = g.vertices.iter().collect();
    vertices.sort_by_key(|v| v.segment_id);
    let position: BTreeMap<u32, usize> = vertices.iter().enumerate().map(|(i, v)| (v.segment_id, i)).collect();
    let first = MotifLevel {
        instances: vertices
            .iter()
            .map(|v| Instance {
                segments: vec![v.segment_id],
                descriptor: v.descriptor.clone(),
            })
            .collect(),
        adjacency: g
            .edges
            .iter()
            .filter_map(|(a, b)| {
                let (i, j) = (*position.get(a)?, *position.get(b)?);
                Some((i.min(j), i.max(j)))
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut levels = vec![first];

    loop {
        let cur = levels.last().expect("at least one level");
        let size = cur.instances[0].segments.len();
        if size >= total || cur.adjacency.is_empty() {
            break;
        }
        let mut unions: BTreeSet<Vec<u32>> = BTreeSet::new();
        for &(i, j) in &cur.adjacency {
            let u: BTreeSet<u32> = cur.instances[i]
                .segments
                .iter()
                .chain(&cur.instances[j].segments)
                .copied()
                .collect();
            if u.len() == size + 1 {
                unions.insert(u.into_iter().collect());
            }
        }
        if unions.is_empty() {
            break;
        }
        let sets: Vec<Vec<u32>> = unions.into_iter().take(MAX_INSTANCES_PER_LEVEL).collect();
        let instances = sets
            .into_iter()
            .map(|segments| {
                let idx: Vec<usize> = segments
                    .iter()
                    .flat_map(|s| points.get(s).copied().unwrap_or_default())
                    .copied()
                    .collect();
                let descriptor = fpfh_indices(&idx, &g.object.cloud, g.radius)?;
                Ok(Instance { segments, descriptor })
            })
            .collect::<Result<Vec<_>, MotifError>>()?;
        let mut adjacency = Vec::new();
        for i in 0..instances.len() {
            for j in i + 1..instances.len() {
                if intersects(&instances[i].segments, &instances[j].segments) {
                    adjacency.push((i, j));
                }
            }
        }
        levels.push(MotifLevel { instances, adjacency });
    }

    let words = g.vertices.iter().map(|v| (v.segment_id, v.words.clone())).collect();
    Ok(DecomposedObject { levels, words })
}

fn intersects(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

impl DecomposedObject {
    /// Sorted word multiset of a segment set at dictionary level `f`.
    pub fn motif(&self, segments: &[u32], f: usize) -> Result<Vec<WordId>, MotifError> {
        let mut m = segments
            .iter()
            .map(|s| {
                self.words
                    .get(s)
                    .and_then(|w| w.get(f.wrapping_sub(1)).copied())
                    .ok_or_else(|| MotifError::ModelState(format!("segment {s} has no word at level {f}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        m.sort_unstable();
        Ok(m)
    }

    pub fn depth(&self) -> usize {
        self.words.values().map(|w| w.len()).min().unwrap_or(0)
    }
}

/// Per-level instance motifs of `g` at dictionary level `f`, with instance
/// adjacency.
pub fn decompose(g: &ObjectGraph, f: usize) -> Result<Vec<(Vec<InstanceMotif>, Vec<(usize, usize)>)>, MotifError> {
    if f == 0 || g.vertices.iter().any(|v| v.words.len() < f) {
        return Err(MotifError::ModelState(format!("object graph has no words at level {f}")));
    }
    let d = decompose_object(g)?;
    d.levels
        .iter()
        .enumerate()
        .map(|(l, level)| {
            let motifs = level
                .instances
                .iter()
                .map(|inst| {
                    Ok(InstanceMotif {
                        segments: inst.segments.clone(),
                        level: l + 1,
                        motif: d.motif(&inst.segments, f)?,
                        descriptor: inst.descriptor.clone(),
                    })
                })
                .collect::<Result<Vec<_>, MotifError>>()?;
            Ok((motifs, level.adjacency.clone()))
        })
        .collect()
}
