use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decompose_object, DecomposedObject, MotifError};
use crate::dictionary::{Dictionary, WordId};
use crate::geometry::{Descriptor, ObjectGraph};
use crate::model::ModelKind;
use crate::topo::jsd;

pub const DEFAULT_SIGMA: f64 = 0.025;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotifVertex {
    pub id: usize,
    pub level: usize,
    /// Sorted word multiset, `level` words long.
    pub motif: Vec<WordId>,
    pub prototypes: Vec<Descriptor>,
}

/// One hierarchy per dictionary level. Vertex ids follow creation order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "HierarchyData", into = "HierarchyData")]
pub struct MotifHierarchy {
    pub dictionary_level: usize,
    pub vertices: Vec<MotifVertex>,
    /// Vertex pairs `(a, b)`, `a <= b`, observed as adjacent instances.
    pub edges: BTreeSet<(usize, usize)>,
    index: BTreeMap<(usize, Vec<WordId>), usize>,
}

#[derive(Clone, Serialize, Deserialize)]
struct HierarchyData {
    dictionary_level: usize,
    vertices: Vec<MotifVertex>,
    edges: BTreeSet<(usize, usize)>,
}

impl From<HierarchyData> for MotifHierarchy {
    fn from(d: HierarchyData) -> Self {
        let index = d
            .vertices
            .iter()
            .map(|v| ((v.level, v.motif.clone()), v.id))
            .collect();
        Self {
            dictionary_level: d.dictionary_level,
            vertices: d.vertices,
            edges: d.edges,
            index,
        }
    }
}

impl From<MotifHierarchy> for HierarchyData {
    fn from(h: MotifHierarchy) -> Self {
        Self {
            dictionary_level: h.dictionary_level,
            vertices: h.vertices,
            edges: h.edges,
        }
    }
}

impl MotifHierarchy {
    pub fn new(dictionary_level: usize) -> Self {
        Self {
            dictionary_level,
            vertices: Vec::new(),
            edges: BTreeSet::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn find(&self, level: usize, motif: &[WordId]) -> Option<&MotifVertex> {
        self.index
            .get(&(level, motif.to_vec()))
            .map(|&id| &self.vertices[id])
    }

    fn find_or_create(&mut self, level: usize, motif: Vec<WordId>) -> usize {
        if let Some(&id) = self.index.get(&(level, motif.clone())) {
            return id;
        }
        let id = self.vertices.len();
        self.index.insert((level, motif.clone()), id);
        self.vertices.push(MotifVertex {
            id,
            level,
            motif,
            prototypes: Vec::new(),
        });
        id
    }

    /// Adds every instance of one decomposed object.
    pub fn observe(&mut self, obj: &DecomposedObject) -> Result<(), MotifError> {
        let f = self.dictionary_level;
        for (l, level) in obj.levels.iter().enumerate() {
            let mut ids = Vec::with_capacity(level.instances.len());
            for inst in &level.instances {
                let id = self.find_or_create(l + 1, obj.motif(&inst.segments, f)?);
                self.vertices[id].prototypes.push(inst.descriptor.clone());
                ids.push(id);
            }
            for &(i, j) in &level.adjacency {
                let (a, b) = (ids[i], ids[j]);
                self.edges.insert((a.min(b), a.max(b)));
            }
        }
        Ok(())
    }

    /// Per-vertex stimulus: the maximum over the object's instances that
    /// match the vertex, 0 when none does.
    pub fn block(&self, obj: &DecomposedObject, sigma: f64) -> Result<Vec<f64>, MotifError> {
        let mut out = vec![0.0; self.vertices.len()];
        for (l, level) in obj.levels.iter().enumerate() {
            for inst in &level.instances {
                let motif = obj.motif(&inst.segments, self.dictionary_level)?;
                if let Some(v) = self.find(l + 1, &motif) {
                    let s = stimulus(v, &inst.descriptor, true, sigma)?;
                    if s > out[v.id] {
                        out[v.id] = s;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub hierarchies: Vec<MotifHierarchy>,
    pub sigma: f64,
}

impl ModelKind for Ensemble {
    const KIND: &'static str = "ensemble";
}

impl Ensemble {
    pub fn dimension(&self) -> usize {
        self.hierarchies.iter().map(|h| h.vertices.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimuliVector {
    pub blocks: Vec<Vec<f64>>,
}

impl StimuliVector {
    pub fn concat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gaussian kernel over JSD, averaged over the vertex prototypes.
pub fn stimulus(v: &MotifVertex, q: &Descriptor, activated: bool, sigma: f64) -> Result<f64, MotifError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(MotifError::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    if !activated {
        return Ok(0.0);
    }
    if v.prototypes.is_empty() {
        return Err(MotifError::CorruptModel(format!("motif vertex {} has no prototypes", v.id)));
    }
    let two_s2 = 2.0 * sigma * sigma;
    let mut acc = 0.0;
    for t in &v.prototypes {
        let d = jsd(t.bins(), q.bins()).map_err(|e| MotifError::CorruptModel(e.to_string()))?;
        acc += (-(d * d) / two_s2).exp();
    }
    Ok((acc / v.prototypes.len() as f64).clamp(0.0, 1.0))
}

pub fn train_ensemble(objects: &[ObjectGraph], dict: &Dictionary) -> Result<Ensemble, MotifError> {
    if objects.is_empty() {
        return Err(MotifError::EmptyTrainingSet);
    }
    let decomposed = objects
        .par_iter()
        .map(decompose_object)
        .collect::<Result<Vec<_>, _>>()?;
    train_ensemble_decomposed(&decomposed, dict.depth(), DEFAULT_SIGMA)
}

/// Trains from precomputed decompositions; objects are observed in order.
pub fn train_ensemble_decomposed(
    objects: &[DecomposedObject],
    depth: usize,
    sigma: f64,
) -> Result<Ensemble, MotifError> {
    if objects.is_empty() {
        return Err(MotifError::EmptyTrainingSet);
    }
    if depth == 0 {
        return Err(MotifError::ModelState("dictionary depth is 0".into()));
    }
    if let Some(o) = objects.iter().find(|o| o.depth() < depth) {
        return Err(MotifError::ModelState(format!(
            "object has words for {} levels, dictionary has {depth}",
            o.depth()
        )));
    }
    let hierarchies = (1..=depth)
        .into_par_iter()
        .map(|f| {
            let mut h = MotifHierarchy::new(f);
            for o in objects {
                h.observe(o)?;
            }
            Ok(h)
        })
        .collect::<Result<Vec<_>, MotifError>>()?;
    Ok(Ensemble { hierarchies, sigma })
}

pub fn stimuli_vector(g: &ObjectGraph, e: &Ensemble) -> Result<StimuliVector, MotifError> {
    stimuli_vector_decomposed(&decompose_object(g)?, e)
}

pub fn stimuli_vector_decomposed(obj: &DecomposedObject, e: &Ensemble) -> Result<StimuliVector, MotifError> {
    if obj.depth() < e.hierarchies.len() {
        return Err(MotifError::ModelState(format!(
            "object has words for {} levels, ensemble has {} hierarchies",
            obj.depth(),
            e.hierarchies.len()
        )));
    }
    let blocks = e
        .hierarchies
        .iter()
        .map(|h| h.block(obj, e.sigma))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StimuliVector { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FPFH_BINS;
    use crate::motif::decompose::tests::patch_graph;
    use proptest::prelude::*;

    fn vertex(prototypes: Vec<Descriptor>) -> MotifVertex {
        MotifVertex {
            id: 0,
            level: 1,
            motif: vec![0],
            prototypes,
        }
    }

    fn desc(counts: &[f64]) -> Descriptor {
        let mut c = vec![0.0; FPFH_BINS];
        c[..counts.len()].copy_from_slice(counts);
        Descriptor::from_counts(&c).unwrap()
    }

    #[test]
    fn exact_prototype_gives_one() {
        let d = desc(&[1.0, 2.0, 3.0]);
        assert_eq!(stimulus(&vertex(vec![d.clone()]), &d, true, DEFAULT_SIGMA).unwrap(), 1.0);
    }

    #[test]
    fn not_activated_gives_zero() {
        let d = desc(&[1.0]);
        assert_eq!(stimulus(&vertex(vec![]), &d, false, DEFAULT_SIGMA).unwrap(), 0.0);
    }

    #[test]
    fn empty_prototypes_are_corrupt() {
        let d = desc(&[1.0]);
        assert!(matches!(
            stimulus(&vertex(vec![]), &d, true, DEFAULT_SIGMA),
            Err(MotifError::CorruptModel(_))
        ));
    }

    #[test]
    fn jsd_of_sigma_gives_exp_minus_half() {
        let t = desc(&[1.0, 1.0]);
        let q = desc(&[1.0, 1.2]);
        let sigma = jsd(t.bins(), q.bins()).unwrap();
        let s = stimulus(&vertex(vec![t]), &q, true, sigma).unwrap();
        assert!((s - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn two_segment_object_hierarchy() {
        let g = patch_graph(&[vec![3], vec![7]], &[(0, 1)]);
        let d = decompose_object(&g).unwrap();
        let e = train_ensemble_decomposed(&[d.clone()], 1, DEFAULT_SIGMA).unwrap();
        let h = &e.hierarchies[0];
        assert_eq!(h.vertices.len(), 3);
        assert_eq!(h.vertices.iter().filter(|v| v.level == 1).count(), 2);
        assert_eq!(h.edges.iter().filter(|(a, b)| h.vertices[*a].level == 1 && h.vertices[*b].level == 1).count(), 1);
    }

    #[test]
    fn retraining_on_the_same_object_adds_prototypes_only() {
        let g = patch_graph(&[vec![1, 2], vec![1, 3], vec![4, 5]], &[(0, 1), (1, 2)]);
        let d = decompose_object(&g).unwrap();
        let once = train_ensemble_decomposed(&[d.clone()], 2, DEFAULT_SIGMA).unwrap();
        let twice = train_ensemble_decomposed(&[d.clone(), d.clone()], 2, DEFAULT_SIGMA).unwrap();
        for (a, b) in once.hierarchies.iter().zip(&twice.hierarchies) {
            assert_eq!(a.vertices.len(), b.vertices.len());
            for (va, vb) in a.vertices.iter().zip(&b.vertices) {
                assert_eq!(vb.prototypes.len(), 2 * va.prototypes.len());
            }
        }
    }

    #[test]
    fn shared_words_make_one_vertex() {
        // two faces with the same word collapse to one level-1 vertex
        let g = patch_graph(&[vec![5], vec![5]], &[(0, 1)]);
        let d = decompose_object(&g).unwrap();
        let e = train_ensemble_decomposed(&[d], 1, DEFAULT_SIGMA).unwrap();
        let h = &e.hierarchies[0];
        assert_eq!(h.vertices.len(), 2);
        assert_eq!(h.vertices[1].motif, vec![5, 5]);
        assert_eq!(h.vertices[0].prototypes.len(), 2);
    }

    #[test]
    fn disjoint_words_give_disjoint_vertices() {
        let a = decompose_object(&patch_graph(&[vec![0], vec![1]], &[(0, 1)])).unwrap();
        let b = decompose_object(&patch_graph(&[vec![2], vec![3]], &[(0, 1)])).unwrap();
        let ea = train_ensemble_decomposed(&[a.clone()], 1, DEFAULT_SIGMA).unwrap();
        let eb = train_ensemble_decomposed(&[b.clone()], 1, DEFAULT_SIGMA).unwrap();
        let eab = train_ensemble_decomposed(&[a, b], 1, DEFAULT_SIGMA).unwrap();
        assert_eq!(eab.dimension(), ea.dimension() + eb.dimension());
    }

    #[test]
    fn replayed_training_object_is_activated() {
        let objs: Vec<_> = [
            patch_graph(&[vec![0], vec![1], vec![2]], &[(0, 1), (1, 2)]),
            patch_graph(&[vec![0], vec![1]], &[(0, 1)]),
            patch_graph(&[vec![1], vec![2]], &[(0, 1)]),
        ]
        .iter()
        .map(|g| decompose_object(g).unwrap())
        .collect();
        let e = train_ensemble_decomposed(&objs, 1, DEFAULT_SIGMA).unwrap();
        let s = stimuli_vector_decomposed(&objs[0], &e).unwrap();
        assert_eq!(s.len(), e.dimension());
        let h = &e.hierarchies[0];
        for (v, &x) in h.vertices.iter().zip(&s.blocks[0]) {
            if x > 0.0 {
                assert!(x >= 1.0 / v.prototypes.len() as f64 - 1e-12);
            }
        }
        // every instance of the replayed object activates something
        assert!(s.blocks[0].iter().filter(|x| **x > 0.0).count() >= 6);
    }

    #[test]
    fn unseen_words_give_zero_vector() {
        let train = decompose_object(&patch_graph(&[vec![0], vec![1]], &[(0, 1)])).unwrap();
        let e = train_ensemble_decomposed(&[train], 1, DEFAULT_SIGMA).unwrap();
        let other = decompose_object(&patch_graph(&[vec![8], vec![9]], &[(0, 1)])).unwrap();
        let s = stimuli_vector_decomposed(&other, &e).unwrap();
        assert!(s.concat().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn stale_depth_is_a_state_error() {
        let train = decompose_object(&patch_graph(&[vec![0, 1]], &[])).unwrap();
        let e = train_ensemble_decomposed(&[train], 2, DEFAULT_SIGMA).unwrap();
        let shallow = decompose_object(&patch_graph(&[vec![0]], &[])).unwrap();
        assert!(matches!(stimuli_vector_decomposed(&shallow, &e), Err(MotifError::ModelState(_))));
    }

    #[test]
    fn higher_level_vertices_have_witnesses() {
        let objs: Vec<_> = [
            patch_graph(&[vec![0], vec![1], vec![2], vec![0]], &[(0, 1), (1, 2), (2, 3)]),
            patch_graph(&[vec![1], vec![1], vec![2]], &[(0, 1), (0, 2), (1, 2)]),
        ]
        .iter()
        .map(|g| decompose_object(g).unwrap())
        .collect();
        let e = train_ensemble_decomposed(&objs, 1, DEFAULT_SIGMA).unwrap();
        let h = &e.hierarchies[0];
        let sub = |small: &[WordId], big: &[WordId]| {
            let mut rest = big.to_vec();
            small.iter().all(|w| match rest.iter().position(|x| x == w) {
                Some(p) => {
                    rest.remove(p);
                    true
                }
                None => false,
            })
        };
        for v in h.vertices.iter().filter(|v| v.level >= 2) {
            assert_eq!(v.motif.len(), v.level);
            let witnessed = h.edges.iter().any(|&(a, b)| {
                let (va, vb) = (&h.vertices[a], &h.vertices[b]);
                va.level == v.level - 1 && vb.level == v.level - 1 && sub(&va.motif, &v.motif) && sub(&vb.motif, &v.motif)
            });
            assert!(witnessed, "vertex {:?}", v.motif);
        }
    }

    #[test]
    fn persisted_ensemble_keeps_lookup() {
        let d = decompose_object(&patch_graph(&[vec![0], vec![1]], &[(0, 1)])).unwrap();
        let e = train_ensemble_decomposed(&[d.clone()], 1, DEFAULT_SIGMA).unwrap();
        let back: Ensemble = crate::model::from_str(&crate::model::to_string(&e), "mem").unwrap();
        assert_eq!(back, e);
        assert_eq!(
            stimuli_vector_decomposed(&d, &back).unwrap(),
            stimuli_vector_decomposed(&d, &e).unwrap()
        );
    }

    fn random_desc() -> impl Strategy<Value = Descriptor> {
        prop::collection::vec(0.0..1.0f64, FPFH_BINS).prop_map(|c| Descriptor::from_counts(&c).unwrap())
    }

    proptest! {
        #[test]
        fn stimuli_stay_in_unit_interval(protos in prop::collection::vec(random_desc(), 1..5), q in random_desc(), sigma in 0.001..1.0f64) {
            let s = stimulus(&vertex(protos.clone()), &q, true, sigma).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            // adding an exact copy of q never lowers the stimulus
            let mut more = protos;
            more.push(q.clone());
            prop_assert!(stimulus(&vertex(more), &q, true, sigma).unwrap() >= s - 1e-15);
        }
    }
}
