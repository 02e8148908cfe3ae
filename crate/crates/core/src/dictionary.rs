//! Hierarchical visual-word dictionary built by divisive 2-means clustering.
//!
//! The root holds the whole corpus. Each node is split in two by Lloyd
//! iterations seeded with its farthest member pair, down to `depth` levels.
//! A node that cannot be split (fewer than two members, or all members
//! identical) stays a leaf and its word is carried down to every deeper
//! level, so every descriptor gets exactly one word per level.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Descriptor;
use crate::model::ModelKind;

pub type WordId = u32;

/// Member sets larger than this are subsampled when searching the farthest pair.
const FARTHEST_PAIR_SAMPLE: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum DictionaryError {
    #[error("cannot train a dictionary on an empty corpus")]
    EmptyCorpus,
    #[error("dictionary depth must be >= 1, got {0}")]
    InvalidDepth(usize),
    #[error("dictionary is not trained")]
    Untrained,
    #[error("level {level} is outside the dictionary depth {depth}")]
    LevelOutOfRange { level: usize, depth: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordNode {
    pub word_id: WordId,
    pub level: usize,
    pub centroid: Descriptor,
    pub parent: Option<WordId>,
    pub children: Option<[WordId; 2]>,
    /// Training descriptors that reached this node (not persisted).
    #[serde(skip)]
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    depth: usize,
    seed: u64,
    /// Indexed by word id; word 0 is the root.
    nodes: Vec<WordNode>,
    /// `levels[f - 1]` lists the words of level `f`, in tree order.
    levels: Vec<Vec<WordId>>,
}

impl ModelKind for Dictionary {
    const KIND: &'static str = "dictionary";
}

pub fn train_dictionary(
    descriptors: &[Descriptor],
    depth: usize,
    seed: u64,
    max_iter: usize,
) -> Result<Dictionary, DictionaryError> {
    if descriptors.is_empty() {
        return Err(DictionaryError::EmptyCorpus);
    }
    if depth < 1 {
        return Err(DictionaryError::InvalidDepth(depth));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..descriptors.len()).collect();
    let mut nodes = vec![WordNode {
        word_id: 0,
        level: 0,
        centroid: Descriptor::mean(descriptors).expect("non-empty corpus"),
        parent: None,
        children: None,
        members: all,
    }];
    let mut levels: Vec<Vec<WordId>> = Vec::with_capacity(depth);
    let mut frontier: Vec<WordId> = vec![0];
    for level in 1..=depth {
        let mut next = Vec::new();
        for &word in &frontier {
            let node = &nodes[word as usize];
            // only nodes of the previous level are candidates for splitting;
            // replicated leaves stay put
            let split = if node.level == level - 1 && node.children.is_none() {
                split_members(descriptors, &node.members, max_iter, &mut rng)
            } else {
                None
            };
            match split {
                Some((left, right)) => {
                    let mut ids = [0; 2];
                    for (slot, members) in ids.iter_mut().zip([left, right]) {
                        let id = nodes.len() as WordId;
                        let centroid = Descriptor::mean(members.iter().map(|&i| &descriptors[i]))
                            .expect("split halves are non-empty");
                        nodes.push(WordNode {
                            word_id: id,
                            level,
                            centroid,
                            parent: Some(word),
                            children: None,
                            members,
                        });
                        *slot = id;
                    }
                    nodes[word as usize].children = Some(ids);
                    next.extend(ids);
                }
                None => next.push(word),
            }
        }
        levels.push(next.clone());
        frontier = next;
    }
    Ok(Dictionary {
        depth,
        seed,
        nodes,
        levels,
    })
}

/// Two-way Lloyd clustering from the farthest pair. `None` when the member
/// set cannot be split.
fn split_members(
    descriptors: &[Descriptor],
    members: &[usize],
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<usize>, Vec<usize>)> {
    if members.len() < 2 {
        return None;
    }
    let candidates: Vec<usize> = if members.len() > FARTHEST_PAIR_SAMPLE {
        let mut sample = members.to_vec();
        sample.shuffle(rng);
        sample.truncate(FARTHEST_PAIR_SAMPLE);
        sample.sort_unstable();
        sample
    } else {
        members.to_vec()
    };
    let mut best = (0.0, 0, 0);
    for (a, &i) in candidates.iter().enumerate() {
        for &j in &candidates[a + 1..] {
            let d = descriptors[i].l2_sq(&descriptors[j]);
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    if best.0 <= 0.0 {
        return None;
    }
    let mut centroids = [descriptors[best.1].bins().to_vec(), descriptors[best.2].bins().to_vec()];
    let mut assignment: Vec<u8> = vec![u8::MAX; members.len()];
    for _ in 0..max_iter.max(1) {
        let next: Vec<u8> = members
            .iter()
            .map(|&m| {
                let d0 = l2_sq(descriptors[m].bins(), &centroids[0]);
                let d1 = l2_sq(descriptors[m].bins(), &centroids[1]);
                u8::from(d1 < d0)
            })
            .collect();
        let ones = next.iter().filter(|&&a| a == 1).count();
        if ones == 0 || ones == next.len() {
            break;
        }
        let converged = next == assignment;
        assignment = next;
        if converged {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let mut sum = vec![0.0; centroid.len()];
            let mut count = 0usize;
            for (&m, &a) in members.iter().zip(&assignment) {
                if a as usize == c {
                    for (s, b) in sum.iter_mut().zip(descriptors[m].bins()) {
                        *s += b;
                    }
                    count += 1;
                }
            }
            *centroid = sum.into_iter().map(|s| s / count as f64).collect();
        }
    }
    if assignment.iter().any(|&a| a == u8::MAX) {
        return None;
    }
    let (left, right): (Vec<_>, Vec<_>) = members.iter().zip(&assignment).partition(|(_, &a)| a == 0);
    let left: Vec<usize> = left.into_iter().map(|(&m, _)| m).collect();
    let right: Vec<usize> = right.into_iter().map(|(&m, _)| m).collect();
    (!left.is_empty() && !right.is_empty()).then_some((left, right))
}

fn l2_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Dictionary {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_trained(&self) -> bool {
        !self.nodes.is_empty() && self.levels.len() == self.depth && self.depth >= 1
    }

    pub fn node(&self, word: WordId) -> Option<&WordNode> {
        self.nodes.get(word as usize)
    }

    pub fn nodes(&self) -> &[WordNode] {
        &self.nodes
    }

    /// Words of level `level` (1-based).
    pub fn level(&self, level: usize) -> Result<&[WordId], DictionaryError> {
        if !self.is_trained() {
            return Err(DictionaryError::Untrained);
        }
        if level == 0 || level > self.depth {
            return Err(DictionaryError::LevelOutOfRange {
                level,
                depth: self.depth,
            });
        }
        Ok(&self.levels[level - 1])
    }

    /// Training members of each level-`level` word, in level order.
    pub fn level_members(&self, level: usize) -> Result<Vec<Vec<usize>>, DictionaryError> {
        Ok(self
            .level(level)?
            .iter()
            .map(|&w| self.nodes[w as usize].members.clone())
            .collect())
    }

    /// Word at each level `1..=depth` by tree descent; ties go to the child
    /// with the lower word id.
    pub fn assign_words(&self, d: &Descriptor) -> Result<Vec<WordId>, DictionaryError> {
        if !self.is_trained() {
            return Err(DictionaryError::Untrained);
        }
        let mut node = &self.nodes[0];
        let mut out = Vec::with_capacity(self.depth);
        for _ in 0..self.depth {
            if let Some([a, b]) = node.children {
                let (na, nb) = (&self.nodes[a as usize], &self.nodes[b as usize]);
                node = if d.l2_sq(&na.centroid) <= d.l2_sq(&nb.centroid) {
                    na
                } else {
                    nb
                };
            }
            out.push(node.word_id);
        }
        Ok(out)
    }
}

/// Free-function form of [`Dictionary::assign_words`].
pub fn assign_words(d: &Descriptor, dict: &Dictionary) -> Result<Vec<WordId>, DictionaryError> {
    dict.assign_words(d)
}
