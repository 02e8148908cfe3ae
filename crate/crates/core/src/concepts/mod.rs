//! Concepts cut from the filtration graph, their scores, and concept
//! responses.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::{cross_validate, ClassifierParams, CvProtocol, EvalError, LinearLearner};
use crate::model::ModelKind;
use crate::topo::{CutRule, Filtration};

pub const RANK_EPSILON: f64 = 1e-6;
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;
pub const DEFAULT_MIN_SIZE: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum ConceptError {
    #[error("sample {0} has no label")]
    MissingLabel(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: usize,
    /// Sample (filtration vertex) ids, ascending.
    pub members: Vec<usize>,
    /// Latest annexation time among the concept's internal F edges.
    pub formation_time: f64,
}

impl Concept {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptSet {
    pub concepts: Vec<Concept>,
    pub cut_time: f64,
    pub rule: CutRule,
    pub min_size: usize,
}

/// Components of F after the cut with at least `min_size` members; ids in
/// descending size, ties by smallest member.
pub fn extract_concepts(f: &Filtration, t_star: f64, min_size: usize) -> Result<ConceptSet, ConceptError> {
    extract_concepts_with(f, t_star, min_size, CutRule::default())
}

pub fn extract_concepts_with(
    f: &Filtration,
    t_star: f64,
    min_size: usize,
    rule: CutRule,
) -> Result<ConceptSet, ConceptError> {
    if !(0.0..=1.0).contains(&t_star) {
        return Err(ConceptError::InvalidParameter(format!("cut time must be in [0, 1], got {t_star}")));
    }
    if min_size == 0 {
        return Err(ConceptError::InvalidParameter("min_size must be >= 1".into()));
    }
    let comps = f.cut(t_star, rule);
    let mut owner = vec![usize::MAX; f.len];
    for (c, members) in comps.iter().enumerate() {
        for &v in members {
            owner[v] = c;
        }
    }
    let mut formed = vec![0.0f64; comps.len()];
    for e in &f.f_edges {
        if owner[e.u] == owner[e.v] {
            let c = owner[e.u];
            formed[c] = formed[c].max(e.time);
        }
    }
    let concepts = comps
        .into_iter()
        .zip(formed)
        .filter(|(m, _)| m.len() >= min_size)
        .enumerate()
        .map(|(id, (members, formation_time))| Concept {
            id,
            members,
            formation_time,
        })
        .collect();
    Ok(ConceptSet {
        concepts,
        cut_time: t_star,
        rule,
        min_size,
    })
}

/// Share of the most common label.
pub fn purity<S: AsRef<str>>(member_labels: &[Option<S>]) -> Result<f64, ConceptError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, l) in member_labels.iter().enumerate() {
        let l = l.as_ref().ok_or(ConceptError::MissingLabel(i))?;
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    if member_labels.is_empty() {
        return Err(ConceptError::InvalidParameter("empty concept".into()));
    }
    let top = counts.values().copied().max().unwrap_or(0);
    Ok(top as f64 / member_labels.len() as f64)
}

pub fn rank_score(size: usize, purity: f64) -> f64 {
    size as f64 / (1.0 - purity + RANK_EPSILON)
}

/// Purity of a concept given labels for every sample.
pub fn concept_purity(c: &Concept, labels: &[Option<String>]) -> Result<f64, ConceptError> {
    let member_labels: Vec<Option<&str>> = c
        .members
        .iter()
        .map(|&m| labels.get(m).and_then(|l| l.as_deref()))
        .collect();
    purity(&member_labels).map_err(|e| match e {
        ConceptError::MissingLabel(i) => ConceptError::MissingLabel(c.members[i]),
        other => other,
    })
}

/// Diagonal Mahalanobis metric from pooled per-dimension variances, shrunk
/// toward their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    pub variances: Vec<f64>,
    pub shrinkage: f64,
}

impl Covariance {
    pub fn identity(dim: usize) -> Self {
        Self {
            variances: vec![1.0; dim],
            shrinkage: 0.0,
        }
    }

    pub fn fit(samples: &[Vec<f64>], shrinkage: f64) -> Result<Self, ConceptError> {
        if samples.is_empty() {
            return Err(ConceptError::InvalidParameter("no samples to fit".into()));
        }
        if !(0.0..=1.0).contains(&shrinkage) {
            return Err(ConceptError::InvalidParameter(format!("shrinkage must be in [0, 1], got {shrinkage}")));
        }
        let dim = samples[0].len();
        check_dims(samples, dim)?;
        let n = samples.len() as f64;
        let raw: Vec<f64> = (0..dim)
            .map(|k| {
                let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
                samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / n
            })
            .collect();
        let mean_var = if dim == 0 { 0.0 } else { raw.iter().sum::<f64>() / dim as f64 };
        if !(mean_var > 0.0) {
            return Ok(Self::identity(dim));
        }
        let variances = raw
            .iter()
            .map(|v| (1.0 - shrinkage) * v + shrinkage * mean_var)
            .collect();
        Ok(Self { variances, shrinkage })
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64, ConceptError> {
        for v in [a, b] {
            if v.len() != self.variances.len() {
                return Err(ConceptError::DimensionMismatch {
                    expected: self.variances.len(),
                    got: v.len(),
                });
            }
        }
        Ok(a.iter()
            .zip(b)
            .zip(&self.variances)
            .map(|((x, y), v)| (x - y) * (x - y) / v)
            .sum::<f64>()
            .sqrt())
    }
}

fn check_dims(samples: &[Vec<f64>], dim: usize) -> Result<(), ConceptError> {
    match samples.iter().find(|s| s.len() != dim) {
        Some(s) => Err(ConceptError::DimensionMismatch {
            expected: dim,
            got: s.len(),
        }),
        None => Ok(()),
    }
}

/// Mean Mahalanobis distance of `gamma` to the prototypes.
pub fn concept_response<P: AsRef<[f64]>>(gamma: &[f64], prototypes: &[P], cov: &Covariance) -> Result<f64, ConceptError> {
    if prototypes.is_empty() {
        return Err(ConceptError::InvalidParameter("concept has no prototypes".into()));
    }
    let mut acc = 0.0;
    for p in prototypes {
        acc += cov.distance(gamma, p.as_ref())?;
    }
    Ok(acc / prototypes.len() as f64)
}

/// Fitted concepts: the concept set, the training stimuli they were cut
/// from, and the metric used for responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptModel {
    pub set: ConceptSet,
    pub stimuli: Vec<Vec<f64>>,
    pub labels: Vec<Option<String>>,
    pub covariance: Covariance,
}

impl ModelKind for ConceptModel {
    const KIND: &'static str = "concepts";
}

impl ConceptModel {
    pub fn fit(set: ConceptSet, stimuli: Vec<Vec<f64>>, labels: Vec<Option<String>>, shrinkage: f64) -> Result<Self, ConceptError> {
        if labels.len() != stimuli.len() {
            return Err(ConceptError::DimensionMismatch {
                expected: stimuli.len(),
                got: labels.len(),
            });
        }
        if let Some(&bad) = set.concepts.iter().flat_map(|c| &c.members).find(|&&m| m >= stimuli.len()) {
            return Err(ConceptError::InvalidParameter(format!("concept member {bad} has no stimuli")));
        }
        let covariance = Covariance::fit(&stimuli, shrinkage)?;
        Ok(Self {
            set,
            stimuli,
            labels,
            covariance,
        })
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.set.concepts
    }

    pub fn prototypes(&self, c: &Concept) -> Vec<&[f64]> {
        c.members.iter().map(|&m| self.stimuli[m].as_slice()).collect()
    }

    /// One response per concept, in id order.
    pub fn responses(&self, gamma: &[f64]) -> Result<Vec<f64>, ConceptError> {
        self.set
            .concepts
            .iter()
            .map(|c| concept_response(gamma, &self.prototypes(c), &self.covariance))
            .collect()
    }

    pub fn purity(&self, c: &Concept) -> Result<f64, ConceptError> {
        concept_purity(c, &self.labels)
    }

    pub fn mean_purity(&self) -> Result<Option<f64>, ConceptError> {
        mean_purity(&self.set, &self.labels)
    }
}

pub fn responses(gamma: &[f64], model: &ConceptModel) -> Result<Vec<f64>, ConceptError> {
    model.responses(gamma)
}

/// Mean purity over concepts, `None` without concepts.
pub fn mean_purity(set: &ConceptSet, labels: &[Option<String>]) -> Result<Option<f64>, ConceptError> {
    if set.concepts.is_empty() {
        return Ok(None);
    }
    let mut acc = 0.0;
    for c in &set.concepts {
        acc += concept_purity(c, labels)?;
    }
    Ok(Some(acc / set.concepts.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub cut_times: Vec<f64>,
    pub min_sizes: Vec<usize>,
    pub rule: CutRule,
    pub shrinkage: f64,
    pub classifier: ClassifierParams,
    pub protocol: CvProtocol,
}

/// Mean purity and mean classification error (percent) per grid cell;
/// `NaN` where no concept survives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cut_times: Vec<f64>,
    pub min_sizes: Vec<usize>,
    /// `[cut][min_size]`.
    pub purity: Vec<Vec<f64>>,
    pub error: Vec<Vec<f64>>,
    pub concept_counts: Vec<Vec<usize>>,
}

pub fn supervised_sweep(
    f: &Filtration,
    stimuli: &[Vec<f64>],
    labels: &[String],
    params: &SweepParams,
) -> Result<SweepResult, ConceptError> {
    if stimuli.len() != f.len || labels.len() != f.len {
        return Err(ConceptError::DimensionMismatch {
            expected: f.len,
            got: stimuli.len().min(labels.len()),
        });
    }
    if let Some(&m) = params.min_sizes.iter().find(|&&m| m < 2) {
        return Err(ConceptError::InvalidParameter(format!(
            "min size {m} would admit singleton concepts"
        )));
    }
    let opt_labels: Vec<Option<String>> = labels.iter().cloned().map(Some).collect();
    let cells: Vec<(f64, usize)> = params
        .cut_times
        .iter()
        .flat_map(|&t| params.min_sizes.iter().map(move |&m| (t, m)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(t, m)| -> Result<(f64, f64, usize), ConceptError> {
            let set = extract_concepts_with(f, t, m, params.rule)?;
            let count = set.concepts.len();
            if count == 0 {
                return Ok((f64::NAN, f64::NAN, 0));
            }
            let purity = mean_purity(&set, &opt_labels)?.expect("non-empty set");
            let model = ConceptModel::fit(set, stimuli.to_vec(), opt_labels.clone(), params.shrinkage)?;
            let x = stimuli
                .iter()
                .map(|s| model.responses(s))
                .collect::<Result<Vec<_>, _>>()?;
            let cv = cross_validate(&LinearLearner(params.classifier.clone()), &x, labels, &params.protocol)?;
            Ok((purity, cv.mean, count))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cols = params.min_sizes.len();
    let mut out = SweepResult {
        cut_times: params.cut_times.clone(),
        min_sizes: params.min_sizes.clone(),
        purity: vec![vec![f64::NAN; cols]; params.cut_times.len()],
        error: vec![vec![f64::NAN; cols]; params.cut_times.len()],
        concept_counts: vec![vec![0; cols]; params.cut_times.len()],
    };
    for (i, (p, e, c)) in results.into_iter().enumerate() {
        out.purity[i / cols][i % cols] = p;
        out.error[i / cols][i % cols] = e;
        out.concept_counts[i / cols][i % cols] = c;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topo::{filtrate, TopoSpace, DEFAULT_MAX_STEPS};
    use proptest::prelude::*;

    fn path_filtration(d: &[f64]) -> Filtration {
        let edges: Vec<_> = d.iter().enumerate().map(|(i, &w)| (i, i + 1, w)).collect();
        filtrate(&TopoSpace::from_tree(d.len() + 1, &edges).unwrap(), DEFAULT_MAX_STEPS).unwrap()
    }

    #[test]
    fn four_path_cut_gives_two_pairs() {
        let f = path_filtration(&[0.1, 0.9, 0.1]);
        let set = extract_concepts(&f, 0.5, 2).unwrap();
        let members: Vec<_> = set.concepts.iter().map(|c| c.members.clone()).collect();
        assert_eq!(members, vec![vec![0, 1], vec![2, 3]]);
        assert!(set.concepts.iter().all(|c| c.formation_time == 0.0));
    }

    #[test]
    fn full_and_filtered_cuts() {
        let f = path_filtration(&[0.1, 0.5, 0.9]);
        let all = extract_concepts(&f, 1.0, 2).unwrap();
        assert_eq!(all.concepts.len(), 1);
        assert_eq!(all.concepts[0].members, vec![0, 1, 2, 3]);
        assert_eq!(all.concepts[0].formation_time, 1.0);
        // at t = 0 only the first edge is present; the singletons are filtered
        let early = extract_concepts(&f, 0.0, 2).unwrap();
        assert_eq!(early.concepts.len(), 1);
        assert_eq!(early.concepts[0].members, vec![0, 1]);
        assert!(extract_concepts(&f, 0.0, 3).unwrap().concepts.is_empty());
        assert!(extract_concepts(&f, 1.5, 2).is_err());
    }

    #[test]
    fn purity_examples() {
        assert!((purity(&[Some("A"), Some("A"), Some("B")]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(purity(&[Some("A"), Some("A")]).unwrap(), 1.0);
        assert_eq!(purity(&[Some("A"), Some("B")]).unwrap(), 0.5);
        assert!(matches!(purity(&[Some("A"), None]), Err(ConceptError::MissingLabel(1))));
    }

    #[test]
    fn rank_score_examples() {
        assert!((rank_score(4, 1.0) - 4.0e6).abs() < 1e-6);
        assert!((rank_score(2, 0.5) - 2.0 / 0.500001).abs() < 1e-12);
        assert!(rank_score(1, 1.0).is_finite());
    }

    #[test]
    fn identity_covariance_is_euclidean() {
        let cov = Covariance::identity(2);
        let r = concept_response(&[0.0, 0.0], &[vec![3.0, 4.0], vec![0.0, 1.0]], &cov).unwrap();
        assert_eq!(r, 3.0);
        assert_eq!(concept_response(&[1.0, 2.0], &[vec![1.0, 2.0]], &cov).unwrap(), 0.0);
    }

    #[test]
    fn constant_samples_fall_back_to_identity() {
        let cov = Covariance::fit(&[vec![1.0, 1.0], vec![1.0, 1.0]], DEFAULT_SHRINKAGE).unwrap();
        assert_eq!(cov, Covariance::identity(2));
    }

    #[test]
    fn shrinkage_keeps_variances_positive() {
        let cov = Covariance::fit(&[vec![0.0, 1.0], vec![0.0, 3.0]], DEFAULT_SHRINKAGE).unwrap();
        assert!((cov.variances[0] - 1e-3 * 0.5).abs() < 1e-15);
        assert!((cov.variances[1] - (0.999 + 1e-3 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn far_concept_has_larger_response() {
        let stimuli = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 5.0], vec![5.1, 5.0]];
        let f = path_filtration(&[0.1, 0.9, 0.1]);
        let set = extract_concepts(&f, 0.5, 2).unwrap();
        let model = ConceptModel::fit(set, stimuli.clone(), vec![None; 4], DEFAULT_SHRINKAGE).unwrap();
        let r = model.responses(&stimuli[0]).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r[1] > r[0]);
        assert!(r.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let cov = Covariance::identity(2);
        assert!(matches!(
            concept_response(&[0.0], &[vec![1.0, 2.0]], &cov),
            Err(ConceptError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sweep_marks_empty_cells_undefined() {
        let f = path_filtration(&[0.1, 0.9, 0.1, 0.9, 0.1]);
        let stimuli: Vec<Vec<f64>> = (0..6).map(|i| vec![(i / 2) as f64, 1.0]).collect();
        let labels: Vec<String> = (0..6).map(|i| ["a", "b", "c"][i / 2].to_string()).collect();
        let params = SweepParams {
            cut_times: vec![0.5, 1.0],
            min_sizes: vec![2, 7],
            rule: CutRule::DropLater,
            shrinkage: DEFAULT_SHRINKAGE,
            classifier: ClassifierParams::default(),
            protocol: CvProtocol::default(),
        };
        let r = supervised_sweep(&f, &stimuli, &labels, &params).unwrap();
        assert_eq!(r.purity[0][0], 1.0);
        assert!(r.purity[0][1].is_nan());
        assert!(r.error[1][1].is_nan());
        assert_eq!(r.concept_counts[0][0], 3);
        let bad = SweepParams {
            min_sizes: vec![1],
            ..params
        };
        assert!(supervised_sweep(&f, &stimuli, &labels, &bad).is_err());
    }

    proptest! {
        #[test]
        fn rank_score_is_monotone(size in 1usize..500, p in 0.0..1.0f64, dp in 0.001..0.5f64) {
            prop_assert!(rank_score(size + 1, p) > rank_score(size, p));
            let q = (p + dp).min(1.0);
            prop_assume!(q > p);
            prop_assert!(rank_score(size, q) > rank_score(size, p));
        }

        #[test]
        fn response_ignores_prototype_order(protos in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 1..6), g in prop::collection::vec(-1.0..1.0f64, 3)) {
            let cov = Covariance::fit(&protos, DEFAULT_SHRINKAGE).unwrap();
            let mut rev = protos.clone();
            rev.reverse();
            let a = concept_response(&g, &protos, &cov).unwrap();
            let b = concept_response(&g, &rev, &cov).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
