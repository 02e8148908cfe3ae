use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_matrix, EvalError, Learner, Predict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvProtocol {
    pub split_ratio: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for CvProtocol {
    fn default() -> Self {
        Self {
            split_ratio: 0.75,
            repetitions: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Mean test error per class over repetitions, in percent.
    pub per_class: BTreeMap<String, f64>,
    /// Mean of `per_class`.
    pub mean: f64,
}

/// Train/test indices with each class split at `ratio`, keeping at least
/// one sample of every class on each side.
pub fn stratified_split(y: &[String], ratio: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EvalError::InvalidParameter(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in y.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(EvalError::Stratification(format!("class `{label}` has {} sample", idx.len())));
        }
        idx.shuffle(rng);
        let n_train = ((ratio * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Repeated stratified hold-out evaluation.
pub fn cross_validate<L: Learner>(
    learner: &L,
    x: &[Vec<f64>],
    y: &[String],
    protocol: &CvProtocol,
) -> Result<CvResult, EvalError> {
    check_matrix(x, y.len())?;
    if protocol.repetitions == 0 {
        return Err(EvalError::InvalidParameter("repetitions must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for _ in 0..protocol.repetitions {
        let (train, test) = stratified_split(y, protocol.split_ratio, &mut rng)?;
        let fit_seed: u64 = rng.random();
        let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let yt: Vec<String> = train.iter().map(|&i| y[i].clone()).collect();
        let model = learner.fit(&xt, &yt, fit_seed)?;
        let mut wrong: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for &i in &test {
            let e = wrong.entry(&y[i]).or_default();
            e.1 += 1;
            if model.predict(&x[i]) != y[i] {
                e.0 += 1;
            }
        }
        for (label, (w, n)) in wrong {
            *sums.entry(label.to_string()).or_default() += 100.0 * w as f64 / n as f64;
        }
    }
    let per_class: BTreeMap<String, f64> = sums
        .into_iter()
        .map(|(l, s)| (l, s / protocol.repetitions as f64))
        .collect();
    let mean = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(CvResult { per_class, mean })
}
