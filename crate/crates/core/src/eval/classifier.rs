use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_matrix, EvalError};
use crate::model::ModelKind;

/// Something that can be fitted to labeled rows.
pub trait Learner {
    type Model: Predict;
    fn fit(&self, x: &[Vec<f64>], y: &[String], seed: u64) -> Result<Self::Model, EvalError>;
}

pub trait Predict {
    fn predict(&self, x: &[f64]) -> String;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierParams {
    pub epochs: usize,
    /// Initial step size; decays as `eta0 / (1 + eta0 * lambda * t)`.
    pub eta0: f64,
    /// l2 regularization strength (the bias is not regularized).
    pub lambda: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            epochs: 200,
            eta0: 0.1,
            lambda: 1e-3,
        }
    }
}

/// One-vs-rest linear model over standardized features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// Sorted class labels.
    pub labels: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub params: ClassifierParams,
    pub seed: u64,
}

impl ModelKind for LinearClassifier {
    const KIND: &'static str = "linear-classifier";
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearLearner(pub ClassifierParams);

impl Learner for LinearLearner {
    type Model = LinearClassifier;
    fn fit(&self, x: &[Vec<f64>], y: &[String], seed: u64) -> Result<LinearClassifier, EvalError> {
        LinearClassifier::train(x, y, &self.0, seed)
    }
}

impl LinearClassifier {
    /// Hinge loss per class, minimized by seeded stochastic subgradient
    /// descent.
    pub fn train(x: &[Vec<f64>], y: &[String], params: &ClassifierParams, seed: u64) -> Result<Self, EvalError> {
        let dim = check_matrix(x, y.len())?;
        let mut labels: Vec<String> = y.to_vec();
        labels.sort();
        labels.dedup();
        if labels.len() < 2 {
            return Err(EvalError::InvalidTask(format!("need at least 2 classes, got {}", labels.len())));
        }
        if !(params.eta0 > 0.0) || !(params.lambda >= 0.0) || params.epochs == 0 {
            return Err(EvalError::InvalidParameter("eta0 > 0, lambda >= 0 and epochs >= 1 required".into()));
        }
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|k| x.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..dim)
            .map(|k| {
                let var = x.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
            .collect();
        let class_of: Vec<usize> = y
            .iter()
            .map(|l| labels.binary_search(l).expect("label collected above"))
            .collect();

        let mut weights = vec![vec![0.0; dim]; labels.len()];
        let mut bias = vec![0.0; labels.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut t = 0usize;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let eta = params.eta0 / (1.0 + params.eta0 * params.lambda * t as f64);
                t += 1;
                for (c, (w, b)) in weights.iter_mut().zip(bias.iter_mut()).enumerate() {
                    let target = if class_of[i] == c { 1.0 } else { -1.0 };
                    let score: f64 = w.iter().zip(&z[i]).map(|(a, b)| a * b).sum::<f64>() + *b;
                    let shrink = 1.0 - eta * params.lambda;
                    for wk in w.iter_mut() {
                        *wk *= shrink;
                    }
                    if target * score < 1.0 {
                        for (wk, zk) in w.iter_mut().zip(&z[i]) {
                            *wk += eta * target * zk;
                        }
                        *b += eta * target;
                    }
                }
            }
        }
        Ok(Self {
            labels,
            weights,
            bias,
            mean,
            scale,
            params: params.clone(),
            seed,
        })
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }
}

/// Index of the largest score; the first (lexicographically smallest label)
/// wins ties.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

impl Predict for LinearClassifier {
    fn predict(&self, x: &[f64]) -> String {
        self.labels[argmax(&self.scores(x))].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [("a", [0.0, 0.0, 5.0]), ("b", [5.0, 0.0, 0.0]), ("c", [0.0, 5.0, 0.0])];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (label, c) in centers {
            for _ in 0..15 {
                x.push(c.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect());
                y.push(label.to_string());
            }
        }
        (x, y)
    }

    #[test]
    fn separable_set_is_learned_exactly() {
        let (x, y) = blobs(1);
        let model = LinearClassifier::train(&x, &y, &ClassifierParams::default(), 0).unwrap();
        for (row, label) in x.iter().zip(&y) {
            assert_eq!(&model.predict(row), label);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(2);
        let a = LinearClassifier::train(&x, &y, &ClassifierParams::default(), 7).unwrap();
        let b = LinearClassifier::train(&x, &y, &ClassifierParams::default(), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_invalid() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(
            LinearClassifier::train(&x, &y, &ClassifierParams::default(), 0),
            Err(EvalError::InvalidTask(_))
        ));
    }

    #[test]
    fn ties_go_to_the_smaller_label() {
        let model = LinearClassifier {
            labels: vec!["a".into(), "b".into()],
            weights: vec![vec![1.0], vec![1.0]],
            bias: vec![0.0, 0.0],
            mean: vec![0.0],
            scale: vec![1.0],
            params: ClassifierParams::default(),
            seed: 0,
        };
        assert_eq!(model.predict(&[3.0]), "a");
    }

    proptest! {
        #[test]
        fn argmax_ignores_increasing_affine_maps(scores in prop::collection::vec(-10.0..10.0f64, 1..8), a in 0.1..10.0f64, b in -5.0..5.0f64) {
            let mapped: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
            // affine maps can merge near-equal scores by rounding; compare when distinct
            let best = argmax(&scores);
            let gap = scores.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, s)| scores[best] - s).fold(f64::INFINITY, f64::min);
            prop_assume!(gap > 1e-9);
            prop_assert_eq!(argmax(&mapped), best);
        }
    }
}
