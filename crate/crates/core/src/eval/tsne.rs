//! Exact t-SNE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_matrix, EvalError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// P is multiplied by this factor for the first `exaggeration_iters`.
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub coords: Vec<[f64; 2]>,
    pub kl_initial: f64,
    pub kl_final: f64,
}

/// Symmetrized input affinities `P` (row-major `N×N`), each conditional row
/// calibrated by binary search to the requested perplexity.
pub fn joint_probabilities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>, EvalError> {
    let n = x.len();
    check_matrix(x, n)?;
    if !(perplexity > 0.0) || perplexity >= n as f64 {
        return Err(EvalError::InvalidParameter(format!(
            "perplexity must be in (0, N = {n}), got {perplexity}"
        )));
    }
    let d2: Vec<f64> = (0..n * n)
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum()
        })
        .collect();
    let target = perplexity.ln();
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        let row = &d2[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        // shift by the smallest off-diagonal distance to avoid underflow
        let dmin = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::INFINITY, f64::min);
        let mut p = vec![0.0; n];
        for _ in 0..100 {
            let mut sum = 0.0;
            for j in 0..n {
                p[j] = if j == i { 0.0 } else { (-(row[j] - dmin) * beta).exp() };
                sum += p[j];
            }
            let mut h = 0.0;
            for pj in p.iter_mut() {
                *pj /= sum;
                if *pj > 0.0 {
                    h -= *pj * pj.ln();
                }
            }
            if (h - target).abs() < 1e-10 {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        cond[i * n..(i + 1) * n].copy_from_slice(&p);
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    Ok(p)
}

fn student_t(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                z += v;
            }
        }
    }
    (num, z)
}

/// `KL(P || Q)` for the embedding `y`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let (num, z) = student_t(y);
    let mut kl = 0.0;
    for ij in 0..n * n {
        if ij / n != ij % n && p[ij] > 0.0 {
            let q = num[ij] / z;
            kl += p[ij] * (p[ij] / q).ln();
        }
    }
    kl
}

/// Analytic gradient `4 Σ_j (p_ij − q_ij)(y_i − y_j)(1 + |y_i − y_j|²)⁻¹`.
pub fn kl_gradient(p: &[f64], y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = y.len();
    let (num, z) = student_t(y);
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let ij = i * n + j;
            let m = 4.0 * (p[ij] - num[ij] / z) * num[ij];
            grad[i][0] += m * (y[i][0] - y[j][0]);
            grad[i][1] += m * (y[i][1] - y[j][1]);
        }
    }
    grad
}

pub fn tsne(x: &[Vec<f64>], params: &TsneParams) -> Result<Embedding2D, EvalError> {
    let n = x.len();
    if n < 4 {
        return Err(EvalError::InvalidParameter(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let p = joint_probabilities(x, params.perplexity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid std");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let kl_initial = kl_divergence(&p, &y);

    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let exaggerated: Vec<f64> = p.iter().map(|v| v * params.early_exaggeration).collect();
    for it in 0..params.iterations {
        let pk = if it < params.exaggeration_iters { &exaggerated } else { &p };
        let grad = kl_gradient(pk, &y);
        let momentum = if it < params.momentum_switch {
            params.initial_momentum
        } else {
            params.final_momentum
        };
        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                gains[i][d] = if (g > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] = momentum * update[i][d] - params.learning_rate * gains[i][d] * g;
                y[i][d] += update[i][d];
            }
        }
        for d in 0..2 {
            let mean = y.iter().map(|v| v[d]).sum::<f64>() / n as f64;
            for v in y.iter_mut() {
                v[d] -= mean;
            }
        }
    }
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(EvalError::InvalidParameter("t-SNE diverged; lower the learning rate".into()));
    }
    let kl_final = kl_divergence(&p, &y);
    Ok(Embedding2D {
        coords: y,
        kl_initial,
        kl_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn conditional_rows_match_perplexity() {
        let x = random_points(20, 3, 1);
        let p = joint_probabilities(&x, 5.0).unwrap();
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(p[i * 20 + j], p[j * 20 + i]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = random_points(10, 5, 2);
        let p = joint_probabilities(&x, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<[f64; 2]> = (0..10).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let g = kl_gradient(&p, &y);
        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..10 {
            for d in 0..2 {
                let mut plus = y.clone();
                plus[i][d] += h;
                let mut minus = y.clone();
                minus[i][d] -= h;
                let fd = (kl_divergence(&p, &plus) - kl_divergence(&p, &minus)) / (2.0 * h);
                num += (fd - g[i][d]).powi(2);
                den += g[i][d].powi(2);
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn descent_lowers_kl() {
        let x = random_points(30, 4, 4);
        let params = TsneParams {
            perplexity: 8.0,
            ..Default::default()
        };
        let e = tsne(&x, &params).unwrap();
        assert_eq!(e.coords.len(), 30);
        assert!(e.coords.iter().all(|c| c[0].is_finite() && c[1].is_finite()));
        assert!(e.kl_final <= e.kl_initial);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn default_schedule_never_raises_kl(n in 8usize..40, dim in 1usize..6, seed in 0u64..1000) {
            let x = random_points(n, dim, seed);
            let params = TsneParams {
                perplexity: ((n - 1) as f64 / 3.0).min(30.0),
                seed,
                ..Default::default()
            };
            let e = tsne(&x, &params).unwrap();
            proptest::prop_assert!(e.kl_final <= e.kl_initial, "{} > {}", e.kl_final, e.kl_initial);
        }
    }

    #[test]
    fn zero_iterations_returns_the_initialization() {
        let x = random_points(6, 2, 5);
        let params = TsneParams {
            perplexity: 2.0,
            iterations: 0,
            seed: 9,
            ..Default::default()
        };
        let e = tsne(&x, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 1e-4).unwrap();
        for c in &e.coords {
            assert_eq!(c[0], normal.sample(&mut rng));
            assert_eq!(c[1], normal.sample(&mut rng));
        }
        assert_eq!(e.kl_initial, e.kl_final);
    }

    #[test]
    fn perplexity_must_be_below_n() {
        let x = random_points(5, 2, 6);
        let params = TsneParams {
            perplexity: 5.0,
            ..Default::default()
        };
        assert!(matches!(tsne(&x, &params), Err(EvalError::InvalidParameter(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let x = random_points(12, 3, 7);
        let params = TsneParams {
            perplexity: 4.0,
            iterations: 100,
            ..Default::default()
        };
        assert_eq!(tsne(&x, &params).unwrap(), tsne(&x, &params).unwrap());
    }
}
