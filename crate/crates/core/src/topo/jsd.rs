use super::TopoError;

/// Base-2 Jensen-Shannon divergence of two distributions, in `[0, 1]`.
///
/// Inputs are taken as given (the caller normalizes). `0 · log 0` is 0.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64, TopoError> {
    if p.len() != q.len() {
        return Err(TopoError::DimensionMismatch(p.len(), q.len()));
    }
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        // evaluated symmetrically so that jsd(p, q) == jsd(q, p) bit for bit
        acc += kl_term(a, m) + kl_term(b, m);
    }
    Ok((0.5 * acc).clamp(0.0, 1.0))
}

fn kl_term(x: f64, m: f64) -> f64 {
    if x > 0.0 {
        x * (x / m).log2()
    } else {
        0.0
    }
}

/// L1-normalizes a non-negative vector; an all-zero vector becomes uniform.
pub fn normalize_distribution(v: &[f64]) -> Result<Vec<f64>, TopoError> {
    if v.is_empty() {
        return Err(TopoError::InvalidInput("empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(TopoError::InvalidInput("entries must be finite and non-negative".into()));
    }
    let sum: f64 = v.iter().sum();
    if sum == 0.0 {
        return Ok(vec![1.0 / v.len() as f64; v.len()]);
    }
    Ok(v.iter().map(|x| x / sum).collect())
}
