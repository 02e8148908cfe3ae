//! Simplified Fast Point Feature Histogram.
//!
//! For every point, the three Darboux-frame pair features (α, φ, θ) against
//! each radius neighbor are binned into 11 bins apiece. Each point's three
//! sub-histograms are normalized, averaged over the segment with uniform
//! weights, smoothed, and L1-normalized into 33 bins.

use nalgebra::Vector3;

use super::spatial::GridIndex;
use super::{Descriptor, GeometryError, PointCloud, Segment};

pub const FPFH_SUBBINS: usize = 11;
pub const FPFH_BINS: usize = 3 * FPFH_SUBBINS;

pub fn fpfh(segment: &Segment, cloud: &PointCloud, radius: f64) -> Result<Descriptor, GeometryError> {
    fpfh_indices(&segment.point_indices, cloud, radius)
}

/// Descriptor of an arbitrary point subset, e.g. the union of several segments.
pub fn fpfh_indices(indices: &[usize], cloud: &PointCloud, radius: f64) -> Result<Descriptor, GeometryError> {
    if indices.is_empty() {
        return Err(GeometryError::EmptySegment);
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(GeometryError::InvalidParameter(format!("radius must be > 0, got {radius}")));
    }
    let normals = cloud.normals.as_ref().ok_or(GeometryError::MissingNormals)?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= cloud.len()) {
        return Err(GeometryError::InvalidParameter(format!("point index {bad} out of range")));
    }

    let mut subset = indices.to_vec();
    subset.sort_unstable();
    subset.dedup();
    let index = GridIndex::over_subset(&cloud.points, subset.clone(), Some(radius));

    let mut acc = [0.0f64; FPFH_BINS];
    let mut contributing = 0usize;
    for &i in &subset {
        let p = &cloud.points[i];
        let mut hist = [0.0f64; FPFH_BINS];
        let mut pairs = 0usize;
        for j in index.radius(p, radius) {
            if j == i {
                continue;
            }
            let Some((alpha, phi, theta)) = pair_features(p, &normals[i], &cloud.points[j], &normals[j], i < j) else {
                continue;
            };
            hist[bin(theta, -std::f64::consts::PI, std::f64::consts::PI)] += 1.0;
            hist[FPFH_SUBBINS + bin(alpha, -1.0, 1.0)] += 1.0;
            hist[2 * FPFH_SUBBINS + bin(phi, -1.0, 1.0)] += 1.0;
            pairs += 1;
        }
        if pairs == 0 {
            continue;
        }
        for (a, h) in acc.iter_mut().zip(hist) {
            *a += h / pairs as f64;
        }
        contributing += 1;
    }
    if contributing == 0 {
        return Err(GeometryError::IsolatedPoints {
            radius,
            points: subset.len(),
        });
    }
    let mean: Vec<f64> = acc.iter().map(|a| a / contributing as f64).collect();
    Descriptor::from_counts(&mean)
}

/// Pair features `(α, φ, θ)` with α = v·n_t, φ = u·d/|d|, θ = atan2(w·n_t, u·n_t),
/// using the point with the smaller angle to the connecting line as source.
/// Near-ties go to the first point when `first_wins_ties`, so the choice does
/// not hinge on rounding.
fn pair_features(
    p1: &Vector3<f64>,
    n1: &Vector3<f64>,
    p2: &Vector3<f64>,
    n2: &Vector3<f64>,
    first_wins_ties: bool,
) -> Option<(f64, f64, f64)> {
    let mut dp = p2 - p1;
    let dist = dp.norm();
    if dist <= 0.0 {
        return None;
    }
    let (mut src_n, mut tgt_n) = (n1, n2);
    let a1 = n1.dot(&dp) / dist;
    let a2 = n2.dot(&dp) / dist;
    let gap = a2.abs() - a1.abs();
    let swap = if gap.abs() <= 1e-9 { !first_wins_ties } else { gap > 0.0 };
    let phi = if swap {
        std::mem::swap(&mut src_n, &mut tgt_n);
        dp = -dp;
        -a2
    } else {
        a1
    };
    let v = dp.cross(src_n);
    let v_norm = v.norm();
    if v_norm <= 1e-15 {
        // pair lies along the source normal; frame undefined
        return None;
    }
    let v = v / v_norm;
    let w = src_n.cross(&v);
    let alpha = v.dot(tgt_n);
    let theta = w.dot(tgt_n).atan2(src_n.dot(tgt_n));
    Some((alpha, phi, theta))
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let t = (value - lo) / (hi - lo);
    ((t * FPFH_SUBBINS as f64).floor() as i64).clamp(0, FPFH_SUBBINS as i64 - 1) as usize
}
