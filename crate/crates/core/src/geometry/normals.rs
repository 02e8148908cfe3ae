use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::spatial::GridIndex;
use super::{GeometryError, PointCloud};

/// Per-point normals from the smallest-eigenvalue direction of the k-NN
/// covariance, oriented toward the sensor at the origin.
///
/// Also fills `curvature` with the surface variation `λ_min / (λ0+λ1+λ2)`.
/// Rank-deficient neighborhoods (collinear or coincident points) fall back
/// to the direction toward the sensor.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud, GeometryError> {
    if k < 3 {
        return Err(GeometryError::InvalidParameter(format!("k must be >= 3, got {k}")));
    }
    if cloud.len() < k {
        return Err(GeometryError::InsufficientPoints {
            needed: k,
            got: cloud.len(),
        });
    }
    let index = GridIndex::new(&cloud.points);
    let (normals, curvature): (Vec<_>, Vec<_>) = cloud
        .points
        .iter()
        .map(|p| {
            let nbrs = index.knn(p, k);
            local_normal(&cloud.points, &nbrs, p)
        })
        .unzip();
    let mut out = cloud.clone();
    out.normals = Some(normals);
    out.curvature = Some(curvature);
    Ok(out)
}

fn local_normal(points: &[Vector3<f64>], nbrs: &[usize], p: &Vector3<f64>) -> (Vector3<f64>, f64) {
    let centroid = nbrs.iter().map(|&i| points[i]).sum::<Vector3<f64>>() / nbrs.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in nbrs {
        let d = points[i] - centroid;
        cov += d * d.transpose();
    }
    cov /= nbrs.len() as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1, l2) = (
        eig.eigenvalues[order[0]].max(0.0),
        eig.eigenvalues[order[1]].max(0.0),
        eig.eigenvalues[order[2]].max(0.0),
    );
    let toward_sensor = -p;
    let trace = l0 + l1 + l2;
    // Need two well-spread directions for a plane to be defined.
    let degenerate = trace <= 0.0 || l1 <= 1e-12 * l2.max(f64::MIN_POSITIVE);
    let normal = if degenerate {
        fallback(&toward_sensor)
    } else {
        let n: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
        let n = n.normalize();
        if n.iter().any(|c| !c.is_finite()) {
            fallback(&toward_sensor)
        } else if n.dot(&toward_sensor) < 0.0 {
            -n
        } else {
            n
        }
    };
    let curvature = if degenerate { 1.0 / 3.0 } else { l0 / trace };
    (normal, curvature)
}

fn fallback(toward_sensor: &Vector3<f64>) -> Vector3<f64> {
    let norm = toward_sensor.norm();
    if norm > 0.0 && norm.is_finite() {
        toward_sensor / norm
    } else {
        Vector3::z()
    }
}

/// Median distance from each point to its nearest other point.
pub fn median_spacing(cloud: &PointCloud) -> Option<f64> {
    if cloud.len() < 2 {
        return None;
    }
    let index = GridIndex::new(&cloud.points);
    let mut d: Vec<f64> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .knn(p, 2)
                .into_iter()
                .find(|&j| j != i)
                .map(|j| (cloud.points[j] - p).norm())
                .unwrap_or(0.0)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}
