//! Uniform hash-grid index for radius and k-nearest-neighbor queries.
//!
//! Results are sorted, so queries are deterministic regardless of hash order.

use std::collections::HashMap;

use nalgebra::Vector3;

type Cell = (i64, i64, i64);

pub(crate) struct GridIndex<'a> {
    points: &'a [Vector3<f64>],
    subset: Vec<usize>,
    cell: f64,
    cells: HashMap<Cell, Vec<usize>>,
    lo: Cell,
    hi: Cell,
}

impl<'a> GridIndex<'a> {
    /// Indexes all points with a cell edge suited to their density.
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        let all: Vec<usize> = (0..points.len()).collect();
        Self::over_subset(points, all, None)
    }

    /// Indexes only `subset` (indices into `points`). `cell` defaults to an
    /// estimate from the bounding box and point count.
    pub fn over_subset(points: &'a [Vector3<f64>], subset: Vec<usize>, cell: Option<f64>) -> Self {
        let cell = cell
            .filter(|c| *c > 0.0 && c.is_finite())
            .unwrap_or_else(|| default_cell(points, &subset));
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN, i64::MIN);
        for &i in &subset {
            let c = cell_of(&points[i], cell);
            lo = (lo.0.min(c.0), lo.1.min(c.1), lo.2.min(c.2));
            hi = (hi.0.max(c.0), hi.1.max(c.1), hi.2.max(c.2));
            cells.entry(c).or_default().push(i);
        }
        Self {
            points,
            subset,
            cell,
            cells,
            lo,
            hi,
        }
    }

    /// All indexed points within `radius` of `q` (inclusive), ascending index.
    pub fn radius(&self, q: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let c = cell_of(q, self.cell);
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(bucket) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        out.extend(
                            bucket
                                .iter()
                                .copied()
                                .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest indexed points to `q`, ordered by (distance, index).
    pub fn knn(&self, q: &Vector3<f64>, k: usize) -> Vec<usize> {
        let k = k.min(self.subset.len());
        if k == 0 {
            return Vec::new();
        }
        let c = cell_of(q, self.cell);
        let max_ring = [
            (c.0 - self.lo.0).abs(),
            (self.hi.0 - c.0).abs(),
            (c.1 - self.lo.1).abs(),
            (self.hi.1 - c.1).abs(),
            (c.2 - self.lo.2).abs(),
            (self.hi.2 - c.2).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let mut cand: Vec<(f64, usize)> = Vec::new();
        let mut ring = 0i64;
        loop {
            self.collect_shell(c, ring, q, &mut cand);
            // Everything within `ring * cell` of q has been visited.
            let covered = ring as f64 * self.cell;
            let inside = cand.iter().filter(|(d, _)| d.sqrt() <= covered).count();
            if inside >= k || ring >= max_ring {
                break;
            }
            ring += 1;
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
        cand.into_iter().map(|(_, i)| i).collect()
    }

    fn collect_shell(&self, c: Cell, ring: i64, q: &Vector3<f64>, out: &mut Vec<(f64, usize)>) {
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                for dz in -ring..=ring {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                        continue;
                    }
                    if let Some(bucket) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        out.extend(
                            bucket
                                .iter()
                                .map(|&i| ((self.points[i] - q).norm_squared(), i)),
                        );
                    }
                }
            }
        }
    }
}

fn cell_of(p: &Vector3<f64>, cell: f64) -> Cell {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

fn default_cell(points: &[Vector3<f64>], subset: &[usize]) -> f64 {
    if subset.len() < 2 {
        return 1.0;
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &i in subset {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let extent = (hi - lo).max();
    if extent <= 0.0 {
        return 1.0;
    }
    // Scans are surfaces, so spacing scales with extent / sqrt(n).
    2.0 * extent / (subset.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random::<f64>() * 0.1))
            .collect()
    }

    #[test]
    fn knn_matches_brute_force() {
        let pts = random_points(400, 7);
        let index = GridIndex::new(&pts);
        for q in pts.iter().step_by(37) {
            let mut brute: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| ((p - q).norm_squared(), i))
                .collect();
            brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = brute.iter().take(12).map(|x| x.1).collect();
            assert_eq!(index.knn(q, 12), want);
        }
    }

    #[test]
    fn radius_matches_brute_force() {
        let pts = random_points(300, 3);
        let index = GridIndex::new(&pts);
        let q = pts[10];
        let want: Vec<usize> = (0..pts.len())
            .filter(|&i| (pts[i] - q).norm() <= 0.15)
            .collect();
        assert_eq!(index.radius(&q, 0.15), want);
    }

    #[test]
    fn handles_coincident_coordinates() {
        // many points sharing z = 0 and a duplicate point
        let mut pts: Vec<Vector3<f64>> = (0..100)
            .map(|i| Vector3::new((i % 10) as f64, (i / 10) as f64, 0.0))
            .collect();
        pts.push(pts[0]);
        let index = GridIndex::new(&pts);
        let nn = index.knn(&pts[0], 3);
        assert_eq!(nn[..2], [0, 100]);
        assert_eq!(index.radius(&pts[55], 1.0).len(), 5);
    }
}
