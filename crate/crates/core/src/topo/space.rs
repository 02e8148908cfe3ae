use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{jsd, normalize_distribution, TopoError};
use crate::union_find::UnionFind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceEdge {
    /// Endpoints with `u < v`.
    pub u: usize,
    pub v: usize,
    /// JSD between the endpoint stimuli.
    pub weight: f64,
    /// Inverted, scaled geodesic heat; `None` until heats are computed.
    pub distance: Option<f64>,
}

/// Spanning tree over the samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopoSpace {
    pub len: usize,
    pub edges: Vec<SpaceEdge>,
    /// Mean geodesic distance of each vertex; empty until heats are computed.
    pub raw_heats: Vec<f64>,
    /// Scaled and inverted vertex heats.
    pub heats: Vec<f64>,
}

impl TopoSpace {
    /// A space from an explicit tree with preset edge distances.
    pub fn from_tree(len: usize, edges: &[(usize, usize, f64)]) -> Result<Self, TopoError> {
        let edges: Vec<SpaceEdge> = edges
            .iter()
            .map(|&(a, b, d)| SpaceEdge {
                u: a.min(b),
                v: a.max(b),
                weight: d,
                distance: Some(d),
            })
            .collect();
        let space = Self {
            len,
            edges,
            raw_heats: Vec::new(),
            heats: Vec::new(),
        };
        space.check_tree()?;
        for e in &space.edges {
            let d = e.distance.unwrap_or(f64::NAN);
            if !(d >= 0.0) || !d.is_finite() {
                return Err(TopoError::InvalidInput(format!("edge distance {d} must be finite and >= 0")));
            }
        }
        Ok(space)
    }

    pub fn check_tree(&self) -> Result<(), TopoError> {
        if self.len == 0 {
            return Err(TopoError::InvalidSpace("no vertices".into()));
        }
        if self.edges.len() + 1 != self.len {
            return Err(TopoError::InvalidSpace(format!(
                "{} edges over {} vertices is not a spanning tree",
                self.edges.len(),
                self.len
            )));
        }
        let mut uf = UnionFind::new(self.len);
        for e in &self.edges {
            if e.u >= self.len || e.v >= self.len || e.u == e.v {
                return Err(TopoError::InvalidSpace(format!("bad edge ({}, {})", e.u, e.v)));
            }
            if uf.union(e.u, e.v).is_none() {
                return Err(TopoError::InvalidSpace("edge set has a cycle".into()));
            }
        }
        Ok(())
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len];
        for e in &self.edges {
            if e.u < self.len && e.v < self.len {
                adj[e.u].push(e.v);
                adj[e.v].push(e.u);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }
}

/// Minimum spanning tree of the complete JSD graph over L1-normalized
/// stimuli. Ties are broken by `(min id, max id)`.
pub fn build_space<V: AsRef<[f64]> + Sync>(stimuli: &[V]) -> Result<TopoSpace, TopoError> {
    let n = stimuli.len();
    if n < 2 {
        return Err(TopoError::TooFewSamples { needed: 2, got: n });
    }
    let dim = stimuli[0].as_ref().len();
    if let Some(bad) = stimuli.iter().find(|s| s.as_ref().len() != dim) {
        return Err(TopoError::DimensionMismatch(dim, bad.as_ref().len()));
    }
    let dists: Vec<Vec<f64>> = stimuli
        .iter()
        .map(|s| normalize_distribution(s.as_ref()))
        .collect::<Result<_, _>>()?;
    let mut pairs: Vec<(f64, usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let dists = &dists;
            (i + 1..n).map(move |j| (jsd(&dists[i], &dists[j]).expect("equal dimensions"), i, j))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut uf = UnionFind::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    for (w, i, j) in pairs {
        if uf.union(i, j).is_some() {
            edges.push(SpaceEdge {
                u: i,
                v: j,
                weight: w,
                distance: None,
            });
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    Ok(TopoSpace {
        len: n,
        edges,
        raw_heats: Vec::new(),
        heats: Vec::new(),
    })
}

/// Replaces every tree edge weight by 1, computes each vertex's mean
/// geodesic distance (self included), min-max scales and inverts it, and
/// sets each edge distance to the mean of its endpoint heats.
pub fn geodesic_heats(x: &TopoSpace) -> Result<TopoSpace, TopoError> {
    x.check_tree()?;
    let n = x.len;
    let adj = x.adjacency();
    let raw: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            let mut total = 0usize;
            while let Some(u) = queue.pop_front() {
                total += dist[u];
                for &v in &adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            total as f64 / n as f64
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let heats: Vec<f64> = raw
        .iter()
        .map(|h| {
            let scaled = if hi > lo { (h - lo) / (hi - lo) } else { 0.0 };
            1.0 - scaled
        })
        .collect();
    let mut out = x.clone();
    for e in &mut out.edges {
        e.distance = Some((heats[e.u] + heats[e.v]) / 2.0);
    }
    out.raw_heats = raw;
    out.heats = heats;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tree(n: usize, edges: &[(usize, usize)]) -> TopoSpace {
        let e: Vec<_> = edges.iter().map(|&(a, b)| (a, b, 1.0)).collect();
        TopoSpace::from_tree(n, &e).unwrap()
    }

    #[test]
    fn path_of_three() {
        let x = geodesic_heats(&unit_tree(3, &[(0, 1), (1, 2)])).unwrap();
        assert_eq!(x.raw_heats, vec![1.0, 2.0 / 3.0, 1.0]);
        assert_eq!(x.heats, vec![0.0, 1.0, 0.0]);
        let d: Vec<f64> = x.edges.iter().map(|e| e.distance.unwrap()).collect();
        assert_eq!(d, vec![0.5, 0.5]);
    }

    #[test]
    fn star_edges_are_symmetric() {
        let x = geodesic_heats(&unit_tree(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])).unwrap();
        let d: Vec<f64> = x.edges.iter().map(|e| e.distance.unwrap()).collect();
        assert!(d.iter().all(|v| *v == d[0]));
    }

    #[test]
    fn two_vertices_have_flat_heat() {
        let x = geodesic_heats(&unit_tree(2, &[(0, 1)])).unwrap();
        assert_eq!(x.heats, vec![1.0, 1.0]);
        assert_eq!(x.edges[0].distance, Some(1.0));
    }

    #[test]
    fn disconnected_is_rejected() {
        let x = TopoSpace {
            len: 4,
            edges: vec![
                SpaceEdge { u: 0, v: 1, weight: 0.0, distance: None },
                SpaceEdge { u: 0, v: 2, weight: 0.0, distance: None },
                SpaceEdge { u: 1, v: 2, weight: 0.0, distance: None },
            ],
            raw_heats: vec![],
            heats: vec![],
        };
        assert!(matches!(geodesic_heats(&x), Err(TopoError::InvalidSpace(_))));
    }

    #[test]
    fn triangle_mst() {
        // JSD of these one-hot-ish vectors is not controllable directly, so
        // verify the spanning tree against brute force over the 3 candidates.
        let s = vec![vec![1.0, 0.0, 0.0], vec![0.8, 0.2, 0.0], vec![0.5, 0.3, 0.2]];
        let x = build_space(&s).unwrap();
        let w = |i: usize, j: usize| {
            jsd(&normalize_distribution(&s[i]).unwrap(), &normalize_distribution(&s[j]).unwrap()).unwrap()
        };
        let trees = [[(0, 1), (1, 2)], [(0, 1), (0, 2)], [(0, 2), (1, 2)]];
        let best = trees
            .iter()
            .min_by(|a, b| {
                let wa: f64 = a.iter().map(|&(i, j)| w(i, j)).sum();
                let wb: f64 = b.iter().map(|&(i, j)| w(i, j)).sum();
                wa.total_cmp(&wb)
            })
            .unwrap();
        let mut got: Vec<(usize, usize)> = x.edges.iter().map(|e| (e.u, e.v)).collect();
        got.sort();
        let mut want = best.to_vec();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn duplicates_and_zero_vectors_are_fine() {
        let s = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]];
        let x = build_space(&s).unwrap();
        assert_eq!(x.edges.len(), 2);
        assert_eq!(x.edges[0].weight, 0.0);
        geodesic_heats(&x).unwrap();
    }

    #[test]
    fn too_few_and_mismatched() {
        assert!(matches!(build_space(&[vec![1.0]]), Err(TopoError::TooFewSamples { .. })));
        assert!(matches!(
            build_space(&[vec![1.0], vec![1.0, 0.0]]),
            Err(TopoError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn smaller_mean_distance_means_larger_heat() {
        let x = geodesic_heats(&unit_tree(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (2, 5)])).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                if x.raw_heats[a] < x.raw_heats[b] {
                    assert!(x.heats[a] > x.heats[b]);
                }
            }
        }
    }
}
