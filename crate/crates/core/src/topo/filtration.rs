use serde::{Deserialize, Serialize};

use super::{TopoError, TopoSpace};
use crate::union_find::UnionFind;

pub const DEFAULT_MAX_STEPS: usize = 1000;

/// Which side of a cut time is removed from the filtration graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutRule {
    /// Drop edges annexed after the cut time.
    #[default]
    DropLater,
    /// Drop edges annexed before the cut time.
    DropEarlier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub step: usize,
    /// Representative vertex of the surviving class.
    pub survivor: usize,
    /// Representative vertex of the class that dies.
    pub dying: usize,
    /// First entering edge (in distance, id order) touching the dying class.
    pub edge: (usize, usize),
}

/// One H0 class, keyed by its representative vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub vertex: usize,
    pub birth: f64,
    /// Normalized death time; `None` for the class that never dies.
    pub death: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FEdge {
    pub u: usize,
    pub v: usize,
    pub step: usize,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filtration {
    pub len: usize,
    pub epsilons: Vec<f64>,
    /// Normalized time of each step.
    pub times: Vec<f64>,
    pub events: Vec<MergeEvent>,
    /// One bar per vertex, indexed by vertex id.
    pub barcode: Vec<Bar>,
    pub f_edges: Vec<FEdge>,
    pub annexation_counts: Vec<usize>,
}

/// H0 filtration over the tree edges of `x`.
///
/// Radii start at the smallest positive edge distance and advance by that
/// same amount until the largest distance is covered; if that would take more
/// than `max_steps` radii the step is widened to fit. All edges entering at a
/// step are applied together: within each merged group the largest pre-step
/// component survives (ties to the one holding the smaller vertex id) and
/// every other component dies at that step.
pub fn filtrate(x: &TopoSpace, max_steps: usize) -> Result<Filtration, TopoError> {
    if max_steps < 2 {
        return Err(TopoError::InvalidParameter(format!("max_steps must be >= 2, got {max_steps}")));
    }
    x.check_tree()?;
    let n = x.len;
    let mut dists = Vec::with_capacity(x.edges.len());
    for e in &x.edges {
        let d = e
            .distance
            .ok_or_else(|| TopoError::InvalidSpace("edge distances not assigned".into()))?;
        if !(d >= 0.0) || !d.is_finite() {
            return Err(TopoError::InvalidSpace(format!("edge distance {d} is invalid")));
        }
        dists.push(d);
    }

    let epsilons = radii(&dists, max_steps);
    let k_steps = epsilons.len();
    let times: Vec<f64> = (0..k_steps)
        .map(|k| if k_steps == 1 { 0.0 } else { k as f64 / (k_steps - 1) as f64 })
        .collect();

    // edges in (distance, u, v) order with their entry step
    let mut order: Vec<usize> = (0..x.edges.len()).collect();
    order.sort_by(|&a, &b| {
        dists[a]
            .total_cmp(&dists[b])
            .then(x.edges[a].u.cmp(&x.edges[b].u))
            .then(x.edges[a].v.cmp(&x.edges[b].v))
    });
    let entry: Vec<usize> = dists
        .iter()
        .map(|&d| epsilons.partition_point(|&e| e + 1e-12 < d).min(k_steps - 1))
        .collect();

    let mut uf = UnionFind::new(n);
    // representative (living bar) and min vertex of each union-find root
    let mut rep: Vec<usize> = (0..n).collect();
    let mut min_vertex: Vec<usize> = (0..n).collect();
    let mut barcode: Vec<Bar> = (0..n)
        .map(|v| Bar {
            vertex: v,
            birth: 0.0,
            death: None,
        })
        .collect();
    let mut events = Vec::new();
    let mut counts = vec![0usize; k_steps];

    let mut cursor = 0;
    for step in 0..k_steps {
        let start = cursor;
        while cursor < order.len() && entry[order[cursor]] == step {
            cursor += 1;
        }
        let entering = &order[start..cursor];
        if entering.is_empty() {
            continue;
        }
        // snapshot of pre-step components touched by this step
        #[derive(Clone, Copy)]
        struct Old {
            root: usize,
            size: usize,
            min_vertex: usize,
            rep: usize,
        }
        let mut olds: Vec<Old> = Vec::new();
        let mut first_edge: Vec<(usize, (usize, usize))> = Vec::new();
        for &ei in entering {
            let e = &x.edges[ei];
            for endpoint in [e.u, e.v] {
                let r = uf.find(endpoint);
                if !olds.iter().any(|o| o.root == r) {
                    olds.push(Old {
                        root: r,
                        size: uf.size_of(r),
                        min_vertex: min_vertex[r],
                        rep: rep[r],
                    });
                    first_edge.push((r, (e.u, e.v)));
                }
            }
        }
        for &ei in entering {
            let e = &x.edges[ei];
            uf.union(e.u, e.v);
        }
        // group old components by their new root
        let mut groups: Vec<(usize, Vec<Old>)> = Vec::new();
        for o in &olds {
            let nr = uf.find(o.root);
            match groups.iter_mut().find(|(r, _)| *r == nr) {
                Some((_, g)) => g.push(*o),
                None => groups.push((nr, vec![*o])),
            }
        }
        for (new_root, members) in groups {
            let survivor = *members
                .iter()
                .min_by(|a, b| b.size.cmp(&a.size).then(a.min_vertex.cmp(&b.min_vertex)))
                .expect("group is non-empty");
            let mut dying: Vec<Old> = members.iter().filter(|o| o.root != survivor.root).copied().collect();
            dying.sort_by_key(|o| o.min_vertex);
            for d in dying {
                let edge = first_edge.iter().find(|(r, _)| *r == d.root).expect("recorded").1;
                barcode[d.rep].death = Some(times[step]);
                events.push(MergeEvent {
                    step,
                    survivor: survivor.rep,
                    dying: d.rep,
                    edge,
                });
                counts[step] += 1;
            }
            rep[new_root] = survivor.rep;
            min_vertex[new_root] = members.iter().map(|o| o.min_vertex).min().expect("non-empty");
        }
    }

    let f_edges = x
        .edges
        .iter()
        .zip(&entry)
        .map(|(e, &k)| FEdge {
            u: e.u,
            v: e.v,
            step: k,
            time: times[k],
        })
        .collect();
    Ok(Filtration {
        len: n,
        epsilons,
        times,
        events,
        barcode,
        f_edges,
        annexation_counts: counts,
    })
}

fn radii(dists: &[f64], max_steps: usize) -> Vec<f64> {
    let max = dists.iter().copied().fold(0.0, f64::max);
    let Some(eps0) = dists.iter().copied().filter(|d| *d > 0.0).reduce(f64::min) else {
        return vec![0.0];
    };
    let mut step = eps0;
    let mut k = 1 + ((max - eps0) / step - 1e-9).ceil().max(0.0) as usize;
    if k > max_steps {
        k = max_steps;
        step = (max - eps0) / (max_steps - 1) as f64;
    }
    let mut eps: Vec<f64> = (0..k).map(|i| eps0 + i as f64 * step).collect();
    let last = eps.last_mut().expect("k >= 1");
    if *last < max {
        *last = max;
    }
    eps
}

/// `(normalized time, annexations)` per step.
pub fn annexation_curve(f: &Filtration) -> Vec<(f64, usize)> {
    f.times.iter().copied().zip(f.annexation_counts.iter().copied()).collect()
}

/// Normalized time of the step with the most annexations; earliest on ties.
pub fn epsilon_max(f: &Filtration) -> Result<f64, TopoError> {
    if f.events.is_empty() {
        return Err(TopoError::EmptyFiltration);
    }
    let mut best = 0;
    for (k, &c) in f.annexation_counts.iter().enumerate() {
        if c > f.annexation_counts[best] {
            best = k;
        }
    }
    Ok(f.times[best])
}

impl Filtration {
    /// Number of components after step `k` has been applied.
    pub fn components_after(&self, k: usize) -> usize {
        self.len - self.annexation_counts[..=k.min(self.annexation_counts.len() - 1)].iter().sum::<usize>()
    }

    /// Components of F after removing the edges on the dropped side of `t`.
    /// Sorted by descending size, then by smallest member; members ascending.
    pub fn cut(&self, t: f64, rule: CutRule) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.len);
        for e in &self.f_edges {
            let keep = match rule {
                CutRule::DropLater => e.time <= t,
                CutRule::DropEarlier => e.time >= t,
            };
            if keep {
                uf.union(e.u, e.v);
            }
        }
        let labels = uf.labels();
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut comps = vec![Vec::new(); k];
        for (v, &l) in labels.iter().enumerate() {
            comps[l].push(v);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path4(d: [f64; 3]) -> TopoSpace {
        TopoSpace::from_tree(4, &[(0, 1, d[0]), (1, 2, d[1]), (2, 3, d[2])]).unwrap()
    }

    #[test]
    fn four_path() {
        let f = filtrate(&path4([0.2, 0.2, 0.9]), DEFAULT_MAX_STEPS).unwrap();
        // radii 0.2, 0.4, 0.6, 0.8, 1.0 (last forced to cover 0.9)
        assert_eq!(f.epsilons.len(), 5);
        assert_eq!(f.annexation_counts, vec![2, 0, 0, 0, 1]);
        assert_eq!(f.components_after(0), 2);
        assert_eq!(f.components_after(4), 1);
        // {0},{1},{2} meet at step 0 and 0 survives; 3 joins at the end
        let deaths: Vec<Option<f64>> = f.barcode.iter().map(|b| b.death).collect();
        assert_eq!(deaths, vec![None, Some(0.0), Some(0.0), Some(1.0)]);
        assert_eq!(epsilon_max(&f).unwrap(), 0.0);
    }

    #[test]
    fn all_zero_distances_are_one_step() {
        let x = TopoSpace::from_tree(3, &[(0, 1, 0.0), (1, 2, 0.0)]).unwrap();
        let f = filtrate(&x, 10).unwrap();
        assert_eq!(f.epsilons, vec![0.0]);
        assert_eq!(f.annexation_counts, vec![2]);
        assert_eq!(f.times, vec![0.0]);
    }

    #[test]
    fn step_count_is_capped() {
        let x = TopoSpace::from_tree(3, &[(0, 1, 0.001), (1, 2, 1.0)]).unwrap();
        let f = filtrate(&x, 50).unwrap();
        assert_eq!(f.epsilons.len(), 50);
        assert!(*f.epsilons.last().unwrap() >= 1.0);
        assert_eq!(f.annexation_counts.iter().sum::<usize>(), 2);
        assert_eq!(f.f_edges[1].time, 1.0);
    }

    #[test]
    fn larger_component_survives() {
        // star-ish: 0-1, 1-2 merge first; then 3 joins the triple
        let x = TopoSpace::from_tree(4, &[(0, 1, 0.1), (1, 2, 0.1), (2, 3, 0.3)]).unwrap();
        let f = filtrate(&x, 100).unwrap();
        let last = f.events.last().unwrap();
        assert_eq!(last.survivor, 0);
        assert_eq!(last.dying, 3);
        assert_eq!(last.edge, (2, 3));
    }

    #[test]
    fn cut_rules() {
        let f = filtrate(&path4([0.1, 0.1, 0.9]), DEFAULT_MAX_STEPS).unwrap();
        assert_eq!(f.cut(0.5, CutRule::DropLater), vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(f.cut(0.5, CutRule::DropEarlier), vec![vec![2, 3], vec![0], vec![1]]);
        assert_eq!(f.cut(1.0, CutRule::DropLater), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn empty_filtration_has_no_epsilon_max() {
        let x = TopoSpace::from_tree(1, &[]).unwrap();
        let f = filtrate(&x, 10).unwrap();
        assert!(matches!(epsilon_max(&f), Err(TopoError::EmptyFiltration)));
    }
}
