use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;

pub const DEFAULT_K_FRACTION: f64 = 0.05;
pub const DEFAULT_RESOLUTION: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub cx: f64,
    pub cy: f64,
    pub label: String,
    /// Share of the k nearest instances carrying `label`.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub resolution: usize,
    pub k: usize,
    /// `[xmin, xmax, ymin, ymax]` after padding.
    pub bounds: [f64; 4],
    /// Row-major, `y` outer.
    pub cells: Vec<GridCell>,
}

/// Majority label of the `ceil(k_fraction·N)` nearest instances at each
/// cell center of a uniform grid over the padded bounding box.
pub fn region_grid(
    coords: &[[f64; 2]],
    labels: &[String],
    k_fraction: f64,
    resolution: usize,
) -> Result<RegionGrid, EvalError> {
    let n = coords.len();
    if n == 0 || labels.len() != n {
        return Err(EvalError::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if !(k_fraction > 0.0 && k_fraction <= 1.0) {
        return Err(EvalError::InvalidParameter(format!("k_fraction must be in (0, 1], got {k_fraction}")));
    }
    if resolution < 2 {
        return Err(EvalError::InvalidParameter(format!("resolution must be >= 2, got {resolution}")));
    }
    let k = (k_fraction * n as f64).ceil() as usize;
    if k > n {
        return Err(EvalError::InvalidParameter(format!("k = {k} exceeds N = {n}")));
    }
    let k = k.max(1);
    let bounds = padded_bounds(coords);
    let [x0, x1, y0, y1] = bounds;
    let cw = (x1 - x0) / resolution as f64;
    let ch = (y1 - y0) / resolution as f64;
    let cells = (0..resolution * resolution)
        .into_par_iter()
        .map(|c| {
            let (row, col) = (c / resolution, c % resolution);
            let cx = x0 + (col as f64 + 0.5) * cw;
            let cy = y0 + (row as f64 + 0.5) * ch;
            let (label, weight) = vote(coords, labels, [cx, cy], k);
            GridCell { cx, cy, label, weight }
        })
        .collect();
    Ok(RegionGrid {
        resolution,
        k,
        bounds,
        cells,
    })
}

fn padded_bounds(coords: &[[f64; 2]]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for c in coords {
        b[0] = b[0].min(c[0]);
        b[1] = b[1].max(c[0]);
        b[2] = b[2].min(c[1]);
        b[3] = b[3].max(c[1]);
    }
    for axis in 0..2 {
        let (lo, hi) = (b[2 * axis], b[2 * axis + 1]);
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        b[2 * axis] = lo - pad;
        b[2 * axis + 1] = hi + pad;
    }
    b
}

/// Majority among the k nearest (ties in distance by index, ties in count by
/// label order).
pub(crate) fn vote(coords: &[[f64; 2]], labels: &[String], at: [f64; 2], k: usize) -> (String, f64) {
    let mut d: Vec<(f64, usize)> = coords
        .iter()
        .enumerate()
        .map(|(i, c)| ((c[0] - at[0]).powi(2) + (c[1] - at[1]).powi(2), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &(_, i) in &d[..k] {
        *counts.entry(&labels[i]).or_default() += 1;
    }
    let mut best: (&str, usize) = ("", 0);
    for (l, c) in counts {
        if c > best.1 {
            best = (l, c);
        }
    }
    (best.0.to_string(), best.1 as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters() -> (Vec<[f64; 2]>, Vec<String>) {
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            coords.push([-5.0, i as f64 * 0.01]);
            labels.push("a".to_string());
            coords.push([5.0, i as f64 * 0.01]);
            labels.push("b".to_string());
        }
        (coords, labels)
    }

    #[test]
    fn homogeneous_neighborhood_has_full_weight() {
        let (c, l) = two_clusters();
        let g = region_grid(&c, &l, 0.1, 10).unwrap();
        assert_eq!(g.k, 2);
        assert_eq!(g.cells[0].label, "a");
        assert_eq!(g.cells[0].weight, 1.0);
        assert_eq!(g.cells[9].label, "b");
    }

    #[test]
    fn equidistant_cell_splits_evenly() {
        let coords = vec![[-1.0, 0.0], [1.0, 0.0], [-1.0, 10.0], [1.0, 10.0]];
        let labels: Vec<String> = ["a", "b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let (label, weight) = vote(&coords, &labels, [0.0, 0.0], 2);
        assert_eq!(weight, 0.5);
        assert_eq!(label, "a");
    }

    #[test]
    fn weights_match_brute_force_counts() {
        let (c, l) = two_clusters();
        let g = region_grid(&c, &l, 0.3, 7).unwrap();
        for cell in &g.cells {
            let mut idx: Vec<usize> = (0..c.len()).collect();
            let dist = |i: usize| (c[i][0] - cell.cx).powi(2) + (c[i][1] - cell.cy).powi(2);
            idx.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
            let hits = idx[..g.k].iter().filter(|&&i| l[i] == cell.label).count();
            assert_eq!(cell.weight, hits as f64 / g.k as f64);
            assert!((0.0..=1.0).contains(&cell.weight));
        }
    }

    #[test]
    fn bad_parameters() {
        let (c, l) = two_clusters();
        assert!(region_grid(&c, &l, 0.0, 10).is_err());
        assert!(region_grid(&c, &l, 0.5, 1).is_err());
        assert_eq!(region_grid(&c, &l, 1.0, 2).unwrap().k, 20);
    }
}
