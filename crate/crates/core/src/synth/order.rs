//! Ground-truth assembly order: equivalence groups bottom to top, and within
//! a group the part farthest from the camera first.

use super::camera::Camera;
use crate::assignment::Order;
use crate::geometry::{EquivalenceGroups, PointCloud};

/// Group base heights closer than this are treated as the same level.
pub const LEVEL_TOL: f64 = 1e-6;

/// Bottom-up order of posed parts. Groups whose lowest points share a level
/// are taken farthest-first (by their farthest member), then by lowest index.
/// Within a group, parts go by decreasing centroid depth, then index.
pub fn ground_truth_order(posed: &[PointCloud], groups: &EquivalenceGroups, camera: &Camera) -> Order {
    let min_z: Vec<f64> = posed
        .iter()
        .map(|c| c.points().iter().map(|p| p[2]).fold(f64::INFINITY, f64::min))
        .collect();
    let depth: Vec<f64> = posed.iter().map(|c| camera.depth(c.centroid())).collect();

    let mut gs: Vec<Vec<usize>> = groups.groups().to_vec();
    for g in &mut gs {
        g.sort_by(|&a, &b| depth[b].total_cmp(&depth[a]).then(a.cmp(&b)));
    }
    let base: Vec<f64> = gs
        .iter()
        .map(|g| g.iter().map(|&i| min_z[i]).fold(f64::INFINITY, f64::min))
        .collect();

    // Assign level ids by chaining sorted base heights.
    let mut by_height: Vec<usize> = (0..gs.len()).collect();
    by_height.sort_by(|&a, &b| base[a].total_cmp(&base[b]).then(a.cmp(&b)));
    let mut level = vec![0usize; gs.len()];
    for k in 1..by_height.len() {
        let (prev, cur) = (by_height[k - 1], by_height[k]);
        level[cur] = level[prev] + usize::from(base[cur] - base[prev] > LEVEL_TOL);
    }

    // gs[g][0] is the farthest member after the sort above.
    let first = |g: usize| gs[g].iter().copied().min().unwrap_or(usize::MAX);
    let mut idx: Vec<usize> = (0..gs.len()).collect();
    idx.sort_by(|&a, &b| {
        level[a]
            .cmp(&level[b])
            .then(depth[gs[b][0]].total_cmp(&depth[gs[a][0]]))
            .then(first(a).cmp(&first(b)))
    });
    Order {
        sigma: idx.into_iter().flat_map(|g| gs[g].clone()).collect(),
    }
}
