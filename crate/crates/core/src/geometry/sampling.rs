use super::{squared_distance, PointCloud};
use crate::error::{Error, Result};

/// Indices chosen by farthest point sampling. The seed is index 0; each step
/// adds the point whose distance to the selected set is largest, lowest index
/// winning ties.
pub fn farthest_point_indices(cloud: &PointCloud, m: usize) -> Result<Vec<usize>> {
    let pts = cloud.points();
    if m == 0 || m > pts.len() {
        return Err(Error::Domain(format!(
            "cannot sample {m} points from a cloud of {}",
            pts.len()
        )));
    }
    let mut selected = Vec::with_capacity(m);
    let mut min_dist = vec![f64::INFINITY; pts.len()];
    let mut taken = vec![false; pts.len()];
    let mut current = 0usize;
    taken[0] = true;
    selected.push(current);
    while selected.len() < m {
        let c = pts[current];
        let mut best = 0usize;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            let d = squared_distance(*p, c);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if !taken[i] && min_dist[i] > best_d {
                best_d = min_dist[i];
                best = i;
            }
        }
        current = best;
        taken[best] = true;
        selected.push(current);
    }
    Ok(selected)
}

pub fn farthest_point_sample(cloud: &PointCloud, m: usize) -> Result<PointCloud> {
    let idx = farthest_point_indices(cloud, m)?;
    PointCloud::new(idx.into_iter().map(|i| cloud.points()[i]).collect())
}
