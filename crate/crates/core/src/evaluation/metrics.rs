use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian, Order, PermutationMatrix};
use crate::error::{Error, Result};
use crate::geometry::{apply_pose, chamfer_distance, PointCloud, Pose};
use crate::objective::{shape_chamfer, Matching};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// A part is accurate when its posed chamfer is strictly below this.
    pub pa_threshold: f64,
    pub scd_scale: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            pa_threshold: 0.01,
            scd_scale: 1e3,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pa_threshold > 0.0) || !(self.scd_scale > 0.0) {
            return Err(Error::Domain(format!("invalid metric config {self:?}")));
        }
        Ok(())
    }
}

/// Shape chamfer of the matched assembly, scaled.
pub fn scd(pred: &[Pose], gt: &[Pose], parts: &[PointCloud], m: &Matching, cfg: &MetricConfig) -> Result<f64> {
    Ok(cfg.scd_scale * shape_chamfer(pred, gt, parts, m)?)
}

/// Per-part accuracy flags under the matching.
pub fn accurate_parts(
    pred: &[Pose],
    gt: &[Pose],
    parts: &[PointCloud],
    m: &Matching,
    cfg: &MetricConfig,
) -> Result<Vec<bool>> {
    parts
        .iter()
        .enumerate()
        .map(|(i, part)| {
            let cd = chamfer_distance(&apply_pose(part, &pred[m.pred_for_gt[i]])?, &apply_pose(part, &gt[i])?)?;
            Ok(cd < cfg.pa_threshold)
        })
        .collect()
}

pub fn part_accuracy(pred: &[Pose], gt: &[Pose], parts: &[PointCloud], m: &Matching, cfg: &MetricConfig) -> Result<f64> {
    let flags = accurate_parts(pred, gt, parts, m, cfg)?;
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

pub fn success_rate(pa: f64) -> f64 {
    if pa == 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Kendall tau between two orders, comparing the step each part lands in.
pub fn kendall_tau(a: &Order, b: &Order) -> Result<f64> {
    let n = a.len();
    if n != b.len() || n < 2 {
        return Err(Error::Domain(format!("kendall tau needs equal lengths >= 2, got {n} and {}", b.len())));
    }
    let (sa, sb) = (a.step_of(), b.step_of());
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let x = (sa[i] as i64 - sa[j] as i64).signum();
            let y = (sb[i] as i64 - sb[j] as i64).signum();
            score += x * y;
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// Adds Gumbel noise to the entries of `p` and re-solves the assignment.
pub fn perturb_order_gumbel(p: &PermutationMatrix, noise_scale: f64, seed: u64) -> Result<PermutationMatrix> {
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(Error::Domain(format!("noise scale must be finite and >= 0, got {noise_scale}")));
    }
    if noise_scale == 0.0 {
        return Ok(p.clone());
    }
    let g = Gumbel::new(0.0, noise_scale).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost: Vec<Vec<f64>> = p
        .to_dense()
        .into_iter()
        .map(|row| row.into_iter().map(|v| -(v + g.sample(&mut rng))).collect())
        .collect();
    hungarian(&cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kendall_tau_reference_values() {
        let id = Order::identity(4);
        assert_eq!(kendall_tau(&id, &id).unwrap(), 1.0);
        let rev = Order::new(vec![3, 2, 1, 0]).unwrap();
        assert_eq!(kendall_tau(&id, &rev).unwrap(), -1.0);
        let swap = Order::new(vec![0, 2, 1, 3]).unwrap();
        assert!((kendall_tau(&id, &swap).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&id, &Order::identity(3)).is_err());
    }

    #[test]
    fn success_is_strict() {
        assert_eq!(success_rate(1.0), 1.0);
        assert_eq!(success_rate(0.99), 0.0);
    }

    #[test]
    fn zero_noise_keeps_permutation() {
        let p = PermutationMatrix::from_row_to_col(vec![2, 0, 1]).unwrap();
        assert_eq!(perturb_order_gumbel(&p, 0.0, 3).unwrap(), p);
        let q = perturb_order_gumbel(&p, 5.0, 3).unwrap();
        assert_eq!(q, perturb_order_gumbel(&p, 5.0, 3).unwrap());
    }
}
