use super::{squared_distance, PointCloud, Vec3};
use crate::error::{Error, Result};

/// Symmetric chamfer distance: mean nearest-neighbour squared distance from
/// `a` to `b` plus the same from `b` to `a`.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("chamfer distance of an empty cloud".into()));
    }
    Ok(chamfer_distance_points(a.points(), b.points()))
}

/// Unchecked variant on raw point slices. Both slices must be non-empty.
pub fn chamfer_distance_points(a: &[Vec3], b: &[Vec3]) -> f64 {
    one_sided(a, b) + one_sided(b, a)
}

fn one_sided(from: &[Vec3], to: &[Vec3]) -> f64 {
    let mut total = 0.0;
    for p in from {
        let mut best = f64::INFINITY;
        for q in to {
            let d = squared_distance(*p, *q);
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / from.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_clouds_have_zero_distance() {
        let c = PointCloud::new(vec![[0.0, 1.0, 2.0], [3.0, -1.0, 0.5], [0.2, 0.2, 0.2]]).unwrap();
        assert_eq!(chamfer_distance(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn single_points_sum_of_means() {
        let a = PointCloud::new(vec![[0.0, 0.0, 0.0]]).unwrap();
        let b = PointCloud::new(vec![[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn symmetric() {
        let a = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]]).unwrap();
        let b = PointCloud::new(vec![[0.5, 0.0, 0.0], [2.0, 0.0, 1.0], [0.0, 3.0, 0.0]]).unwrap();
        assert_eq!(chamfer_distance(&a, &b).unwrap(), chamfer_distance(&b, &a).unwrap());
    }
}
