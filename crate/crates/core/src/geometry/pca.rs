use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{aabb_of_points, cross, dot, mat_vec, sub, transpose, Mat3, PointCloud, Pose, Vec3};
use crate::error::{Error, Result};

/// Eigenvalue ratio below which the covariance is treated as rank deficient.
const RANK_EPS: f64 = 1e-12;

/// Result of [`pca_frame`]: `cloud` lives in the principal frame and
/// `apply_pose(cloud, pose)` reproduces the input.
#[derive(Debug, Clone)]
pub struct Canonicalized {
    pub cloud: PointCloud,
    pub pose: Pose,
    /// Set when the covariance had rank < 3 and the axis-aligned fallback was used.
    pub degenerate: bool,
}

/// Similarity transform produced by [`pca_canonicalize`]:
/// `canonical = scale * R^T (p - center)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFrame {
    /// Rotation `R` with translation `center`; maps unscaled canonical
    /// coordinates back to the input frame.
    pub pose: Pose,
    pub scale: f64,
    pub degenerate: bool,
}

/// Rigid PCA canonicalization: centroid moved to the origin, principal axes
/// aligned with x, y, z in descending variance. Each of the first two axes is
/// flipped so that its largest-magnitude coordinate is positive; the third is
/// their cross product so the frame stays right-handed.
pub fn pca_frame(cloud: &PointCloud) -> Result<Canonicalized> {
    let center = cloud.centroid();
    let centered: Vec<Vec3> = cloud.points().iter().map(|p| sub(*p, center)).collect();

    let mut cov = Matrix3::<f64>::zeros();
    for p in &centered {
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += p[i] * p[j];
            }
        }
    }
    cov /= centered.len() as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let largest = eig.eigenvalues[order[0]].max(0.0);
    let smallest = eig.eigenvalues[order[2]];
    let degenerate = !(largest > 0.0) || smallest <= RANK_EPS * largest;

    let mut axes: [Vec3; 3] = if degenerate {
        // Coordinate axes ordered by their variance.
        let mut by_var = [0usize, 1, 2];
        by_var.sort_by(|&a, &b| {
            cov[(b, b)]
                .partial_cmp(&cov[(a, a)])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut axes = [[0.0; 3]; 3];
        for (k, &c) in by_var.iter().enumerate() {
            axes[k][c] = 1.0;
        }
        axes
    } else {
        let mut axes = [[0.0; 3]; 3];
        for (k, &c) in order.iter().enumerate() {
            let v = eig.eigenvectors.column(c);
            axes[k] = [v[0], v[1], v[2]];
        }
        axes
    };

    for k in 0..2 {
        let mut extreme = 0.0f64;
        for p in &centered {
            let c = dot(*p, axes[k]);
            if c.abs() > extreme.abs() {
                extreme = c;
            }
        }
        if extreme < 0.0 {
            axes[k] = [-axes[k][0], -axes[k][1], -axes[k][2]];
        }
    }
    axes[2] = cross(axes[0], axes[1]);

    // R has the principal axes as columns; canonical = R^T (p - c).
    let r: Mat3 = [
        [axes[0][0], axes[1][0], axes[2][0]],
        [axes[0][1], axes[1][1], axes[2][1]],
        [axes[0][2], axes[1][2], axes[2][2]],
    ];
    let rt = transpose(&r);
    let points = centered.iter().map(|p| mat_vec(&rt, *p)).collect();
    Ok(Canonicalized {
        cloud: PointCloud::new(points)?,
        pose: Pose::from_rotation(&r, center),
        degenerate,
    })
}

/// [`pca_frame`] followed by scaling so the AABB diagonal has unit length.
pub fn pca_canonicalize(cloud: &PointCloud) -> Result<(PointCloud, CanonicalFrame)> {
    let Canonicalized {
        cloud: rigid,
        pose,
        degenerate,
    } = pca_frame(cloud)?;
    let diag = aabb_of_points(rigid.points()).diagonal();
    if !(diag > 0.0) {
        return Err(Error::Domain("cannot normalize a cloud with zero extent".into()));
    }
    let s = 1.0 / diag;
    let points = rigid
        .points()
        .iter()
        .map(|p| [p[0] * s, p[1] * s, p[2] * s])
        .collect();
    Ok((
        PointCloud::new(points)?,
        CanonicalFrame {
            pose,
            scale: s,
            degenerate,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_pose, quat_from_axis_angle, squared_distance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn anisotropic_cloud(seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..200)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0) * 3.0,
                        rng.random_range(-1.0..1.0) * 1.5,
                        rng.random_range(-1.0..1.0) * 0.5,
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn unit_diagonal() {
        let (c, frame) = pca_canonicalize(&anisotropic_cloud(1)).unwrap();
        assert!((aabb_of_points(c.points()).diagonal() - 1.0).abs() < 1e-9);
        assert!(!frame.degenerate);
    }

    #[test]
    fn rotation_invariant_canonical_form() {
        let cloud = anisotropic_cloud(2);
        let q = quat_from_axis_angle([0.3, -0.7, 0.2], 1.1);
        let rotated = apply_pose(&cloud, &Pose::new(q, [0.4, 2.0, -1.0]).unwrap()).unwrap();
        let (a, _) = pca_canonicalize(&cloud).unwrap();
        let (b, _) = pca_canonicalize(&rotated).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!(squared_distance(*p, *q).sqrt() < 1e-6);
        }
    }

    #[test]
    fn canonical_cloud_is_fixed_point() {
        let (a, _) = pca_canonicalize(&anisotropic_cloud(3)).unwrap();
        let (b, frame) = pca_canonicalize(&a).unwrap();
        let r = frame.pose.rotation();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((r[i][j] - e).abs() < 1e-6);
            }
        }
        assert!((frame.scale - 1.0).abs() < 1e-9);
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!(squared_distance(*p, *q).sqrt() < 1e-6);
        }
    }

    #[test]
    fn pose_reconstructs_input() {
        let cloud = anisotropic_cloud(4);
        let c = pca_frame(&cloud).unwrap();
        let back = apply_pose(&c.cloud, &c.pose).unwrap();
        for (p, q) in cloud.points().iter().zip(back.points()) {
            assert!(squared_distance(*p, *q).sqrt() < 1e-9);
        }
    }

    #[test]
    fn planar_cloud_falls_back() {
        let pts = (0..20).map(|i| [i as f64, (i % 3) as f64, 0.0]).collect();
        let c = pca_frame(&PointCloud::new(pts).unwrap()).unwrap();
        assert!(c.degenerate);
        c.pose.validate().unwrap();
    }
}
