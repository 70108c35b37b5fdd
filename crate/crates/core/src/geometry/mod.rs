//! Point clouds, rigid transforms and the shape utilities every other module
//! builds on. Everything here is plain `f64` arithmetic with no shared state.

mod chamfer;
mod grouping;
mod io;
mod pca;
mod sampling;

pub use chamfer::{chamfer_distance, chamfer_distance_points};
pub use grouping::{group_equivalent_parts, EquivalenceGroups, DEFAULT_GROUP_REL_TOL};
pub use io::{read_pcld, read_pcld_file, write_pcld, write_pcld_file, PCLD_MAGIC, PCLD_VERSION};
pub use pca::{pca_canonicalize, pca_frame, CanonicalFrame, Canonicalized};
pub use sampling::{farthest_point_indices, farthest_point_sample};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Tolerance on `||q|| - 1` accepted by [`apply_pose`].
pub const UNIT_QUAT_TOL: f64 = 1e-9;

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn squared_distance(a: Vec3, b: Vec3) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    scale(a, 1.0 / n)
}

#[inline]
pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j][i] = *v;
        }
    }
    t
}

/// Unordered set of 3D points in a part's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("point cloud must contain at least one point".into()));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Domain(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            c = add(c, *p);
        }
        scale(c, 1.0 / self.points.len() as f64)
    }

    /// Row-major `m x 3` copy of the coordinates.
    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.iter().copied()).collect()
    }

    /// Concatenates clouds into one (the union used for assembled shapes).
    pub fn union<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> Result<PointCloud> {
        let points: Vec<Vec3> = clouds
            .into_iter()
            .flat_map(|c| c.points.iter().copied())
            .collect();
        PointCloud::new(points)
    }
}

/// Unit quaternion `(w, x, y, z)`.
pub type Quat = [f64; 4];

pub fn quat_norm(q: Quat) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

pub fn quat_normalize(q: Quat) -> Quat {
    let n = quat_norm(q);
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

pub fn quat_mul(a: Quat, b: Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn quat_conj(q: Quat) -> Quat {
    [q[0], -q[1], -q[2], -q[3]]
}

pub fn quat_from_axis_angle(axis: Vec3, angle: f64) -> Quat {
    let a = normalize(axis);
    let (s, c) = (angle / 2.0).sin_cos();
    [c, a[0] * s, a[1] * s, a[2] * s]
}

/// Rotation matrix of a unit quaternion.
pub fn quat_to_matrix(q: Quat) -> Mat3 {
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Quaternion of a proper rotation matrix (Shepperd's method), `w >= 0`.
pub fn quat_from_matrix(m: &Mat3) -> Quat {
    let trace = m[0][0] + m[1][1] + m[2][2];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [
            (m[2][1] - m[1][2]) / s,
            0.25 * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            0.25 * s,
            (m[1][2] + m[2][1]) / s,
        ]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            0.25 * s,
        ]
    };
    canonical_sign(quat_normalize(q))
}

fn canonical_sign(q: Quat) -> Quat {
    if q[0] < 0.0 {
        [-q[0], -q[1], -q[2], -q[3]]
    } else {
        q
    }
}

/// Rigid placement of a part: rotate by `q`, then translate by `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub q: Quat,
    pub t: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        q: [1.0, 0.0, 0.0, 0.0],
        t: [0.0, 0.0, 0.0],
    };

    pub fn new(q: Quat, t: Vec3) -> Result<Self> {
        let pose = Pose { q, t };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_rotation(r: &Mat3, t: Vec3) -> Self {
        Pose {
            q: quat_from_matrix(r),
            t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.iter().chain(self.t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose("non-finite component".into()));
        }
        let n = quat_norm(self.q);
        if (n - 1.0).abs() > UNIT_QUAT_TOL {
            return Err(Error::InvalidPose(format!(
                "quaternion norm {n} differs from 1 by more than {UNIT_QUAT_TOL}"
            )));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3 {
        quat_to_matrix(self.q)
    }

    /// Same rotation with the `w >= 0` representative of the quaternion.
    pub fn canonical(&self) -> Pose {
        Pose {
            q: canonical_sign(self.q),
            t: self.t,
        }
    }

    pub fn inverse(&self) -> Pose {
        let qi = quat_conj(self.q);
        let r = quat_to_matrix(qi);
        let t = mat_vec(&r, self.t);
        Pose {
            q: qi,
            t: [-t[0], -t[1], -t[2]],
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let r = self.rotation();
        Pose {
            q: quat_mul(self.q, other.q),
            t: add(mat_vec(&r, other.t), self.t),
        }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        add(mat_vec(&self.rotation(), p), self.t)
    }
}

/// Returns `R(q) p + t` for every point.
pub fn apply_pose(cloud: &PointCloud, pose: &Pose) -> Result<PointCloud> {
    pose.validate()?;
    let r = pose.rotation();
    let points = cloud
        .points
        .iter()
        .map(|p| add(mat_vec(&r, *p), pose.t))
        .collect();
    Ok(PointCloud { points })
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn diagonal(&self) -> f64 {
        norm(sub(self.max, self.min))
    }

    pub fn center(&self) -> Vec3 {
        scale(add(self.min, self.max), 0.5)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

pub fn aabb(cloud: &PointCloud) -> Aabb {
    aabb_of_points(cloud.points())
}

pub(crate) fn aabb_of_points(points: &[Vec3]) -> Aabb {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            min[k] = min[k].min(p[k]);
            max[k] = max[k].max(p[k]);
        }
    }
    Aabb { min, max }
}
