//! Orthographic camera used to draw the manuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cross, dot, norm, normalize, scale, sub, Vec3};

/// Orthographic camera. `view_dir` points from the scene toward the eye, so
/// points with a smaller `p · view_dir` are farther away. `scale` maps world
/// units to a fraction of the raster width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub view_dir: Vec3,
    pub up: Vec3,
    pub scale: f64,
}

pub const DEFAULT_VIEW: Vec3 = [1.0, -1.0, 1.0];
pub const DEFAULT_SCALE: f64 = 0.9;

impl Camera {
    /// Normalizes `view_dir` and makes `up_hint` orthogonal to it.
    pub fn new(view_dir: Vec3, up_hint: Vec3, scale: f64) -> Result<Self> {
        let v = normalize(view_dir);
        let u = sub(up_hint, crate::geometry::scale(v, dot(up_hint, v)));
        if !(norm(v) > 0.0) || !(norm(u) > 1e-12) || !(scale > 0.0) {
            return Err(Error::Domain("degenerate camera".into()));
        }
        Ok(Self {
            view_dir: v,
            up: normalize(u),
            scale,
        })
    }

    /// Front three-quarter view from the right, above the seat.
    pub fn front_three_quarter() -> Self {
        Self::new(DEFAULT_VIEW, [0.0, 0.0, 1.0], DEFAULT_SCALE).expect("valid default camera")
    }

    pub fn right(&self) -> Vec3 {
        cross(scale(self.view_dir, -1.0), self.up)
    }

    /// Distance along the viewing direction; larger is farther from the eye.
    pub fn depth(&self, p: Vec3) -> f64 {
        -dot(p, self.view_dir)
    }

    /// Continuous pixel coordinates (x to the right, y down) on a `w x h` raster.
    pub fn project(&self, p: Vec3, w: usize, h: usize) -> (f64, f64) {
        let s = self.scale * w as f64;
        let x = w as f64 / 2.0 + s * dot(p, self.right());
        let y = h as f64 / 2.0 - s * dot(p, self.up);
        (x, y)
    }
}

impl Default for Camera {
    fn default() -> Self {
        Self::front_three_quarter()
    }
}
