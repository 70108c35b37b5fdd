//! Surface point samplers for the primitive shapes furniture is built from.

use std::f64::consts::TAU;

use rand::Rng;

use crate::geometry::Vec3;

/// Extra random surface samples drawn per requested point before farthest
/// point sampling thins them out.
const OVERSAMPLE: usize = 4;

/// Surface samples of an axis-aligned box centered at the origin. The eight
/// corners always come first so the sampled silhouette is exact.
pub fn sample_box(size: Vec3, count: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    let h = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
    let mut pts = Vec::with_capacity(count * OVERSAMPLE + 8);
    for &sx in &[-1.0, 1.0] {
        for &sy in &[-1.0, 1.0] {
            for &sz in &[-1.0, 1.0] {
                pts.push([sx * h[0], sy * h[1], sz * h[2]]);
            }
        }
    }
    // Face pairs weighted by area: normal along axis a.
    let areas = [size[1] * size[2], size[0] * size[2], size[0] * size[1]];
    let total: f64 = areas.iter().sum();
    for _ in 0..count * OVERSAMPLE {
        let mut pick = rng.random_range(0.0..total);
        let mut axis = 2;
        for (a, &ar) in areas.iter().enumerate() {
            if pick < ar {
                axis = a;
                break;
            }
            pick -= ar;
        }
        let mut p = [0.0; 3];
        for (k, v) in p.iter_mut().enumerate() {
            *v = if k == axis {
                if rng.random_bool(0.5) {
                    h[k]
                } else {
                    -h[k]
                }
            } else {
                rng.random_range(-h[k]..=h[k])
            };
        }
        pts.push(p);
    }
    pts
}

/// Surface samples of a closed cylinder along `axis` (0, 1 or 2), centered at
/// the origin. Rim points on both caps come first.
pub fn sample_cylinder(radius: f64, length: f64, axis: usize, count: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    let place = |u: f64, v: f64, along: f64| -> Vec3 {
        let mut p = [0.0; 3];
        p[axis] = along;
        p[(axis + 1) % 3] = u;
        p[(axis + 2) % 3] = v;
        p
    };
    let half = length / 2.0;
    let mut pts = Vec::with_capacity(count * OVERSAMPLE + 32);
    for k in 0..16 {
        let a = TAU * k as f64 / 16.0;
        for &z in &[-half, half] {
            pts.push(place(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let side = TAU * radius * length;
    let cap = std::f64::consts::PI * radius * radius;
    for _ in 0..count * OVERSAMPLE {
        let a = rng.random_range(0.0..TAU);
        if rng.random_range(0.0..side + 2.0 * cap) < side {
            let z = rng.random_range(-half..=half);
            pts.push(place(radius * a.cos(), radius * a.sin(), z));
        } else {
            let r = radius * rng.random_range(0.0f64..1.0).sqrt();
            let z = if rng.random_bool(0.5) { half } else { -half };
            pts.push(place(r * a.cos(), r * a.sin(), z));
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn box_points_lie_on_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let size = [0.4, 0.1, 0.05];
        for p in sample_box(size, 50, &mut rng) {
            let on_face = (0..3).any(|k| ((p[k].abs()) - size[k] / 2.0).abs() < 1e-12);
            let inside = (0..3).all(|k| p[k].abs() <= size[k] / 2.0 + 1e-12);
            assert!(on_face && inside, "{p:?}");
        }
    }

    #[test]
    fn cylinder_points_lie_on_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in sample_cylinder(0.02, 0.5, 2, 50, &mut rng) {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let on_side = (r - 0.02).abs() < 1e-12;
            let on_cap = (p[2].abs() - 0.25).abs() < 1e-12 && r <= 0.02 + 1e-12;
            assert!(on_side || on_cap, "{p:?}");
        }
    }
}
