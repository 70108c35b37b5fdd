//! Silhouette-and-outline drawings of partially assembled furniture.
//!
//! Each part is drawn as the filled convex hull of its projected points,
//! sampled on a 2x2 sub-pixel grid. A pixel's intensity is the larger of half
//! the union coverage and the strongest outline response of any drawn part,
//! so a new part's outline shows even where it overlaps earlier parts.

use super::camera::Camera;
use super::raster::Raster;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

const SUB: usize = 2;
const FILL: f64 = 0.5;

/// Coverage mask at sub-pixel resolution plus the per-pixel outline response.
struct PartImage {
    mask: Vec<bool>,
    edge: Vec<f64>,
}

fn cross2(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull by the monotone chain; collinear points dropped.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross2(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    match hull.len() {
        0 => false,
        1 | 2 => {
            // Degenerate hull: within half a sub-pixel of the segment.
            let a = hull[0];
            let b = *hull.last().unwrap();
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
            qx * qx + qy * qy <= 0.25
        }
        n => (0..n).all(|i| cross2(hull[i], hull[(i + 1) % n], p) >= 0.0),
    }
}

fn draw_part(cloud: &PointCloud, camera: &Camera, w: usize, h: usize) -> PartImage {
    let (sw, sh) = (w * SUB, h * SUB);
    let pts: Vec<(f64, f64)> = cloud
        .points()
        .iter()
        .map(|p| {
            let (x, y) = camera.project(*p, w, h);
            (x * SUB as f64, y * SUB as f64)
        })
        .collect();
    let hull = convex_hull(pts);
    let mut mask = vec![false; sw * sh];
    if !hull.is_empty() {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &hull {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let lo = |v: f64, n: usize| ((v - 1.0).floor().max(0.0) as usize).min(n);
        let hi = |v: f64, n: usize| ((v + 1.0).ceil().max(0.0) as usize).min(n);
        for sy in lo(y0, sh)..hi(y1, sh) {
            for sx in lo(x0, sw)..hi(x1, sw) {
                if inside(&hull, (sx as f64 + 0.5, sy as f64 + 0.5)) {
                    mask[sy * sw + sx] = true;
                }
            }
        }
    }
    let cov = coverage(&mask, w, h);
    let mut edge = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let c = cov[y * w + x];
            if c == 0.0 {
                continue;
            }
            let at = |xx: isize, yy: isize| -> f64 {
                if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                    0.0
                } else {
                    cov[yy as usize * w + xx as usize]
                }
            };
            let (xi, yi) = (x as isize, y as isize);
            let m = at(xi - 1, yi).min(at(xi + 1, yi)).min(at(xi, yi - 1)).min(at(xi, yi + 1));
            edge[y * w + x] = (c - m).max(0.0);
        }
    }
    PartImage { mask, edge }
}

fn coverage(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
    let sw = w * SUB;
    let mut cov = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut n = 0;
            for dy in 0..SUB {
                for dx in 0..SUB {
                    if mask[(y * SUB + dy) * sw + x * SUB + dx] {
                        n += 1;
                    }
                }
            }
            cov[y * w + x] = n as f64 / (SUB * SUB) as f64;
        }
    }
    cov
}

/// Renders the cumulative drawing after each of `sequence`'s parts is added.
/// `posed` holds the parts in their assembled placement.
pub fn render_sequence(posed: &[PointCloud], sequence: &[usize], camera: &Camera, size: usize) -> Result<Vec<Raster>> {
    if size == 0 {
        return Err(Error::Domain("raster size must be positive".into()));
    }
    if let Some(&bad) = sequence.iter().find(|&&i| i >= posed.len()) {
        return Err(Error::Domain(format!("part {bad} out of range")));
    }
    let (w, h) = (size, size);
    let mut union = vec![false; w * h * SUB * SUB];
    let mut edge = vec![0.0f64; w * h];
    let mut out = Vec::with_capacity(sequence.len());
    for &i in sequence {
        let part = draw_part(&posed[i], camera, w, h);
        for (u, m) in union.iter_mut().zip(&part.mask) {
            *u |= *m;
        }
        for (e, pe) in edge.iter_mut().zip(&part.edge) {
            *e = e.max(*pe);
        }
        let cov = coverage(&union, w, h);
        let vals: Vec<f64> = cov.iter().zip(&edge).map(|(c, e)| (FILL * c).max(*e)).collect();
        out.push(Raster::from_intensities(w, h, &vals)?);
    }
    Ok(out)
}
