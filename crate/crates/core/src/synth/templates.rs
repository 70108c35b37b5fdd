//! Chair and table layouts: primitive shapes with placements, before
//! normalization. Units are roughly meters, z is up and the front faces -y.

use rand::Rng;

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Shape {
    Box(Vec3),
    /// Closed cylinder along a coordinate axis.
    Cylinder { radius: f64, length: f64, axis: usize },
}

/// One part instance. Parts sharing `kind` are copies of the same geometry.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PartSpec {
    pub shape: Shape,
    pub center: Vec3,
    pub kind: usize,
}

struct Builder {
    parts: Vec<PartSpec>,
    kinds: usize,
}

impl Builder {
    fn new() -> Self {
        Self {
            parts: Vec::new(),
            kinds: 0,
        }
    }

    /// Adds one instance of a fresh kind per center.
    fn group(&mut self, shape: Shape, centers: &[Vec3]) {
        for &center in centers {
            self.parts.push(PartSpec {
                shape,
                center,
                kind: self.kinds,
            });
        }
        self.kinds += 1;
    }
}

fn pick_weighted(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn vertical(thick: f64, height: f64, round: bool) -> Shape {
    if round {
        Shape::Cylinder {
            radius: thick / 2.0,
            length: height,
            axis: 2,
        }
    } else {
        Shape::Box([thick, thick, height])
    }
}

fn rod(radius: f64, length: f64, axis: usize, round: bool) -> Shape {
    if round {
        Shape::Cylinder { radius, length, axis }
    } else {
        let mut s = [2.0 * radius; 3];
        s[axis] = length;
        Shape::Box(s)
    }
}

pub(crate) fn chair(rng: &mut impl Rng) -> Vec<PartSpec> {
    let sw = rng.random_range(0.42..0.60);
    let sd = rng.random_range(0.40..0.55);
    let st = rng.random_range(0.03..0.07);
    let hs = rng.random_range(0.38..0.50);
    let lt = rng.random_range(0.035..0.055);
    let inset = rng.random_range(0.0..0.03);
    let hb = rng.random_range(0.35..0.55);
    let round_legs = rng.random_bool(0.3);
    let four_legs = rng.random_bool(0.65);
    let tall_rear = four_legs && rng.random_bool(0.6);
    let n_slats = pick_weighted(rng, &[0.3, 0.2, 0.2, 0.15, 0.15]);
    let n_stretchers = pick_weighted(rng, &[0.35, 0.35, 0.3]);

    let lx = sw / 2.0 - inset - lt / 2.0;
    let ly = sd / 2.0 - inset - lt / 2.0;
    let seat_top = hs + st;
    let back_top = seat_top + hb;
    let mut b = Builder::new();
    b.group(Shape::Box([sw, sd, st]), &[[0.0, 0.0, hs + st / 2.0]]);

    let leg = vertical(lt, hs, round_legs);
    // Rail spans between the two back uprights, which sit at `ux`.
    let (ux, uthick, rail_y);
    if tall_rear {
        b.group(leg, &[[-lx, -ly, hs / 2.0], [lx, -ly, hs / 2.0]]);
        let post = vertical(lt, back_top, round_legs);
        b.group(post, &[[-lx, ly, back_top / 2.0], [lx, ly, back_top / 2.0]]);
        ux = lx;
        uthick = lt;
        rail_y = ly;
    } else {
        if four_legs {
            b.group(
                leg,
                &[
                    [-lx, -ly, hs / 2.0],
                    [lx, -ly, hs / 2.0],
                    [-lx, ly, hs / 2.0],
                    [lx, ly, hs / 2.0],
                ],
            );
        } else {
            b.group(leg, &[[-lx, -ly, hs / 2.0], [lx, -ly, hs / 2.0]]);
            b.group(vertical(lt * 1.6, hs, round_legs), &[[0.0, ly, hs / 2.0]]);
        }
        // Back stiles are flat bars, unlike the square or round legs.
        let ut = rng.random_range(0.035..0.055);
        let ud = ut * rng.random_range(0.35..0.5);
        ux = sw / 2.0 - ut / 2.0;
        uthick = ut;
        rail_y = sd / 2.0 - ud / 2.0;
        let up = Shape::Box([ut, ud, hb]);
        let zc = seat_top + hb / 2.0;
        b.group(up, &[[-ux, rail_y, zc], [ux, rail_y, zc]]);
    }
    let rail_h = rng.random_range(0.05..0.12);
    let rail_t = rng.random_range(0.02..0.035);
    let span = 2.0 * ux - uthick;
    b.group(Shape::Box([span, rail_t, rail_h]), &[[0.0, rail_y, back_top - rail_h / 2.0]]);

    if n_slats > 0 {
        let slat_t = rng.random_range(0.010..0.018);
        let slat_w = rng.random_range(0.035f64..0.07).min(span / (2.0 * n_slats as f64 + 1.0)).max(2.0 * slat_t);
        let h = hb - rail_h;
        let centers: Vec<Vec3> = (0..n_slats)
            .map(|i| {
                let x = -span / 2.0 + span * (i + 1) as f64 / (n_slats + 1) as f64;
                [x, rail_y, seat_top + h / 2.0]
            })
            .collect();
        b.group(Shape::Box([slat_w, slat_t, h]), &centers);
    }

    let round_bars = rng.random_bool(0.5);
    let r = rng.random_range(0.006..0.011);
    let z = rng.random_range(0.08..0.25);
    match (n_stretchers, four_legs) {
        (0, _) => {}
        (1, _) => b.group(rod(r, 2.0 * lx - lt, 0, round_bars), &[[0.0, -ly, z]]),
        (_, true) => b.group(rod(r, 2.0 * ly - lt, 1, round_bars), &[[-lx, 0.0, z], [lx, 0.0, z]]),
        (_, false) => {
            b.group(rod(r, 2.0 * lx - lt, 0, round_bars), &[[0.0, -ly, z]]);
            let len = 2.0 * ly - lt * 1.3;
            b.group(rod(r, len, 1, round_bars), &[[0.0, 0.0, z]]);
        }
    }
    b.parts
}

pub(crate) fn table(rng: &mut impl Rng) -> Vec<PartSpec> {
    let tw = rng.random_range(0.6..1.2);
    let td = rng.random_range(0.5..0.8);
    let tt = rng.random_range(0.03..0.06);
    let h = rng.random_range(0.5..0.75);
    let lt = rng.random_range(0.04..0.08);
    let inset = rng.random_range(0.0..0.06);
    let round_legs = rng.random_bool(0.4);
    let four_legs = rng.random_bool(0.7);
    let n_stretchers = pick_weighted(rng, &[0.4, 0.3, 0.3]);

    let mut b = Builder::new();
    b.group(Shape::Box([tw, td, tt]), &[[0.0, 0.0, h + tt / 2.0]]);
    let leg = vertical(lt, h, round_legs);
    let lx = tw / 2.0 - inset - lt / 2.0;
    let ly = td / 2.0 - inset - lt / 2.0;
    let r = rng.random_range(0.01..0.02);
    let z = rng.random_range(0.1..0.3);
    let round_bars = rng.random_bool(0.5);
    if four_legs {
        b.group(
            leg,
            &[[-lx, -ly, h / 2.0], [lx, -ly, h / 2.0], [-lx, ly, h / 2.0], [lx, ly, h / 2.0]],
        );
        match n_stretchers {
            0 => {}
            1 => b.group(rod(r, 2.0 * lx - lt, 0, round_bars), &[[0.0, 0.0, z]]),
            _ => b.group(rod(r, 2.0 * lx - lt, 0, round_bars), &[[0.0, -ly, z], [0.0, ly, z]]),
        }
    } else {
        // Two front legs and one centered at the back.
        b.group(leg, &[[-lx, -ly, h / 2.0], [lx, -ly, h / 2.0], [0.0, ly, h / 2.0]]);
        match n_stretchers {
            0 => {}
            1 => b.group(rod(r, 2.0 * lx - lt, 0, round_bars), &[[0.0, -ly, z]]),
            _ => {
                b.group(rod(r, 2.0 * lx - lt, 0, round_bars), &[[0.0, -ly, z]]);
                b.group(rod(r, 2.0 * ly - lt, 1, round_bars), &[[0.0, 0.0, z]]);
            }
        }
    }
    b.parts
}
