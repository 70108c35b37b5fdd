//! Point-cloud utilities: sampling, canonicalization, chamfer distance, and
//! the assignment and rank tools used downstream.
//!
//! cargo run --release --example geometry

use manualpa::assignment::{hungarian, Order};
use manualpa::evaluation::kendall_tau;
use manualpa::geometry::{
    aabb, apply_pose, chamfer_distance, farthest_point_sample, pca_canonicalize, quat_from_axis_angle, PointCloud,
    Pose,
};

fn main() -> manualpa::Result<()> {
    // A slanted 0.6 x 0.1 x 0.05 plank sampled on a grid.
    let mut raw = Vec::new();
    for i in 0..30 {
        for j in 0..6 {
            for k in 0..3 {
                raw.push([i as f64 * 0.02, j as f64 * 0.02, k as f64 * 0.025]);
            }
        }
    }
    let plank = PointCloud::new(raw)?;
    let tilt = Pose::new(quat_from_axis_angle([1.0, 1.0, 0.0], 0.7), [0.3, -0.2, 0.1])?;
    let posed = apply_pose(&plank, &tilt)?;

    let thin = farthest_point_sample(&posed, 64)?;
    println!("farthest point sampling: {} -> {} points", posed.len(), thin.len());

    let (canon, frame) = pca_canonicalize(&thin)?;
    let b = aabb(&canon);
    println!("canonical extent {:.3?}, diagonal {:.3}", b.max, b.diagonal());
    println!("canonical frame scale {:.3}, centre {:.3?}", frame.scale, frame.pose.t);

    let back = pca_canonicalize(&farthest_point_sample(&plank, 64)?)?.0;
    println!("chamfer(canonical tilted, canonical original) = {:.2e}", chamfer_distance(&canon, &back)?);

    let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
    let p = hungarian(&cost)?;
    println!("hungarian assignment {:?} with cost {}", p.row_to_col(), p.cost(&cost));

    let truth = Order::identity(5);
    let swapped = Order::new(vec![1, 0, 2, 3, 4])?;
    println!("kendall tau after one swap of five: {:.2}", kendall_tau(&swapped, &truth)?);
    Ok(())
}
