//! Group-wise matching of predicted to ground-truth poses and the weighted
//! pose objective, both in plain `f64` and on the tape.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assignment::hungarian;
use crate::error::{Error, Result};
use crate::geometry::{
    apply_pose, chamfer_distance, chamfer_distance_points, mat_vec, norm, sub, EquivalenceGroups, PointCloud, Pose,
};
use crate::tensor::Var;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub translation: f64,
    pub chamfer: f64,
    pub point: f64,
    pub shape: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            translation: 1.0,
            chamfer: 20.0,
            point: 1.0,
            shape: 20.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.translation, self.chamfer, self.point, self.shape];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain(format!("loss weights must be finite and non-negative: {all:?}")));
        }
        Ok(())
    }
}

/// `pred_for_gt[i]` is the predicted pose used for ground-truth part `i`.
/// Only members of the same equivalence group are ever exchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub pred_for_gt: Vec<usize>,
}

impl Matching {
    pub fn identity(n: usize) -> Self {
        Self {
            pred_for_gt: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pred_for_gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred_for_gt.is_empty()
    }

    /// Checks the mapping is a bijection that stays inside each group.
    pub fn validate(&self, groups: &EquivalenceGroups) -> Result<()> {
        let n = groups.num_parts();
        if self.len() != n {
            return Err(Error::Domain(format!("matching covers {} parts, groups cover {n}", self.len())));
        }
        let member = groups.membership();
        let mut seen = vec![false; n];
        for (gt, &pred) in self.pred_for_gt.iter().enumerate() {
            if pred >= n || seen[pred] || member[pred] != member[gt] {
                return Err(Error::Domain(format!("invalid matching {:?}", self.pred_for_gt)));
            }
            seen[pred] = true;
        }
        Ok(())
    }
}

fn check_lengths(pred: &[Pose], gt: &[Pose], parts: &[PointCloud]) -> Result<()> {
    if pred.len() != gt.len() || gt.len() != parts.len() {
        return Err(Error::Domain(format!(
            "{} predicted poses, {} ground-truth poses and {} parts",
            pred.len(),
            gt.len(),
            parts.len()
        )));
    }
    Ok(())
}

/// Cost of placing predicted pose `a` (on part `a`) against ground truth `b`.
pub fn posed_chamfer(pred: &Pose, pred_part: &PointCloud, gt: &Pose, gt_part: &PointCloud) -> Result<f64> {
    chamfer_distance(&apply_pose(pred_part, pred)?, &apply_pose(gt_part, gt)?)
}

/// Hungarian assignment inside every group under the posed chamfer cost.
pub fn match_within_groups(
    pred: &[Pose],
    gt: &[Pose],
    parts: &[PointCloud],
    groups: &EquivalenceGroups,
) -> Result<Matching> {
    check_lengths(pred, gt, parts)?;
    if groups.num_parts() != parts.len() {
        return Err(Error::Domain(format!(
            "groups cover {} parts, sample has {}",
            groups.num_parts(),
            parts.len()
        )));
    }
    let pred_posed = pred
        .iter()
        .zip(parts)
        .map(|(p, c)| apply_pose(c, p))
        .collect::<Result<Vec<_>>>()?;
    let gt_posed = gt
        .iter()
        .zip(parts)
        .map(|(p, c)| apply_pose(c, p))
        .collect::<Result<Vec<_>>>()?;
    let mut m = Matching::identity(parts.len());
    for g in groups.groups() {
        if g.len() < 2 {
            continue;
        }
        let cost: Vec<Vec<f64>> = g
            .iter()
            .map(|&a| {
                g.iter()
                    .map(|&b| chamfer_distance_points(pred_posed[a].points(), gt_posed[b].points()))
                    .collect()
            })
            .collect();
        let p = hungarian(&cost)?;
        for (ra, &cb) in p.row_to_col().iter().enumerate() {
            m.pred_for_gt[g[cb]] = g[ra];
        }
    }
    Ok(m)
}

/// Sum of posed chamfer costs under a matching.
pub fn matching_cost(pred: &[Pose], gt: &[Pose], parts: &[PointCloud], m: &Matching) -> Result<f64> {
    let mut total = 0.0;
    for (i, &k) in m.pred_for_gt.iter().enumerate() {
        total += posed_chamfer(&pred[k], &parts[i], &gt[i], &parts[i])?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseLosses {
    pub translation: f64,
    pub chamfer: f64,
    pub point: f64,
    pub shape: f64,
    pub total: f64,
}

impl PoseLosses {
    fn weighted(translation: f64, chamfer: f64, point: f64, shape: f64, w: &LossWeights) -> Self {
        Self {
            translation,
            chamfer,
            point,
            shape,
            total: w.translation * translation + w.chamfer * chamfer + w.point * point + w.shape * shape,
        }
    }
}

/// Ground-truth part `i` placed by the matched prediction.
fn matched_pred<'a>(pred: &'a [Pose], m: &Matching, i: usize) -> &'a Pose {
    &pred[m.pred_for_gt[i]]
}

/// Union of every part placed by its matched predicted pose.
pub fn assembled_prediction(pred: &[Pose], parts: &[PointCloud], m: &Matching) -> Result<PointCloud> {
    let posed = (0..parts.len())
        .map(|i| apply_pose(&parts[i], matched_pred(pred, m, i)))
        .collect::<Result<Vec<_>>>()?;
    PointCloud::union(&posed)
}

pub fn assembled_ground_truth(gt: &[Pose], parts: &[PointCloud]) -> Result<PointCloud> {
    let posed = gt
        .iter()
        .zip(parts)
        .map(|(p, c)| apply_pose(c, p))
        .collect::<Result<Vec<_>>>()?;
    PointCloud::union(&posed)
}

/// Shape chamfer between the two assemblies under `m`.
pub fn shape_chamfer(pred: &[Pose], gt: &[Pose], parts: &[PointCloud], m: &Matching) -> Result<f64> {
    check_lengths(pred, gt, parts)?;
    chamfer_distance(&assembled_prediction(pred, parts, m)?, &assembled_ground_truth(gt, parts)?)
}

pub fn pose_loss_components(
    pred: &[Pose],
    gt: &[Pose],
    parts: &[PointCloud],
    m: &Matching,
    w: &LossWeights,
) -> Result<PoseLosses> {
    check_lengths(pred, gt, parts)?;
    if m.len() != parts.len() {
        return Err(Error::Domain(format!("matching covers {} parts, sample has {}", m.len(), parts.len())));
    }
    let n = parts.len() as f64;
    let (mut lt, mut lc, mut le) = (0.0, 0.0, 0.0);
    for (i, part) in parts.iter().enumerate() {
        let p = matched_pred(pred, m, i);
        lt += norm(sub(p.t, gt[i].t));
        let rp = p.rotation();
        let rg = gt[i].rotation();
        let a: Vec<_> = part.points().iter().map(|x| mat_vec(&rp, *x)).collect();
        let b: Vec<_> = part.points().iter().map(|x| mat_vec(&rg, *x)).collect();
        lc += chamfer_distance_points(&a, &b);
        le += a.iter().zip(&b).map(|(x, y)| norm(sub(*x, *y))).sum::<f64>() / a.len() as f64;
    }
    let ls = shape_chamfer(pred, gt, parts, m)?;
    Ok(PoseLosses::weighted(lt / n, lc / n, le / n, ls, w))
}

/// Ground truth shared by every tape evaluation of one sample.
#[derive(Debug, Clone)]
pub struct PoseTarget {
    pub n_parts: usize,
    pub points_per_part: usize,
    /// Part clouds, `n_parts * points_per_part` rows of xyz.
    pub points: Arc<Vec<f64>>,
    /// `R_i p` for every part point.
    pub rotated: Vec<f64>,
    /// `R_i p + t_i` for every part point.
    pub posed: Vec<f64>,
    pub translations: Vec<f64>,
}

impl PoseTarget {
    /// All parts must have the same number of points.
    pub fn new(parts: &[PointCloud], gt: &[Pose]) -> Result<Self> {
        if parts.is_empty() || parts.len() != gt.len() {
            return Err(Error::Domain(format!("{} parts and {} poses", parts.len(), gt.len())));
        }
        let m = parts[0].len();
        if parts.iter().any(|p| p.len() != m) || m == 0 {
            return Err(Error::Domain("parts must share a non-zero point count".into()));
        }
        let mut points = Vec::with_capacity(parts.len() * m * 3);
        let mut rotated = Vec::with_capacity(points.capacity());
        let mut posed = Vec::with_capacity(points.capacity());
        for (part, pose) in parts.iter().zip(gt) {
            let r = pose.rotation();
            for p in part.points() {
                let q = mat_vec(&r, *p);
                points.extend_from_slice(p);
                rotated.extend_from_slice(&q);
                posed.extend((0..3).map(|k| q[k] + pose.t[k]));
            }
        }
        Ok(Self {
            n_parts: parts.len(),
            points_per_part: m,
            points: Arc::new(points),
            rotated,
            posed,
            translations: gt.iter().flat_map(|p| p.t).collect(),
        })
    }
}

/// Differentiable loss terms for one sample.
pub struct TapeLosses<'t> {
    pub translation: Var<'t>,
    pub chamfer: Var<'t>,
    pub point: Var<'t>,
    pub shape: Var<'t>,
    pub total: Var<'t>,
}

impl TapeLosses<'_> {
    pub fn values(&self) -> PoseLosses {
        PoseLosses {
            translation: self.translation.item(),
            chamfer: self.chamfer.item(),
            point: self.point.item(),
            shape: self.shape.item(),
            total: self.total.item(),
        }
    }
}

/// Same quantities as [`pose_loss_components`], differentiable in the
/// predicted translations `t` (`N x 3`) and unit quaternions `q` (`N x 4`).
pub fn pose_loss_tape<'t>(
    t: &Var<'t>,
    q: &Var<'t>,
    target: &PoseTarget,
    m: &Matching,
    w: &LossWeights,
) -> Result<TapeLosses<'t>> {
    let n = target.n_parts;
    let k = target.points_per_part;
    if t.shape() != (n, 3) || q.shape() != (n, 4) || m.len() != n {
        return Err(Error::Shape {
            op: "pose_loss",
            lhs: vec![t.rows(), t.cols(), q.rows(), q.cols()],
            rhs: vec![n, 3, n, 4],
        });
    }
    let tape = t.tape();
    let t_m = t.gather_rows(&m.pred_for_gt)?;
    let r_m = q.gather_rows(&m.pred_for_gt)?.quat_to_rotmat()?;

    let t_gt = tape.constant(n, 3, target.translations.clone());
    let translation = t_m.sub(&t_gt)?.row_norm().mean();

    let rotated = r_m.rigid_transform(None, target.points.clone(), k)?;
    let rotated_gt = tape.constant(n * k, 3, target.rotated.clone());
    let chamfer = rotated.chamfer_segments(&rotated_gt, k, k)?.mean();
    let point = rotated.sub(&rotated_gt)?.row_norm().mean();

    let posed = r_m.rigid_transform(Some(&t_m), target.points.clone(), k)?;
    let posed_gt = tape.constant(n * k, 3, target.posed.clone());
    let shape = posed.chamfer_segments(&posed_gt, n * k, n * k)?.sum();

    let total = translation
        .scale(w.translation)
        .add(&chamfer.scale(w.chamfer))?
        .add(&point.scale(w.point))?
        .add(&shape.scale(w.shape))?;
    Ok(TapeLosses {
        translation,
        chamfer,
        point,
        shape,
        total,
    })
}
