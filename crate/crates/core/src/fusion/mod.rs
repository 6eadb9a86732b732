//! Fusion strategies and the detection stage: raw-cloud merge (early),
//! box merge through NMS (late), element-wise max and self-attention
//! operators over BEV grids (intermediate), grid warping for stale-pose
//! correction, and a deterministic surrogate detector.

mod nms;
mod rtree;

pub use nms::{nms_rtree, nms_rtree_with_stats, NmsStats};
pub use rtree::{RTreeIndex, Rect};

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::geom::{se2_apply_inverse, transform_points};
use crate::pillar::BevFeatureGrid;
use crate::types::{Box3D, ClassId, DetectionSet, PointCloud, Pose};

/// Merges collaborator clouds into the ego frame and concatenates them
/// after the ego's own points. Each collaborator entry carries the pose
/// of the frame its cloud is expressed in; a cloud already tagged with
/// the ego frame must come with the ego pose.
pub fn early_fuse(
    ego: &PointCloud,
    others: &[(PointCloud, Pose)],
    ego_pose: &Pose,
) -> Result<PointCloud> {
    let mut merged = ego.clone();
    for (cloud, pose) in others {
        if cloud.frame == ego.frame && pose != ego_pose {
            return Err(Error::FrameMismatch(format!(
                "cloud claims ego frame {:?} but not the ego pose",
                ego.frame
            )));
        }
        let projected = transform_points(cloud, pose, ego_pose, ego.frame)?;
        merged.points.extend(projected.points);
    }
    Ok(merged)
}

/// Late fusion: union of per-agent detection sets (all already in the ego
/// frame) pushed through class-wise NMS. The first set is the ego's; its
/// stamp and agent id carry over to the result. Suppression ties break on
/// position in `sets`, so callers order sets by priority (ego first, then
/// ascending agent id).
pub fn late_fuse(sets: &[DetectionSet], iou_thr: f64) -> Result<DetectionSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Shape("late_fuse needs at least one set".into()))?;
    let pool: Vec<Box3D> = sets.iter().flat_map(|s| s.boxes.iter().copied()).collect();
    Ok(DetectionSet::new(
        first.stamp,
        first.agent_id,
        nms_rtree(&pool, iou_thr),
    ))
}

fn check_fusable(grids: &[&BevFeatureGrid]) -> Result<()> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Shape("fusion needs at least one grid".into()))?;
    for g in &grids[1..] {
        if g.spec != first.spec || g.ego_frame != first.ego_frame {
            return Err(Error::Shape(format!(
                "grid from agent {} does not share the ego spec/frame",
                g.agent_id
            )));
        }
    }
    Ok(())
}

/// Element-wise maximum across agent grids. Commutative, associative and
/// idempotent; metadata comes from the first (ego) grid.
pub fn fuse_max(grids: &[&BevFeatureGrid]) -> Result<BevFeatureGrid> {
    check_fusable(grids)?;
    let mut out = grids[0].clone();
    for g in &grids[1..] {
        out.data.zip_mut_with(&g.data, |a, &b| *a = a.max(b));
    }
    Ok(out)
}

/// Per-cell scaled dot-product self-attention with identity projections,
/// keeping the ego token's attention row: the output cell is the
/// softmax(x_ego . x_j / sqrt(C))-weighted sum of all agents' vectors.
/// The ego grid must come first.
pub fn fuse_attention(grids: &[&BevFeatureGrid]) -> Result<BevFeatureGrid> {
    check_fusable(grids)?;
    let mut out = grids[0].clone();
    if grids.len() == 1 {
        return Ok(out);
    }
    let (h, w, c) = out.data.dim();
    let scale = 1.0 / (c as f64).sqrt();
    let k = grids.len();
    let mut dots = vec![0.0f64; k];
    let mut weights = vec![0.0f64; k];
    for i in 0..h {
        for j in 0..w {
            for (t, g) in grids.iter().enumerate() {
                let mut dot = 0.0f64;
                for ch in 0..c {
                    dot += grids[0].data[(i, j, ch)] as f64 * g.data[(i, j, ch)] as f64;
                }
                dots[t] = dot * scale;
            }
            let max = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0f64;
            for t in 0..k {
                weights[t] = (dots[t] - max).exp();
                total += weights[t];
            }
            for ch in 0..c {
                let mut acc = 0.0f64;
                for (t, g) in grids.iter().enumerate() {
                    acc += weights[t] / total * g.data[(i, j, ch)] as f64;
                }
                out.data[(i, j, ch)] = acc as f32;
            }
        }
    }
    Ok(out)
}

/// Resamples a grid under the SE(2) part of `rel` (nearest-neighbor on
/// cell centers): the content is moved by `rel`, cells that map outside
/// the grid read as zero.
pub fn warp_grid(grid: &BevFeatureGrid, rel: &Pose) -> BevFeatureGrid {
    if rel.x == 0.0 && rel.y == 0.0 && rel.yaw == 0.0 {
        return grid.clone();
    }
    let spec = &grid.spec;
    let (h, w, c) = grid.data.dim();
    let mut data = Array3::<f32>::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            let (cx, cy) = spec.center_of(i, j);
            let (sx, sy) = se2_apply_inverse(rel, cx, cy);
            if let Some((si, sj)) = spec.cell_of(sx, sy) {
                for ch in 0..c {
                    data[(i, j, ch)] = grid.data[(si, sj, ch)];
                }
            }
        }
    }
    let mut out = grid.clone();
    out.data = data;
    out
}

/// Surrogate detection head. Objectness is the channel mean per cell;
/// cells above `objectness_thr` are grouped into 8-connected components,
/// each yielding one axis-aligned box: centroid center, extent-fitted
/// dims, class from the footprint convention, score = mean component
/// objectness (clamped to 1). Results pass through class-wise NMS.
pub fn detect(grid: &BevFeatureGrid, objectness_thr: f64, nms_iou_thr: f64) -> DetectionSet {
    let boxes = detect_boxes(grid, objectness_thr);
    DetectionSet::new(grid.stamp, grid.agent_id, nms_rtree(&boxes, nms_iou_thr))
}

fn detect_boxes(grid: &BevFeatureGrid, objectness_thr: f64) -> Vec<Box3D> {
    let spec = &grid.spec;
    let (h, w, c) = grid.data.dim();
    let mut objectness = vec![0.0f64; h * w];
    let mut hot = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0f64;
            for ch in 0..c {
                acc += grid.data[(i, j, ch)] as f64;
            }
            let v = acc / c as f64;
            objectness[i * w + j] = v;
            hot[i * w + j] = v > objectness_thr;
        }
    }

    let mut visited = vec![false; h * w];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !hot[start] || visited[start] {
            continue;
        }
        stack.push(start);
        visited[start] = true;
        let mut cells = Vec::new();
        while let Some(cell) = stack.pop() {
            cells.push(cell);
            let (ci, cj) = (cell / w, cell % w);
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (ci as i64 + di, cj as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= h as i64 || nj >= w as i64 {
                        continue;
                    }
                    let n = ni as usize * w + nj as usize;
                    if hot[n] && !visited[n] {
                        visited[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        cells.sort_unstable();
        boxes.push(component_box(spec, &objectness, w, &cells));
    }
    boxes
}

fn component_box(
    spec: &crate::pillar::GridSpec,
    objectness: &[f64],
    w: usize,
    cells: &[usize],
) -> Box3D {
    let (mut sum_x, mut sum_y, mut sum_obj) = (0.0f64, 0.0f64, 0.0f64);
    let (mut min_i, mut max_i, mut min_j, mut max_j) = (usize::MAX, 0usize, usize::MAX, 0usize);
    for &cell in cells {
        let (i, j) = (cell / w, cell % w);
        let (cx, cy) = spec.center_of(i, j);
        sum_x += cx;
        sum_y += cy;
        sum_obj += objectness[cell];
        min_i = min_i.min(i);
        max_i = max_i.max(i);
        min_j = min_j.min(j);
        max_j = max_j.max(j);
    }
    let n = cells.len() as f64;
    let length = (max_i - min_i + 1) as f64 * spec.voxel;
    let width = (max_j - min_j + 1) as f64 * spec.voxel;
    let class_id = ClassId::from_footprint(length, width);
    let (_, _, typical_h) = class_id.typical_dims();
    Box3D {
        cx: sum_x / n,
        cy: sum_y / n,
        cz: typical_h / 2.0,
        length,
        width,
        height: typical_h,
        yaw: 0.0,
        class_id,
        score: (sum_obj / n).clamp(0.0, 1.0),
    }
}
