//! Geometry kernels: rigid point-cloud transforms between agent frames
//! and rotated-rectangle IoU in the BEV plane.

use nalgebra::{Isometry3, Translation3, UnitQuaternion};

use crate::error::Result;
use crate::types::{Box3D, FrameId, LidarPoint, PointCloud, Pose};

/// SE(3) transform taking pose-local coordinates to the common parent
/// frame. Rotation is built intrinsic Z-Y-X (yaw, then pitch, then roll).
pub fn pose_to_isometry(pose: &Pose) -> Isometry3<f64> {
    let rot = UnitQuaternion::from_euler_angles(pose.roll, pose.pitch, pose.yaw);
    Isometry3::from_parts(Translation3::new(pose.x, pose.y, pose.z), rot)
}

/// Re-expresses `cloud` in the frame described by `dst`. The cloud must
/// hold coordinates local to `src`; the rigid map applied is
/// `dst^-1 * src`. Intensities pass through untouched and the result is
/// tagged `dst_frame`.
pub fn transform_points(
    cloud: &PointCloud,
    src: &Pose,
    dst: &Pose,
    dst_frame: FrameId,
) -> Result<PointCloud> {
    src.validate()?;
    dst.validate()?;
    if src == dst {
        let mut out = cloud.clone();
        out.frame = dst_frame;
        return Ok(out);
    }
    let map = pose_to_isometry(dst).inverse() * pose_to_isometry(src);
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let q = map.transform_point(&nalgebra::Point3::new(p.x, p.y, p.z));
            LidarPoint::new(q.x, q.y, q.z, p.intensity)
        })
        .collect();
    Ok(PointCloud::new(dst_frame, points))
}

/// Applies the SE(2) part (x, y, yaw) of `rel` to a BEV position.
pub fn se2_apply(rel: &Pose, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = rel.yaw.sin_cos();
    (rel.x + c * x - s * y, rel.y + s * x + c * y)
}

/// Inverse of [`se2_apply`].
pub fn se2_apply_inverse(rel: &Pose, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = rel.yaw.sin_cos();
    let dx = x - rel.x;
    let dy = y - rel.y;
    (c * dx + s * dy, -s * dx + c * dy)
}

/// Intersection-over-union of the BEV footprints of two yawed boxes.
///
/// Arguments are symmetric: the pair is put into a canonical order before
/// clipping, so `iou_bev(a, b)` and `iou_bev(b, a)` run bit-identical
/// arithmetic. Degenerate overlaps clip to zero area and yield 0.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let (first, second) = if box_key_le(a, b) { (a, b) } else { (b, a) };
    let inter = convex_intersection_area(&first.corners(), &second.corners());
    let union = first.area() + second.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn box_key_le(a: &Box3D, b: &Box3D) -> bool {
    let ka = [a.cx, a.cy, a.length, a.width, a.yaw];
    let kb = [b.cx, b.cy, b.length, b.width, b.yaw];
    for (x, y) in ka.iter().zip(kb.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

/// Area of the intersection of two convex polygons given in CCW order.
///
/// Collects every vertex of one polygon contained in the other plus all
/// edge-edge crossing points, orders them around their centroid and
/// applies the shoelace formula.
pub fn convex_intersection_area(pa: &[[f64; 2]; 4], pb: &[[f64; 2]; 4]) -> f64 {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(16);
    for p in pa {
        if point_in_convex(*p, pb) {
            pts.push(*p);
        }
    }
    for p in pb {
        if point_in_convex(*p, pa) {
            pts.push(*p);
        }
    }
    for i in 0..4 {
        let a0 = pa[i];
        let a1 = pa[(i + 1) % 4];
        for j in 0..4 {
            let b0 = pb[j];
            let b1 = pb[(j + 1) % 4];
            if let Some(p) = segment_intersection(a0, a1, b0, b1) {
                pts.push(p);
            }
        }
    }
    if pts.len() < 3 {
        return 0.0;
    }
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|p, q| {
        let ap = (p[1] - cy).atan2(p[0] - cx);
        let aq = (q[1] - cy).atan2(q[0] - cx);
        ap.total_cmp(&aq)
    });
    shoelace(&pts).abs()
}

fn point_in_convex(p: [f64; 2], poly: &[[f64; 2]; 4]) -> bool {
    // CCW polygon: inside iff the point is left of (or on) every edge.
    for i in 0..4 {
        let a = poly[i];
        let b = poly[(i + 1) % 4];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross < -1e-12 {
            return false;
        }
    }
    true
}

fn segment_intersection(
    a0: [f64; 2],
    a1: [f64; 2],
    b0: [f64; 2],
    b1: [f64; 2],
) -> Option<[f64; 2]> {
    let r = [a1[0] - a0[0], a1[1] - a0[1]];
    let s = [b1[0] - b0[0], b1[1] - b0[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom.abs() < 1e-14 {
        return None;
    }
    let d = [b0[0] - a0[0], b0[1] - a0[1]];
    let t = (d[0] * s[1] - d[1] * s[0]) / denom;
    let u = (d[0] * r[1] - d[1] * r[0]) / denom;
    if (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
        Some([a0[0] + t * r[0], a0[1] + t * r[1]])
    } else {
        None
    }
}

fn shoelace(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        acc += p[0] * q[1] - p[1] * q[0];
    }
    acc / 2.0
}
