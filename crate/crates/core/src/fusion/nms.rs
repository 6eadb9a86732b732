//! Greedy non-maximum suppression accelerated by an R-tree over box
//! footprints. Output is identical to exhaustive pairwise NMS; the tree
//! only prunes which pairs get an IoU evaluation.

use crate::fusion::rtree::{RTreeIndex, Rect};
use crate::geom::iou_bev;
use crate::types::{Box3D, ClassId};

/// Counters from one NMS run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NmsStats {
    /// Number of IoU evaluations performed.
    pub iou_evaluations: u64,
}

/// Score-descending greedy NMS, independent per class. A box is dropped
/// when its IoU with an already kept box of the same class exceeds
/// `iou_thr`. Ties on score break on input order, so callers control
/// priority by how they order the input.
pub fn nms_rtree(boxes: &[Box3D], iou_thr: f64) -> Vec<Box3D> {
    nms_rtree_with_stats(boxes, iou_thr).0
}

pub fn nms_rtree_with_stats(boxes: &[Box3D], iou_thr: f64) -> (Vec<Box3D>, NmsStats) {
    let mut kept = Vec::new();
    let mut stats = NmsStats::default();
    for class in ClassId::ALL {
        let members: Vec<usize> = (0..boxes.len())
            .filter(|&i| boxes[i].class_id == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut order = members.clone();
        order.sort_by(|&a, &b| {
            boxes[b]
                .score
                .total_cmp(&boxes[a].score)
                .then_with(|| a.cmp(&b))
        });
        // Rank of each box in suppression order.
        let mut rank = vec![usize::MAX; boxes.len()];
        for (pos, &idx) in order.iter().enumerate() {
            rank[idx] = pos;
        }
        let tree = RTreeIndex::bulk_load(
            members
                .iter()
                .map(|&i| (Rect::from_bounds(boxes[i].aabb()), i))
                .collect(),
        );
        let mut suppressed = vec![false; boxes.len()];
        for &idx in &order {
            if suppressed[idx] {
                continue;
            }
            kept.push(boxes[idx]);
            let mut candidates = tree.query(&Rect::from_bounds(boxes[idx].aabb()));
            candidates.sort_by_key(|&c| rank[c]);
            for cand in candidates {
                if rank[cand] <= rank[idx] || suppressed[cand] {
                    continue;
                }
                stats.iou_evaluations += 1;
                if iou_bev(&boxes[idx], &boxes[cand]) > iou_thr {
                    suppressed[cand] = true;
                }
            }
        }
    }
    (kept, stats)
}
