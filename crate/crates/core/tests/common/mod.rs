//! Independent oracles shared by the integration and acceptance suites.
//! Everything here is deliberately written from scratch (no calls into
//! the implementation paths it checks).

#![allow(dead_code)]

use v2xlink_core::types::{Box3D, ClassId, Pose};

/// Exhaustive greedy NMS: per class, score-descending with input-order
/// tie-breaks, IoU against every remaining box. Returns the kept boxes
/// and the number of IoU evaluations.
pub fn brute_force_nms(boxes: &[Box3D], iou_thr: f64) -> (Vec<Box3D>, u64) {
    let mut kept = Vec::new();
    let mut evals = 0u64;
    for class in ClassId::ALL {
        let members: Vec<usize> = (0..boxes.len())
            .filter(|&i| boxes[i].class_id == class)
            .collect();
        let mut order = members.clone();
        order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b)));
        let mut suppressed = vec![false; boxes.len()];
        for (pos, &idx) in order.iter().enumerate() {
            if suppressed[idx] {
                continue;
            }
            kept.push(boxes[idx]);
            for &later in &order[pos + 1..] {
                if suppressed[later] {
                    continue;
                }
                evals += 1;
                if oracle_iou(&boxes[idx], &boxes[later]) > iou_thr {
                    suppressed[later] = true;
                }
            }
        }
    }
    (kept, evals)
}

/// BEV IoU via Sutherland-Hodgman polygon clipping.
pub fn oracle_iou(a: &Box3D, b: &Box3D) -> f64 {
    let inter = sutherland_hodgman_area(&box_corners(a), &box_corners(b));
    let union = a.length * a.width + b.length * b.width - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn box_corners(b: &Box3D) -> Vec<[f64; 2]> {
    let (s, c) = b.yaw.sin_cos();
    let hl = b.length / 2.0;
    let hw = b.width / 2.0;
    [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]]
        .iter()
        .map(|l| [b.cx + c * l[0] - s * l[1], b.cy + s * l[0] + c * l[1]])
        .collect()
}

/// Clips `subject` against every edge of the convex CCW polygon `clip`
/// and returns the remaining area.
pub fn sutherland_hodgman_area(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> f64 {
    let mut poly: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if poly.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let inside =
            |p: &[f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0;
        let intersect = |p: &[f64; 2], q: &[f64; 2]| -> [f64; 2] {
            let dx = q[0] - p[0];
            let dy = q[1] - p[1];
            let ex = b[0] - a[0];
            let ey = b[1] - a[1];
            let denom = ex * dy - ey * dx;
            let t = (ex * (a[1] - p[1]) - ey * (a[0] - p[0])) / denom;
            [p[0] + t * dx, p[1] + t * dy]
        };
        let mut out = Vec::with_capacity(poly.len() + 2);
        for k in 0..poly.len() {
            let cur = poly[k];
            let prev = poly[(k + poly.len() - 1) % poly.len()];
            let cur_in = inside(&cur);
            let prev_in = inside(&prev);
            if cur_in {
                if !prev_in {
                    out.push(intersect(&prev, &cur));
                }
                out.push(cur);
            } else if prev_in {
                out.push(intersect(&prev, &cur));
            }
        }
        poly = out;
    }
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        acc += p[0] * q[1] - p[1] * q[0];
    }
    (acc / 2.0).abs()
}

/// Homogeneous 4x4 transform of a pose (intrinsic Z-Y-X angles), written
/// out long-hand.
pub fn pose_matrix(p: &Pose) -> [[f64; 4]; 4] {
    let (sr, cr) = p.roll.sin_cos();
    let (sp, cp) = p.pitch.sin_cos();
    let (sy, cy) = p.yaw.sin_cos();
    // R = Rz(yaw) * Ry(pitch) * Rx(roll).
    let r = [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ];
    [
        [r[0][0], r[0][1], r[0][2], p.x],
        [r[1][0], r[1][1], r[1][2], p.y],
        [r[2][0], r[2][1], r[2][2], p.z],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Rigid inverse: [R | t]^-1 = [R^T | -R^T t].
pub fn rigid_inverse(m: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    for row in out.iter_mut().take(3) {
        row[3] = -(row[0] * m[0][3] + row[1] * m[1][3] + row[2] * m[2][3]);
    }
    out[3][3] = 1.0;
    out
}

pub fn mat_mul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn mat_apply(m: &[[f64; 4]; 4], p: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3];
    }
    out
}

/// Deterministic xorshift-based helper for test data that should not
/// depend on the rand crate's stream layout.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit() * (hi - lo)
    }
}

pub fn random_box(rng: &mut TestRng) -> Box3D {
    let class = match rng.next_u64() % 3 {
        0 => ClassId::Car,
        1 => ClassId::Pedestrian,
        _ => ClassId::Truck,
    };
    Box3D::new(
        rng.range(-40.0, 40.0),
        rng.range(-20.0, 20.0),
        rng.range(0.0, 2.0),
        rng.range(0.5, 6.0),
        rng.range(0.5, 3.0),
        rng.range(0.5, 3.0),
        rng.range(-3.1, 3.1),
        class,
        rng.range(0.0, 1.0),
    )
}

/// Multiset comparison on exact bit patterns.
pub fn boxes_set_equal(a: &[Box3D], b: &[Box3D]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let key = |b: &Box3D| {
        (
            b.cx.to_bits(),
            b.cy.to_bits(),
            b.length.to_bits(),
            b.width.to_bits(),
            b.yaw.to_bits(),
            b.score.to_bits(),
            b.class_id,
        )
    };
    let mut ka: Vec<_> = a.iter().map(key).collect();
    let mut kb: Vec<_> = b.iter().map(key).collect();
    ka.sort();
    kb.sort();
    ka == kb
}
