//! Post-run evaluation: prediction/ground-truth alignment by nearest key
//! frame, average precision with all-point interpolation, and the report
//! (per-class AP at both IoU thresholds, mAP, stage latency and traffic
//! accounting).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{iou_bev, pose_to_isometry};
use crate::harness::replay::{RunRecord, TrafficRow};
use crate::harness::scenario::Scenario;
use crate::types::{normalize_angle, Box3D, ClassId, DetectionSet, Timestamp};

/// Evaluation region in the ego frame, meters.
pub const EVAL_X_RANGE: (f64, f64) = (-100.0, 100.0);
pub const EVAL_Y_RANGE: (f64, f64) = (-40.0, 40.0);
/// IoU thresholds reported per class.
pub const IOU_THRESHOLDS: [f64; 2] = [0.3, 0.5];

/// One evaluated frame: predictions paired with ego-frame ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFrame {
    pub stamp: Timestamp,
    pub predictions: DetectionSet,
    pub ground_truth: Vec<Box3D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignResult {
    pub frames: Vec<AlignedFrame>,
    /// Outputs with no key frame within half a period.
    pub skipped: usize,
}

/// Pairs each recorded output with ground truth at the nearest key frame
/// (within half a frame period), transformed into the ego frame at that
/// key frame and clipped to the evaluation region.
pub fn align(record: &RunRecord, scenario: &Scenario) -> Result<AlignResult> {
    let key_frames = scenario
        .key_frames_of(record.ego_id)
        .ok_or_else(|| Error::Config(format!("no key frames for ego {}", record.ego_id)))?;
    let agent = scenario
        .agent(record.ego_id)
        .ok_or_else(|| Error::Config(format!("ego {} not in scenario", record.ego_id)))?;
    let half_period_ns = (scenario.frame_period().as_nanos() / 2) as i128;

    let mut frames = Vec::new();
    let mut skipped = 0usize;
    for rec in &record.frames {
        let nearest = key_frames.iter().min_by_key(|kf| {
            (kf.stamp.as_nanos() as i128 - rec.stamp.as_nanos() as i128).abs()
        });
        let Some(kf) = nearest else {
            skipped += 1;
            continue;
        };
        let dist = (kf.stamp.as_nanos() as i128 - rec.stamp.as_nanos() as i128).abs();
        if dist > half_period_ns {
            skipped += 1;
            continue;
        }
        let t_s = (kf.stamp.as_nanos() as f64 - 1e9) / 1e9;
        let ego_pose = agent.pose_at(t_s);
        let world_to_ego = pose_to_isometry(&ego_pose).inverse();
        let mut gt = Vec::new();
        for b in &kf.actors {
            let p = world_to_ego.transform_point(&nalgebra::Point3::new(b.cx, b.cy, b.cz));
            if p.x < EVAL_X_RANGE.0
                || p.x > EVAL_X_RANGE.1
                || p.y < EVAL_Y_RANGE.0
                || p.y > EVAL_Y_RANGE.1
            {
                continue;
            }
            gt.push(Box3D {
                cx: p.x,
                cy: p.y,
                cz: p.z,
                yaw: normalize_angle(b.yaw - ego_pose.yaw),
                ..*b
            });
        }
        frames.push(AlignedFrame {
            stamp: rec.stamp,
            predictions: rec.detections.clone(),
            ground_truth: gt,
        });
    }
    Ok(AlignResult { frames, skipped })
}

/// Average precision for one class at one IoU threshold across all
/// frames: predictions sorted by descending score, greedily matched to
/// the best unmatched ground truth of the frame, precision-recall curve
/// integrated by all-point interpolation (area under the precision
/// envelope). `None` when the class has no ground truth.
pub fn average_precision(
    frames: &[AlignedFrame],
    class: ClassId,
    iou_thr: f64,
) -> Option<f64> {
    let gt_per_frame: Vec<Vec<&Box3D>> = frames
        .iter()
        .map(|f| {
            f.ground_truth
                .iter()
                .filter(|b| b.class_id == class)
                .collect()
        })
        .collect();
    let npos: usize = gt_per_frame.iter().map(Vec::len).sum();
    if npos == 0 {
        return None;
    }

    // (frame, box index, score), deterministically ordered.
    let mut preds: Vec<(usize, usize, f64)> = Vec::new();
    for (fi, f) in frames.iter().enumerate() {
        for (bi, b) in f.predictions.boxes.iter().enumerate() {
            if b.class_id == class {
                preds.push((fi, bi, b.score));
            }
        }
    }
    if preds.is_empty() {
        return Some(0.0);
    }
    preds.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut matched: Vec<Vec<bool>> = gt_per_frame.iter().map(|g| vec![false; g.len()]).collect();
    let mut recalls = Vec::with_capacity(preds.len());
    let mut precisions = Vec::with_capacity(preds.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(fi, bi, _) in &preds {
        let pred_box = &frames[fi].predictions.boxes[bi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gt_per_frame[fi].iter().enumerate() {
            if matched[fi][gi] {
                continue;
            }
            let iou = iou_bev(pred_box, gt);
            if iou >= iou_thr && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, _)) => {
                matched[fi][gi] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        recalls.push(tp as f64 / npos as f64);
        precisions.push(tp as f64 / (tp + fp) as f64);
    }

    // Precision envelope from the right, integrated over recall steps.
    let mut envelope = precisions.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..recalls.len() {
        if recalls[i] > prev_recall {
            ap += (recalls[i] - prev_recall) * envelope[i];
            prev_recall = recalls[i];
        }
    }
    Some(ap)
}

/// Fraction of ground-truth boxes of a class matched by any prediction at
/// the threshold (score-ordered greedy matching, like the AP pass).
pub fn recall(frames: &[AlignedFrame], class: ClassId, iou_thr: f64) -> Option<f64> {
    average_precision(frames, class, iou_thr)?;
    let gt_per_frame: Vec<Vec<&Box3D>> = frames
        .iter()
        .map(|f| {
            f.ground_truth
                .iter()
                .filter(|b| b.class_id == class)
                .collect()
        })
        .collect();
    let npos: usize = gt_per_frame.iter().map(Vec::len).sum();
    let mut matched: Vec<Vec<bool>> = gt_per_frame.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = 0usize;
    for (fi, f) in frames.iter().enumerate() {
        let mut boxes: Vec<&Box3D> = f
            .predictions
            .boxes
            .iter()
            .filter(|b| b.class_id == class)
            .collect();
        boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
        for b in boxes {
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in gt_per_frame[fi].iter().enumerate() {
                if matched[fi][gi] {
                    continue;
                }
                let iou = iou_bev(b, gt);
                if iou >= iou_thr && best.map_or(true, |(_, bi)| iou > bi) {
                    best = Some((gi, iou));
                }
            }
            if let Some((gi, _)) = best {
                matched[fi][gi] = true;
                tp += 1;
            }
        }
    }
    Some(tp as f64 / npos as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApRow {
    pub class_name: String,
    pub iou_thr: f64,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub stage: String,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

/// Full evaluation output for one ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub ego_id: u32,
    pub mode: String,
    pub frames: usize,
    pub skipped: usize,
    pub ap_rows: Vec<ApRow>,
    /// (iou threshold, mAP over classes with defined AP).
    pub map_rows: Vec<(f64, Option<f64>)>,
    pub latency_rows: Vec<LatencyRow>,
    pub traffic_rows: Vec<TrafficRow>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn latency_rows(record: &RunRecord) -> Vec<LatencyRow> {
    let mut rows = Vec::new();
    let frames = &record.frames;
    let stage_row = |name: &str, values: Vec<f64>| {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() {
            0.0
        } else {
            sorted.iter().sum::<f64>() / sorted.len() as f64
        };
        LatencyRow {
            stage: name.to_string(),
            mean_ms: mean,
            p95_ms: percentile(&sorted, 0.95),
        }
    };
    let enc = |f: &crate::harness::replay::FrameRecord| f.stages.encoder;
    let dec = |f: &crate::harness::replay::FrameRecord| f.stages.decoder;
    rows.push(stage_row(
        "encode.compression",
        frames.iter().map(|f| enc(f).compression_ms).collect(),
    ));
    rows.push(stage_row(
        "encode.device_transfer",
        frames.iter().map(|f| enc(f).device_transfer_ms).collect(),
    ));
    rows.push(stage_row(
        "encode.serialization",
        frames.iter().map(|f| enc(f).serialization_ms).collect(),
    ));
    rows.push(stage_row(
        "encode.packaging",
        frames.iter().map(|f| enc(f).packaging_ms).collect(),
    ));
    rows.push(stage_row(
        "decode.compression",
        frames.iter().map(|f| dec(f).compression_ms).collect(),
    ));
    rows.push(stage_row(
        "decode.device_transfer",
        frames.iter().map(|f| dec(f).device_transfer_ms).collect(),
    ));
    rows.push(stage_row(
        "decode.serialization",
        frames.iter().map(|f| dec(f).serialization_ms).collect(),
    ));
    rows.push(stage_row(
        "decode.packaging",
        frames.iter().map(|f| dec(f).packaging_ms).collect(),
    ));
    let mut transmission: Vec<f64> = Vec::new();
    for t in &record.traffic {
        if t.recv_count > 0 {
            transmission.push(t.mean_latency_ms);
        }
    }
    rows.push(stage_row("transmission", transmission));
    rows
}

/// Builds the evaluation report: AP per class at the standard thresholds,
/// mAP over classes with defined AP, stage latency statistics and traffic
/// accounting.
pub fn evaluate(record: &RunRecord, scenario: &Scenario) -> Result<Report> {
    let aligned = align(record, scenario)?;
    let mut ap_rows = Vec::new();
    let mut map_rows = Vec::new();
    for &thr in &IOU_THRESHOLDS {
        let mut defined = Vec::new();
        for class in ClassId::ALL {
            let ap = average_precision(&aligned.frames, class, thr);
            if let Some(v) = ap {
                defined.push(v);
            }
            ap_rows.push(ApRow {
                class_name: class.name().to_string(),
                iou_thr: thr,
                ap,
            });
        }
        let map = if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        };
        map_rows.push((thr, map));
    }
    Ok(Report {
        ego_id: record.ego_id,
        mode: record.cfg.mode.name().to_string(),
        frames: aligned.frames.len(),
        skipped: aligned.skipped,
        ap_rows,
        map_rows,
        latency_rows: latency_rows(record),
        traffic_rows: record.traffic.clone(),
    })
}

impl Report {
    pub fn map_at(&self, thr: f64) -> Option<f64> {
        self.map_rows
            .iter()
            .find(|(t, _)| (*t - thr).abs() < 1e-12)
            .and_then(|(_, m)| *m)
    }

    fn fmt_ap(ap: &Option<f64>) -> String {
        match ap {
            Some(v) => format!("{v:.6}"),
            None => String::new(),
        }
    }

    /// Metrics CSV: class,iou_thr,ap with one mAP row per threshold.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("class,iou_thr,ap\n");
        for row in &self.ap_rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.class_name,
                row.iou_thr,
                Self::fmt_ap(&row.ap)
            ));
        }
        for (thr, map) in &self.map_rows {
            out.push_str(&format!("mAP,{},{}\n", thr, Self::fmt_ap(map)));
        }
        out
    }

    /// Latency CSV: stage,mean_ms,p95_ms.
    pub fn latency_csv(&self) -> String {
        let mut out = String::from("stage,mean_ms,p95_ms\n");
        for row in &self.latency_rows {
            out.push_str(&format!(
                "{},{:.6},{:.6}\n",
                row.stage, row.mean_ms, row.p95_ms
            ));
        }
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "ego {} | mode {} | {} frames evaluated, {} skipped\n",
            self.ego_id, self.mode, self.frames, self.skipped
        ));
        out.push_str("  class        AP@0.3    AP@0.5\n");
        for class in ClassId::ALL {
            let find = |thr: f64| {
                self.ap_rows
                    .iter()
                    .find(|r| r.class_name == class.name() && (r.iou_thr - thr).abs() < 1e-12)
                    .map(|r| Self::fmt_ap(&r.ap))
                    .unwrap_or_default()
            };
            out.push_str(&format!(
                "  {:<10} {:>9} {:>9}\n",
                class.name(),
                find(0.3),
                find(0.5)
            ));
        }
        for (thr, map) in &self.map_rows {
            out.push_str(&format!("  mAP@{thr}: {}\n", Self::fmt_ap(map)));
        }
        out.push_str("  stage latencies (ms):\n");
        for row in &self.latency_rows {
            out.push_str(&format!(
                "    {:<24} mean {:>9.4}  p95 {:>9.4}\n",
                row.stage, row.mean_ms, row.p95_ms
            ));
        }
        out.push_str("  traffic:\n");
        for t in &self.traffic_rows {
            out.push_str(&format!(
                "    {:<13} sent {:>5} ({} B)  recv {:>5} ({} B)  mean latency {:.3} ms\n",
                t.msg_type, t.sent_count, t.sent_bytes, t.recv_count, t.recv_bytes,
                t.mean_latency_ms
            ));
        }
        out
    }
}
