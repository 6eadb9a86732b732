//! Online replay: drives every agent's frame log through the virtual
//! network. Per frame an agent projects its cloud into each ego's frame
//! using the freshest received ego pose, extracts features, ships the
//! mode-specific message, and each ego fuses whatever fresh collaborator
//! data its banks hold before detecting.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bank::FeatureBank;
use crate::error::{Error, Result};
use crate::fusion::{detect, fuse_attention, fuse_max, late_fuse};
use crate::geom::transform_points;
use crate::harness::framelog::FrameLog;
use crate::harness::scenario::Scenario;
use crate::netsim::{LinkModel, NetEvent, VirtualNet};
use crate::pillar::{pillarize, BevFeatureGrid, GridMeta, GridSpec};
use crate::txcodec::{
    compress, decompress_to_grid, ElemType, MessageBody, MsgType, StageTimings, WireMessage,
};
use crate::types::{
    DetectionSet, FrameId, LidarPoint, PointCloud, Pose, Timestamp,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionMode {
    None,
    Late,
    Early,
    IntermediateMax,
    IntermediateAttention,
}

impl FusionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FusionMode::None),
            "late" => Ok(FusionMode::Late),
            "early" => Ok(FusionMode::Early),
            "intermediate-max" => Ok(FusionMode::IntermediateMax),
            "intermediate-attention" => Ok(FusionMode::IntermediateAttention),
            other => Err(Error::Config(format!("unknown fusion mode '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::Late => "late",
            FusionMode::Early => "early",
            FusionMode::IntermediateMax => "intermediate-max",
            FusionMode::IntermediateAttention => "intermediate-attention",
        }
    }

    pub const ALL: [FusionMode; 5] = [
        FusionMode::None,
        FusionMode::Late,
        FusionMode::Early,
        FusionMode::IntermediateMax,
        FusionMode::IntermediateAttention,
    ];
}

/// Pipeline configuration for a replay run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineCfg {
    pub mode: FusionMode,
    /// Channel compression ratio for intermediate modes.
    pub ratio: u16,
    /// Ship u8-quantized payloads instead of f32.
    pub quantize: bool,
    /// Freshness window for bank queries, milliseconds (may be infinite).
    pub tau_ms: f64,
    pub objectness_thr: f64,
    pub nms_iou_thr: f64,
    pub projection_seed: u64,
    /// Agents evaluated as egos; `None` means every agent.
    pub egos: Option<Vec<u32>>,
    pub encoder_profile: StageTimings,
    pub decoder_profile: StageTimings,
}

impl Default for PipelineCfg {
    fn default() -> Self {
        PipelineCfg {
            mode: FusionMode::None,
            // Lossless by default: the unlearned random projection scales
            // a cell's channel mean by 1/ratio, so higher ratios trade
            // collaborator detectability for bandwidth.
            ratio: 1,
            quantize: false,
            tau_ms: 100.0,
            objectness_thr: 0.15,
            nms_iou_thr: 0.3,
            projection_seed: 7,
            egos: None,
            encoder_profile: StageTimings::zero(),
            decoder_profile: StageTimings::zero(),
        }
    }
}

/// Stage costs charged around one processed frame. In virtual-clock mode
/// these are exactly the configured profiles whenever the corresponding
/// activity (sending / consuming a message) happened.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageLatencies {
    pub encoder: StageTimings,
    pub decoder: StageTimings,
}

/// One processed ego frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub stamp: Timestamp,
    pub detections: DetectionSet,
    pub stages: StageLatencies,
    /// Messages this ego sent at its tick.
    pub sent_msgs: usize,
    /// Collaborator entries consumed at fusion time.
    pub consumed: usize,
}

/// Per message type traffic accounting for one ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficRow {
    pub msg_type: String,
    pub sent_count: u64,
    pub sent_bytes: u64,
    pub recv_count: u64,
    pub recv_bytes: u64,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
}

/// Everything one ego recorded over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub ego_id: u32,
    pub cfg: PipelineCfg,
    pub link: LinkModel,
    pub frames: Vec<FrameRecord>,
    pub traffic: Vec<TrafficRow>,
}

#[derive(Default)]
struct TrafficAcc {
    sent_count: u64,
    sent_bytes: u64,
    recv_count: u64,
    recv_bytes: u64,
    latencies_ms: Vec<f64>,
}

struct AgentState {
    /// Latest ego poses heard over metadata, per sender.
    meta_bank: FeatureBank<Pose>,
    /// Own pose as of the most recent processed frame.
    current_pose: Pose,
    is_ego: bool,
    cloud_bank: FeatureBank<PointCloud>,
    det_bank: FeatureBank<DetectionSet>,
    grid_bank: FeatureBank<Arc<BevFeatureGrid>>,
    frames: Vec<FrameRecord>,
    traffic: BTreeMap<MsgType, TrafficAcc>,
}

impl AgentState {
    fn new(initial_pose: Pose, is_ego: bool) -> Self {
        AgentState {
            meta_bank: FeatureBank::default(),
            current_pose: initial_pose,
            is_ego,
            cloud_bank: FeatureBank::default(),
            det_bank: FeatureBank::default(),
            grid_bank: FeatureBank::default(),
            frames: Vec::new(),
            traffic: BTreeMap::new(),
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Replays the logs through the configured pipeline over `link`, one
/// record per ego agent. Virtual-clock mode: fully deterministic given
/// (logs, cfg, link).
pub fn replay(
    logs: &[FrameLog],
    scenario: &Scenario,
    cfg: &PipelineCfg,
    link: &LinkModel,
) -> Result<Vec<RunRecord>> {
    if logs.is_empty() {
        return Err(Error::Config("replay needs at least one log".into()));
    }
    link.validate()?;
    let spec = scenario.cfg.region.clone();
    let intermediate = matches!(
        cfg.mode,
        FusionMode::IntermediateMax | FusionMode::IntermediateAttention
    );
    if intermediate
        && (cfg.ratio == 0
            || !cfg.ratio.is_power_of_two()
            || spec.channels % cfg.ratio as usize != 0)
    {
        return Err(Error::Config(format!(
            "ratio {} incompatible with {} channels",
            cfg.ratio, spec.channels
        )));
    }
    let agent_ids: Vec<u32> = logs.iter().map(|l| l.agent.agent_id).collect();
    if let Some(egos) = &cfg.egos {
        for e in egos {
            if !agent_ids.contains(e) {
                return Err(Error::Config(format!("ego {e} has no log")));
            }
        }
    }
    let is_ego =
        |id: u32| -> bool { cfg.egos.as_ref().map_or(true, |egos| egos.contains(&id)) };

    let mut net = VirtualNet::new();
    for id in &agent_ids {
        net.add_node_with(*id, cfg.encoder_profile, cfg.decoder_profile);
    }
    for a in &agent_ids {
        for b in &agent_ids {
            if a != b {
                net.set_link(*a, *b, *link);
            }
        }
    }

    let mut states: BTreeMap<u32, AgentState> = logs
        .iter()
        .map(|l| {
            (
                l.agent.agent_id,
                AgentState::new(
                    l.frames.first().map(|f| f.pose).unwrap_or(Pose::identity()),
                    is_ego(l.agent.agent_id),
                ),
            )
        })
        .collect();

    let logs_by_id: BTreeMap<u32, &FrameLog> =
        logs.iter().map(|l| (l.agent.agent_id, l)).collect();

    // Schedule every frame tick up front (ascending agent id per stamp).
    let mut t_end = Timestamp(0);
    for id in &agent_ids {
        for (idx, frame) in logs_by_id[id].frames.iter().enumerate() {
            net.schedule_timer(frame.stamp, *id, idx as u64);
            t_end = t_end.max(frame.stamp);
        }
    }

    let mut failure: Option<Error> = None;
    net.run_until(t_end, |net, now, event| {
        if failure.is_some() {
            return;
        }
        let outcome = match event {
            NetEvent::Timer { node, tag } => handle_tick(
                net,
                now,
                node,
                tag as usize,
                &logs_by_id,
                &mut states,
                cfg,
                &spec,
                &agent_ids,
            ),
            NetEvent::Delivery { src, dst, msg } => {
                handle_delivery(now, src, dst, msg, &mut states, &spec)
            }
        };
        if let Err(e) = outcome {
            failure = Some(e);
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let mut records = Vec::new();
    for id in &agent_ids {
        if !is_ego(*id) {
            continue;
        }
        let state = states.remove(id).unwrap();
        let traffic = state
            .traffic
            .into_iter()
            .map(|(ty, acc)| {
                let mut lat = acc.latencies_ms;
                lat.sort_by(f64::total_cmp);
                let mean = if lat.is_empty() {
                    0.0
                } else {
                    lat.iter().sum::<f64>() / lat.len() as f64
                };
                TrafficRow {
                    msg_type: ty.name().to_string(),
                    sent_count: acc.sent_count,
                    sent_bytes: acc.sent_bytes,
                    recv_count: acc.recv_count,
                    recv_bytes: acc.recv_bytes,
                    mean_latency_ms: mean,
                    p95_latency_ms: percentile(&lat, 0.95),
                }
            })
            .collect();
        records.push(RunRecord {
            ego_id: *id,
            cfg: cfg.clone(),
            link: *link,
            frames: state.frames,
            traffic,
        });
    }
    Ok(records)
}

#[allow(clippy::too_many_arguments)]
fn handle_tick(
    net: &mut VirtualNet,
    now: Timestamp,
    agent: u32,
    frame_idx: usize,
    logs: &BTreeMap<u32, &FrameLog>,
    states: &mut BTreeMap<u32, AgentState>,
    cfg: &PipelineCfg,
    spec: &GridSpec,
    agent_ids: &[u32],
) -> Result<()> {
    let frame = &logs[&agent].frames[frame_idx];
    states.get_mut(&agent).unwrap().current_pose = frame.pose;

    let mut sent = 0usize;
    if cfg.mode != FusionMode::None {
        // Metadata goes to everyone; payloads go to egos.
        for &other in agent_ids {
            if other == agent {
                continue;
            }
            let seq = net.next_send_seq(agent)?;
            let msg = WireMessage::new(
                agent,
                seq,
                frame.stamp,
                MessageBody::Metadata { pose: frame.pose },
            );
            send_accounted(net, agent, other, msg, states)?;
        }
        for &ego in agent_ids {
            if ego == agent || !states[&ego].is_ego {
                continue;
            }
            // Freshest ego pose this sender has heard; without one the
            // sender cannot project and skips this ego.
            let Some((_, ego_pose)) = states[&agent]
                .meta_bank
                .query_latest(ego, now, f64::INFINITY)
                .map(|(s, p)| (s, *p))
            else {
                continue;
            };
            let projected =
                transform_points(&frame.cloud, &frame.pose, &ego_pose, FrameId(ego))?;
            let body = match cfg.mode {
                FusionMode::Early => MessageBody::PointCloud(
                    projected
                        .points
                        .iter()
                        .map(|p| [p.x as f32, p.y as f32, p.z as f32, p.intensity as f32])
                        .collect(),
                ),
                FusionMode::Late => {
                    let meta = GridMeta {
                        stamp: frame.stamp,
                        agent_id: agent,
                        ego_frame: FrameId(ego),
                        ego_pose,
                    };
                    let grid = pillarize(&projected, spec, &meta)?;
                    let det = detect(&grid, cfg.objectness_thr, cfg.nms_iou_thr);
                    MessageBody::Detections(
                        det.boxes.iter().map(crate::txcodec::WireBox::from_box).collect(),
                    )
                }
                FusionMode::IntermediateMax | FusionMode::IntermediateAttention => {
                    let meta = GridMeta {
                        stamp: frame.stamp,
                        agent_id: agent,
                        ego_frame: FrameId(ego),
                        ego_pose,
                    };
                    let grid = pillarize(&projected, spec, &meta)?;
                    let elem = if cfg.quantize {
                        ElemType::U8Quant
                    } else {
                        ElemType::F32
                    };
                    MessageBody::Intermediate(compress(
                        &grid,
                        cfg.ratio,
                        cfg.projection_seed,
                        elem,
                    )?)
                }
                FusionMode::None => unreachable!(),
            };
            let seq = net.next_send_seq(agent)?;
            let msg = WireMessage::new(agent, seq, frame.stamp, body);
            send_accounted(net, agent, ego, msg, states)?;
            sent += 1;
        }
    }

    if !states[&agent].is_ego {
        return Ok(());
    }

    // Ego processing: fuse fresh collaborator data with the own frame.
    let ego_meta = GridMeta {
        stamp: frame.stamp,
        agent_id: agent,
        ego_frame: FrameId(agent),
        ego_pose: frame.pose,
    };
    let tau = cfg.tau_ms;
    let (detections, consumed) = match cfg.mode {
        FusionMode::None => {
            let grid = pillarize(&frame.cloud, spec, &ego_meta)?;
            (detect(&grid, cfg.objectness_thr, cfg.nms_iou_thr), 0)
        }
        FusionMode::Early => {
            let state = &states[&agent];
            let fresh = state.cloud_bank.query_all_latest(now, tau);
            let mut merged = frame.cloud.clone();
            let consumed = fresh.len();
            for (_, (_, cloud)) in fresh {
                merged.points.extend(cloud.points.iter().copied());
            }
            let grid = pillarize(&merged, spec, &ego_meta)?;
            (detect(&grid, cfg.objectness_thr, cfg.nms_iou_thr), consumed)
        }
        FusionMode::Late => {
            let grid = pillarize(&frame.cloud, spec, &ego_meta)?;
            let own = detect(&grid, cfg.objectness_thr, cfg.nms_iou_thr);
            let state = &states[&agent];
            let fresh = state.det_bank.query_all_latest(now, tau);
            let consumed = fresh.len();
            let mut sets = vec![own];
            for (_, (_, set)) in fresh {
                sets.push(set.clone());
            }
            (late_fuse(&sets, cfg.nms_iou_thr)?, consumed)
        }
        FusionMode::IntermediateMax | FusionMode::IntermediateAttention => {
            let own = pillarize(&frame.cloud, spec, &ego_meta)?;
            let state = &states[&agent];
            let fresh = state.grid_bank.query_all_latest(now, tau);
            let consumed = fresh.len();
            let collab: Vec<Arc<BevFeatureGrid>> =
                fresh.into_iter().map(|(_, (_, g))| g.clone()).collect();
            let mut grids: Vec<&BevFeatureGrid> = vec![&own];
            grids.extend(collab.iter().map(Arc::as_ref));
            let fused = if cfg.mode == FusionMode::IntermediateMax {
                fuse_max(&grids)?
            } else {
                fuse_attention(&grids)?
            };
            (detect(&fused, cfg.objectness_thr, cfg.nms_iou_thr), consumed)
        }
    };

    let state = states.get_mut(&agent).unwrap();
    let stages = StageLatencies {
        encoder: if sent > 0 {
            cfg.encoder_profile
        } else {
            StageTimings::zero()
        },
        decoder: if consumed > 0 {
            cfg.decoder_profile
        } else {
            StageTimings::zero()
        },
    };
    state.frames.push(FrameRecord {
        stamp: frame.stamp,
        detections,
        stages,
        sent_msgs: sent,
        consumed,
    });
    Ok(())
}

fn send_accounted(
    net: &mut VirtualNet,
    src: u32,
    dst: u32,
    msg: WireMessage,
    states: &mut BTreeMap<u32, AgentState>,
) -> Result<()> {
    let ty = msg.msg_type();
    let bytes = msg.serialized_len() as u64;
    let acc = states.get_mut(&src).unwrap().traffic.entry(ty).or_default();
    acc.sent_count += 1;
    acc.sent_bytes += bytes;
    net.send(src, dst, msg)?;
    Ok(())
}

fn handle_delivery(
    now: Timestamp,
    src: u32,
    dst: u32,
    msg: WireMessage,
    states: &mut BTreeMap<u32, AgentState>,
    spec: &GridSpec,
) -> Result<()> {
    let bytes = msg.serialized_len() as u64;
    let latency_ms = (now.as_nanos() as f64 - msg.stamp.as_nanos() as f64) / 1e6;
    let dst_pose = states[&dst].current_pose;
    let state = states.get_mut(&dst).unwrap();
    let acc = state.traffic.entry(msg.msg_type()).or_default();
    acc.recv_count += 1;
    acc.recv_bytes += bytes;
    acc.latencies_ms.push(latency_ms);

    match msg.body {
        MessageBody::Metadata { pose } => {
            state.meta_bank.insert(src, msg.stamp, pose);
        }
        MessageBody::PointCloud(points) => {
            let cloud = PointCloud::new(
                FrameId(dst),
                points
                    .iter()
                    .map(|p| {
                        LidarPoint::new(p[0] as f64, p[1] as f64, p[2] as f64, p[3] as f64)
                    })
                    .collect(),
            );
            state.cloud_bank.insert(src, msg.stamp, cloud);
        }
        MessageBody::Detections(boxes) => {
            let set = DetectionSet::new(
                msg.stamp,
                src,
                boxes.iter().map(|b| b.to_box()).collect(),
            );
            state.det_bank.insert(src, msg.stamp, set);
        }
        MessageBody::Intermediate(cf) => {
            let meta = GridMeta {
                stamp: msg.stamp,
                agent_id: src,
                ego_frame: FrameId(dst),
                ego_pose: dst_pose,
            };
            let grid = decompress_to_grid(&cf, spec, meta)?;
            state.grid_bank.insert(src, msg.stamp, Arc::new(grid));
        }
        MessageBody::Ping { .. } | MessageBody::Pong { .. } => {}
    }
    Ok(())
}
