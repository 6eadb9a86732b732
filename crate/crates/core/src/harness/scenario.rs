//! Seeded synthetic scenarios: actors with class-typical dims moving on
//! smooth constant-velocity tracks, agents (vehicles and infrastructure)
//! sampling their surfaces with BEV ray-cast occlusion plus uniform
//! ground clutter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::framelog::{Frame, FrameLog};
use crate::pillar::GridSpec;
use crate::types::{
    normalize_angle, AgentKind, AgentMeta, Box3D, ClassId, FrameId, LidarPoint, PointCloud, Pose,
    Timestamp,
};

/// Constant-velocity track: pose at time t seconds is the start pose
/// advanced along its heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub x0: f64,
    pub y0: f64,
    pub heading: f64,
    pub speed_mps: f64,
}

impl Track {
    pub fn at(&self, t_s: f64) -> (f64, f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (
            self.x0 + c * self.speed_mps * t_s,
            self.y0 + s * self.speed_mps * t_s,
            self.heading,
        )
    }
}

/// A ground-truth actor: class, dims and its track in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub class_id: ClassId,
    pub track: Track,
    /// Surface intensity of the actor's LiDAR returns.
    pub intensity: f64,
}

impl ActorSpec {
    pub fn box_at(&self, t_s: f64) -> Box3D {
        let (l, w, h) = self.class_id.typical_dims();
        let (x, y, yaw) = self.track.at(t_s);
        Box3D {
            cx: x,
            cy: y,
            cz: h / 2.0,
            length: l,
            width: w,
            height: h,
            yaw: normalize_angle(yaw),
            class_id: self.class_id,
            score: 1.0,
        }
    }
}

/// An observing agent and its track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_id: u32,
    pub kind: AgentKind,
    pub track: Track,
    /// Frame phase offset relative to the scenario start, milliseconds.
    pub phase_ms: f64,
}

impl AgentSpec {
    pub fn pose_at(&self, t_s: f64) -> Pose {
        let (x, y, yaw) = match self.kind {
            // Infrastructure never moves.
            AgentKind::Infrastructure => self.track.at(0.0),
            AgentKind::Vehicle => self.track.at(t_s),
        };
        Pose {
            x,
            y,
            z: 0.0,
            roll: 0.0,
            pitch: 0.0,
            yaw: normalize_angle(yaw),
        }
    }
}

/// Actor placement: fully random (rejection-sampled for separation) or an
/// explicit list for constructed scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActorPlacement {
    Random { count: usize },
    Explicit(Vec<ActorSpec>),
}

/// Generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCfg {
    pub agents: Vec<AgentSpec>,
    pub actors: ActorPlacement,
    pub duration_s: f64,
    pub rate_hz: f64,
    /// BEV grid used by every ego in this scenario.
    pub region: GridSpec,
    /// LiDAR range; surface points beyond it are not returned.
    pub sensor_range_m: f64,
    /// Surface sample spacing along actor perimeters, meters.
    pub surface_step_m: f64,
    /// Ground clutter returns per square meter around each agent.
    pub clutter_per_m2: f64,
    /// Scales the class-typical speeds of randomly placed actors
    /// (0 freezes the scene).
    pub actor_speed_scale: f64,
}

impl Default for ScenarioCfg {
    fn default() -> Self {
        ScenarioCfg {
            agents: vec![
                AgentSpec {
                    agent_id: 0,
                    kind: AgentKind::Vehicle,
                    track: Track {
                        x0: -20.0,
                        y0: -6.0,
                        heading: 0.0,
                        speed_mps: 6.0,
                    },
                    phase_ms: 0.0,
                },
                AgentSpec {
                    agent_id: 1,
                    kind: AgentKind::Infrastructure,
                    track: Track {
                        x0: 20.0,
                        y0: 10.0,
                        heading: 0.0,
                        speed_mps: 0.0,
                    },
                    phase_ms: 5.0,
                },
            ],
            actors: ActorPlacement::Random { count: 8 },
            duration_s: 5.0,
            rate_hz: 10.0,
            region: scenario_grid_spec(),
            sensor_range_m: 80.0,
            surface_step_m: 0.15,
            clutter_per_m2: 0.02,
            actor_speed_scale: 1.0,
        }
    }
}

/// Desk-scale grid used by generated scenarios (the transmission-size
/// experiments use [`GridSpec::default`] instead).
pub fn scenario_grid_spec() -> GridSpec {
    GridSpec::new(-60.0, 60.0, -24.0, 24.0, 0.5, 32, 7).unwrap()
}

/// A default fleet: agent 0 is a connected vehicle driving along x, the
/// rest alternate between roadside units and further vehicles, spread
/// over the region with staggered frame phases.
pub fn default_agents(count: usize) -> Vec<AgentSpec> {
    let posts = [
        (20.0, 10.0),
        (-20.0, -10.0),
        (40.0, -8.0),
        (-40.0, 8.0),
        (0.0, 14.0),
    ];
    (0..count)
        .map(|i| {
            if i == 0 {
                AgentSpec {
                    agent_id: 0,
                    kind: AgentKind::Vehicle,
                    track: Track {
                        x0: -20.0,
                        y0: -6.0,
                        heading: 0.0,
                        speed_mps: 6.0,
                    },
                    phase_ms: 0.0,
                }
            } else if i % 2 == 1 {
                let (x, y) = posts[(i / 2) % posts.len()];
                AgentSpec {
                    agent_id: i as u32,
                    kind: AgentKind::Infrastructure,
                    track: Track {
                        x0: x,
                        y0: y,
                        heading: 0.0,
                        speed_mps: 0.0,
                    },
                    phase_ms: 5.0 * i as f64,
                }
            } else {
                AgentSpec {
                    agent_id: i as u32,
                    kind: AgentKind::Vehicle,
                    track: Track {
                        x0: 20.0 - 10.0 * i as f64,
                        y0: 6.0,
                        heading: std::f64::consts::PI,
                        speed_mps: 4.0,
                    },
                    phase_ms: 5.0 * i as f64,
                }
            }
        })
        .collect()
}

/// Ground truth at one key frame: stamp plus world-frame actor boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFrame {
    pub stamp: Timestamp,
    pub actors: Vec<Box3D>,
}

/// A generated scenario: config snapshot, actor list and per-agent key
/// frames (ground truth is defined at every frame stamp of every agent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub cfg: ScenarioCfg,
    pub actors: Vec<ActorSpec>,
    /// Key frames per agent id, aligned with that agent's log stamps.
    pub key_frames: Vec<(u32, Vec<KeyFrame>)>,
}

impl Scenario {
    pub fn agent(&self, agent_id: u32) -> Option<&AgentSpec> {
        self.cfg.agents.iter().find(|a| a.agent_id == agent_id)
    }

    pub fn key_frames_of(&self, agent_id: u32) -> Option<&[KeyFrame]> {
        self.key_frames
            .iter()
            .find(|(id, _)| *id == agent_id)
            .map(|(_, kf)| kf.as_slice())
    }

    pub fn frame_period(&self) -> Timestamp {
        Timestamp::from_millis(1000.0 / self.cfg.rate_hz)
    }
}

fn validate_cfg(cfg: &ScenarioCfg) -> Result<()> {
    if cfg.agents.is_empty() {
        return Err(Error::Config("scenario needs at least one agent".into()));
    }
    let mut ids: Vec<u32> = cfg.agents.iter().map(|a| a.agent_id).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != cfg.agents.len() {
        return Err(Error::Config("duplicate agent ids".into()));
    }
    if !(cfg.duration_s > 0.0) || !(cfg.rate_hz > 0.0) {
        return Err(Error::Config(
            "duration and rate must be positive".into(),
        ));
    }
    if !(cfg.sensor_range_m > 0.0)
        || !(cfg.surface_step_m > 0.0)
        || cfg.clutter_per_m2 < 0.0
        || cfg.actor_speed_scale < 0.0
    {
        return Err(Error::Config("invalid sensing parameters".into()));
    }
    cfg.region.validate()
}

/// Generates a scenario and one frame log per agent, deterministically
/// from the seed.
pub fn generate_scenario(seed: u64, cfg: &ScenarioCfg) -> Result<(Scenario, Vec<FrameLog>)> {
    validate_cfg(cfg)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let actors = match &cfg.actors {
        ActorPlacement::Explicit(list) => list.clone(),
        ActorPlacement::Random { count } => place_random_actors(cfg, *count, &mut rng),
    };

    let frame_count = (cfg.duration_s * cfg.rate_hz).round() as usize;
    let period_ns = (1e9 / cfg.rate_hz).round() as u64;
    // Scenario epoch; keeps stamps comfortably away from zero.
    let t0_ns: u64 = 1_000_000_000;

    let mut logs = Vec::new();
    let mut key_frames = Vec::new();
    for agent in &cfg.agents {
        // Independent clutter stream per agent, derived from the scenario seed.
        let mut clutter_rng =
            ChaCha12Rng::seed_from_u64(seed ^ (0xc1a77e5u64.wrapping_add(agent.agent_id as u64)));
        let phase_ns = (agent.phase_ms * 1e6).round() as u64;
        let mut frames = Vec::with_capacity(frame_count);
        let mut gt = Vec::with_capacity(frame_count);
        for f in 0..frame_count {
            let stamp = Timestamp(t0_ns + phase_ns + f as u64 * period_ns);
            let t_s = (stamp.as_nanos() - t0_ns) as f64 / 1e9;
            let pose = agent.pose_at(t_s);
            let cloud = sense(cfg, &actors, agent, &pose, t_s, &mut clutter_rng);
            frames.push(Frame {
                stamp,
                pose,
                cloud,
            });
            gt.push(KeyFrame {
                stamp,
                actors: actors.iter().map(|a| a.box_at(t_s)).collect(),
            });
        }
        let meta = AgentMeta {
            agent_id: agent.agent_id,
            kind: agent.kind,
            pose: agent.pose_at(0.0),
            stamp: frames.first().map(|f| f.stamp).unwrap_or(Timestamp(t0_ns)),
        };
        logs.push(FrameLog {
            agent: meta,
            rate_hz: cfg.rate_hz,
            frames,
        });
        key_frames.push((agent.agent_id, gt));
    }

    Ok((
        Scenario {
            seed,
            cfg: cfg.clone(),
            actors,
            key_frames,
        },
        logs,
    ))
}

fn place_random_actors(cfg: &ScenarioCfg, count: usize, rng: &mut ChaCha12Rng) -> Vec<ActorSpec> {
    let region = &cfg.region;
    // Keep actors away from the rim so their full footprint stays on-grid.
    let margin = 8.0;
    let classes = [ClassId::Car, ClassId::Car, ClassId::Truck, ClassId::Pedestrian];
    let mut actors: Vec<ActorSpec> = Vec::new();
    let mut attempts = 0;
    while actors.len() < count && attempts < count * 200 {
        attempts += 1;
        let class_id = classes[rng.gen_range(0..classes.len())];
        let x = rng.gen_range(region.x_min + margin..region.x_max - margin);
        let y = rng.gen_range(region.y_min + margin..region.y_max - margin);
        // Mostly axis-aligned traffic with slight heading spread.
        let heading = if rng.gen_bool(0.5) { 0.0 } else { std::f64::consts::PI }
            + rng.gen_range(-0.15..0.15);
        let speed = cfg.actor_speed_scale
            * match class_id {
                ClassId::Car => rng.gen_range(2.0..6.0),
                ClassId::Truck => rng.gen_range(1.5..4.0),
                ClassId::Pedestrian => rng.gen_range(0.5..1.5),
            };
        let candidate = ActorSpec {
            class_id,
            track: Track {
                x0: x,
                y0: y,
                heading,
                speed_mps: speed,
            },
            intensity: 0.6,
        };
        // Separation over the whole run so detection components never merge.
        let min_gap = 7.0;
        let clear = actors.iter().all(|other| {
            let mut t = 0.0;
            while t <= cfg.duration_s {
                let (ax, ay, _) = candidate.track.at(t);
                let (bx, by, _) = other.track.at(t);
                if ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() < min_gap {
                    return false;
                }
                t += 0.5;
            }
            true
        });
        if clear {
            actors.push(candidate);
        }
    }
    actors
}

/// Samples the world from one agent pose: deterministic perimeter points
/// on every actor surface facing the sensor and inside range, dropped
/// when the BEV ray to them crosses another actor, plus uniform ground
/// clutter around the sensor.
fn sense(
    cfg: &ScenarioCfg,
    actors: &[ActorSpec],
    agent: &AgentSpec,
    pose: &Pose,
    t_s: f64,
    clutter_rng: &mut ChaCha12Rng,
) -> PointCloud {
    let boxes: Vec<Box3D> = actors.iter().map(|a| a.box_at(t_s)).collect();
    let mut world_points: Vec<LidarPoint> = Vec::new();

    for (ai, actor) in actors.iter().enumerate() {
        let b = &boxes[ai];
        let dist = ((b.cx - pose.x).powi(2) + (b.cy - pose.y).powi(2)).sqrt();
        if dist > cfg.sensor_range_m {
            continue;
        }
        // Vertical faces oriented toward the sensor.
        for (px, py) in perimeter_points(b, cfg.surface_step_m) {
            if !faces_sensor(b, px, py, pose.x, pose.y) {
                continue;
            }
            if ((px - pose.x).powi(2) + (py - pose.y).powi(2)).sqrt() > cfg.sensor_range_m {
                continue;
            }
            if occluded(pose.x, pose.y, px, py, &boxes, ai) {
                continue;
            }
            let levels = (b.height / 0.5).ceil().max(1.0) as usize;
            for lv in 0..levels {
                let z = (lv as f64 + 0.5) * b.height / levels as f64;
                world_points.push(LidarPoint::new(px, py, z, actor.intensity));
            }
        }
        // Roof returns cover the full footprint, subject to the same BEV
        // occlusion; they are what anchors the fitted extent to the true
        // footprint rather than to the nearest face.
        for (px, py) in top_points(b, cfg.surface_step_m * 2.0) {
            if ((px - pose.x).powi(2) + (py - pose.y).powi(2)).sqrt() > cfg.sensor_range_m {
                continue;
            }
            if occluded(pose.x, pose.y, px, py, &boxes, ai) {
                continue;
            }
            world_points.push(LidarPoint::new(px, py, b.height, actor.intensity));
        }
    }

    // Ground clutter: uniform in the disc around the sensor.
    let clutter_area = std::f64::consts::PI * cfg.sensor_range_m.powi(2);
    let clutter_n = (cfg.clutter_per_m2 * clutter_area).round() as usize;
    for _ in 0..clutter_n {
        let r = cfg.sensor_range_m * clutter_rng.gen::<f64>().sqrt();
        let theta = clutter_rng.gen_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        world_points.push(LidarPoint::new(
            pose.x + r * c,
            pose.y + r * s,
            clutter_rng.gen_range(0.0..0.05),
            clutter_rng.gen_range(0.0..0.05),
        ));
    }

    // World -> agent-local coordinates.
    let world = Pose::identity();
    let cloud = PointCloud::new(FrameId(agent.agent_id), world_points);
    crate::geom::transform_points(&cloud, &world, pose, FrameId(agent.agent_id))
        .expect("scenario poses are finite")
}

/// Grid of points over the BEV footprint (the roof surface).
fn top_points(b: &Box3D, step: f64) -> Vec<(f64, f64)> {
    let (s, c) = b.yaw.sin_cos();
    let nx = (b.length / step).ceil().max(1.0) as usize;
    let ny = (b.width / step).ceil().max(1.0) as usize;
    let mut pts = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let lx = ((i as f64 + 0.5) / nx as f64 - 0.5) * b.length;
            let ly = ((j as f64 + 0.5) / ny as f64 - 0.5) * b.width;
            pts.push((b.cx + c * lx - s * ly, b.cy + s * lx + c * ly));
        }
    }
    pts
}

/// Evenly spaced points along the BEV perimeter of a box.
fn perimeter_points(b: &Box3D, step: f64) -> Vec<(f64, f64)> {
    let corners = b.corners();
    let mut pts = Vec::new();
    for i in 0..4 {
        let a = corners[i];
        let c = corners[(i + 1) % 4];
        let len = ((c[0] - a[0]).powi(2) + (c[1] - a[1]).powi(2)).sqrt();
        let n = (len / step).ceil().max(1.0) as usize;
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            pts.push((a[0] + t * (c[0] - a[0]), a[1] + t * (c[1] - a[1])));
        }
    }
    pts
}

/// True when the surface point lies on a face oriented toward the sensor.
fn faces_sensor(b: &Box3D, px: f64, py: f64, sx: f64, sy: f64) -> bool {
    // Outward direction from box center through the point vs. direction
    // to the sensor.
    let ox = px - b.cx;
    let oy = py - b.cy;
    let dx = sx - px;
    let dy = sy - py;
    ox * dx + oy * dy > 0.0
}

/// BEV ray cast: the segment sensor->point crosses another actor's
/// (slightly shrunk) footprint.
fn occluded(sx: f64, sy: f64, px: f64, py: f64, boxes: &[Box3D], own: usize) -> bool {
    for (bi, b) in boxes.iter().enumerate() {
        if bi == own {
            continue;
        }
        if segment_hits_box(sx, sy, px, py, b) {
            return true;
        }
    }
    false
}

fn segment_hits_box(sx: f64, sy: f64, px: f64, py: f64, b: &Box3D) -> bool {
    // Work in the box's local axis-aligned frame, shrunk a touch so rays
    // grazing a shared surface do not count.
    let (s, c) = b.yaw.sin_cos();
    let to_local = |x: f64, y: f64| {
        let dx = x - b.cx;
        let dy = y - b.cy;
        (c * dx + s * dy, -s * dx + c * dy)
    };
    let (x0, y0) = to_local(sx, sy);
    let (x1, y1) = to_local(px, py);
    let hl = b.length / 2.0 - 1e-6;
    let hw = b.width / 2.0 - 1e-6;
    // Liang-Barsky clip of the segment against the rectangle.
    let (dx, dy) = (x1 - x0, y1 - y0);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, x0 + hl),
        (dx, hl - x0),
        (-dy, y0 + hw),
        (dy, hw - y0),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
            continue;
        }
        let r = q / p;
        if p < 0.0 {
            if r > t1 {
                return false;
            }
            t0 = t0.max(r);
        } else {
            if r < t0 {
                return false;
            }
            t1 = t1.min(r);
        }
    }
    t0 <= t1
}
