//! Portable frame-log storage: one directory per agent holding a
//! plain-text manifest and one little-endian binary record per frame
//! (stamp u64 | pose 6xf64 | point count u32 | points 4xf32 each).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::scenario::Scenario;
use crate::types::{
    AgentKind, AgentMeta, FrameId, LidarPoint, PointCloud, Pose, Timestamp,
};

/// One recorded sensor frame: stamp, the agent's pose at that stamp, and
/// the cloud in the agent's own frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub stamp: Timestamp,
    pub pose: Pose,
    pub cloud: PointCloud,
}

/// A time-ordered log of frames for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLog {
    pub agent: AgentMeta,
    pub rate_hz: f64,
    pub frames: Vec<Frame>,
}

impl FrameLog {
    pub fn validate(&self) -> Result<()> {
        for pair in self.frames.windows(2) {
            if pair[1].stamp <= pair[0].stamp {
                return Err(Error::Config(format!(
                    "agent {} frame stamps not strictly increasing",
                    self.agent.agent_id
                )));
            }
        }
        Ok(())
    }
}

fn kind_str(kind: AgentKind) -> &'static str {
    match kind {
        AgentKind::Vehicle => "vehicle",
        AgentKind::Infrastructure => "infrastructure",
    }
}

fn kind_from_str(s: &str) -> Result<AgentKind> {
    match s {
        "vehicle" => Ok(AgentKind::Vehicle),
        "infrastructure" => Ok(AgentKind::Infrastructure),
        other => Err(Error::Config(format!("unknown agent kind '{other}'"))),
    }
}

/// Writes each log to `<dir>/agent_<id>/` (manifest.txt + frame files).
pub fn save_frame_logs(dir: &Path, logs: &[FrameLog]) -> Result<()> {
    for log in logs {
        let agent_dir = dir.join(format!("agent_{}", log.agent.agent_id));
        fs::create_dir_all(&agent_dir)?;
        let manifest = format!(
            "agent_id = {}\nkind = {}\nrate_hz = {}\nframe_count = {}\n",
            log.agent.agent_id,
            kind_str(log.agent.kind),
            log.rate_hz,
            log.frames.len()
        );
        fs::write(agent_dir.join("manifest.txt"), manifest)?;
        for (i, frame) in log.frames.iter().enumerate() {
            let mut buf = Vec::with_capacity(8 + 48 + 4 + frame.cloud.len() * 16);
            buf.extend_from_slice(&frame.stamp.as_nanos().to_le_bytes());
            for v in frame.pose.components() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&(frame.cloud.len() as u32).to_le_bytes());
            for p in &frame.cloud.points {
                for v in [p.x as f32, p.y as f32, p.z as f32, p.intensity as f32] {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            let mut f = fs::File::create(agent_dir.join(format!("frame_{i:06}.bin")))?;
            f.write_all(&buf)?;
        }
    }
    Ok(())
}

fn parse_manifest(text: &str) -> Result<(u32, AgentKind, f64, usize)> {
    let (mut id, mut kind, mut rate, mut count) = (None, None, None, None);
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Config(format!("bad manifest line '{line}'")))?;
        match k {
            "agent_id" => {
                id = Some(v.parse::<u32>().map_err(|_| {
                    Error::Config(format!("bad agent_id '{v}'"))
                })?)
            }
            "kind" => kind = Some(kind_from_str(v)?),
            "rate_hz" => {
                rate = Some(v.parse::<f64>().map_err(|_| {
                    Error::Config(format!("bad rate_hz '{v}'"))
                })?)
            }
            "frame_count" => {
                count = Some(v.parse::<usize>().map_err(|_| {
                    Error::Config(format!("bad frame_count '{v}'"))
                })?)
            }
            other => return Err(Error::Config(format!("unknown manifest key '{other}'"))),
        }
    }
    match (id, kind, rate, count) {
        (Some(i), Some(k), Some(r), Some(c)) => Ok((i, k, r, c)),
        _ => Err(Error::Config("manifest missing required keys".into())),
    }
}

fn read_frame(path: &Path, agent_id: u32) -> Result<Frame> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let need = |n: usize, at: usize| -> Result<()> {
        if at + n > buf.len() {
            Err(Error::Format(format!(
                "frame file {} truncated",
                path.display()
            )))
        } else {
            Ok(())
        }
    };
    let mut pos = 0usize;
    need(8, pos)?;
    let stamp = Timestamp(u64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap()));
    pos += 8;
    let mut comps = [0.0f64; 6];
    for c in comps.iter_mut() {
        need(8, pos)?;
        *c = f64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap());
        pos += 8;
    }
    need(4, pos)?;
    let count = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    need(count * 16, pos)?;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let mut vals = [0.0f32; 4];
        for v in vals.iter_mut() {
            *v = f32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap());
            pos += 4;
        }
        points.push(LidarPoint::new(
            vals[0] as f64,
            vals[1] as f64,
            vals[2] as f64,
            vals[3] as f64,
        ));
    }
    if pos != buf.len() {
        return Err(Error::Format(format!(
            "frame file {} has trailing bytes",
            path.display()
        )));
    }
    Ok(Frame {
        stamp,
        pose: Pose::from_components(comps),
        cloud: PointCloud::new(FrameId(agent_id), points),
    })
}

/// Loads every `agent_*` directory under `dir`, ordered by agent id.
pub fn load_frame_logs(dir: &Path) -> Result<Vec<FrameLog>> {
    let mut agent_dirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("agent_"))
        })
        .collect();
    agent_dirs.sort();
    if agent_dirs.is_empty() {
        return Err(Error::Config(format!(
            "no agent_* directories under {}",
            dir.display()
        )));
    }
    let mut logs = Vec::new();
    for agent_dir in agent_dirs {
        let manifest = fs::read_to_string(agent_dir.join("manifest.txt"))?;
        let (agent_id, kind, rate_hz, frame_count) = parse_manifest(&manifest)?;
        let mut frames = Vec::with_capacity(frame_count);
        for i in 0..frame_count {
            frames.push(read_frame(
                &agent_dir.join(format!("frame_{i:06}.bin")),
                agent_id,
            )?);
        }
        let meta = AgentMeta {
            agent_id,
            kind,
            pose: frames.first().map(|f| f.pose).unwrap_or(Pose::identity()),
            stamp: frames.first().map(|f| f.stamp).unwrap_or(Timestamp(0)),
        };
        let log = FrameLog {
            agent: meta,
            rate_hz,
            frames,
        };
        log.validate()?;
        logs.push(log);
    }
    logs.sort_by_key(|l| l.agent.agent_id);
    Ok(logs)
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    let json = serde_json::to_string_pretty(scenario)
        .map_err(|e| Error::Format(format!("scenario encode: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("scenario decode: {e}")))
}
