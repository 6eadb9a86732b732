//! Byte-exact little-endian wire format.
//!
//! Header: magic "V2XL" | version u8 | msg_type u8 | agent_id u32 |
//! seq u32 | stamp_ns u64 | body_len u32 (26 bytes). Body layouts per
//! message kind are fixed below; serialize/deserialize are exact inverses
//! on every kind.

use crate::error::{Error, Result};
use crate::pillar::GridSpec;
use crate::txcodec::{CompressedFeature, ElemType, FeaturePayload};
use crate::types::{Box3D, ClassId, DetectionSet, Pose, Timestamp};

pub const WIRE_MAGIC: [u8; 4] = *b"V2XL";
pub const WIRE_VERSION: u8 = 1;
/// magic 4 + version 1 + msg_type 1 + agent_id 4 + seq 4 + stamp 8 + body_len 4.
pub const HEADER_LEN: usize = 26;
/// h 2 + w 2 + c_orig 2 + ratio 2 + elem_type 1 + quant_scale 4 +
/// quant_offset 4 + projection_seed 8.
pub const FEATURE_HEADER_LEN: usize = 25;
const DETECTION_LEN: usize = 33;
const POINT_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MsgType {
    Metadata = 0,
    Intermediate = 1,
    Detections = 2,
    PointCloud = 3,
    Ping = 4,
    Pong = 5,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(MsgType::Metadata),
            1 => Ok(MsgType::Intermediate),
            2 => Ok(MsgType::Detections),
            3 => Ok(MsgType::PointCloud),
            4 => Ok(MsgType::Ping),
            5 => Ok(MsgType::Pong),
            other => Err(Error::Protocol(format!("unknown message type {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Metadata => "metadata",
            MsgType::Intermediate => "intermediate",
            MsgType::Detections => "detections",
            MsgType::PointCloud => "pointcloud",
            MsgType::Ping => "ping",
            MsgType::Pong => "pong",
        }
    }
}

/// A detection as it crosses the wire (f32 precision).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireBox {
    pub class_id: ClassId,
    pub score: f32,
    pub center: [f32; 3],
    pub dims: [f32; 3],
    pub yaw: f32,
}

impl WireBox {
    pub fn from_box(b: &Box3D) -> Self {
        WireBox {
            class_id: b.class_id,
            score: b.score as f32,
            center: [b.cx as f32, b.cy as f32, b.cz as f32],
            dims: [b.length as f32, b.width as f32, b.height as f32],
            yaw: b.yaw as f32,
        }
    }

    pub fn to_box(&self) -> Box3D {
        Box3D {
            cx: self.center[0] as f64,
            cy: self.center[1] as f64,
            cz: self.center[2] as f64,
            length: self.dims[0] as f64,
            width: self.dims[1] as f64,
            height: self.dims[2] as f64,
            yaw: self.yaw as f64,
            class_id: self.class_id,
            score: (self.score as f64).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Metadata { pose: Pose },
    Intermediate(CompressedFeature),
    Detections(Vec<WireBox>),
    PointCloud(Vec<[f32; 4]>),
    Ping { echo_stamp: u64 },
    Pong { echo_stamp: u64 },
}

impl MessageBody {
    pub fn msg_type(&self) -> MsgType {
        match self {
            MessageBody::Metadata { .. } => MsgType::Metadata,
            MessageBody::Intermediate(_) => MsgType::Intermediate,
            MessageBody::Detections(_) => MsgType::Detections,
            MessageBody::PointCloud(_) => MsgType::PointCloud,
            MessageBody::Ping { .. } => MsgType::Ping,
            MessageBody::Pong { .. } => MsgType::Pong,
        }
    }

    pub fn body_len(&self) -> usize {
        match self {
            MessageBody::Metadata { .. } => 48,
            MessageBody::Intermediate(cf) => {
                FEATURE_HEADER_LEN + cf.payload_len() * cf.elem_type().elem_size()
            }
            MessageBody::Detections(boxes) => 4 + boxes.len() * DETECTION_LEN,
            MessageBody::PointCloud(points) => 4 + points.len() * POINT_LEN,
            MessageBody::Ping { .. } | MessageBody::Pong { .. } => 8,
        }
    }
}

/// The serialized envelope crossing the simulated channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub agent_id: u32,
    pub seq: u32,
    pub stamp: Timestamp,
    pub body: MessageBody,
}

impl WireMessage {
    pub fn new(agent_id: u32, seq: u32, stamp: Timestamp, body: MessageBody) -> Self {
        WireMessage {
            agent_id,
            seq,
            stamp,
            body,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        self.body.msg_type()
    }

    /// Total serialized size in bytes, without serializing.
    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.body.body_len()
    }

    pub fn detections(agent_id: u32, seq: u32, set: &DetectionSet) -> Self {
        let boxes = set.boxes.iter().map(WireBox::from_box).collect();
        WireMessage::new(agent_id, seq, set.stamp, MessageBody::Detections(boxes))
    }
}

/// Serializes a message into the frozen little-endian layout.
pub fn serialize(msg: &WireMessage) -> Result<Vec<u8>> {
    let body_len = msg.body.body_len();
    if body_len > u32::MAX as usize {
        return Err(Error::Size(body_len as u64));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body_len);
    out.extend_from_slice(&WIRE_MAGIC);
    out.push(WIRE_VERSION);
    out.push(msg.msg_type() as u8);
    out.extend_from_slice(&msg.agent_id.to_le_bytes());
    out.extend_from_slice(&msg.seq.to_le_bytes());
    out.extend_from_slice(&msg.stamp.as_nanos().to_le_bytes());
    out.extend_from_slice(&(body_len as u32).to_le_bytes());

    match &msg.body {
        MessageBody::Metadata { pose } => {
            for v in pose.components() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        MessageBody::Intermediate(cf) => {
            out.extend_from_slice(&cf.h.to_le_bytes());
            out.extend_from_slice(&cf.w.to_le_bytes());
            out.extend_from_slice(&cf.c_orig.to_le_bytes());
            out.extend_from_slice(&cf.ratio.to_le_bytes());
            out.push(cf.elem_type() as u8);
            out.extend_from_slice(&cf.quant_scale.to_le_bytes());
            out.extend_from_slice(&cf.quant_offset.to_le_bytes());
            out.extend_from_slice(&cf.projection_seed.to_le_bytes());
            match &cf.payload {
                FeaturePayload::F32(vals) => {
                    for v in vals {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                FeaturePayload::U8(bytes) => out.extend_from_slice(bytes),
            }
        }
        MessageBody::Detections(boxes) => {
            out.extend_from_slice(&(boxes.len() as u32).to_le_bytes());
            for b in boxes {
                out.push(b.class_id.as_u8());
                out.extend_from_slice(&b.score.to_le_bytes());
                for v in b.center {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for v in b.dims {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&b.yaw.to_le_bytes());
            }
        }
        MessageBody::PointCloud(points) => {
            out.extend_from_slice(&(points.len() as u32).to_le_bytes());
            for p in points {
                for v in p {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        MessageBody::Ping { echo_stamp } | MessageBody::Pong { echo_stamp } => {
            out.extend_from_slice(&echo_stamp.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), HEADER_LEN + body_len);
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated {
                needed: self.pos + n - self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a complete serialized message. The buffer must contain exactly
/// one message: truncation and trailing garbage are both rejected.
pub fn deserialize(bytes: &[u8]) -> Result<WireMessage> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != WIRE_MAGIC {
        return Err(Error::Protocol(format!("bad magic {magic:02x?}")));
    }
    let version = cur.u8()?;
    if version != WIRE_VERSION {
        return Err(Error::Version(version));
    }
    let msg_type = MsgType::from_u8(cur.u8()?)?;
    let agent_id = cur.u32()?;
    let seq = cur.u32()?;
    let stamp = Timestamp(cur.u64()?);
    let body_len = cur.u32()? as usize;
    let remaining = bytes.len() - cur.pos;
    if remaining < body_len {
        return Err(Error::Truncated {
            needed: body_len - remaining,
        });
    }
    if remaining > body_len {
        return Err(Error::Protocol(format!(
            "{} trailing bytes after body",
            remaining - body_len
        )));
    }

    let body = match msg_type {
        MsgType::Metadata => {
            let mut c = [0.0f64; 6];
            for v in c.iter_mut() {
                *v = cur.f64()?;
            }
            MessageBody::Metadata {
                pose: Pose::from_components(c),
            }
        }
        MsgType::Intermediate => {
            let h = cur.u16()?;
            let w = cur.u16()?;
            let c_orig = cur.u16()?;
            let ratio = cur.u16()?;
            let elem = ElemType::from_u8(cur.u8()?)?;
            let quant_scale = cur.f32()?;
            let quant_offset = cur.f32()?;
            let projection_seed = cur.u64()?;
            if ratio == 0 || c_orig % ratio != 0 {
                return Err(Error::Format(format!(
                    "channel count {c_orig} not divisible by ratio {ratio}"
                )));
            }
            let n = h as usize * w as usize * (c_orig / ratio) as usize;
            let payload = match elem {
                ElemType::F32 => {
                    let raw = cur.take(n * 4)?;
                    FeaturePayload::F32(
                        raw.chunks_exact(4)
                            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                ElemType::U8Quant => FeaturePayload::U8(cur.take(n)?.to_vec()),
            };
            MessageBody::Intermediate(CompressedFeature {
                h,
                w,
                c_orig,
                ratio,
                quant_scale,
                quant_offset,
                projection_seed,
                payload,
            })
        }
        MsgType::Detections => {
            let count = cur.u32()? as usize;
            let mut boxes = Vec::with_capacity(count);
            for _ in 0..count {
                let class_id = ClassId::from_u8(cur.u8()?)?;
                let score = cur.f32()?;
                let center = [cur.f32()?, cur.f32()?, cur.f32()?];
                let dims = [cur.f32()?, cur.f32()?, cur.f32()?];
                let yaw = cur.f32()?;
                boxes.push(WireBox {
                    class_id,
                    score,
                    center,
                    dims,
                    yaw,
                });
            }
            MessageBody::Detections(boxes)
        }
        MsgType::PointCloud => {
            let count = cur.u32()? as usize;
            let mut points = Vec::with_capacity(count);
            for _ in 0..count {
                points.push([cur.f32()?, cur.f32()?, cur.f32()?, cur.f32()?]);
            }
            MessageBody::PointCloud(points)
        }
        MsgType::Ping => MessageBody::Ping {
            echo_stamp: cur.u64()?,
        },
        MsgType::Pong => MessageBody::Pong {
            echo_stamp: cur.u64()?,
        },
    };

    if cur.pos != bytes.len() {
        return Err(Error::Protocol(format!(
            "body shorter than declared length by {} bytes",
            bytes.len() - cur.pos
        )));
    }
    Ok(WireMessage {
        agent_id,
        seq,
        stamp,
        body,
    })
}

/// Exact serialized size of an intermediate-feature message for this grid
/// spec, ratio and element type, without building or sending one.
pub fn message_size(spec: &GridSpec, ratio: u16, elem: ElemType) -> Result<u64> {
    spec.validate()?;
    if ratio == 0 || !ratio.is_power_of_two() {
        return Err(Error::Ratio(format!("ratio {ratio} is not a power of two")));
    }
    if spec.channels % ratio as usize != 0 {
        return Err(Error::Ratio(format!(
            "channel count {} not divisible by ratio {ratio}",
            spec.channels
        )));
    }
    let elems = spec.height() as u64 * spec.width() as u64 * (spec.channels / ratio as usize) as u64;
    Ok(HEADER_LEN as u64 + FEATURE_HEADER_LEN as u64 + elems * elem.elem_size() as u64)
}
