//! Shared domain types: timestamps, poses, point clouds, boxes and agent
//! metadata. All values are immutable; operations on them live in the
//! sibling modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nanoseconds since epoch. Agents compare stamps directly once their
/// clocks are synchronized.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const fn from_nanos(ns: u64) -> Self {
        Timestamp(ns)
    }

    pub fn from_millis(ms: f64) -> Self {
        debug_assert!(ms >= 0.0);
        Timestamp((ms * 1e6).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_millis(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub_nanos(self, ns: u64) -> Self {
        Timestamp(self.0.saturating_sub(ns))
    }

    pub fn add_nanos(self, ns: u64) -> Self {
        Timestamp(self.0 + ns)
    }

    pub fn add_millis(self, ms: f64) -> Self {
        debug_assert!(ms >= 0.0);
        Timestamp(self.0 + (ms * 1e6).round() as u64)
    }
}

/// Identifier of a coordinate frame. Frames are owned by agents, so the
/// id is the owning agent's id; a cloud tagged `FrameId(k)` holds
/// coordinates expressed in agent `k`'s frame.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct FrameId(pub u32);

/// Rigid pose: translation in meters, intrinsic roll-pitch-yaw in radians
/// applied in Z-Y-X order (yaw about z first when composing the rotation
/// matrix), right-handed, x-forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    /// Builds a pose with the yaw normalized into `(-pi, pi]`.
    pub fn new(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Result<Self> {
        let pose = Pose {
            x,
            y,
            z,
            roll,
            pitch,
            yaw: normalize_angle(yaw),
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Pose {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.x, self.y, self.z, self.roll, self.pitch, self.yaw];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose(format!("non-finite component in {self:?}")));
        }
        Ok(())
    }

    pub fn components(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    pub fn from_components(c: [f64; 6]) -> Self {
        Pose {
            x: c[0],
            y: c[1],
            z: c[2],
            roll: c[3],
            pitch: c[4],
            yaw: c[5],
        }
    }
}

/// Normalizes an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// One LiDAR return: position in meters plus a normalized intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        LidarPoint { x, y, z, intensity }
    }
}

/// A sensor frame of points, tagged with the coordinate frame the
/// coordinates are expressed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub frame: FrameId,
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn new(frame: FrameId, points: Vec<LidarPoint>) -> Self {
        PointCloud { frame, points }
    }

    pub fn empty(frame: FrameId) -> Self {
        PointCloud {
            frame,
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Detection super-classes, grouped by physical footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassId {
    Car = 0,
    Pedestrian = 1,
    Truck = 2,
}

impl ClassId {
    pub const ALL: [ClassId; 3] = [ClassId::Car, ClassId::Pedestrian, ClassId::Truck];

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(ClassId::Car),
            1 => Ok(ClassId::Pedestrian),
            2 => Ok(ClassId::Truck),
            other => Err(Error::Format(format!("unknown class id {other}"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Car => "car",
            ClassId::Pedestrian => "pedestrian",
            ClassId::Truck => "truck",
        }
    }

    /// Typical box dimensions (length, width, height) in meters for this
    /// class. The scenario generator emits actors with these dims.
    pub fn typical_dims(self) -> (f64, f64, f64) {
        match self {
            ClassId::Car => (4.5, 1.8, 1.6),
            ClassId::Pedestrian => (0.6, 0.6, 1.7),
            ClassId::Truck => (8.0, 2.5, 3.2),
        }
    }

    /// Super-class from a BEV footprint. This is the convention shared
    /// between the scenario generator and the surrogate detector: classes
    /// are told apart purely by physical extent.
    pub fn from_footprint(length: f64, width: f64) -> Self {
        let major = length.max(width);
        if major < 2.0 {
            ClassId::Pedestrian
        } else if major < 6.0 {
            ClassId::Car
        } else {
            ClassId::Truck
        }
    }
}

/// A yawed 3D box with score and class, in the frame of its owning
/// `DetectionSet`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
    pub class_id: ClassId,
    pub score: f64,
}

impl Box3D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cx: f64,
        cy: f64,
        cz: f64,
        length: f64,
        width: f64,
        height: f64,
        yaw: f64,
        class_id: ClassId,
        score: f64,
    ) -> Self {
        debug_assert!(length > 0.0 && width > 0.0 && height > 0.0);
        debug_assert!((0.0..=1.0).contains(&score));
        Box3D {
            cx,
            cy,
            cz,
            length,
            width,
            height,
            yaw,
            class_id,
            score,
        }
    }

    /// BEV footprint area.
    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// The four BEV corners, counter-clockwise.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        let mut out = [[0.0; 2]; 4];
        for (o, l) in out.iter_mut().zip(local.iter()) {
            o[0] = self.cx + c * l[0] - s * l[1];
            o[1] = self.cy + s * l[0] + c * l[1];
        }
        out
    }

    /// Axis-aligned bounds of the BEV footprint: (min_x, min_y, max_x, max_y).
    pub fn aabb(&self) -> [f64; 4] {
        let corners = self.corners();
        let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for c in corners {
            bb[0] = bb[0].min(c[0]);
            bb[1] = bb[1].min(c[1]);
            bb[2] = bb[2].max(c[0]);
            bb[3] = bb[3].max(c[1]);
        }
        bb
    }
}

/// Scored boxes produced by one agent for one frame, all in the ego frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub stamp: Timestamp,
    pub agent_id: u32,
    pub boxes: Vec<Box3D>,
}

impl DetectionSet {
    pub fn new(stamp: Timestamp, agent_id: u32, boxes: Vec<Box3D>) -> Self {
        DetectionSet {
            stamp,
            agent_id,
            boxes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentKind {
    Vehicle,
    Infrastructure,
}

/// Metadata an agent shares before fusion: who it is, where it is, when.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub agent_id: u32,
    pub kind: AgentKind,
    pub pose: Pose,
    pub stamp: Timestamp,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn yaw_is_normalized_into_half_open_interval() {
        let p = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 3.0 * PI).unwrap();
        assert!((p.yaw - PI).abs() < 1e-12);
        let q = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, -PI).unwrap();
        assert!((q.yaw - PI).abs() < 1e-12, "-pi maps to +pi, got {}", q.yaw);
        let r = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, -0.5).unwrap();
        assert!((r.yaw + 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_pose_rejected() {
        assert!(Pose::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Pose::new(0.0, f64::INFINITY, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn footprint_classification_matches_typical_dims() {
        for class in ClassId::ALL {
            let (l, w, _) = class.typical_dims();
            assert_eq!(ClassId::from_footprint(l, w), class);
            // One voxel of padding on each side must not flip the class.
            assert_eq!(ClassId::from_footprint(l + 1.0, w + 1.0), class);
        }
    }

    #[test]
    fn timestamp_millis_roundtrip() {
        let t = Timestamp::from_millis(41.7);
        assert!((t.as_millis() - 41.7).abs() < 1e-9);
    }
}
