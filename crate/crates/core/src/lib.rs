//! Multi-agent bird's-eye-view perception pipeline: deterministic pillar
//! feature extraction, a byte-exact wire codec with channel compression,
//! time-indexed feature banks, early/late/intermediate fusion with
//! R-tree NMS, a virtual network with clock sync and latency measurement,
//! and a scenario replay / evaluation harness.

pub mod bank;
pub mod error;
pub mod fusion;
pub mod geom;
pub mod harness;
pub mod netsim;
pub mod pillar;
pub mod txcodec;
pub mod types;

pub use error::{Error, ErrorCategory, Result};
pub use types::{
    AgentKind, AgentMeta, Box3D, ClassId, DetectionSet, FrameId, LidarPoint, PointCloud, Pose,
    Timestamp,
};
