//! Scenario generation, frame-log storage, synchronized online replay of
//! multi-agent logs through the full pipeline, and AP/latency evaluation.

pub mod eval;
pub mod framelog;
pub mod replay;
pub mod scenario;

pub use eval::{align, average_precision, evaluate, recall, AlignedFrame, Report};
pub use framelog::{
    load_frame_logs, load_scenario, save_frame_logs, save_scenario, Frame, FrameLog,
};
pub use replay::{
    replay, FrameRecord, FusionMode, PipelineCfg, RunRecord, StageLatencies, TrafficRow,
};
pub use scenario::{
    default_agents, generate_scenario, scenario_grid_spec, ActorPlacement, ActorSpec, AgentSpec,
    KeyFrame, Scenario, ScenarioCfg, Track,
};
