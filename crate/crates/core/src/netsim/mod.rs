//! Deterministic virtual network: an event queue over a true-time clock,
//! per-node clock offsets, directed links with the affine latency model,
//! NTP-style clock sync and round-trip latency measurement.
//!
//! The event loop is single-threaded by contract; determinism comes from
//! the (time, sequence) heap order and per-link seeded RNG streams.

mod link;

pub use link::{
    builtin_link, channel_delay, ideal_link, paper_wifi, parse_link_config, resolve_link,
    LinkModel,
};

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::txcodec::{StageTimings, WireMessage};
use crate::types::Timestamp;

/// Something the event loop hands back to its driver.
#[derive(Debug, Clone)]
pub enum NetEvent {
    /// A message reached its destination node.
    Delivery {
        src: u32,
        dst: u32,
        msg: WireMessage,
    },
    /// A timer a driver scheduled for a node (tag is driver-defined).
    Timer { node: u32, tag: u64 },
}

#[derive(Debug)]
struct QueuedEvent {
    at: Timestamp,
    seq: u64,
    event: NetEvent,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.at.cmp(&other.at).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug)]
struct NodeState {
    clock_offset_ns: i64,
    encoder: StageTimings,
    decoder: StageTimings,
    send_seq: u32,
}

struct LinkState {
    model: LinkModel,
    rng: ChaCha12Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// The virtual network plus its event queue.
pub struct VirtualNet {
    now: Timestamp,
    next_seq: u64,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    nodes: BTreeMap<u32, NodeState>,
    links: BTreeMap<(u32, u32), LinkState>,
    default_link: Option<LinkModel>,
}

impl Default for VirtualNet {
    fn default() -> Self {
        Self::new()
    }
}

impl VirtualNet {
    pub fn new() -> Self {
        VirtualNet {
            now: Timestamp(0),
            next_seq: 0,
            queue: BinaryHeap::new(),
            nodes: BTreeMap::new(),
            links: BTreeMap::new(),
            default_link: None,
        }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn add_node(&mut self, id: u32) {
        self.add_node_with(id, StageTimings::zero(), StageTimings::zero());
    }

    pub fn add_node_with(&mut self, id: u32, encoder: StageTimings, decoder: StageTimings) {
        self.nodes.insert(
            id,
            NodeState {
                clock_offset_ns: 0,
                encoder,
                decoder,
                send_seq: 0,
            },
        );
    }

    fn node(&self, id: u32) -> Result<&NodeState> {
        self.nodes.get(&id).ok_or(Error::Routing(id))
    }

    fn node_mut(&mut self, id: u32) -> Result<&mut NodeState> {
        self.nodes.get_mut(&id).ok_or(Error::Routing(id))
    }

    /// Node-visible time: true time plus the node's clock offset.
    pub fn node_time_ns(&self, id: u32) -> Result<i64> {
        Ok(self.now.as_nanos() as i64 + self.node(id)?.clock_offset_ns)
    }

    pub fn clock_offset_ns(&self, id: u32) -> Result<i64> {
        Ok(self.node(id)?.clock_offset_ns)
    }

    pub fn set_clock_offset_ns(&mut self, id: u32, offset: i64) -> Result<()> {
        self.node_mut(id)?.clock_offset_ns = offset;
        Ok(())
    }

    pub fn encoder_profile(&self, id: u32) -> Result<StageTimings> {
        Ok(self.node(id)?.encoder)
    }

    pub fn decoder_profile(&self, id: u32) -> Result<StageTimings> {
        Ok(self.node(id)?.decoder)
    }

    /// Installs a directed link.
    pub fn set_link(&mut self, src: u32, dst: u32, model: LinkModel) {
        let rng = ChaCha12Rng::seed_from_u64(
            model.seed ^ splitmix64(((src as u64) << 32) | dst as u64),
        );
        self.links.insert((src, dst), LinkState { model, rng });
    }

    pub fn set_link_bidir(&mut self, a: u32, b: u32, model: LinkModel) {
        self.set_link(a, b, model);
        self.set_link(b, a, model);
    }

    /// Link applied to any pair without an explicit link.
    pub fn set_default_link(&mut self, model: LinkModel) {
        self.default_link = Some(model);
    }

    pub fn link_model(&mut self, src: u32, dst: u32) -> Result<LinkModel> {
        Ok(self.link_state(src, dst)?.model)
    }

    fn link_state(&mut self, src: u32, dst: u32) -> Result<&mut LinkState> {
        if !self.links.contains_key(&(src, dst)) {
            let model = self.default_link.ok_or_else(|| {
                Error::Config(format!("no link configured between {src} and {dst}"))
            })?;
            self.set_link(src, dst, model);
        }
        Ok(self.links.get_mut(&(src, dst)).unwrap())
    }

    /// Samples one channel traversal: `Ok(None)` means the message was
    /// dropped. Draw order (jitter, then drop) is part of the contract so
    /// traces stay reproducible.
    fn sample_channel_ms(&mut self, src: u32, dst: u32, size: u64) -> Result<Option<f64>> {
        let state = self.link_state(src, dst)?;
        let delay = channel_delay(size, &state.model, &mut state.rng);
        let dropped = state.model.drop_prob > 0.0 && state.rng.gen::<f64>() < state.model.drop_prob;
        Ok(if dropped { None } else { Some(delay) })
    }

    pub fn next_send_seq(&mut self, node: u32) -> Result<u32> {
        let n = self.node_mut(node)?;
        let seq = n.send_seq;
        n.send_seq += 1;
        Ok(seq)
    }

    fn push_event(&mut self, at: Timestamp, event: NetEvent) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(QueuedEvent { at, seq, event }));
    }

    /// Schedules a driver timer at an absolute true time.
    pub fn schedule_timer(&mut self, at: Timestamp, node: u32, tag: u64) {
        self.push_event(at, NetEvent::Timer { node, tag });
    }

    /// Sends a message from `src` to `dst`: charges the sender's encoder
    /// stages, one channel traversal and the receiver's decoder stages,
    /// then schedules the delivery. Returns the delivery time, or `None`
    /// if the channel dropped the message.
    pub fn send(&mut self, src: u32, dst: u32, msg: WireMessage) -> Result<Option<Timestamp>> {
        self.node(src)?;
        self.node(dst)?;
        let size = msg.serialized_len() as u64;
        let Some(channel_ms) = self.sample_channel_ms(src, dst, size)? else {
            return Ok(None);
        };
        let total_ms =
            self.node(src)?.encoder.total_ms() + channel_ms + self.node(dst)?.decoder.total_ms();
        let at = self.now.add_millis(total_ms);
        self.push_event(at, NetEvent::Delivery { src, dst, msg });
        Ok(Some(at))
    }

    /// Processes every event with true time <= `t_end` in deterministic
    /// (time, sequence) order. A panicking handler is re-raised with the
    /// offending event identified.
    pub fn run_until<F>(&mut self, t_end: Timestamp, mut handler: F)
    where
        F: FnMut(&mut VirtualNet, Timestamp, NetEvent),
    {
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.at > t_end {
                break;
            }
            let Reverse(QueuedEvent { at, seq, event }) = self.queue.pop().unwrap();
            debug_assert!(at >= self.now, "event queue went backwards");
            self.now = at;
            let desc = match &event {
                NetEvent::Delivery { src, dst, msg } => {
                    format!("delivery {}->{} ({})", src, dst, msg.msg_type().name())
                }
                NetEvent::Timer { node, tag } => format!("timer node {node} tag {tag}"),
            };
            let outcome = catch_unwind(AssertUnwindSafe(|| handler(self, at, event)));
            if let Err(payload) = outcome {
                let reason = payload
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| payload.downcast_ref::<&str>().copied())
                    .unwrap_or("non-string panic payload");
                panic!("event handler panicked at t={}ns seq={seq} on {desc}: {reason}", at.0);
            }
        }
        if self.now < t_end {
            self.now = t_end;
        }
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }
}

/// Result of a round-trip latency measurement, all in milliseconds of
/// one-way latency (RTT/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub samples: usize,
    pub dropped: usize,
}

/// NTP-style clock synchronization of `node` against `server` averaged
/// over `n` request/response exchanges: each exchange estimates
/// offset = ((t1 - t0) + (t2 - t3)) / 2 from the four local receive/send
/// stamps. The node's clock is corrected by the mean estimate, which is
/// also returned (nanoseconds to add to the node clock).
pub fn sync_clocks(net: &mut VirtualNet, node: u32, server: u32, n: usize) -> Result<i64> {
    let ping = WireMessage::new(
        node,
        0,
        net.now(),
        crate::txcodec::MessageBody::Ping { echo_stamp: 0 },
    );
    let size = ping.serialized_len() as u64;
    let node_offset = net.node(node)?.clock_offset_ns;
    let server_offset = net.node(server)?.clock_offset_ns;

    let mut estimates: Vec<i64> = Vec::with_capacity(n);
    for _ in 0..n.max(1) {
        let Some(fwd_ms) = net.sample_channel_ms(node, server, size)? else {
            continue;
        };
        let Some(rev_ms) = net.sample_channel_ms(server, node, size)? else {
            continue;
        };
        let base = net.now().as_nanos() as i64;
        let fwd = (fwd_ms * 1e6).round() as i64;
        let rev = (rev_ms * 1e6).round() as i64;
        let t0 = base + node_offset;
        let t1 = base + fwd + server_offset;
        let t2 = t1;
        let t3 = base + fwd + rev + node_offset;
        estimates.push(((t1 - t0) + (t2 - t3)) / 2);
    }
    if estimates.is_empty() {
        return Err(Error::SyncTimeout(format!(
            "all {n} exchanges with server {server} dropped"
        )));
    }
    let sum: i128 = estimates.iter().map(|&e| e as i128).sum();
    let mean = (sum / estimates.len() as i128) as i64;
    net.node_mut(node)?.clock_offset_ns += mean;
    Ok(mean)
}

/// Measures one-way latency between `a` and `b` as RTT/2 over `n`
/// round-trips of the given message, charging both nodes' encoder and
/// decoder stage profiles on each leg.
pub fn measure_one_way(
    net: &mut VirtualNet,
    a: u32,
    b: u32,
    msg: &WireMessage,
    n: usize,
) -> Result<LatencyStats> {
    let size = msg.serialized_len() as u64;
    let stage_ms = net.node(a)?.encoder.total_ms()
        + net.node(b)?.decoder.total_ms()
        + net.node(b)?.encoder.total_ms()
        + net.node(a)?.decoder.total_ms();
    let mut samples = Vec::with_capacity(n);
    let mut dropped = 0usize;
    for _ in 0..n {
        let Some(fwd) = net.sample_channel_ms(a, b, size)? else {
            dropped += 1;
            continue;
        };
        let Some(rev) = net.sample_channel_ms(b, a, size)? else {
            dropped += 1;
            continue;
        };
        samples.push((fwd + rev + stage_ms) / 2.0);
    }
    if samples.is_empty() {
        return Err(Error::Measurement(format!(
            "all {n} round-trips between {a} and {b} dropped"
        )));
    }
    let count = samples.len();
    let mean = samples.iter().sum::<f64>() / count as f64;
    let var = if count > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (count - 1) as f64
    } else {
        0.0
    };
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LatencyStats {
        mean_ms: mean,
        std_ms: var.sqrt(),
        min_ms: min,
        max_ms: max,
        samples: count,
        dropped,
    })
}
