//! Time-indexed receive-side storage: one bounded, stamp-sorted ring per
//! sender, queried by freshness window at fusion time. Payloads are
//! stored post-decode; wrap heavy ones in `Arc` before inserting.

use std::collections::BTreeMap;

use crate::types::Timestamp;

/// Default ring capacity per sender.
pub const DEFAULT_CAPACITY: usize = 10;
/// Default freshness window: one 10 Hz frame period.
pub const DEFAULT_WINDOW_MS: f64 = 100.0;

/// Per-sender ring of `(stamp, payload)` entries sorted by stamp.
/// Duplicate stamps overwrite; the oldest entry is evicted once a sender
/// exceeds the capacity.
#[derive(Debug, Clone)]
pub struct FeatureBank<T> {
    capacity: usize,
    entries: BTreeMap<u32, BTreeMap<Timestamp, T>>,
}

impl<T> Default for FeatureBank<T> {
    fn default() -> Self {
        FeatureBank::new(DEFAULT_CAPACITY)
    }
}

impl<T> FeatureBank<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "bank capacity must be positive");
        FeatureBank {
            capacity,
            entries: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Inserts an entry, keeping per-sender stamp order and evicting the
    /// oldest entry beyond capacity. Out-of-order stamps land in sorted
    /// position; an existing stamp is overwritten.
    pub fn insert(&mut self, sender: u32, stamp: Timestamp, payload: T) {
        let ring = self.entries.entry(sender).or_default();
        ring.insert(stamp, payload);
        while ring.len() > self.capacity {
            let oldest = *ring.keys().next().unwrap();
            ring.remove(&oldest);
        }
    }

    /// Latest entry from `sender` with stamp in the closed window
    /// `[now - window, now]`.
    pub fn query_latest(
        &self,
        sender: u32,
        now: Timestamp,
        window_ms: f64,
    ) -> Option<(Timestamp, &T)> {
        let ring = self.entries.get(&sender)?;
        let lo = window_floor(now, window_ms);
        ring.range(lo..=now)
            .next_back()
            .map(|(stamp, payload)| (*stamp, payload))
    }

    /// [`Self::query_latest`] across every sender; senders with no
    /// qualifying entry are omitted. Iteration order is ascending sender id.
    pub fn query_all_latest(
        &self,
        now: Timestamp,
        window_ms: f64,
    ) -> BTreeMap<u32, (Timestamp, &T)> {
        let lo = window_floor(now, window_ms);
        self.entries
            .iter()
            .filter_map(|(sender, ring)| {
                ring.range(lo..=now)
                    .next_back()
                    .map(|(stamp, payload)| (*sender, (*stamp, payload)))
            })
            .collect()
    }

    pub fn senders(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self, sender: u32) -> usize {
        self.entries.get(&sender).map_or(0, BTreeMap::len)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(BTreeMap::is_empty)
    }

    pub fn stamps(&self, sender: u32) -> Vec<Timestamp> {
        self.entries
            .get(&sender)
            .map(|r| r.keys().copied().collect())
            .unwrap_or_default()
    }
}

fn window_floor(now: Timestamp, window_ms: f64) -> Timestamp {
    if !window_ms.is_finite() {
        return Timestamp(0);
    }
    now.saturating_sub_nanos((window_ms * 1e6).round() as u64)
}
