//! Affine channel latency model: delay = a + size/b plus optional seeded
//! Gaussian jitter, with independent Bernoulli drops.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed channel parameters. Delays are deterministic given the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    /// Fixed per-message overhead in milliseconds.
    pub a_ms: f64,
    /// Throughput in bytes per millisecond.
    pub b_bytes_per_ms: f64,
    /// Standard deviation of the Gaussian jitter in milliseconds.
    pub jitter_std_ms: f64,
    /// Independent drop probability per message.
    pub drop_prob: f64,
    /// Seed for the jitter/drop stream.
    pub seed: u64,
}

impl LinkModel {
    pub fn new(a_ms: f64, b_bytes_per_ms: f64) -> Self {
        LinkModel {
            a_ms,
            b_bytes_per_ms,
            jitter_std_ms: 0.0,
            drop_prob: 0.0,
            seed: 0,
        }
    }

    pub fn with_jitter(mut self, jitter_std_ms: f64, seed: u64) -> Self {
        self.jitter_std_ms = jitter_std_ms;
        self.seed = seed;
        self
    }

    pub fn with_drops(mut self, drop_prob: f64) -> Self {
        self.drop_prob = drop_prob;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_ms >= 0.0)
            || !(self.b_bytes_per_ms > 0.0)
            || !(self.jitter_std_ms >= 0.0)
            || !(0.0..=1.0).contains(&self.drop_prob)
        {
            return Err(Error::Config(format!("invalid link parameters: {self:?}")));
        }
        Ok(())
    }

    /// Jitter-free delay for a message of `size` bytes.
    pub fn nominal_delay_ms(&self, size: u64) -> f64 {
        self.a_ms + size as f64 / self.b_bytes_per_ms
    }
}

/// Calibration points of the reference Wi-Fi channel: a 3.63 KiB message
/// measured at 10.0 ms and a 3.7 MiB message at 144.2 ms.
const WIFI_FIT_SMALL: (f64, f64) = (3.63 * 1024.0, 10.0);
const WIFI_FIT_LARGE: (f64, f64) = (3.7 * 1024.0 * 1024.0, 144.2);

/// Affine model fitted through the two reference Wi-Fi transfer points.
pub fn paper_wifi() -> LinkModel {
    let (s1, t1) = WIFI_FIT_SMALL;
    let (s2, t2) = WIFI_FIT_LARGE;
    let b = (s2 - s1) / (t2 - t1);
    let a = t1 - s1 / b;
    LinkModel::new(a, b)
}

/// Effectively instantaneous channel for baseline runs.
pub fn ideal_link() -> LinkModel {
    LinkModel::new(0.0, 1e15)
}

/// Resolves a built-in profile name.
pub fn builtin_link(name: &str) -> Result<LinkModel> {
    match name {
        "paper-wifi" => Ok(paper_wifi()),
        "ideal" => Ok(ideal_link()),
        other => Err(Error::Config(format!("unknown link profile '{other}'"))),
    }
}

/// Parses a plain-text key-value link description. Recognized keys:
/// a_ms, b_bytes_per_ms, jitter_std_ms, drop_prob, seed. Lines starting
/// with '#' are comments; a lone `profile = <name>` line loads a built-in
/// as the base before overrides apply.
pub fn parse_link_config(text: &str) -> Result<LinkModel> {
    let mut model: Option<LinkModel> = None;
    let mut a_ms = None;
    let mut b = None;
    let mut jitter = 0.0f64;
    let mut drop = 0.0f64;
    let mut seed = 0u64;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
        let parse_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("line {}: bad number '{v}'", lineno + 1)))
        };
        match key {
            "profile" => model = Some(builtin_link(value)?),
            "a_ms" => a_ms = Some(parse_f64(value)?),
            "b_bytes_per_ms" => b = Some(parse_f64(value)?),
            "jitter_std_ms" => jitter = parse_f64(value)?,
            "drop_prob" => drop = parse_f64(value)?,
            "seed" => {
                seed = value.parse().map_err(|_| {
                    Error::Config(format!("line {}: bad seed '{value}'", lineno + 1))
                })?
            }
            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown link key '{other}'",
                    lineno + 1
                )))
            }
        }
    }
    let base = model.unwrap_or_else(|| LinkModel::new(0.0, 1e15));
    let out = LinkModel {
        a_ms: a_ms.unwrap_or(base.a_ms),
        b_bytes_per_ms: b.unwrap_or(base.b_bytes_per_ms),
        jitter_std_ms: jitter,
        drop_prob: drop,
        seed,
    };
    out.validate()?;
    Ok(out)
}

/// Resolves a link argument: a built-in profile name or a path to a
/// key-value config file.
pub fn resolve_link(arg: &str) -> Result<LinkModel> {
    if let Ok(model) = builtin_link(arg) {
        return Ok(model);
    }
    let path = std::path::Path::new(arg);
    if path.exists() {
        return parse_link_config(&std::fs::read_to_string(path)?);
    }
    Err(Error::Config(format!(
        "'{arg}' is neither a built-in link profile nor a config file"
    )))
}

/// One sampled channel delay. The stochastic part (transfer plus jitter)
/// clamps at zero so a delivery never undercuts the fixed overhead.
pub fn channel_delay(size: u64, link: &LinkModel, rng: &mut impl Rng) -> f64 {
    let jitter = if link.jitter_std_ms > 0.0 {
        Normal::new(0.0, link.jitter_std_ms).unwrap().sample(rng)
    } else {
        0.0
    };
    link.a_ms + (size as f64 / link.b_bytes_per_ms + jitter).max(0.0)
}
