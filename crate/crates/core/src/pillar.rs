//! Deterministic BEV feature extraction: point clouds are voxelized into
//! vertical pillars and summarized into per-pillar statistics which a
//! seeded channel lift expands to the configured channel count. Replaces
//! a learned backbone while keeping tensor shape and information locality.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FrameId, PointCloud, Pose, Timestamp};

/// Number of base statistics computed per pillar before the channel lift:
/// point count, max z, mean z, mean intensity.
pub const BASE_STATS: usize = 4;

/// BEV grid geometry plus the channel-lift configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Edge length of a square BEV cell in meters.
    pub voxel: f64,
    /// Output channel count C.
    pub channels: usize,
    /// Seed for the deterministic channel-lift weights.
    pub lift_seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x_min: -100.0,
            x_max: 100.0,
            y_min: -40.0,
            y_max: 40.0,
            voxel: 0.4,
            channels: 64,
            lift_seed: 7,
        }
    }
}

impl GridSpec {
    pub fn new(
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        voxel: f64,
        channels: usize,
        lift_seed: u64,
    ) -> Result<Self> {
        let spec = GridSpec {
            x_min,
            x_max,
            y_min,
            y_max,
            voxel,
            channels,
            lift_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel > 0.0) || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::Config(format!("degenerate grid extent: {self:?}")));
        }
        if self.channels < BASE_STATS {
            return Err(Error::Config(format!(
                "channel count {} below the {} base statistics",
                self.channels, BASE_STATS
            )));
        }
        for (lo, hi, axis) in [
            (self.x_min, self.x_max, "x"),
            (self.y_min, self.y_max, "y"),
        ] {
            let bins = (hi - lo) / self.voxel;
            if (bins - bins.round()).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "{axis} extent {lo}..{hi} is not a whole number of {} m voxels",
                    self.voxel
                )));
            }
        }
        Ok(())
    }

    /// Rows along x.
    pub fn height(&self) -> usize {
        ((self.x_max - self.x_min) / self.voxel).round() as usize
    }

    /// Columns along y.
    pub fn width(&self) -> usize {
        ((self.y_max - self.y_min) / self.voxel).round() as usize
    }

    /// Cell index for a BEV position, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.x_min) / self.voxel;
        let fy = (y - self.y_min) / self.voxel;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        if i >= self.height() || j >= self.width() {
            return None;
        }
        Some((i, j))
    }

    /// BEV position of a cell center.
    pub fn center_of(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x_min + (i as f64 + 0.5) * self.voxel,
            self.y_min + (j as f64 + 0.5) * self.voxel,
        )
    }

    /// Bytes of a raw f32 tensor of this shape.
    pub fn raw_payload_bytes(&self) -> u64 {
        (self.height() * self.width() * self.channels * 4) as u64
    }

    /// Channel-lift weights, one per output channel, in `[0.5, 1.5)`.
    pub fn lift_weights(&self) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(self.lift_seed);
        (0..self.channels).map(|_| 0.5 + rng.gen::<f64>()).collect()
    }
}

/// Identity of a BEV feature grid: when it was sensed, who produced it and
/// which ego frame it lives in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub stamp: Timestamp,
    pub agent_id: u32,
    pub ego_frame: FrameId,
    pub ego_pose: Pose,
}

/// H x W x C feature tensor over the BEV plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BevFeatureGrid {
    pub spec: GridSpec,
    pub stamp: Timestamp,
    pub agent_id: u32,
    pub ego_frame: FrameId,
    pub ego_pose: Pose,
    pub data: Array3<f32>,
}

impl BevFeatureGrid {
    pub fn zeros(spec: GridSpec, meta: GridMeta) -> Self {
        let data = Array3::zeros((spec.height(), spec.width(), spec.channels));
        BevFeatureGrid {
            spec,
            stamp: meta.stamp,
            agent_id: meta.agent_id,
            ego_frame: meta.ego_frame,
            ego_pose: meta.ego_pose,
            data,
        }
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            stamp: self.stamp,
            agent_id: self.agent_id,
            ego_frame: self.ego_frame,
            ego_pose: self.ego_pose,
        }
    }
}

/// Raw per-pillar statistics (H x W x 4) and the occupancy mask, before
/// any normalization. Sums run over sorted values so the result is
/// independent of point order.
pub fn pillar_stats(cloud: &PointCloud, spec: &GridSpec) -> Result<(Array3<f64>, Array2<bool>)> {
    spec.validate()?;
    let (h, w) = (spec.height(), spec.width());
    let mut zs: Vec<Vec<f64>> = vec![Vec::new(); h * w];
    let mut intens: Vec<Vec<f64>> = vec![Vec::new(); h * w];
    for p in &cloud.points {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::Shape("non-finite point coordinate".into()));
        }
        if let Some((i, j)) = spec.cell_of(p.x, p.y) {
            zs[i * w + j].push(p.z);
            intens[i * w + j].push(p.intensity);
        }
    }
    let mut stats = Array3::<f64>::zeros((h, w, BASE_STATS));
    let mut occupied = Array2::<bool>::from_elem((h, w), false);
    for i in 0..h {
        for j in 0..w {
            let idx = i * w + j;
            if zs[idx].is_empty() {
                continue;
            }
            occupied[(i, j)] = true;
            let n = zs[idx].len() as f64;
            zs[idx].sort_by(f64::total_cmp);
            intens[idx].sort_by(f64::total_cmp);
            let max_z = *zs[idx].last().unwrap();
            let mean_z = zs[idx].iter().sum::<f64>() / n;
            let mean_i = intens[idx].iter().sum::<f64>() / n;
            stats[(i, j, 0)] = n;
            stats[(i, j, 1)] = max_z;
            stats[(i, j, 2)] = mean_z;
            stats[(i, j, 3)] = mean_i;
        }
    }
    Ok((stats, occupied))
}

/// Voxelizes an ego-frame cloud into pillars and emits the feature grid.
///
/// Each base statistic is min-max normalized over the occupied pillars of
/// this grid (a constant-statistic grid normalizes to 1), then channel c
/// takes `stat[c mod 4] * w_c` with the seeded lift weights. Empty pillars
/// stay exactly zero; points outside the extent are ignored.
pub fn pillarize(cloud: &PointCloud, spec: &GridSpec, meta: &GridMeta) -> Result<BevFeatureGrid> {
    if cloud.frame != meta.ego_frame {
        return Err(Error::FrameMismatch(format!(
            "cloud in frame {:?}, grid expects {:?}",
            cloud.frame, meta.ego_frame
        )));
    }
    let (stats, occupied) = pillar_stats(cloud, spec)?;
    let (h, w) = (spec.height(), spec.width());

    let mut lo = [f64::INFINITY; BASE_STATS];
    let mut hi = [f64::NEG_INFINITY; BASE_STATS];
    for i in 0..h {
        for j in 0..w {
            if !occupied[(i, j)] {
                continue;
            }
            for s in 0..BASE_STATS {
                let v = stats[(i, j, s)];
                lo[s] = lo[s].min(v);
                hi[s] = hi[s].max(v);
            }
        }
    }

    let weights = spec.lift_weights();
    let mut grid = BevFeatureGrid::zeros(spec.clone(), *meta);
    for i in 0..h {
        for j in 0..w {
            if !occupied[(i, j)] {
                continue;
            }
            let mut norm = [0.0f64; BASE_STATS];
            for s in 0..BASE_STATS {
                let range = hi[s] - lo[s];
                norm[s] = if range > 0.0 {
                    (stats[(i, j, s)] - lo[s]) / range
                } else {
                    1.0
                };
            }
            for c in 0..spec.channels {
                grid.data[(i, j, c)] = (norm[c % BASE_STATS] * weights[c]) as f32;
            }
        }
    }
    Ok(grid)
}
