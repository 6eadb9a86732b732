//! Deterministic input builders shared by the benchmarks.

use v2xlink_core::pillar::{BevFeatureGrid, GridMeta, GridSpec};
use v2xlink_core::types::{Box3D, ClassId, FrameId, LidarPoint, PointCloud, Pose, Timestamp};

pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit() * (hi - lo)
    }
}

pub fn dense_boxes(n: usize, seed: u64) -> Vec<Box3D> {
    let mut rng = Lcg::new(seed);
    (0..n)
        .map(|_| {
            let class = match rng.next_u64() % 3 {
                0 => ClassId::Car,
                1 => ClassId::Pedestrian,
                _ => ClassId::Truck,
            };
            Box3D::new(
                rng.range(-50.0, 50.0),
                rng.range(-20.0, 20.0),
                1.0,
                rng.range(0.5, 6.0),
                rng.range(0.5, 3.0),
                1.6,
                rng.range(-3.1, 3.1),
                class,
                rng.unit(),
            )
        })
        .collect()
}

pub fn urban_cloud(points: usize, seed: u64) -> PointCloud {
    let mut rng = Lcg::new(seed);
    PointCloud::new(
        FrameId(0),
        (0..points)
            .map(|_| {
                LidarPoint::new(
                    rng.range(-60.0, 60.0),
                    rng.range(-24.0, 24.0),
                    rng.range(0.0, 3.0),
                    rng.unit(),
                )
            })
            .collect(),
    )
}

pub fn bench_grid(seed: u64) -> BevFeatureGrid {
    let spec = GridSpec::new(-60.0, 60.0, -24.0, 24.0, 0.5, 32, 7).unwrap();
    let meta = GridMeta {
        stamp: Timestamp(0),
        agent_id: 0,
        ego_frame: FrameId(0),
        ego_pose: Pose::identity(),
    };
    let mut rng = Lcg::new(seed);
    let mut grid = BevFeatureGrid::zeros(spec, meta);
    for v in grid.data.iter_mut() {
        *v = rng.unit() as f32;
    }
    grid
}
