//! Property tests for the bank, the wire codec and the fusion operators.

mod common;

use proptest::prelude::*;
use v2xlink_core::bank::FeatureBank;
use v2xlink_core::fusion::fuse_max;
use v2xlink_core::geom::iou_bev;
use v2xlink_core::pillar::{BevFeatureGrid, GridMeta, GridSpec};
use v2xlink_core::txcodec::{
    deserialize, serialize, CompressedFeature, FeaturePayload, MessageBody, WireBox, WireMessage,
};
use v2xlink_core::types::{Box3D, ClassId, FrameId, Pose, Timestamp};

fn arb_pose() -> impl Strategy<Value = Pose> {
    (
        -100.0f64..100.0,
        -100.0f64..100.0,
        -10.0f64..10.0,
        -1.5f64..1.5,
        -1.5f64..1.5,
        -3.1f64..3.1,
    )
        .prop_map(|(x, y, z, roll, pitch, yaw)| Pose {
            x,
            y,
            z,
            roll,
            pitch,
            yaw,
        })
}

fn arb_box() -> impl Strategy<Value = (u8, f32, [f32; 3], [f32; 3], f32)> {
    (
        0u8..3,
        0.0f32..1.0,
        prop::array::uniform3(-50.0f32..50.0),
        prop::array::uniform3(0.1f32..8.0),
        -3.1f32..3.1,
    )
}

fn arb_body() -> impl Strategy<Value = MessageBody> {
    prop_oneof![
        arb_pose().prop_map(|pose| MessageBody::Metadata { pose }),
        prop::collection::vec(arb_box(), 0..20).prop_map(|boxes| {
            MessageBody::Detections(
                boxes
                    .into_iter()
                    .map(|(class, score, center, dims, yaw)| WireBox {
                        class_id: ClassId::from_u8(class).unwrap(),
                        score,
                        center,
                        dims,
                        yaw,
                    })
                    .collect(),
            )
        }),
        prop::collection::vec(prop::array::uniform4(-100.0f32..100.0), 0..200)
            .prop_map(MessageBody::PointCloud),
        any::<u64>().prop_map(|echo_stamp| MessageBody::Ping { echo_stamp }),
        any::<u64>().prop_map(|echo_stamp| MessageBody::Pong { echo_stamp }),
        (1u16..=8, 1u16..=2, any::<u64>(), prop::collection::vec(any::<u8>(), 0..64)).prop_map(
            |(hw, ratio_pow, seed, raw)| {
                // Build a consistent compressed-feature body by hand.
                let ratio = 1u16 << (ratio_pow - 1);
                let c_orig = 8u16;
                let k = (c_orig / ratio) as usize;
                let h = hw;
                let w = 2u16;
                let n = h as usize * w as usize * k;
                let payload = FeaturePayload::U8(
                    (0..n).map(|i| raw.get(i % raw.len().max(1)).copied().unwrap_or(7)).collect(),
                );
                MessageBody::Intermediate(CompressedFeature {
                    h,
                    w,
                    c_orig,
                    ratio,
                    quant_scale: 0.25,
                    quant_offset: -1.5,
                    projection_seed: seed,
                    payload,
                })
            }
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wire_roundtrip_is_identity(
        agent_id in any::<u32>(),
        seq in any::<u32>(),
        stamp in any::<u64>(),
        body in arb_body(),
    ) {
        let msg = WireMessage::new(agent_id, seq, Timestamp(stamp), body);
        let bytes = serialize(&msg).unwrap();
        prop_assert_eq!(bytes.len(), msg.serialized_len());
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn bank_query_respects_window_and_capacity(
        ops in prop::collection::vec((0u32..4, 0u64..2_000u64), 1..200),
        now_ms in 0u64..2_500,
        tau_ms in 0u64..500,
    ) {
        let mut bank = FeatureBank::new(10);
        for (i, (sender, stamp_ms)) in ops.iter().enumerate() {
            bank.insert(*sender, Timestamp(stamp_ms * 1_000_000), i);
            for s in bank.senders() {
                prop_assert!(bank.len(s) <= 10);
            }
        }
        let now = Timestamp(now_ms * 1_000_000);
        let tau = tau_ms as f64;
        for sender in 0..4 {
            if let Some((stamp, _)) = bank.query_latest(sender, now, tau) {
                prop_assert!(stamp <= now);
                prop_assert!(stamp.as_nanos() >= now.as_nanos().saturating_sub(tau_ms * 1_000_000));
            }
        }
        // Monotone queries: advancing `now` without inserts never moves
        // the returned stamp backwards (it may fall out of the window).
        let later = Timestamp((now_ms + 50) * 1_000_000);
        for sender in 0..4 {
            let first = bank.query_latest(sender, now, tau).map(|(s, _)| s);
            let second = bank.query_latest(sender, later, tau).map(|(s, _)| s);
            if let (Some(a), Some(b)) = (first, second) {
                prop_assert!(b >= a);
            }
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(
        ax in -5.0f64..5.0, ay in -5.0f64..5.0,
        al in 0.5f64..6.0, aw in 0.5f64..3.0, ayaw in -3.1f64..3.1,
        bx in -5.0f64..5.0, by in -5.0f64..5.0,
        bl in 0.5f64..6.0, bw in 0.5f64..3.0, byaw in -3.1f64..3.1,
    ) {
        let a = Box3D::new(ax, ay, 1.0, al, aw, 1.5, ayaw, ClassId::Car, 0.5);
        let b = Box3D::new(bx, by, 1.0, bl, bw, 1.5, byaw, ClassId::Car, 0.5);
        let ab = iou_bev(&a, &b);
        let ba = iou_bev(&b, &a);
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn fuse_max_is_commutative_associative_idempotent(
        vals in prop::collection::vec(0.0f32..2.0, 96),
    ) {
        let spec = GridSpec::new(-2.0, 2.0, -2.0, 2.0, 1.0, 4, 1).unwrap();
        let meta = GridMeta {
            stamp: Timestamp(0),
            agent_id: 0,
            ego_frame: FrameId(0),
            ego_pose: Pose::identity(),
        };
        let mut grids: Vec<BevFeatureGrid> = (0..2)
            .map(|_| BevFeatureGrid::zeros(spec.clone(), meta))
            .collect();
        for (n, v) in vals.iter().enumerate() {
            let g = n % 2;
            let cell = n / 2;
            let (i, j, c) = (cell / 12, (cell / 4) % 3, cell % 4);
            if i < 4 && j < 4 {
                grids[g].data[(i, j, c)] = *v;
            }
        }
        let (a, b) = (&grids[0], &grids[1]);
        let ab = fuse_max(&[a, b]).unwrap();
        let ba = fuse_max(&[b, a]).unwrap();
        prop_assert_eq!(&ab.data, &ba.data);
        let aa = fuse_max(&[a, a]).unwrap();
        prop_assert_eq!(&aa.data, &a.data);
        let ab_b = fuse_max(&[&ab, b]).unwrap();
        prop_assert_eq!(&ab_b.data, &ab.data);
    }
}
