#![allow(dead_code)]

use bioholo::biosignal::HeartRateSample;
use bioholo::geometry::{FrameId, Vec3};
use bioholo::hand::{HandFrame, HandId};
use bioholo::haptics::FocalPointCommand;
use bioholo::sync::protocol::{CalibrationAck, CalibrationSet, FocalBatch, FrameState, HandState, HeartState};
use bioholo::sync::{DeviceKind, Message, PROTO_VERSION};
use rand::Rng;

pub const KINDS: [DeviceKind; 5] = [
    DeviceKind::Wearable,
    DeviceKind::HandTracker,
    DeviceKind::Headset,
    DeviceKind::HapticDevice,
    DeviceKind::Ui,
];

fn frame_id(rng: &mut impl Rng) -> FrameId {
    [FrameId::Device, FrameId::Headset, FrameId::World][rng.random_range(0..3)]
}

fn hand(rng: &mut impl Rng) -> HandId {
    if rng.random_bool(0.5) {
        HandId::Left
    } else {
        HandId::Right
    }
}

fn vec(rng: &mut impl Rng, h: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-h..h),
        rng.random_range(-h..h),
        rng.random_range(-h..h),
    )
}

fn in_volume(rng: &mut impl Rng) -> Vec3 {
    Vec3::new(
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
        rng.random_range(0.0..0.6),
    )
}

fn unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = vec(rng, 1.0);
        let n = v.norm();
        if n > 0.1 {
            return v / n;
        }
    }
}

fn hand_frame(rng: &mut impl Rng) -> HandFrame {
    let mut f = HandFrame::synthesize(
        rng.random_range(0.0..1e4),
        hand(rng),
        vec(rng, 0.5),
        unit(rng),
        rng.random_range(0.01..0.1),
    );
    f.frame = frame_id(rng);
    f.joints.truncate(rng.random_range(1..=f.joints.len()));
    f
}

fn text(rng: &mut impl Rng) -> String {
    let pool = [
        "",
        "bad",
        "line 1: \"quoted\"",
        "tab\there",
        "ünïcødé ♥",
        "new\nline",
        "back\\slash",
    ];
    pool[rng.random_range(0..pool.len())].to_string()
}

/// A random message that passes `Message::validate`.
pub fn random_message(rng: &mut impl Rng) -> Message {
    match rng.random_range(0..9) {
        0 => Message::Hello {
            device: KINDS[rng.random_range(0..KINDS.len())],
            proto: PROTO_VERSION,
        },
        1 => Message::Welcome {
            session: rng.random(),
            proto: PROTO_VERSION,
        },
        2 => Message::HrUpdate(HeartRateSample {
            t: rng.random_range(0.0..1e5),
            bpm: if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random_range(0.0..250.0)
            },
        }),
        3 => Message::HandUpdate(hand_frame(rng)),
        4 => {
            let hands = (0..rng.random_range(0..=2))
                .map(|_| HandState {
                    hand: hand(rng),
                    haptic_active: rng.random_bool(0.5),
                    target: rng.random_bool(0.5).then(|| in_volume(rng)),
                    palm: in_volume(rng),
                    joints: (0..rng.random_range(0..6)).map(|_| in_volume(rng)).collect(),
                })
                .collect();
            Message::FrameState(FrameState {
                seq: rng.random_range(0..u64::MAX / 2),
                t: rng.random_range(0.0..1e5),
                frame: FrameId::Device,
                heart: HeartState {
                    anchor: in_volume(rng),
                    radii: vec(rng, 0.1),
                    scale: rng.random_range(0.9..1.1),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    bpm: rng.random_bool(0.8).then(|| rng.random_range(0.0..250.0)),
                    flatline: rng.random_bool(0.2),
                },
                hands,
            })
        }
        5 => {
            let t0: f64 = rng.random_range(0.0..1e4);
            let commands = (0..rng.random_range(0..12))
                .map(|i| FocalPointCommand {
                    t: t0 + i as f64 / 540.0,
                    hand: hand(rng),
                    pos: in_volume(rng),
                    intensity: rng.random_range(0.0..=1.0),
                })
                .collect();
            Message::FocalBatch(FocalBatch {
                seq: rng.random(),
                frame: FrameId::Device,
                commands,
            })
        }
        6 => Message::CalibrationSet(CalibrationSet {
            src_frame: frame_id(rng),
            dst_frame: frame_id(rng),
            pairs: (0..rng.random_range(0..10))
                .map(|_| [vec(rng, 2.0), vec(rng, 2.0)])
                .collect(),
        }),
        7 => {
            let mut rotation = [[0.0; 3]; 3];
            for row in &mut rotation {
                for x in row.iter_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
            }
            Message::CalibrationAck(CalibrationAck {
                rotation,
                translation: vec(rng, 2.0),
                residual: rng.random_range(0.0..0.01),
            })
        }
        _ => Message::Error {
            code: text(rng),
            detail: text(rng),
        },
    }
}
