//! Software-simulated mid-air haptic bio-hologram.
//!
//! A beating-heart hologram floats above an ultrasonic phased array. Its
//! pulsation follows a live heart-rate stream, and a hand touching it feels a
//! focal point circling on the palm whose radius (or intensity) beats in sync.
//! Every physical device is emulated; a 60 Hz frame loop keeps them in step
//! over a newline-delimited JSON protocol.
//!
//! Module map:
//!
//! - [`geometry`]: vectors, rigid transforms, point-correspondence calibration
//! - [`biosignal`]: heart-rate buffer, smoothing, pulse waveform, beat phase
//! - [`scene`]: the pulsating ellipsoid hologram
//! - [`hand`]: hand frames, tracker field of view, hologram targeting
//! - [`haptics`]: STM circle, pulsing intensity/radius, AM, focal logs
//! - [`array_physics`]: transducer layout, focusing phases, field oracle
//! - [`sync`]: wire protocol, sessions, clock, frame loop, network server
//! - [`emulators`]: wearable, hand tracker and haptic device stand-ins, scenarios
//! - [`cli`]: the subcommands behind the `bioholo` binary

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod array_physics;
pub mod biosignal;
pub mod cli;
pub mod config;
pub mod emulators;
pub mod geometry;
pub mod hand;
pub mod haptics;
pub mod scene;
pub mod sync;
pub mod table;

pub use geometry::{FrameId, RigidTransform, Vec3};
