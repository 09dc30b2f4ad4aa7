//! The frame-loop state machine, independent of any transport.

use std::io::{self, Write};

use log::{debug, warn};

use super::protocol::{CalibrationAck, CalibrationSet, FocalBatch, FrameState, HandState, HeartState, Message};
use crate::biosignal::{HeartRateSample, HrBuffer};
use crate::config::Config;
use crate::geometry::{calibration_residual, solve_rigid_transform, FrameId, RigidTransform, Vec3};
use crate::hand::{intersect_targets, HandFrame, LatestHands};
use crate::haptics::{FocalPointCommand, HapticRenderer};
use crate::scene::SceneState;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Haptics(#[from] crate::haptics::HapticsError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoreStats {
    pub frames: u64,
    pub hr_ingested: u64,
    pub hands_ingested: u64,
    pub ingest_errors: u64,
    pub focal_commands: u64,
    pub calibrations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub scene: SceneState,
    pub frame: FrameState,
    pub focal: FocalBatch,
}

/// Headset/world positions to the device frame. Identity until calibrated.
pub fn transform_ingest(frame: &HandFrame, calibration: &RigidTransform) -> HandFrame {
    match frame.frame {
        FrameId::Device => frame.clone(),
        FrameId::Headset | FrameId::World => frame.transformed(calibration),
    }
}

/// Sole owner of the heart-rate buffer, hand slots and scene.
///
/// Messages are queued by [`submit`](Self::submit) and take effect at the next
/// [`frame_tick`](Self::frame_tick), which runs: drain heart rate, drain hands,
/// update the scene, render haptics, build the broadcast.
#[derive(Debug)]
pub struct ServerCore {
    hr: HrBuffer,
    hands: LatestHands,
    scene: SceneState,
    renderer: HapticRenderer,
    calibration: RigidTransform,
    tick_dt: f64,
    pending_hr: Vec<HeartRateSample>,
    pending_hands: Vec<(HandFrame, f64)>,
    stats: CoreStats,
}

impl ServerCore {
    pub fn new(cfg: &Config) -> Result<Self, CoreError> {
        Ok(Self {
            hr: HrBuffer::new(cfg.biosignal.window, cfg.biosignal.staleness_timeout),
            hands: LatestHands::default(),
            scene: SceneState::new(&cfg.scene)?,
            renderer: HapticRenderer::new(cfg.haptics)?,
            calibration: RigidTransform::identity(),
            tick_dt: cfg.tick_dt(),
            pending_hr: Vec::new(),
            pending_hands: Vec::new(),
            stats: CoreStats::default(),
        })
    }

    pub fn scene(&self) -> &SceneState {
        &self.scene
    }

    pub fn hr_buffer(&self) -> &HrBuffer {
        &self.hr
    }

    pub fn calibration(&self) -> &RigidTransform {
        &self.calibration
    }

    pub fn set_calibration(&mut self, t: RigidTransform) {
        self.calibration = t;
    }

    pub fn stats(&self) -> CoreStats {
        self.stats
    }

    pub fn renderer(&self) -> &HapticRenderer {
        &self.renderer
    }

    /// Accepts one decoded message received at server time `received`.
    /// Returns a direct reply for the sender, if any.
    pub fn submit(&mut self, msg: Message, received: f64) -> Option<Message> {
        if let Err(e) = msg.validate() {
            self.stats.ingest_errors += 1;
            debug!("rejected {}: {e}", msg.type_name());
            return Some(Message::error("invalid", e));
        }
        match msg {
            Message::HrUpdate(s) => {
                // device timestamps are informational; frame logic runs on server time
                debug!("hr_update device_t={} bpm={}", s.t, s.bpm);
                self.pending_hr.push(HeartRateSample {
                    t: received,
                    bpm: s.bpm,
                });
                None
            }
            Message::HandUpdate(h) => {
                self.pending_hands.push((h, received));
                None
            }
            Message::CalibrationSet(c) => Some(self.calibrate(&c)),
            Message::Hello { .. } => Some(Message::error("unexpected", "already greeted")),
            other => {
                self.stats.ingest_errors += 1;
                Some(Message::error(
                    "unexpected",
                    format!("{} is server-to-client only", other.type_name()),
                ))
            }
        }
    }

    fn calibrate(&mut self, c: &CalibrationSet) -> Message {
        if c.dst_frame != FrameId::Device || c.src_frame == FrameId::Device {
            return Message::error("calibration", "pairs must map headset or world points to device points");
        }
        let (src, dst): (Vec<Vec3>, Vec<Vec3>) = c.pairs.iter().map(|[s, d]| (*s, *d)).unzip();
        match solve_rigid_transform(&src, &dst) {
            Ok(t) => {
                let residual = calibration_residual(&t, &src, &dst).unwrap_or(f64::NAN);
                self.calibration = t;
                self.stats.calibrations += 1;
                Message::CalibrationAck(CalibrationAck {
                    rotation: t.rotation_rows(),
                    translation: t.translation(),
                    residual,
                })
            }
            Err(e) => Message::error("calibration", e.to_string()),
        }
    }

    /// Runs one frame at server time `now`.
    pub fn frame_tick(&mut self, now: f64) -> TickOutput {
        for mut s in self.pending_hr.drain(..) {
            if let Some(newest) = self.hr.newest() {
                s.t = s.t.max(newest.t);
            }
            match self.hr.ingest(s) {
                Ok(()) => self.stats.hr_ingested += 1,
                Err(e) => {
                    self.stats.ingest_errors += 1;
                    warn!("heart-rate sample dropped: {e}");
                }
            }
        }
        for (h, received) in self.pending_hands.drain(..) {
            let h = transform_ingest(&h, &self.calibration);
            if self.hands.offer(h, received) {
                self.stats.hands_ingested += 1;
            }
        }
        self.hands.expire(now);

        let smoothed = self.hr.smoothed_bpm(now);
        self.scene = self.scene.update_at(smoothed, now);

        let commands = self
            .renderer
            .render_tick(&self.scene, self.hands.frames(), now, self.tick_dt);
        self.stats.focal_commands += commands.len() as u64;
        self.stats.frames += 1;

        let heart = &self.scene.heart;
        let hands = self
            .hands
            .frames()
            .map(|h| {
                let target = intersect_targets(h, heart).first().copied();
                HandState {
                    hand: h.hand,
                    haptic_active: target.is_some(),
                    target,
                    palm: h.palm_center,
                    joints: h.joints.clone(),
                }
            })
            .collect();
        let frame = FrameState {
            seq: self.scene.seq,
            t: self.scene.t,
            frame: FrameId::Device,
            heart: HeartState {
                anchor: heart.anchor(),
                radii: heart.base_radii,
                scale: heart.surface_scale(),
                phase: heart.phase.radians(),
                bpm: heart.bpm,
                flatline: heart.flatline,
            },
            hands,
        };
        TickOutput {
            scene: self.scene,
            focal: FocalBatch {
                seq: self.scene.seq,
                frame: FrameId::Device,
                commands,
            },
            frame,
        }
    }
}

pub const FRAME_LOG_HEADER: &str = "seq,t,bpm,phase,scale,flatline,left_active,right_active";

/// One frame-log row, `FRAME_LOG_HEADER` order.
pub fn frame_log_row(f: &FrameState) -> String {
    let active = |id: crate::hand::HandId| f.hands.iter().any(|h| h.hand == id && h.haptic_active) as u8;
    format!(
        "{},{:.6},{},{:.6},{:.6},{},{},{}",
        f.seq,
        f.t,
        f.heart.bpm.map(|b| format!("{b:.3}")).unwrap_or_default(),
        f.heart.phase,
        f.heart.scale,
        f.heart.flatline as u8,
        active(crate::hand::HandId::Left),
        active(crate::hand::HandId::Right),
    )
}

pub fn write_frame_log<W: Write>(mut w: W, frames: &[FrameState]) -> io::Result<()> {
    writeln!(w, "{FRAME_LOG_HEADER}")?;
    for f in frames {
        writeln!(w, "{}", frame_log_row(f))?;
    }
    Ok(())
}

/// Rows of commands sharing `seq`, convenient for logs.
pub fn flatten_batches<'a>(batches: impl IntoIterator<Item = &'a FocalBatch>) -> Vec<FocalPointCommand> {
    batches.into_iter().flat_map(|b| b.commands.iter().copied()).collect()
}
