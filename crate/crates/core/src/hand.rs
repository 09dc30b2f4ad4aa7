//! Skeletal hand frames, tracker field-of-view gating and hologram targeting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{plane_basis, FrameId, RigidTransform, Vec3};
use crate::scene::HeartHologram;

pub const MAX_JOINTS: usize = 25;
/// Frames older than this (server time) are no longer used for haptics.
pub const HAND_STALE_AFTER: f64 = 0.2;
pub const DEFAULT_FINGERTIP_RADIUS: f64 = 0.04;
const FINGER_FAN_DEG: [f64; 5] = [-60.0, -30.0, 0.0, 30.0, 60.0];

#[derive(Debug, Error, PartialEq)]
pub enum HandError {
    #[error("palm normal must be unit length (|n| = {0})")]
    NonUnitNormal(f64),
    #[error("hand frame contains a non-finite coordinate")]
    NonFinite,
    #[error("hand frame needs 1..={MAX_JOINTS} joints, got {0}")]
    JointCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandId {
    Left,
    Right,
}

impl HandId {
    pub const ALL: [HandId; 2] = [HandId::Left, HandId::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            HandId::Left => "left",
            HandId::Right => "right",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for HandId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(HandId::Left),
            "right" => Ok(HandId::Right),
            other => Err(format!("unknown hand `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandFrame {
    pub t: f64,
    pub hand: HandId,
    #[serde(default)]
    pub frame: FrameId,
    pub palm_center: Vec3,
    pub palm_normal: Vec3,
    pub joints: Vec<Vec3>,
}

impl HandFrame {
    /// Builds a frame with five fingertips fanned out in the palm plane.
    pub fn synthesize(t: f64, hand: HandId, palm_center: Vec3, palm_normal: Vec3, fingertip_radius: f64) -> Self {
        let (u, v) = plane_basis(palm_normal);
        let joints = FINGER_FAN_DEG
            .iter()
            .map(|deg| {
                let a = deg.to_radians();
                palm_center + (u * a.cos() + v * a.sin()) * fingertip_radius
            })
            .collect();
        Self {
            t,
            hand,
            frame: FrameId::Device,
            palm_center,
            palm_normal,
            joints,
        }
    }

    pub fn validate(&self) -> Result<(), HandError> {
        if !self.t.is_finite()
            || !self.palm_center.is_finite()
            || !self.palm_normal.is_finite()
            || self.joints.iter().any(|j| !j.is_finite())
        {
            return Err(HandError::NonFinite);
        }
        let n = self.palm_normal.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(HandError::NonUnitNormal(n));
        }
        if self.joints.is_empty() || self.joints.len() > MAX_JOINTS {
            return Err(HandError::JointCount(self.joints.len()));
        }
        Ok(())
    }

    pub fn palm_pose(&self) -> (Vec3, Vec3) {
        (self.palm_center, self.palm_normal)
    }

    /// Re-expresses the frame through `t` and labels it with the device frame.
    pub fn transformed(&self, t: &RigidTransform) -> HandFrame {
        HandFrame {
            t: self.t,
            hand: self.hand,
            frame: FrameId::Device,
            palm_center: t.apply(self.palm_center),
            palm_normal: t.rotate(self.palm_normal),
            joints: self.joints.iter().map(|&j| t.apply(j)).collect(),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = Vec3> + '_ {
        std::iter::once(self.palm_center).chain(self.joints.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Full angle across x, degrees.
    pub fov_wide: f64,
    /// Full angle across y, degrees.
    pub fov_deep: f64,
    pub range: f64,
    pub rate: f64,
    pub origin: Vec3,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            fov_wide: 150.0,
            fov_deep: 120.0,
            range: 0.60,
            rate: 100.0,
            origin: Vec3::ZERO,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (key, v) in [
            ("tracker.fov_wide", self.fov_wide),
            ("tracker.fov_deep", self.fov_deep),
            ("tracker.range", self.range),
            ("tracker.rate", self.rate),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{key} must be positive, got {v}"));
            }
        }
        if self.fov_wide >= 180.0 || self.fov_deep >= 180.0 {
            return Err("tracker field of view must be below 180 degrees".into());
        }
        Ok(())
    }
}

/// Pyramidal frustum test: range, then the two angular half-widths.
pub fn in_tracking_fov(p: Vec3, cfg: &TrackerConfig) -> bool {
    let d = p - cfg.origin;
    if d.norm() > cfg.range {
        return false;
    }
    let wide = d.x.atan2(d.z).abs().to_degrees();
    let deep = d.y.atan2(d.z).abs().to_degrees();
    wide <= cfg.fov_wide / 2.0 && deep <= cfg.fov_deep / 2.0
}

/// Hand points inside or on the hologram: palm first, then joints nearest-first.
pub fn intersect_targets(h: &HandFrame, heart: &HeartHologram) -> Vec<Vec3> {
    let mut out = Vec::new();
    if heart.signed_distance(h.palm_center) <= 0.0 {
        out.push(h.palm_center);
    }
    let mut joints: Vec<(f64, Vec3)> = h
        .joints
        .iter()
        .map(|&j| (heart.signed_distance(j), j))
        .filter(|(d, _)| *d <= 0.0)
        .collect();
    joints.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.extend(joints.into_iter().map(|(_, j)| j));
    out
}

/// Latest frame per hand, newest-wins.
#[derive(Debug, Clone, Default)]
pub struct LatestHands {
    slots: [Option<(HandFrame, f64)>; 2],
}

impl LatestHands {
    /// Stores `frame` received at server time `received_at` unless a newer
    /// frame for the same hand is already held.
    pub fn offer(&mut self, frame: HandFrame, received_at: f64) -> bool {
        let slot = &mut self.slots[frame.hand.index()];
        if let Some((held, _)) = slot {
            if held.t > frame.t {
                return false;
            }
        }
        *slot = Some((frame, received_at));
        true
    }

    /// Drops frames received more than [`HAND_STALE_AFTER`] before `now`.
    pub fn expire(&mut self, now: f64) {
        for slot in &mut self.slots {
            if matches!(slot, Some((_, at)) if now - *at > HAND_STALE_AFTER) {
                *slot = None;
            }
        }
    }

    /// Held frames in `left, right` order.
    pub fn frames(&self) -> impl Iterator<Item = &HandFrame> {
        self.slots.iter().flatten().map(|(f, _)| f)
    }

    pub fn get(&self, id: HandId) -> Option<&HandFrame> {
        self.slots[id.index()].as_ref().map(|(f, _)| f)
    }
}
