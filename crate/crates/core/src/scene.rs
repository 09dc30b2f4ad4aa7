//! The beating-heart hologram: a world-anchored ellipsoid that pulsates with the
//! smoothed heart rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biosignal::{self, BeatPhase};
use crate::geometry::Vec3;
use crate::haptics::InteractionVolume;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("scene.anchor {0} is outside the interaction volume")]
    AnchorOutsideVolume(Vec3),
    #[error("scene.radii must be positive and finite, got {0}")]
    BadRadii(Vec3),
    #[error("scene.pulse_amplitude must be in (0, 0.5), got {0}")]
    BadAmplitude(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub anchor: Vec3,
    pub radii: Vec3,
    pub pulse_amplitude: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            anchor: Vec3::new(0.0, 0.0, 0.30),
            radii: Vec3::new(0.05, 0.045, 0.06),
            pulse_amplitude: 0.08,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !self.anchor.is_finite() || !InteractionVolume::DEFAULT.contains(self.anchor) {
            return Err(SceneError::AnchorOutsideVolume(self.anchor));
        }
        let r = self.radii;
        if !r.is_finite() || r.min_component() <= 0.0 {
            return Err(SceneError::BadRadii(r));
        }
        if !(self.pulse_amplitude > 0.0 && self.pulse_amplitude < 0.5) {
            return Err(SceneError::BadAmplitude(self.pulse_amplitude));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeartHologram {
    anchor: Vec3,
    pub base_radii: Vec3,
    pub pulse_amplitude: f64,
    pub phase: BeatPhase,
    pub bpm: Option<f64>,
    pub flatline: bool,
}

impl HeartHologram {
    pub fn new(cfg: &SceneConfig) -> Result<Self, SceneError> {
        cfg.validate()?;
        Ok(Self {
            anchor: cfg.anchor,
            base_radii: cfg.radii,
            pulse_amplitude: cfg.pulse_amplitude,
            phase: BeatPhase::default(),
            bpm: None,
            flatline: true,
        })
    }

    /// Fixed at creation.
    pub fn anchor(&self) -> Vec3 {
        self.anchor
    }

    /// `1 + amplitude · s(phase)`; exactly 1 during a flatline.
    pub fn surface_scale(&self) -> f64 {
        if self.flatline {
            1.0
        } else {
            1.0 + self.pulse_amplitude * self.phase.waveform()
        }
    }

    /// Waveform value driving both the visual and the haptic pulsation.
    pub fn waveform(&self) -> f64 {
        if self.flatline {
            0.0
        } else {
            self.phase.waveform()
        }
    }

    /// The same hologram `dt` seconds later at its current rate.
    pub fn advanced(&self, dt: f64) -> HeartHologram {
        let mut h = *self;
        if !h.flatline {
            h.phase = h.phase.advance(h.bpm.unwrap_or(0.0), dt);
        }
        h
    }

    pub fn scaled_radii(&self) -> Vec3 {
        self.base_radii * self.surface_scale()
    }

    /// Approximate ellipsoid distance: `(‖(p - anchor) / radii‖ - 1) · min(radii)`.
    /// Only the sign is exact; it is negative strictly inside.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        let radii = self.scaled_radii();
        let d = p - self.anchor;
        let q = Vec3::new(d.x / radii.x, d.y / radii.y, d.z / radii.z);
        (q.norm() - 1.0) * radii.min_component()
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.signed_distance(p) <= 0.0
    }
}

/// Per-frame scene snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneState {
    pub heart: HeartHologram,
    pub seq: u64,
    pub t: f64,
}

impl SceneState {
    pub fn new(cfg: &SceneConfig) -> Result<Self, SceneError> {
        Ok(Self {
            heart: HeartHologram::new(cfg)?,
            seq: 0,
            t: 0.0,
        })
    }

    /// Applies one frame of `dt` seconds with the current smoothed heart rate.
    pub fn update(&self, smoothed: Option<f64>, dt: f64) -> SceneState {
        let dt = dt.max(0.0);
        let mut heart = self.heart;
        heart.flatline = biosignal::flatline(smoothed);
        if let Some(bpm) = smoothed {
            heart.bpm = Some(bpm);
        }
        if !heart.flatline {
            heart.phase = heart.phase.advance(smoothed.unwrap_or(0.0), dt);
        }
        SceneState {
            heart,
            seq: self.seq + 1,
            t: self.t + dt,
        }
    }

    /// Like [`update`](Self::update) but lands exactly on server time `now`,
    /// so long runs don't accumulate rounding in `t`.
    pub fn update_at(&self, smoothed: Option<f64>, now: f64) -> SceneState {
        let mut next = self.update(smoothed, now - self.t);
        next.t = now.max(self.t);
        next
    }
}
