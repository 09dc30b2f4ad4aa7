//! Heart-rate ingest and the signals derived from it.
//!
//! Readings arrive roughly every 5 s. They are kept in a 6 s sliding buffer and
//! averaged; a reading of 0 bpm encodes a flatline. The pulse shape used for both
//! the visual and the haptic animation is a single Gaussian bump per beat.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{self, TableError};

pub const MAX_BPM: f64 = 250.0;
pub const DEFAULT_WINDOW: f64 = 6.0;
pub const DEFAULT_STALENESS_TIMEOUT: f64 = 15.0;

/// Pulse peak position and width, as fractions of the beat period.
pub const PULSE_PEAK: f64 = 0.15;
pub const PULSE_WIDTH: f64 = 0.08;

#[derive(Debug, Error, PartialEq)]
pub enum BiosignalError {
    #[error("sample at t={t} is older than the newest buffered sample (t={newest})")]
    OutOfOrderSample { t: f64, newest: f64 },
    #[error("bpm {0} outside [0, {MAX_BPM}]")]
    BpmOutOfRange(f64),
    #[error("bpm must be positive, got {0}")]
    NonPositiveBpm(f64),
    #[error("no samples in the normalization window")]
    EmptyWindow,
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartRateSample {
    pub t: f64,
    pub bpm: f64,
}

impl HeartRateSample {
    pub fn new(t: f64, bpm: f64) -> Result<Self, BiosignalError> {
        if !bpm.is_finite() || !(0.0..=MAX_BPM).contains(&bpm) {
            return Err(BiosignalError::BpmOutOfRange(bpm));
        }
        Ok(Self { t, bpm })
    }
}

/// Sliding buffer of heart-rate readings.
#[derive(Debug, Clone, PartialEq)]
pub struct HrBuffer {
    samples: VecDeque<HeartRateSample>,
    window: f64,
    staleness_timeout: f64,
    last_smoothed: Option<f64>,
}

impl Default for HrBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW, DEFAULT_STALENESS_TIMEOUT)
    }
}

impl HrBuffer {
    pub fn new(window: f64, staleness_timeout: f64) -> Self {
        Self {
            samples: VecDeque::new(),
            window,
            staleness_timeout,
            last_smoothed: None,
        }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn samples(&self) -> impl Iterator<Item = &HeartRateSample> {
        self.samples.iter()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn newest(&self) -> Option<&HeartRateSample> {
        self.samples.back()
    }

    /// Value held once the averaging window runs dry but the stream is not yet stale.
    /// It is the newest reading, i.e. the last value the windowed mean produced.
    pub fn last_smoothed(&self) -> Option<f64> {
        self.last_smoothed
    }

    /// Appends a reading and evicts everything older than `s.t - window`.
    /// A reading with the same timestamp as the newest one replaces it.
    pub fn ingest(&mut self, s: HeartRateSample) -> Result<(), BiosignalError> {
        if !s.bpm.is_finite() || !(0.0..=MAX_BPM).contains(&s.bpm) {
            return Err(BiosignalError::BpmOutOfRange(s.bpm));
        }
        if let Some(newest) = self.samples.back() {
            if s.t < newest.t {
                return Err(BiosignalError::OutOfOrderSample {
                    t: s.t,
                    newest: newest.t,
                });
            }
            if s.t == newest.t {
                self.samples.pop_back();
            }
        }
        self.samples.push_back(s);
        while let Some(front) = self.samples.front() {
            if s.t - front.t > self.window {
                self.samples.pop_front();
            } else {
                break;
            }
        }
        self.last_smoothed = Some(s.bpm);
        Ok(())
    }

    /// Mean bpm over `[now - window, now]`, holding the last value while the
    /// newest reading is younger than the staleness timeout.
    pub fn smoothed_bpm(&self, now: f64) -> Option<f64> {
        let newest = self.samples.back()?;
        let lo = now - self.window;
        let (sum, n) = self
            .samples
            .iter()
            .filter(|s| s.t >= lo)
            .fold((0.0, 0usize), |(a, n), s| (a + s.bpm, n + 1));
        if n > 0 {
            return Some(sum / n as f64);
        }
        if now - newest.t <= self.staleness_timeout {
            self.last_smoothed
        } else {
            None
        }
    }

    pub fn is_flatline(&self, now: f64) -> bool {
        flatline(self.smoothed_bpm(now))
    }
}

/// Flatline: the stream is dead or averages to zero.
pub fn flatline(smoothed: Option<f64>) -> bool {
    matches!(smoothed, None | Some(0.0))
}

/// Pulse shape as a function of beat fraction `f ∈ [0, 1)`.
pub fn pulse_shape(fraction: f64) -> f64 {
    let d = (fraction - PULSE_PEAK) / PULSE_WIDTH;
    (-0.5 * d * d).exp()
}

/// Synthetic PPG-like waveform in `[0, 1]`, periodic with period `60 / bpm`.
pub fn ppg_waveform(bpm: f64, t: f64) -> Result<f64, BiosignalError> {
    if !(bpm > 0.0) || !bpm.is_finite() {
        return Err(BiosignalError::NonPositiveBpm(bpm));
    }
    let period = 60.0 / bpm;
    let tau = t.rem_euclid(period);
    let d = (tau - PULSE_PEAK * period) / (PULSE_WIDTH * period);
    Ok((-0.5 * d * d).exp())
}

/// Min-max normalization of the latest value over the trailing window.
/// A flat window normalizes to 0.
pub fn normalize_window(raw: &[(f64, f64)], window: f64, now: f64) -> Result<f64, BiosignalError> {
    let lo = now - window;
    let mut latest: Option<(f64, f64)> = None;
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(t, v) in raw.iter().filter(|(t, _)| *t >= lo && *t <= now) {
        min = min.min(v);
        max = max.max(v);
        if latest.is_none_or(|(lt, _)| t >= lt) {
            latest = Some((t, v));
        }
    }
    let (_, v) = latest.ok_or(BiosignalError::EmptyWindow)?;
    if max == min {
        return Ok(0.0);
    }
    Ok((v - min) / (max - min))
}

/// Parses a raw PPG trace (`t_seconds,value`).
pub fn parse_raw_trace(text: &str) -> Result<Vec<(f64, f64)>, BiosignalError> {
    Ok(table::parse_rows(text, 2)?.into_iter().map(|r| (r[0], r[1])).collect())
}

/// Beat phase in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeatPhase(f64);

impl BeatPhase {
    pub fn new(radians: f64) -> Self {
        BeatPhase(wrap(radians))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Fraction of the current beat, in `[0, 1)`.
    pub fn fraction(self) -> f64 {
        self.0 / TAU
    }

    /// Advances by `bpm/60` cycles per second. Frozen at 0 bpm.
    pub fn advance(self, bpm: f64, dt: f64) -> Self {
        if bpm <= 0.0 || dt <= 0.0 {
            return self;
        }
        BeatPhase::new(self.0 + TAU * (bpm / 60.0) * dt)
    }

    /// Waveform value at this phase; identical to `ppg_waveform` at `τ = phase/2π · T`.
    pub fn waveform(self) -> f64 {
        pulse_shape(self.fraction())
    }
}

fn wrap(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}
