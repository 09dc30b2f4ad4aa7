use serde::{Deserialize, Serialize};

use super::EmulatorError;
use crate::biosignal::{HeartRateSample, MAX_BPM};
use crate::table;

/// Seconds between heart-rate readings.
pub const EMIT_INTERVAL: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Hold each keyframe until the next one.
    #[default]
    Step,
    Linear,
}

impl std::str::FromStr for Interpolation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "step" => Ok(Interpolation::Step),
            "linear" => Ok(Interpolation::Linear),
            other => Err(format!("unknown interpolation `{other}` (step or linear)")),
        }
    }
}

/// Authored heart-rate keyframes.
#[derive(Debug, Clone, PartialEq)]
pub struct HrTrace {
    keys: Vec<(f64, f64)>,
    interpolation: Interpolation,
}

impl HrTrace {
    pub fn new(keys: Vec<(f64, f64)>, interpolation: Interpolation) -> Result<Self, EmulatorError> {
        if keys.is_empty() {
            return Err(EmulatorError::Trace("no keyframes".into()));
        }
        for w in keys.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(EmulatorError::Trace(format!(
                    "t must strictly increase ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(t, bpm)) = keys
            .iter()
            .find(|(t, b)| !t.is_finite() || !(0.0..=MAX_BPM).contains(b))
        {
            return Err(EmulatorError::Trace(format!(
                "bpm {bpm} at t={t} outside [0, {MAX_BPM}]"
            )));
        }
        Ok(Self { keys, interpolation })
    }

    pub fn constant(bpm: f64) -> Result<Self, EmulatorError> {
        Self::new(vec![(0.0, bpm)], Interpolation::Step)
    }

    /// `t_seconds,bpm` rows.
    pub fn parse_csv(text: &str, interpolation: Interpolation) -> Result<Self, EmulatorError> {
        let rows = table::parse_rows(text, 2)?;
        Self::new(rows.into_iter().map(|r| (r[0], r[1])).collect(), interpolation)
    }

    pub fn keyframes(&self) -> &[(f64, f64)] {
        &self.keys
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Single bpm when the trace never changes.
    pub fn constant_bpm(&self) -> Option<f64> {
        let first = self.keys[0].1;
        self.keys.iter().all(|k| k.1 == first).then_some(first)
    }

    /// Clamped to the first and last keyframes outside their span.
    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.keys.partition_point(|k| k.0 <= t);
        if i == 0 {
            return self.keys[0].1;
        }
        let (t0, b0) = self.keys[i - 1];
        match (self.interpolation, self.keys.get(i)) {
            (Interpolation::Linear, Some(&(t1, b1))) => b0 + (b1 - b0) * (t - t0) / (t1 - t0),
            _ => b0,
        }
    }
}

/// Emits one reading at t = 0 and every [`EMIT_INTERVAL`] after.
#[derive(Debug, Clone)]
pub struct WearableEmulator {
    trace: HrTrace,
    interval: f64,
    next: u64,
}

impl WearableEmulator {
    pub fn new(trace: HrTrace) -> Self {
        Self::with_interval(trace, EMIT_INTERVAL)
    }

    pub fn with_interval(trace: HrTrace, interval: f64) -> Self {
        Self {
            trace,
            interval,
            next: 0,
        }
    }

    pub fn next_emit(&self) -> f64 {
        self.next as f64 * self.interval
    }

    /// Readings scheduled at or before `now`, oldest first.
    pub fn due(&mut self, now: f64) -> Vec<HeartRateSample> {
        let mut out = Vec::new();
        while self.next_emit() <= now + 1e-9 {
            let t = self.next_emit();
            out.push(HeartRateSample {
                t,
                bpm: self.trace.value_at(t),
            });
            self.next += 1;
        }
        out
    }
}
