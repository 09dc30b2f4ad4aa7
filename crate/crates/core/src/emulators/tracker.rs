use super::EmulatorError;
use crate::geometry::Vec3;
use crate::hand::{in_tracking_fov, HandFrame, HandId, TrackerConfig, DEFAULT_FINGERTIP_RADIUS};
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PalmKey {
    pub t: f64,
    pub palm: Vec3,
    pub normal: Vec3,
}

/// Palm keyframes, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct HandScript {
    keys: Vec<PalmKey>,
    pub hand: HandId,
    pub looped: bool,
}

impl HandScript {
    pub fn new(keys: Vec<PalmKey>, hand: HandId, looped: bool) -> Result<Self, EmulatorError> {
        if keys.is_empty() {
            return Err(EmulatorError::Script("no keyframes".into()));
        }
        for w in keys.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(EmulatorError::Script(format!(
                    "t must strictly increase ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        for k in &keys {
            if !k.palm.is_finite() || k.normal.normalized().is_none() {
                return Err(EmulatorError::Script(format!("bad pose at t={}", k.t)));
            }
        }
        Ok(Self { keys, hand, looped })
    }

    /// A palm that never moves.
    pub fn fixed(palm: Vec3, normal: Vec3, hand: HandId) -> Result<Self, EmulatorError> {
        Self::new(vec![PalmKey { t: 0.0, palm, normal }], hand, false)
    }

    /// `t,palm_x,palm_y,palm_z,nx,ny,nz` rows.
    pub fn parse_csv(text: &str, hand: HandId, looped: bool) -> Result<Self, EmulatorError> {
        let rows = table::parse_rows(text, 7)?;
        let keys = rows
            .into_iter()
            .map(|r| PalmKey {
                t: r[0],
                palm: Vec3::new(r[1], r[2], r[3]),
                normal: Vec3::new(r[4], r[5], r[6]),
            })
            .collect();
        Self::new(keys, hand, looped)
    }

    pub fn keyframes(&self) -> &[PalmKey] {
        &self.keys
    }

    /// Palm center and unit normal at `t`.
    pub fn pose_at(&self, t: f64) -> (Vec3, Vec3) {
        let first = self.keys[0].t;
        let last = self.keys[self.keys.len() - 1].t;
        let t = if self.looped && last > first && t > last {
            first + (t - first).rem_euclid(last - first)
        } else {
            t
        };
        let i = self.keys.partition_point(|k| k.t <= t);
        let (palm, normal) = if i == 0 {
            (self.keys[0].palm, self.keys[0].normal)
        } else if i == self.keys.len() {
            (self.keys[i - 1].palm, self.keys[i - 1].normal)
        } else {
            let (a, b) = (self.keys[i - 1], self.keys[i]);
            let u = (t - a.t) / (b.t - a.t);
            (a.palm + (b.palm - a.palm) * u, a.normal + (b.normal - a.normal) * u)
        };
        (palm, normal.normalized().unwrap_or(Vec3::Z))
    }
}

/// Samples a script at the tracker rate and drops poses it could not see.
#[derive(Debug, Clone)]
pub struct HandEmulator {
    script: HandScript,
    tracker: TrackerConfig,
    fingertip_radius: f64,
    next: u64,
    dropped: u64,
}

impl HandEmulator {
    pub fn new(script: HandScript, tracker: TrackerConfig) -> Self {
        Self {
            script,
            tracker,
            fingertip_radius: DEFAULT_FINGERTIP_RADIUS,
            next: 0,
            dropped: 0,
        }
    }

    pub fn with_fingertip_radius(mut self, r: f64) -> Self {
        self.fingertip_radius = r;
        self
    }

    pub fn script(&self) -> &HandScript {
        &self.script
    }

    pub fn tracker(&self) -> &TrackerConfig {
        &self.tracker
    }

    /// Samples skipped because the palm was outside the tracker frustum.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn sample_time(&self, k: u64) -> f64 {
        k as f64 / self.tracker.rate
    }

    pub fn next_sample(&self) -> f64 {
        self.sample_time(self.next)
    }

    /// The frame the tracker would report at `t`, if it can see the palm.
    pub fn frame_at(&self, t: f64) -> Option<HandFrame> {
        let (palm, normal) = self.script.pose_at(t);
        in_tracking_fov(palm, &self.tracker)
            .then(|| HandFrame::synthesize(t, self.script.hand, palm, normal, self.fingertip_radius))
    }

    /// Frames scheduled at or before `now`, oldest first.
    pub fn due(&mut self, now: f64) -> Vec<HandFrame> {
        let mut out = Vec::new();
        while self.next_sample() <= now + 1e-9 {
            let t = self.next_sample();
            match self.frame_at(t) {
                Some(f) => out.push(f),
                None => self.dropped += 1,
            }
            self.next += 1;
        }
        out
    }
}
