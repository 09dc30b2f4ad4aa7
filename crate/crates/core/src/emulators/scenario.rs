//! Declarative end-to-end runs on the virtual clock.
//!
//! A scenario names a heart-rate trace, an optional hand script, a haptic mode
//! and a list of checks. The runner steps the emulators and the frame loop
//! tick by tick in one thread, pushing every message through the wire codec.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    EmulatorError, HandEmulator, HandScript, HapticDevice, HapticDiagnostics, HrTrace, Interpolation, PalmKey,
    WearableEmulator,
};
use crate::analysis::{autocorrelation_period, transitions};
use crate::config::Config;
use crate::geometry::Vec3;
use crate::hand::{HandFrame, HandId};
use crate::haptics::{write_focal_log, FocalPointCommand, HapticMode};
use crate::scene::HeartHologram;
use crate::sync::core::{write_frame_log, ServerCore};
use crate::sync::protocol::{decode, encode, FocalBatch, FrameState, Message};

pub const BUNDLED: [(&str, &str); 4] = [
    ("rest-touch", include_str!("../../scenarios/rest-touch.toml")),
    ("flatline", include_str!("../../scenarios/flatline.toml")),
    ("exercise", include_str!("../../scenarios/exercise.toml")),
    ("sweep", include_str!("../../scenarios/sweep.toml")),
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    duration: f64,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    config: Config,
    hr: HrSpec,
    #[serde(default)]
    hand: Option<HandSpec>,
    #[serde(default, rename = "assert")]
    asserts: Vec<Check>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct HrSpec {
    #[serde(default)]
    keyframes: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    file: Option<PathBuf>,
    #[serde(default)]
    interpolation: Interpolation,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandSpec {
    #[serde(default)]
    keyframes: Option<Vec<[f64; 7]>>,
    #[serde(default)]
    file: Option<PathBuf>,
    #[serde(default = "right")]
    hand: HandId,
    #[serde(default, rename = "loop")]
    looped: bool,
}

fn right() -> HandId {
    HandId::Right
}

fn one() -> f64 {
    1.0
}

/// A declarative check evaluated after the run.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// `haptic_active` flips within `frames` frames of the analytic crossings.
    GateMatchesCrossings {
        #[serde(default = "one")]
        frames: f64,
    },
    /// No commands for a hand in frames where it is not touching.
    NoFocalWhileInactive,
    /// Every command has the same circle radius and intensity.
    StaticFocal,
    /// Fundamental period of the modulated quantity over `[from, to)`.
    EnvelopePeriod {
        from: f64,
        to: f64,
        period: f64,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    /// Frame bpm within `tolerance` of `bpm` from time `by` onward.
    SmoothedBpmReaches { bpm: f64, tolerance: f64, by: f64 },
    /// Every frame's surface scale equals `value`.
    ScaleConstant { value: f64 },
    /// The haptic device saw no invalid commands.
    NoViolations,
}

impl Check {
    pub fn name(&self) -> String {
        match self {
            Check::GateMatchesCrossings { frames } => format!("gate_matches_crossings(frames={frames})"),
            Check::NoFocalWhileInactive => "no_focal_while_inactive".into(),
            Check::StaticFocal => "static_focal".into(),
            Check::EnvelopePeriod { from, to, period, .. } => format!("envelope_period({from}..{to}, {period} s)"),
            Check::SmoothedBpmReaches { bpm, tolerance, by } => {
                format!("smoothed_bpm_reaches({bpm}±{tolerance} by {by} s)")
            }
            Check::ScaleConstant { value } => format!("scale_constant({value})"),
            Check::NoViolations => "no_violations".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub mode: HapticMode,
    pub config: Config,
    pub hr: HrTrace,
    pub hand: Option<HandScript>,
    pub checks: Vec<Check>,
}

impl Scenario {
    /// Parses a scenario document; relative trace paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, EmulatorError> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| EmulatorError::Scenario(e.to_string()))?;
        if !(f.duration > 0.0) || !f.duration.is_finite() {
            return Err(EmulatorError::Scenario(format!(
                "duration must be positive, got {}",
                f.duration
            )));
        }
        let mode: HapticMode = match &f.mode {
            Some(m) => m
                .parse()
                .map_err(|e: crate::haptics::HapticsError| EmulatorError::Scenario(e.to_string()))?,
            None => f
                .config
                .haptics
                .mode()
                .map_err(|e| EmulatorError::Scenario(e.to_string()))?,
        };
        let mut config = f.config.clone();
        config.haptics = config.haptics.with_mode(mode);
        config.validate().map_err(|e| EmulatorError::Scenario(e.to_string()))?;

        let read = |p: &Path| fs::read_to_string(base.join(p));
        let hr = match (&f.hr.keyframes, &f.hr.file) {
            (Some(k), None) => HrTrace::new(k.iter().map(|r| (r[0], r[1])).collect(), f.hr.interpolation)?,
            (None, Some(p)) => HrTrace::parse_csv(&read(p)?, f.hr.interpolation)?,
            _ => {
                return Err(EmulatorError::Scenario(
                    "[hr] needs exactly one of keyframes or file".into(),
                ))
            }
        };
        let hand = match &f.hand {
            None => None,
            Some(h) => Some(match (&h.keyframes, &h.file) {
                (Some(k), None) => HandScript::new(
                    k.iter()
                        .map(|r| PalmKey {
                            t: r[0],
                            palm: Vec3::new(r[1], r[2], r[3]),
                            normal: Vec3::new(r[4], r[5], r[6]),
                        })
                        .collect(),
                    h.hand,
                    h.looped,
                )?,
                (None, Some(p)) => HandScript::parse_csv(&read(p)?, h.hand, h.looped)?,
                _ => {
                    return Err(EmulatorError::Scenario(
                        "[hand] needs exactly one of keyframes or file".into(),
                    ))
                }
            }),
        };
        Ok(Scenario {
            name: f.name,
            duration: f.duration,
            mode,
            config,
            hr,
            hand,
            checks: f.asserts,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EmulatorError> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn bundled(name: &str) -> Result<Self, EmulatorError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| EmulatorError::Scenario(format!("no bundled scenario `{name}`")))?;
        Self::from_toml(text, Path::new("."))
    }

    pub fn ticks(&self) -> u64 {
        (self.duration * self.config.server.tick_hz).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub frames: Vec<FrameState>,
    pub batches: Vec<FocalBatch>,
    pub focal: Vec<FocalPointCommand>,
    pub device: HapticDiagnostics,
    pub hands_dropped: u64,
    pub results: Vec<CheckResult>,
}

/// Runs on the virtual clock. Before tick n every emulator message due at or
/// before `n / tick_hz` is encoded, decoded and submitted.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioRun, EmulatorError> {
    let mut core = ServerCore::new(&s.config).map_err(|e| EmulatorError::Scenario(e.to_string()))?;
    let mut wearable = WearableEmulator::new(s.hr.clone());
    let mut hands = s.hand.clone().map(|h| HandEmulator::new(h, s.config.tracker));
    let mut device = HapticDevice::new();
    let hz = s.config.server.tick_hz;
    let n_ticks = s.ticks();
    let mut frames = Vec::with_capacity(n_ticks as usize);
    let mut batches = Vec::with_capacity(n_ticks as usize);

    let deliver = |core: &mut ServerCore, m: Message, now: f64| -> Result<(), EmulatorError> {
        let wire = decode(&encode(&m)).map_err(|e| EmulatorError::Scenario(format!("codec: {e}")))?;
        if let Some(Message::Error { code, detail }) = core.submit(wire, now) {
            return Err(EmulatorError::Scenario(format!(
                "server rejected emulator message: {code}: {detail}"
            )));
        }
        Ok(())
    };

    for n in 1..=n_ticks {
        let now = n as f64 / hz;
        for sample in wearable.due(now) {
            deliver(&mut core, Message::HrUpdate(sample), now)?;
        }
        if let Some(h) = hands.as_mut() {
            for f in h.due(now) {
                deliver(&mut core, Message::HandUpdate(f), now)?;
            }
        }
        let out = core.frame_tick(now);
        device.receive(&out.focal)?;
        frames.push(out.frame);
        batches.push(out.focal);
    }

    let mut run = ScenarioRun {
        scenario: s.clone(),
        frames,
        batches,
        focal: device.accepted().to_vec(),
        device: device.diagnostics(),
        hands_dropped: hands.as_ref().map_or(0, HandEmulator::dropped),
        results: Vec::new(),
    };
    run.results = s.checks.iter().map(|c| run.evaluate(c)).collect();
    Ok(run)
}

/// Times where the scripted hand starts or stops touching the hologram,
/// assuming the heart beats at a constant `bpm` from t = 0.
///
/// Found by scanning at `step` and bisecting each sign change.
pub fn analytic_crossings(
    emu: &HandEmulator,
    heart: &HeartHologram,
    bpm: f64,
    duration: f64,
    step: f64,
) -> Vec<(f64, bool)> {
    let touching = |t: f64| -> bool {
        let Some(frame) = emu.frame_at(t) else {
            return false;
        };
        let mut h = *heart;
        h.bpm = Some(bpm);
        h.flatline = bpm <= 0.0;
        h.phase = crate::biosignal::BeatPhase::new(std::f64::consts::TAU * bpm / 60.0 * t);
        touches(&frame, &h)
    };
    let mut out = Vec::new();
    let mut prev_t = 0.0;
    let mut prev = touching(0.0);
    let steps = (duration / step).ceil() as u64;
    for i in 1..=steps {
        let t = (i as f64 * step).min(duration);
        let cur = touching(t);
        if cur != prev {
            let (mut lo, mut hi) = (prev_t, t);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if touching(mid) == prev {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push((hi, cur));
        }
        prev = cur;
        prev_t = t;
    }
    out
}

fn touches(frame: &HandFrame, heart: &HeartHologram) -> bool {
    frame.points().any(|p| heart.signed_distance(p) <= 0.0)
}

impl ScenarioRun {
    fn tick_dt(&self) -> f64 {
        self.scenario.config.tick_dt()
    }

    fn active_series(&self, hand: HandId) -> Vec<bool> {
        self.frames
            .iter()
            .map(|f| f.hands.iter().any(|h| h.hand == hand && h.haptic_active))
            .collect()
    }

    /// Per-command (time, radius, intensity), radius measured from the frame's target.
    pub fn envelope(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for (frame, batch) in self.frames.iter().zip(&self.batches) {
            for c in &batch.commands {
                let Some(target) = frame.hands.iter().find(|h| h.hand == c.hand).and_then(|h| h.target) else {
                    continue;
                };
                out.push((c.t, c.pos.distance(target), c.intensity));
            }
        }
        out
    }

    fn evaluate(&self, check: &Check) -> CheckResult {
        let (passed, detail) = match check {
            Check::GateMatchesCrossings { frames } => self.check_gate(*frames),
            Check::NoFocalWhileInactive => {
                let mut bad = 0usize;
                for (frame, batch) in self.frames.iter().zip(&self.batches) {
                    for c in &batch.commands {
                        let active = frame.hands.iter().any(|h| h.hand == c.hand && h.haptic_active);
                        if !active {
                            bad += 1;
                        }
                    }
                }
                (bad == 0, format!("{bad} commands while inactive"))
            }
            Check::StaticFocal => {
                let env = self.envelope();
                if env.is_empty() {
                    (false, "no focal commands".into())
                } else {
                    let (r0, i0) = (env[0].1, env[0].2);
                    let dr = env.iter().map(|e| (e.1 - r0).abs()).fold(0.0, f64::max);
                    let di = env.iter().map(|e| (e.2 - i0).abs()).fold(0.0, f64::max);
                    (
                        dr < 1e-9 && di == 0.0,
                        format!(
                            "{} commands, radius spread {dr:.3e}, intensity spread {di:.3e}",
                            env.len()
                        ),
                    )
                }
            }
            Check::EnvelopePeriod {
                from,
                to,
                period,
                tolerance,
            } => {
                let tol = tolerance.unwrap_or(self.tick_dt());
                let env: Vec<_> = self
                    .envelope()
                    .into_iter()
                    .filter(|e| e.0 >= *from && e.0 < *to)
                    .collect();
                let series: Vec<f64> = match self.scenario.mode {
                    HapticMode::PulsingIntensity => env.iter().map(|e| e.2).collect(),
                    _ => env.iter().map(|e| e.1).collect(),
                };
                let dt = if env.len() > 1 {
                    (env[env.len() - 1].0 - env[0].0) / (env.len() - 1) as f64
                } else {
                    0.0
                };
                match autocorrelation_period(&series, dt) {
                    Some(p) => (
                        (p - period).abs() <= tol,
                        format!("measured {p:.4} s over {} samples", series.len()),
                    ),
                    None => (false, format!("no periodicity in {} samples", series.len())),
                }
            }
            Check::SmoothedBpmReaches { bpm, tolerance, by } => {
                let ok = |f: &FrameState| f.heart.bpm.is_some_and(|b| (b - bpm).abs() <= *tolerance);
                let settled = self.frames.iter().rposition(|f| !ok(f)).map_or(0, |i| i + 1);
                match self.frames.get(settled) {
                    Some(f) => (f.t <= *by, format!("within tolerance from t={:.4} s", f.t)),
                    None => (false, "never settled".into()),
                }
            }
            Check::ScaleConstant { value } => {
                let worst = self
                    .frames
                    .iter()
                    .map(|f| (f.heart.scale - value).abs())
                    .fold(0.0, f64::max);
                (worst < 1e-12, format!("max deviation {worst:.3e}"))
            }
            Check::NoViolations => (
                self.device.violations == 0,
                format!("{} violations", self.device.violations),
            ),
        };
        CheckResult {
            name: check.name(),
            passed,
            detail,
        }
    }

    /// Expected flip: the first frame at or after the first tracker sample at
    /// or after the crossing.
    fn check_gate(&self, frames: f64) -> (bool, String) {
        let Some(script) = &self.scenario.hand else {
            return (false, "scenario has no hand".into());
        };
        let Some(bpm) = self.scenario.hr.constant_bpm() else {
            return (false, "needs a constant heart rate".into());
        };
        let emu = HandEmulator::new(script.clone(), self.scenario.config.tracker);
        let heart = match HeartHologram::new(&self.scenario.config.scene) {
            Ok(h) => h,
            Err(e) => return (false, e.to_string()),
        };
        let dt = self.tick_dt();
        let rate = self.scenario.config.tracker.rate;
        let expected: Vec<(f64, bool)> = analytic_crossings(&emu, &heart, bpm, self.scenario.duration, 1e-3)
            .into_iter()
            .map(|(c, on)| {
                let sample = (c * rate - 1e-9).ceil() / rate;
                ((sample / dt - 1e-9).ceil() * dt, on)
            })
            .filter(|(t, _)| *t <= self.scenario.duration)
            .collect();
        let series = self.active_series(script.hand);
        let observed: Vec<(f64, bool)> = transitions(&series)
            .into_iter()
            .map(|(i, on)| (self.frames[i].t, on))
            .collect();
        let mut detail = String::new();
        let _ = write!(
            detail,
            "expected {:?}, observed {:?}",
            fmt_flips(&expected),
            fmt_flips(&observed)
        );
        if expected.len() != observed.len() {
            return (false, detail);
        }
        let ok = expected
            .iter()
            .zip(&observed)
            .all(|(e, o)| e.1 == o.1 && (e.0 - o.0).abs() <= frames * dt + 1e-9);
        (ok && !expected.is_empty(), detail)
    }

    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn report_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {} ({} s, mode {}, {} frames)",
            self.scenario.name,
            self.scenario.duration,
            self.scenario.mode,
            self.frames.len()
        );
        let _ = writeln!(
            s,
            "haptic device: {} batches, {} commands, {} violations",
            self.device.batches, self.device.commands, self.device.violations
        );
        for r in &self.results {
            let _ = writeln!(s, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        }
        let _ = writeln!(
            s,
            "{}",
            if self.passed() {
                "all checks passed"
            } else {
                "some checks FAILED"
            }
        );
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("check,passed,detail\n");
        for r in &self.results {
            let _ = writeln!(
                s,
                "\"{}\",{},\"{}\"",
                r.name.replace('"', "'"),
                r.passed,
                r.detail.replace('"', "'")
            );
        }
        s
    }

    pub fn focal_log(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        let comments = vec![
            format!("scenario {}", self.scenario.name),
            format!("mode {}", self.scenario.mode),
        ];
        write_focal_log(&mut buf, &comments, &self.focal).expect("writing to memory");
        buf
    }

    /// Writes `report.txt`, `summary.csv`, `focal.csv` and `frames.csv` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), self.report_text())?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        fs::write(dir.join("focal.csv"), self.focal_log())?;
        let mut frames = Vec::new();
        write_frame_log(&mut frames, &self.frames)?;
        fs::write(dir.join("frames.csv"), frames)
    }
}

fn fmt_flips(v: &[(f64, bool)]) -> Vec<String> {
    v.iter()
        .map(|(t, on)| format!("{}@{t:.4}", if *on { "on" } else { "off" }))
        .collect()
}
