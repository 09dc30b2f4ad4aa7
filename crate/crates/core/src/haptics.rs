//! Focal-point command synthesis.
//!
//! The base pattern is a single focal point circling at 100 Hz in the plane of
//! the palm. Two heartbeat mappings ride on top of it: *pulsing intensity*
//! modulates the focal intensity, *pulsing radius* modulates the circle radius.
//! Both read the same waveform that drives the hologram's visual pulsation.

use std::f64::consts::TAU;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{plane_basis, Vec3};
use crate::hand::{intersect_targets, HandFrame, HandId};
use crate::scene::SceneState;

/// Perceptible vibration band for amplitude modulation, Hz.
pub const AM_BAND: (f64, f64) = (5.0, 500.0);

#[derive(Debug, Error, PartialEq)]
pub enum HapticsError {
    #[error("circle radius must be positive, got {0}")]
    ZeroRadius(f64),
    #[error("normalized signal {0} outside [0, 1]")]
    SignalOutOfRange(f64),
    #[error("modulation frequency {0} Hz outside the perceptible 5-500 Hz band")]
    ModulationOutOfPerceptibleRange(f64),
    #[error("unknown haptic mode `{0}` (expected intensity, radius or am)")]
    UnknownMode(String),
    #[error("invalid haptics config: {0}")]
    InvalidConfig(String),
}

/// Axis-aligned region above the array where focal points can be produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionVolume {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
}

impl InteractionVolume {
    /// 40 × 40 × 60 cm above the array center.
    pub const DEFAULT: InteractionVolume = InteractionVolume {
        x: (-0.20, 0.20),
        y: (-0.20, 0.20),
        z: (0.0, 0.60),
    };

    pub fn contains(&self, p: Vec3) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(p.x, self.x) && inside(p.y, self.y) && inside(p.z, self.z)
    }
}

pub fn validate_volume(p: Vec3) -> bool {
    InteractionVolume::DEFAULT.contains(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum HapticMode {
    PulsingIntensity,
    #[default]
    PulsingRadius,
    /// Fixed focal point, intensity modulated at the given frequency (Hz).
    AmFixed(f64),
}

impl HapticMode {
    pub fn am(frequency: f64) -> Result<Self, HapticsError> {
        check_am_frequency(frequency)?;
        Ok(HapticMode::AmFixed(frequency))
    }

    pub fn name(&self) -> &'static str {
        match self {
            HapticMode::PulsingIntensity => "intensity",
            HapticMode::PulsingRadius => "radius",
            HapticMode::AmFixed(_) => "am",
        }
    }
}

impl fmt::Display for HapticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HapticMode::AmFixed(fm) => write!(f, "am({fm} Hz)"),
            other => f.write_str(other.name()),
        }
    }
}

/// Parses `intensity`, `radius`, `am` (200 Hz) or `am:<hz>`.
impl FromStr for HapticMode {
    type Err = HapticsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intensity" | "pulsing-intensity" => Ok(HapticMode::PulsingIntensity),
            "radius" | "pulsing-radius" => Ok(HapticMode::PulsingRadius),
            "am" => HapticMode::am(200.0),
            other => match other.strip_prefix("am:").map(str::parse::<f64>) {
                Some(Ok(f)) => HapticMode::am(f),
                _ => Err(HapticsError::UnknownMode(other.to_string())),
            },
        }
    }
}

fn check_am_frequency(f: f64) -> Result<(), HapticsError> {
    if f.is_finite() && f >= AM_BAND.0 && f <= AM_BAND.1 {
        Ok(())
    } else {
        Err(HapticsError::ModulationOutOfPerceptibleRange(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Intensity,
    Radius,
    Am,
}

/// Circle and heartbeat-mapping parameters plus the device command rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapticsConfig {
    pub mode: ModeName,
    pub am_frequency: f64,
    pub r_max: f64,
    pub r_min: f64,
    pub draw_rate: f64,
    pub base_intensity: f64,
    pub min_intensity: f64,
    /// Focal commands per second sent to the device.
    pub command_rate: f64,
}

impl Default for HapticsConfig {
    fn default() -> Self {
        Self {
            mode: ModeName::Radius,
            am_frequency: 200.0,
            r_max: 0.03,
            r_min: 0.01,
            draw_rate: 100.0,
            base_intensity: 1.0,
            min_intensity: 0.2,
            command_rate: 500.0,
        }
    }
}

impl HapticsConfig {
    pub fn with_mode(mut self, mode: HapticMode) -> Self {
        match mode {
            HapticMode::PulsingIntensity => self.mode = ModeName::Intensity,
            HapticMode::PulsingRadius => self.mode = ModeName::Radius,
            HapticMode::AmFixed(f) => {
                self.mode = ModeName::Am;
                self.am_frequency = f;
            }
        }
        self
    }

    pub fn mode(&self) -> Result<HapticMode, HapticsError> {
        Ok(match self.mode {
            ModeName::Intensity => HapticMode::PulsingIntensity,
            ModeName::Radius => HapticMode::PulsingRadius,
            ModeName::Am => HapticMode::am(self.am_frequency)?,
        })
    }

    pub fn validate(&self) -> Result<(), HapticsError> {
        let bad = |k: &str, v: f64| Err(HapticsError::InvalidConfig(format!("haptics.{k} = {v}")));
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return bad("r_min", self.r_min);
        }
        if !(self.draw_rate > 0.0 && self.draw_rate.is_finite()) {
            return bad("draw_rate", self.draw_rate);
        }
        if !(self.command_rate > 0.0 && self.command_rate.is_finite()) {
            return bad("command_rate", self.command_rate);
        }
        if !(0.0..=1.0).contains(&self.base_intensity) {
            return bad("base_intensity", self.base_intensity);
        }
        if !(0.0..=self.base_intensity).contains(&self.min_intensity) {
            return bad("min_intensity", self.min_intensity);
        }
        if self.mode == ModeName::Am {
            check_am_frequency(self.am_frequency)
                .map_err(|_| HapticsError::InvalidConfig(format!("haptics.am_frequency = {}", self.am_frequency)))?;
        }
        Ok(())
    }

    /// Intensity under *pulsing intensity*; the radius stays at `r_max`.
    pub fn pulsing_intensity(&self, s_norm: f64) -> Result<f64, HapticsError> {
        check_unit(s_norm)?;
        Ok(self.min_intensity + (self.base_intensity - self.min_intensity) * s_norm)
    }

    /// Radius under *pulsing radius*; the intensity stays at `base_intensity`.
    pub fn pulsing_radius(&self, s_norm: f64) -> Result<f64, HapticsError> {
        check_unit(s_norm)?;
        Ok(self.r_min + (self.r_max - self.r_min) * s_norm)
    }

    /// Sub-samples per frame of length `dt`: `ceil(dt · command_rate)`.
    pub fn samples_per_frame(&self, dt: f64) -> usize {
        let n = dt * self.command_rate;
        // guard against 8.000000001-style rounding
        ((n - 1e-9).ceil() as usize).max(1)
    }
}

fn check_unit(s: f64) -> Result<(), HapticsError> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(HapticsError::SignalOutOfRange(s))
    }
}

/// Position on the circle of `radius` around `center` in the plane normal to
/// `normal`, at angle `2π · draw_rate · t`.
pub fn stm_circle_point(center: Vec3, normal: Vec3, radius: f64, draw_rate: f64, t: f64) -> Result<Vec3, HapticsError> {
    if !(radius > 0.0) {
        return Err(HapticsError::ZeroRadius(radius));
    }
    let (u, v) = plane_basis(normal);
    let theta = TAU * draw_rate * t;
    Ok(center + (u * theta.cos() + v * theta.sin()) * radius)
}

/// AM intensity `0.5 · (1 + sin(2π f t))`.
pub fn am_intensity(frequency: f64, t: f64) -> f64 {
    0.5 * (1.0 + (TAU * frequency * t).sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalPointCommand {
    pub t: f64,
    pub hand: HandId,
    pub pos: Vec3,
    pub intensity: f64,
}

impl FocalPointCommand {
    pub fn is_valid(&self) -> bool {
        self.t.is_finite() && self.pos.is_finite() && validate_volume(self.pos) && (0.0..=1.0).contains(&self.intensity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderDiagnostics {
    pub emitted: u64,
    pub dropped_out_of_volume: u64,
}

/// Stateless synthesis apart from the diagnostics tally.
#[derive(Debug, Clone)]
pub struct HapticRenderer {
    cfg: HapticsConfig,
    mode: HapticMode,
    diagnostics: RenderDiagnostics,
}

impl HapticRenderer {
    pub fn new(cfg: HapticsConfig) -> Result<Self, HapticsError> {
        cfg.validate()?;
        let mode = cfg.mode()?;
        Ok(Self {
            cfg,
            mode,
            diagnostics: RenderDiagnostics::default(),
        })
    }

    pub fn config(&self) -> &HapticsConfig {
        &self.cfg
    }

    pub fn mode(&self) -> HapticMode {
        self.mode
    }

    pub fn diagnostics(&self) -> RenderDiagnostics {
        self.diagnostics
    }

    /// Commands for the interval `[t, t + dt)` following the frame `scene`.
    ///
    /// Each hand touching the hologram gets one focal stream centered on its
    /// first target (palm, else nearest fingertip); other hands get nothing.
    pub fn render_tick<'a>(
        &mut self,
        scene: &SceneState,
        hands: impl IntoIterator<Item = &'a HandFrame>,
        t: f64,
        dt: f64,
    ) -> Vec<FocalPointCommand> {
        let mode = self.mode;
        self.render_with(scene, hands, t, dt, mode)
    }

    /// Amplitude-modulated variant with an explicit frequency.
    pub fn am_render_tick<'a>(
        &mut self,
        scene: &SceneState,
        hands: impl IntoIterator<Item = &'a HandFrame>,
        frequency: f64,
        t: f64,
        dt: f64,
    ) -> Result<Vec<FocalPointCommand>, HapticsError> {
        check_am_frequency(frequency)?;
        Ok(self.render_with(scene, hands, t, dt, HapticMode::AmFixed(frequency)))
    }

    fn render_with<'a>(
        &mut self,
        scene: &SceneState,
        hands: impl IntoIterator<Item = &'a HandFrame>,
        t: f64,
        dt: f64,
        mode: HapticMode,
    ) -> Vec<FocalPointCommand> {
        let mut out = Vec::new();
        if !(dt > 0.0) {
            return out;
        }
        let n = self.cfg.samples_per_frame(dt);
        let step = dt / n as f64;
        let heart = &scene.heart;
        for hand in hands {
            let Some(&target) = intersect_targets(hand, heart).first() else {
                continue;
            };
            let normal = hand.palm_normal;
            for k in 0..n {
                let offset = k as f64 * step;
                let tk = t + offset;
                let (pos, intensity) = match mode {
                    HapticMode::AmFixed(f) => (Some(target), am_intensity(f, tk)),
                    _ if heart.flatline => (
                        stm_circle_point(target, normal, self.cfg.r_max, self.cfg.draw_rate, tk).ok(),
                        self.cfg.base_intensity,
                    ),
                    stm => {
                        let s = heart.advanced(offset).waveform().clamp(0.0, 1.0);
                        let (radius, intensity) = match stm {
                            HapticMode::PulsingIntensity => (
                                self.cfg.r_max,
                                self.cfg.pulsing_intensity(s).unwrap_or(self.cfg.base_intensity),
                            ),
                            _ => (
                                self.cfg.pulsing_radius(s).unwrap_or(self.cfg.r_max),
                                self.cfg.base_intensity,
                            ),
                        };
                        (
                            stm_circle_point(target, normal, radius, self.cfg.draw_rate, tk).ok(),
                            intensity,
                        )
                    }
                };
                let cmd = pos.map(|pos| FocalPointCommand {
                    t: tk,
                    hand: hand.hand,
                    pos,
                    intensity,
                });
                match cmd {
                    Some(c) if c.is_valid() => {
                        self.diagnostics.emitted += 1;
                        out.push(c);
                    }
                    _ => self.diagnostics.dropped_out_of_volume += 1,
                }
            }
        }
        out
    }
}

/// Writes the focal command log: `#` header comments, a column header, then
/// `t,hand,x,y,z,intensity` rows at 6 decimal places.
pub fn write_focal_log<W: Write>(mut w: W, comments: &[String], commands: &[FocalPointCommand]) -> io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "t,hand,x,y,z,intensity")?;
    append_focal_rows(&mut w, commands)
}

pub fn append_focal_rows<W: Write>(mut w: W, commands: &[FocalPointCommand]) -> io::Result<()> {
    for c in commands {
        writeln!(
            w,
            "{:.6},{},{:.6},{:.6},{:.6},{:.6}",
            c.t,
            c.hand.as_str(),
            c.pos.x,
            c.pos.y,
            c.pos.z,
            c.intensity
        )?;
    }
    Ok(())
}

/// Reads a focal log back; comment and header lines are skipped.
pub fn read_focal_log<R: BufRead>(r: R) -> io::Result<Vec<FocalPointCommand>> {
    let bad = |line: usize| io::Error::new(io::ErrorKind::InvalidData, format!("focal log line {line} malformed"));
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t,") {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(bad(i + 1));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(i + 1));
        out.push(FocalPointCommand {
            t: num(cells[0])?,
            hand: cells[1].trim().parse().map_err(|_| bad(i + 1))?,
            pos: Vec3::new(num(cells[2])?, num(cells[3])?, num(cells[4])?),
            intensity: num(cells[5])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::autocorrelation_period;
    use crate::scene::SceneConfig;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3) -> bool {
        (a - b).norm() < 1e-9
    }

    fn palm_in_heart() -> HandFrame {
        HandFrame::synthesize(0.0, HandId::Right, SceneConfig::default().anchor, Vec3::Z, 0.04)
    }

    /// Runs the scene and renderer at 60 Hz with a constant smoothed bpm.
    fn run(mode: HapticMode, bpm: Option<f64>, seconds: f64, hand: &HandFrame) -> Vec<FocalPointCommand> {
        let mut r = HapticRenderer::new(HapticsConfig::default().with_mode(mode)).unwrap();
        let mut scene = SceneState::new(&SceneConfig::default()).unwrap();
        let dt = 1.0 / 60.0;
        let mut out = Vec::new();
        for n in 1..=(seconds * 60.0).round() as u64 {
            scene = scene.update(bpm, dt);
            out.extend(r.render_tick(&scene, [hand], n as f64 / 60.0, dt));
        }
        out
    }

    #[test]
    fn circle_examples() {
        let c = Vec3::new(0.0, 0.0, 0.2);
        assert!(close(
            stm_circle_point(c, Vec3::Z, 0.03, 100.0, 0.0).unwrap(),
            Vec3::new(0.03, 0.0, 0.2)
        ));
        assert!(close(
            stm_circle_point(c, Vec3::Z, 0.03, 100.0, 0.0025).unwrap(),
            Vec3::new(0.0, 0.03, 0.2)
        ));
        assert!(close(
            stm_circle_point(c, Vec3::Z, 0.03, 100.0, 0.010).unwrap(),
            Vec3::new(0.03, 0.0, 0.2)
        ));
        assert_eq!(
            stm_circle_point(c, Vec3::Z, 0.0, 100.0, 0.0),
            Err(HapticsError::ZeroRadius(0.0))
        );
    }

    #[test]
    fn mapping_examples() {
        let c = HapticsConfig::default();
        assert_eq!(c.pulsing_intensity(1.0).unwrap(), 1.0);
        assert_eq!(c.pulsing_intensity(0.0).unwrap(), 0.2);
        assert!((c.pulsing_intensity(0.5).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(c.pulsing_radius(1.0).unwrap(), 0.03);
        assert_eq!(c.pulsing_radius(0.0).unwrap(), 0.01);
        assert!((c.pulsing_radius(0.5).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(c.pulsing_radius(1.2), Err(HapticsError::SignalOutOfRange(1.2)));
        assert_eq!(c.pulsing_intensity(-0.1), Err(HapticsError::SignalOutOfRange(-0.1)));
    }

    #[test]
    fn volume_examples() {
        assert!(validate_volume(Vec3::new(0.0, 0.0, 0.30)));
        assert!(!validate_volume(Vec3::new(0.0, 0.0, 0.70)));
        assert!(!validate_volume(Vec3::new(0.21, 0.0, 0.30)));
        assert!(validate_volume(Vec3::new(0.20, -0.20, 0.60)));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("radius".parse::<HapticMode>().unwrap(), HapticMode::PulsingRadius);
        assert_eq!("am:5".parse::<HapticMode>().unwrap(), HapticMode::AmFixed(5.0));
        assert_eq!(
            "am:600".parse::<HapticMode>(),
            Err(HapticsError::ModulationOutOfPerceptibleRange(600.0))
        );
        assert!("wobble".parse::<HapticMode>().is_err());
    }

    #[test]
    fn samples_per_frame_at_60hz() {
        let c = HapticsConfig::default();
        assert_eq!(c.samples_per_frame(1.0 / 60.0), 9);
        assert_eq!(c.samples_per_frame(0.01), 5);
    }

    #[test]
    fn no_intersection_no_commands() {
        let far = HandFrame::synthesize(0.0, HandId::Right, Vec3::new(0.15, 0.0, 0.3), Vec3::Z, 0.04);
        assert!(run(HapticMode::PulsingRadius, Some(60.0), 1.0, &far).is_empty());
    }

    #[test]
    fn flatline_is_static() {
        for mode in [HapticMode::PulsingRadius, HapticMode::PulsingIntensity] {
            let cmds = run(mode, Some(0.0), 2.0, &palm_in_heart());
            assert!(!cmds.is_empty());
            let center = SceneConfig::default().anchor;
            for c in &cmds {
                assert!((c.pos.distance(center) - 0.03).abs() < 1e-12);
                assert_eq!(c.intensity, 1.0);
            }
        }
    }

    #[test]
    fn radius_envelope_period_follows_bpm() {
        let cmds = run(HapticMode::PulsingRadius, Some(60.0), 4.0, &palm_in_heart());
        let center = SceneConfig::default().anchor;
        let radius: Vec<f64> = cmds.iter().map(|c| c.pos.distance(center)).collect();
        let dt = cmds[1].t - cmds[0].t;
        let period = autocorrelation_period(&radius, dt).unwrap();
        assert!((period - 1.0).abs() <= 1.0 / 60.0, "period {period}");
    }

    #[test]
    fn am_mode() {
        let mut r = HapticRenderer::new(HapticsConfig::default()).unwrap();
        let scene = SceneState::new(&SceneConfig::default())
            .unwrap()
            .update(Some(60.0), 1.0 / 60.0);
        let cmds = r
            .am_render_tick(&scene, [&palm_in_heart()], 200.0, 0.0, 1.0 / 60.0)
            .unwrap();
        assert_eq!(cmds[0].intensity, 0.5);
        assert!(cmds.iter().all(|c| c.pos == SceneConfig::default().anchor));
        assert_eq!(
            r.am_render_tick(&scene, [&palm_in_heart()], 600.0, 0.0, 1.0 / 60.0),
            Err(HapticsError::ModulationOutOfPerceptibleRange(600.0))
        );

        let cmds = run(HapticMode::AmFixed(5.0), Some(60.0), 2.0, &palm_in_heart());
        let series: Vec<f64> = cmds.iter().map(|c| c.intensity).collect();
        let period = autocorrelation_period(&series, cmds[1].t - cmds[0].t).unwrap();
        assert!((period - 0.2).abs() < 0.005, "period {period}");
    }

    #[test]
    fn out_of_volume_samples_are_dropped() {
        // palm near the +x wall: half the circle leaves the volume
        let cfg = SceneConfig {
            anchor: Vec3::new(0.19, 0.0, 0.3),
            ..SceneConfig::default()
        };
        let mut r = HapticRenderer::new(HapticsConfig::default()).unwrap();
        let scene = SceneState::new(&cfg).unwrap().update(Some(0.0), 1.0 / 60.0);
        let hand = HandFrame::synthesize(0.0, HandId::Right, cfg.anchor, Vec3::Z, 0.04);
        let cmds = r.render_tick(&scene, [&hand], 0.0, 0.1);
        let d = r.diagnostics();
        assert!(d.dropped_out_of_volume > 0);
        assert_eq!(d.emitted as usize, cmds.len());
        assert!(cmds.iter().all(FocalPointCommand::is_valid));
    }

    #[test]
    fn focal_log_round_trip() {
        let cmds = run(HapticMode::PulsingIntensity, Some(72.0), 0.2, &palm_in_heart());
        let mut buf = Vec::new();
        write_focal_log(&mut buf, &["mode=intensity".into()], &cmds).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "# mode=intensity
t,hand,x,y,z,intensity
"
        ));
        let back = read_focal_log(&buf[..]).unwrap();
        assert_eq!(back.len(), cmds.len());
        for (a, b) in back.iter().zip(&cmds) {
            assert!((a.t - b.t).abs() <= 5e-7 && (a.pos - b.pos).norm() < 1e-6 && a.hand == b.hand);
        }
    }

    proptest! {
        #[test]
        fn emitted_commands_are_valid_and_on_the_circle_rate(
            x in -0.1f64..0.1, y in -0.1f64..0.1, z in 0.2f64..0.4, bpm in 0.0f64..200.0, t0 in 0.0f64..100.0,
        ) {
            let hand = HandFrame::synthesize(0.0, HandId::Left, Vec3::new(x, y, z), Vec3::Z, 0.04);
            let mut r = HapticRenderer::new(HapticsConfig::default()).unwrap();
            let scene = SceneState::new(&SceneConfig::default()).unwrap().update(Some(bpm), 1.0 / 60.0);
            let cmds = r.render_tick(&scene, [&hand], t0, 1.0 / 60.0);
            let gate = !intersect_targets(&hand, &scene.heart).is_empty();
            prop_assert_eq!(!cmds.is_empty() || r.diagnostics().dropped_out_of_volume > 0, gate);
            for c in &cmds {
                prop_assert!(c.is_valid());
            }
        }
    }
}
