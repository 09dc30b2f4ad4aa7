//! Subcommands behind the `bioholo` binary.
//!
//! Exit codes: 0 success, 1 a check or validation failed, 2 usage, config,
//! I/O or port error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::array_physics::{sweep_plane, write_field_csv, ArrayLayout, SweepPlane};
use crate::biosignal::MAX_BPM;
use crate::config::Config;
use crate::emulators::net::{run_hand_emulator, run_haptic_emulator, run_wearable_emulator, EmulatorHandle};
use crate::emulators::scenario::{run_scenario, Scenario, BUNDLED};
use crate::emulators::{HandEmulator, HandScript, HapticDevice, HrTrace, Interpolation, WearableEmulator};
use crate::geometry::{CorrespondenceSet, Vec3};
use crate::hand::{HandFrame, HandId};
use crate::haptics::{write_focal_log, FocalPointCommand, HapticMode, HapticRenderer};
use crate::scene::SceneState;
use crate::sync::{self, ClockMode, ServeError, ServeOptions};

#[derive(Debug, Parser)]
#[command(name = "bioholo", version, about = "Mid-air haptic bio-hologram simulator")]
pub struct Cli {
    /// TOML config file (also $BIOHOLO_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sync server on TCP and WebSocket.
    Serve(ServeArgs),
    /// Run one device emulator against a server.
    Emulate(EmulateArgs),
    /// Run a scenario on the virtual clock and check its assertions.
    Scenario(ScenarioArgs),
    /// Render focal commands offline for a constant heart rate.
    Render(RenderArgs),
    /// Sweep the acoustic field of a focused array over a plane.
    Field(FieldArgs),
    /// Solve the headset-to-device transform from point pairs.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub tcp_port: Option<u16>,
    #[arg(long)]
    pub ws_port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
    /// Tick as fast as possible on simulated time.
    #[arg(long)]
    pub virtual_clock: bool,
    /// Stop after this many frames.
    #[arg(long)]
    pub ticks: Option<u64>,
    /// Write one CSV row per frame here.
    #[arg(long)]
    pub frame_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmulateArgs {
    #[command(subcommand)]
    pub kind: EmulateKind,
    /// Server address; defaults to the configured bind address and TCP port.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Stop after this many seconds.
    #[arg(long, global = true)]
    pub duration: Option<f64>,
    /// Send everything up to --duration without waiting.
    #[arg(long, global = true)]
    pub virtual_clock: bool,
}

#[derive(Debug, Subcommand)]
pub enum EmulateKind {
    /// Heart-rate wearable: one reading every 5 s.
    Wearable {
        /// CSV `t_seconds,bpm`.
        #[arg(long, conflicts_with = "bpm")]
        trace: Option<PathBuf>,
        /// Constant heart rate instead of a trace.
        #[arg(long)]
        bpm: Option<f64>,
        #[arg(long, default_value = "step")]
        interpolation: String,
    },
    /// Hand tracker: 100 Hz frames from a palm script.
    Hand {
        /// CSV `t,palm_x,palm_y,palm_z,nx,ny,nz`.
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value = "right")]
        hand: String,
        #[arg(long = "loop")]
        looped: bool,
    },
    /// Haptic device: logs every focal command it receives.
    Haptic {
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(required_unless_present_any = ["bundled", "list"])]
    pub file: Option<PathBuf>,
    /// Run a bundled scenario by name.
    #[arg(long, conflicts_with = "file")]
    pub bundled: Option<String>,
    /// List bundled scenarios.
    #[arg(long)]
    pub list: bool,
    /// Directory for report.txt, summary.csv, focal.csv and frames.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for symmetry; scenarios always run on the virtual clock.
    #[arg(long)]
    pub virtual_clock: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HandArg {
    Left,
    Right,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub bpm: f64,
    /// intensity, radius, am or am:<hz>
    #[arg(long, default_value = "radius")]
    pub mode: String,
    /// Seconds.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Palm center `x,y,z`; defaults to the hologram anchor.
    #[arg(long, value_parser = parse_vec3)]
    pub palm: Option<Vec3>,
    /// Palm normal `x,y,z`.
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,1")]
    pub normal: Vec3,
    /// Always true: rendering is offline.
    #[arg(long)]
    pub virtual_clock: bool,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    /// Focal point `x,y,z`.
    #[arg(long, value_parser = parse_vec3)]
    pub focus: Vec3,
    /// Sweep plane, e.g. `z=0.2`.
    #[arg(long, default_value = "z=0.2")]
    pub plane: String,
    /// Half-width of the square grid, meters.
    #[arg(long, default_value_t = 0.06)]
    pub extent: f64,
    #[arg(long, default_value_t = 0.002)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV rows `sx,sy,sz,dx,dy,dz`, headset point then device point.
    pub file: PathBuf,
}

pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("`{s}` must be x,y,z"));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| format!("`{p}` is not a number"))?;
    }
    Ok(Vec3::from(v))
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn failed(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<crate::emulators::EmulatorError> for CliError {
    fn from(e: crate::emulators::EmulatorError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::usage(e.to_string())
    }
}

/// Defaults, then the config file, then environment, then `overlay`; validated.
fn load_config(path: Option<&Path>, overlay: impl FnOnce(&mut Config)) -> Result<Config, CliError> {
    let mut cfg = Config::resolve(path)?;
    overlay(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command line; `Ok` means exit code 0.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Serve(a) => cmd_serve(config, a),
        Command::Emulate(a) => cmd_emulate(config, a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Render(a) => cmd_render(config, a),
        Command::Field(a) => cmd_field(config, a),
        Command::Calibrate(a) => cmd_calibrate(a),
    }
}

pub fn cmd_serve(config: Option<&Path>, a: ServeArgs) -> Result<(), CliError> {
    let cfg = load_config(config, |c| {
        if let Some(p) = a.tcp_port {
            c.server.tcp_port = p;
        }
        if let Some(p) = a.ws_port {
            c.server.ws_port = p;
        }
        if let Some(b) = &a.bind {
            c.server.bind = b.clone();
        }
    })?;
    let mut opts = ServeOptions::new(cfg);
    opts.clock = if a.virtual_clock {
        ClockMode::Virtual
    } else {
        ClockMode::Wall
    };
    opts.ticks = a.ticks;
    opts.frame_log = a.frame_log;
    let handle = sync::start(opts)?;
    eprintln!("listening: tcp {} websocket {}", handle.tcp_addr(), handle.ws_addr());
    let stopper = handle.stopper();
    if let Err(e) = ctrlc::set_handler(move || stopper.stop()) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    let stats = handle.join();
    eprintln!(
        "stopped after {} frames ({} focal commands sent, {} sessions)",
        stats.frames, stats.focal_commands_sent, stats.sessions_opened
    );
    Ok(())
}

fn resolve_endpoint(cfg: &Config, endpoint: Option<&str>) -> Result<SocketAddr, CliError> {
    let text = endpoint.map_or_else(
        || format!("{}:{}", cfg.server.bind, cfg.server.tcp_port),
        str::to_string,
    );
    text.to_socket_addrs()
        .map_err(|e| CliError::usage(format!("bad endpoint `{text}`: {e}")))?
        .next()
        .ok_or_else(|| CliError::usage(format!("endpoint `{text}` resolves to nothing")))
}

pub fn cmd_emulate(config: Option<&Path>, a: EmulateArgs) -> Result<(), CliError> {
    let cfg = load_config(config, |_| {})?;
    let endpoint = resolve_endpoint(&cfg, a.endpoint.as_deref())?;
    if a.virtual_clock && a.duration.is_none() {
        return Err(CliError::usage("--virtual-clock needs --duration"));
    }
    let pace = if a.virtual_clock {
        ClockMode::Virtual
    } else {
        ClockMode::Wall
    };
    let handle: EmulatorHandle = match a.kind {
        EmulateKind::Wearable {
            trace,
            bpm,
            interpolation,
        } => {
            let interp: Interpolation = interpolation.parse().map_err(CliError::usage)?;
            let trace = match (trace, bpm) {
                (Some(p), None) => HrTrace::parse_csv(&fs::read_to_string(&p)?, interp)?,
                (None, Some(b)) => HrTrace::constant(b)?,
                _ => return Err(CliError::usage("give --trace or --bpm")),
            };
            run_wearable_emulator(WearableEmulator::new(trace), endpoint, a.duration, pace)?
        }
        EmulateKind::Hand { script, hand, looped } => {
            let hand: HandId = hand.parse().map_err(CliError::usage)?;
            let script = HandScript::parse_csv(&fs::read_to_string(&script)?, hand, looped)?;
            run_hand_emulator(HandEmulator::new(script, cfg.tracker), endpoint, a.duration, pace)?
        }
        EmulateKind::Haptic { log } => {
            let mut w = BufWriter::new(File::create(&log)?);
            write_focal_log(&mut w, &["bioholo haptic emulator".to_string()], &[])?;
            run_haptic_emulator(HapticDevice::with_sink(Box::new(w), false), endpoint)?
        }
    };
    let flag = handle.stop_flag();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, std::sync::atomic::Ordering::SeqCst)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    let report = handle.join()?;
    eprintln!("session {}: sent {} messages", report.session, report.sent);
    if let Some(d) = report.haptic {
        eprintln!(
            "haptic: {} batches, {} commands, {} violations",
            d.batches, d.commands, d.violations
        );
        if d.violations > 0 {
            return Err(CliError::failed(format!(
                "{} invalid focal commands received",
                d.violations
            )));
        }
    }
    Ok(())
}

pub fn cmd_scenario(a: ScenarioArgs) -> Result<(), CliError> {
    if a.list {
        for (name, _) in BUNDLED {
            println!("{name}");
        }
        return Ok(());
    }
    let scenario = match (&a.file, &a.bundled) {
        (Some(p), _) => Scenario::load(p)?,
        (None, Some(name)) => Scenario::bundled(name)?,
        (None, None) => return Err(CliError::usage("give a scenario file or --bundled NAME")),
    };
    let started = Instant::now();
    let run = run_scenario(&scenario)?;
    if let Some(dir) = &a.out {
        run.write_artifacts(dir)?;
    }
    print!("{}", run.report_text());
    info!("scenario ran in {:.2} s", started.elapsed().as_secs_f64());
    if run.passed() {
        Ok(())
    } else {
        Err(CliError::failed(format!("scenario {} failed", scenario.name)))
    }
}

/// Offline synthesis for a constant heart rate and a static palm.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub bpm: f64,
    pub mode: HapticMode,
    pub duration: f64,
    pub palm: Option<Vec3>,
    pub normal: Vec3,
}

/// Commands for `[0, duration)`, one frame at a time on the virtual clock.
pub fn render(cfg: &Config, o: &RenderOptions) -> Result<Vec<FocalPointCommand>, CliError> {
    if !(0.0..=MAX_BPM).contains(&o.bpm) {
        return Err(CliError::usage(format!("--bpm {} outside [0, {MAX_BPM}]", o.bpm)));
    }
    if !(o.duration > 0.0) {
        return Err(CliError::usage("--duration must be positive"));
    }
    let normal = o
        .normal
        .normalized()
        .ok_or_else(|| CliError::usage("--normal must be nonzero"))?;
    let mut renderer =
        HapticRenderer::new(cfg.haptics.with_mode(o.mode)).map_err(|e| CliError::usage(e.to_string()))?;
    let mut scene = SceneState::new(&cfg.scene).map_err(|e| CliError::usage(e.to_string()))?;
    let palm = o.palm.unwrap_or(scene.heart.anchor());
    let hand = HandFrame::synthesize(0.0, HandId::Right, palm, normal, crate::hand::DEFAULT_FINGERTIP_RADIUS);
    let hz = cfg.server.tick_hz;
    let dt = 1.0 / hz;
    let ticks = (o.duration * hz).round() as u64;
    let mut out = Vec::new();
    for n in 0..ticks {
        let now = n as f64 / hz;
        scene = scene.update_at(Some(o.bpm), now);
        out.extend(renderer.render_tick(&scene, [&hand], now, dt));
    }
    Ok(out)
}

pub fn cmd_render(config: Option<&Path>, a: RenderArgs) -> Result<(), CliError> {
    let cfg = load_config(config, |_| {})?;
    let mode: HapticMode = a
        .mode
        .parse()
        .map_err(|e: crate::haptics::HapticsError| CliError::usage(e.to_string()))?;
    let opts = RenderOptions {
        bpm: a.bpm,
        mode,
        duration: a.duration,
        palm: a.palm,
        normal: a.normal,
    };
    let commands = render(&cfg, &opts)?;
    let palm = opts.palm.unwrap_or(cfg.scene.anchor);
    let comments = vec![
        format!(
            "bioholo render bpm={} mode={} duration={}",
            opts.bpm, opts.mode, opts.duration
        ),
        format!("palm={},{},{}", palm.x, palm.y, palm.z),
    ];
    match &a.out {
        Some(p) => write_focal_log(BufWriter::new(File::create(p)?), &comments, &commands)?,
        None => write_focal_log(io::stdout().lock(), &comments, &commands)?,
    }
    if commands.is_empty() {
        return Err(CliError::failed("palm does not touch the hologram; nothing rendered"));
    }
    Ok(())
}

pub fn cmd_field(config: Option<&Path>, a: FieldArgs) -> Result<(), CliError> {
    let cfg = load_config(config, |_| {})?;
    let plane: SweepPlane = a.plane.parse().map_err(CliError::usage)?;
    let layout = ArrayLayout::new(&cfg.array);
    let phases = layout
        .solve_phases(a.focus)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let grid = sweep_plane(&layout, &phases, plane, a.extent, a.step).map_err(|e| CliError::failed(e.to_string()))?;
    match &a.out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            write_field_csv(&mut w, &grid)?;
            w.flush()?;
        }
        None => write_field_csv(io::stdout().lock(), &grid)?,
    }
    if let Some(peak) = grid.iter().max_by(|a, b| a.value.norm().total_cmp(&b.value.norm())) {
        eprintln!("peak |U| = {:.6e} at {}", peak.value.norm(), peak.pos);
    }
    Ok(())
}

pub fn cmd_calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.file)?;
    let set = CorrespondenceSet::parse_csv(&text).map_err(|e| CliError::usage(e.to_string()))?;
    let (t, residual) = set.solve().map_err(|e| CliError::failed(e.to_string()))?;
    // keep "-0.000000000" out of the printout
    let p = |v: f64| if v.abs() < 5e-10 { 0.0 } else { v };
    println!("rotation:");
    for row in t.rotation_rows() {
        println!("  {:>12.9} {:>12.9} {:>12.9}", p(row[0]), p(row[1]), p(row[2]));
    }
    let tr = t.translation();
    println!("translation: {:.9} {:.9} {:.9}", p(tr.x), p(tr.y), p(tr.z));
    println!("residual_rms: {residual:.3e}");
    Ok(())
}
