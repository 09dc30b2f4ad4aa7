//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its own PASS/FAIL line on each `cargo test`.

mod common;

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bioholo::analysis::autocorrelation_period;
use bioholo::array_physics::{sweep_plane, ArrayConfig, ArrayLayout, SweepPlane};
use bioholo::cli::{render, RenderOptions};
use bioholo::config::Config;
use bioholo::emulators::net::run_wearable_emulator;
use bioholo::emulators::{run_scenario, HrTrace, Scenario, WearableEmulator};
use bioholo::geometry::{calibration_residual, solve_rigid_transform, RigidTransform, Vec3};
use bioholo::hand::{HandFrame, HandId, DEFAULT_FINGERTIP_RADIUS};
use bioholo::haptics::{read_focal_log, FocalPointCommand, HapticMode};
use bioholo::sync::{decode, encode_line, start, ClockMode, ServeOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bioholo"));
    c.env_remove("BIOHOLO_CONFIG")
        .env_remove("BIOHOLO_TCP_PORT")
        .env_remove("BIOHOLO_WS_PORT")
        .env("RUST_LOG", "warn");
    c
}

fn render_log(dir: &Path, bpm: f64, mode: &str, duration: f64) -> Result<(Vec<FocalPointCommand>, Duration), String> {
    let out = dir.join(format!("render-{bpm}-{mode}.csv"));
    let started = Instant::now();
    let status = bin()
        .args([
            "render",
            "--bpm",
            &bpm.to_string(),
            "--mode",
            mode,
            "--duration",
            &duration.to_string(),
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .map_err(|e| e.to_string())?;
    let took = started.elapsed();
    if !status.success() {
        return Err(format!("render exited with {status}"));
    }
    let file = std::fs::File::open(&out).map_err(|e| e.to_string())?;
    let cmds = read_focal_log(std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
    Ok((cmds, took))
}

fn anchor() -> Vec3 {
    Config::default().scene.anchor
}

// 1. circle geometry and draw rate
fn stm_geometry(dir: &Path) -> Outcome {
    let (logged, took) = render_log(dir, 60.0, "radius", 10.0)?;
    let c = anchor();
    let radii: Vec<f64> = logged.iter().map(|k| k.pos.distance(c)).collect();
    let (lo, hi) = radii
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let on_band = lo >= 0.01 - 1e-6 && hi <= 0.03 + 1e-6 && logged.iter().all(|k| (k.pos.z - c.z).abs() < 1e-6);

    // full-precision stream: the angle swept between consecutive points must be 2π·100·Δt
    let cfg = Config::default();
    let cmds = render(
        &cfg,
        &RenderOptions {
            bpm: 60.0,
            mode: HapticMode::PulsingRadius,
            duration: 10.0,
            palm: None,
            normal: Vec3::Z,
        },
    )
    .map_err(|e| e.to_string())?;
    let omega = TAU * 100.0;
    let mut worst: f64 = 0.0;
    for w in cmds.windows(2) {
        let (a, b) = (w[0].pos - c, w[1].pos - c);
        let swept = a.cross(b).dot(Vec3::Z).atan2(a.dot(b));
        let expect = (omega * (w[1].t - w[0].t) + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
        worst = worst.max((swept - expect).abs());
    }
    let dt_ok = cmds.windows(2).all(|w| ((w[1].t - w[0].t) - 1.0 / 540.0).abs() < 1e-9);
    check(
        on_band
            && worst < 1e-9
            && dt_ok
            && took < Duration::from_secs(5)
            && cmds.len() == 5400
            && logged.len() == cmds.len(),
        format!(
            "{} commands, radius {lo:.4}..{hi:.4} m, angle error {worst:.1e} rad, render {:.2} s",
            cmds.len(),
            took.as_secs_f64()
        ),
    )
}

/// Lag of the strongest autocorrelation peak past the first negative lobe.
fn period_by_autocorrelation(x: &[f64], dt: f64) -> Option<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let r = |lag: usize| y[..n - lag].iter().zip(&y[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let ac: Vec<f64> = (0..n / 2).map(r).collect();
    let start = ac.iter().position(|&v| v < 0.0)?;
    let best = (start..ac.len()).max_by(|&a, &b| ac[a].total_cmp(&ac[b]))?;
    Some(best as f64 * dt)
}

// 2. envelope period tracks the heart rate
fn heartbeat_sync(dir: &Path) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for bpm in [45.0, 60.0, 120.0] {
        let (cmds, _) = render_log(dir, bpm, "radius", 12.0)?;
        let radius: Vec<f64> = cmds.iter().map(|k| k.pos.distance(anchor())).collect();
        let dt = 1.0 / 540.0;
        let measured = period_by_autocorrelation(&radius, dt).ok_or("flat envelope")?;
        let library = autocorrelation_period(&radius, dt).ok_or("flat envelope")?;
        let want = 60.0 / bpm;
        let pass = (measured - want).abs() <= 1.0 / 60.0 && (library - want).abs() <= 1.0 / 60.0;
        ok &= pass;
        lines.push(format!("{bpm} bpm -> {measured:.4} s (want {want:.4})"));
    }
    check(ok, lines.join(", "))
}

// 3. flatline is static
fn flatline(dir: &Path) -> Outcome {
    let (cmds, _) = render_log(dir, 0.0, "radius", 5.0)?;
    let cfg = Config::default();
    let exact = render(
        &cfg,
        &RenderOptions {
            bpm: 0.0,
            mode: HapticMode::PulsingRadius,
            duration: 5.0,
            palm: None,
            normal: Vec3::Z,
        },
    )
    .map_err(|e| e.to_string())?;
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let radius: Vec<f64> = exact.iter().map(|k| k.pos.distance(anchor())).collect();
    let intensity: Vec<f64> = cmds.iter().map(|k| k.intensity).collect();
    let logged_radius: Vec<String> = cmds
        .iter()
        .map(|k| format!("{:.5}", k.pos.distance(anchor())))
        .collect();
    let log_static = logged_radius.windows(2).all(|w| w[0] == w[1]);

    let run = run_scenario(&Scenario::bundled("flatline").map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let scales_one = run.frames.iter().all(|f| f.heart.scale == 1.0 && f.heart.flatline);
    let (vr, vi) = (var(&radius), var(&intensity));
    check(
        !cmds.is_empty() && vr < 1e-24 && vi == 0.0 && log_static && scales_one && !run.focal.is_empty(),
        format!(
            "{} commands, radius variance {vr:.1e}, intensity variance {vi}, {} frames at scale 1.0",
            cmds.len(),
            run.frames.len()
        ),
    )
}

/// Closed-form pulse used by the oracle.
fn pulse(frac: f64) -> f64 {
    (-0.5 * ((frac - 0.15) / 0.08).powi(2)).exp()
}

// 4. haptics switch on and off with the surface crossings
fn intersection_gate() -> Outcome {
    let scenario = Scenario::bundled("sweep").map_err(|e| e.to_string())?;
    let run = run_scenario(&scenario).map_err(|e| e.to_string())?;
    let cfg = &scenario.config;
    let radii = cfg.scene.radii;
    let c = cfg.scene.anchor;
    let touched = |t: f64| {
        let palm = Vec3::new(-0.5 + 0.1 * t, 0.0, 0.30);
        let scale = 1.0 + cfg.scene.pulse_amplitude * pulse(t.rem_euclid(1.0));
        let h = HandFrame::synthesize(t, HandId::Right, palm, Vec3::Z, DEFAULT_FINGERTIP_RADIUS);
        std::iter::once(h.palm_center).chain(h.joints.iter().copied()).any(|p| {
            let d = p - c;
            (d.x / (radii.x * scale)).powi(2) + (d.y / (radii.y * scale)).powi(2) + (d.z / (radii.z * scale)).powi(2)
                <= 1.0
        })
    };
    let mut crossings = Vec::new();
    let step = 1e-4;
    let mut prev = touched(0.0);
    for i in 1..=(10.0 / step) as usize {
        let t = i as f64 * step;
        let now = touched(t);
        if now != prev {
            let (mut a, mut b) = (t - step, t);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if touched(m) == prev {
                    a = m
                } else {
                    b = m
                }
            }
            crossings.push((b, now));
            prev = now;
        }
    }
    let active: Vec<bool> = run
        .frames
        .iter()
        .map(|f| f.hands.iter().any(|h| h.haptic_active))
        .collect();
    let observed: Vec<(f64, bool)> = active
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, w)| (run.frames[i + 1].t, w[1]))
        .collect();
    let frame = 1.0 / cfg.server.tick_hz;
    let gaps: Vec<f64> = crossings.iter().zip(&observed).map(|(a, o)| o.0 - a.0).collect();
    let gate_ok = crossings.len() == observed.len()
        && crossings.iter().zip(&observed).all(|(a, o)| a.1 == o.1)
        && gaps.iter().all(|g| g.abs() <= frame + 1e-9);
    let leaked: usize = run
        .batches
        .iter()
        .zip(&active)
        .filter(|(_, &on)| !on)
        .map(|(b, _)| b.commands.len())
        .sum();
    let fed = run
        .batches
        .iter()
        .zip(&active)
        .filter(|(_, &on)| on)
        .all(|(b, _)| !b.commands.is_empty());
    let fmt = |v: &[(f64, bool)]| {
        v.iter()
            .map(|(t, on)| format!("{}@{t:.4}", if *on { "on" } else { "off" }))
            .collect::<Vec<_>>()
            .join(" ")
    };
    check(
        gate_ok && leaked == 0 && fed,
        format!(
            "analytic {} | observed {} | {leaked} commands while outside",
            fmt(&crossings),
            fmt(&observed)
        ),
    )
}

// 5. smoothed rate settles after a step
fn latency_budget() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for step_at in [10.0, 10.05] {
        let text = format!(
            "name = \"step\"\nduration = 30.0\n[hr]\ninterpolation = \"step\"\nkeyframes = [[0.0, 60.0], [{step_at}, 120.0]]\n"
        );
        let s = Scenario::from_toml(&text, Path::new(".")).map_err(|e| e.to_string())?;
        let run = run_scenario(&s).map_err(|e| e.to_string())?;
        let settled = run
            .frames
            .iter()
            .rposition(|f| f.heart.bpm.is_none_or(|b| (b - 120.0).abs() > 1.0))
            .and_then(|i| run.frames.get(i + 1))
            .map(|f| f.t);
        match settled {
            Some(t) => {
                ok &= t - step_at <= 11.0;
                lines.push(format!("step at {step_at} s settled after {:.3} s", t - step_at));
            }
            None => {
                ok = false;
                lines.push(format!("step at {step_at} s never settled"));
            }
        }
    }
    check(ok, lines.join(", "))
}

// 6. focusing against brute-force sums
fn focusing_oracle() -> Outcome {
    let cfg = ArrayConfig::default();
    let layout = ArrayLayout::new(&cfg);
    let focus = Vec3::new(0.0, 0.0, 0.20);
    let k = TAU * cfg.carrier / cfg.speed_of_sound;
    let elements: Vec<Vec3> = (0..cfg.rows)
        .flat_map(|i| (0..cfg.cols).map(move |j| (i, j)))
        .map(|(i, j)| {
            Vec3::new(
                (i as f64 - (cfg.rows - 1) as f64 / 2.0) * cfg.pitch,
                (j as f64 - (cfg.cols - 1) as f64 / 2.0) * cfg.pitch,
                0.0,
            )
        })
        .collect();
    let drive: Vec<f64> = elements.iter().map(|e| -k * e.distance(focus)).collect();
    let field = |p: Vec3| {
        let (mut re, mut im) = (0.0, 0.0);
        for (e, psi) in elements.iter().zip(&drive) {
            let d = e.distance(p);
            re += cfg.amplitude / d * (k * d + psi).cos();
            im += cfg.amplitude / d * (k * d + psi).sin();
        }
        (re * re + im * im).sqrt()
    };
    let aligned: f64 = elements.iter().map(|e| cfg.amplitude / e.distance(focus)).sum();
    let phases = layout.solve_phases(focus).map_err(|e| e.to_string())?;
    let at_focus = layout.field_at(&phases, focus).map_err(|e| e.to_string())?.norm();
    let rel = (at_focus - aligned).abs() / aligned;
    let contrast = field(focus) / field(focus + Vec3::new(0.010, 0.0, 0.0));
    let started = Instant::now();
    let grid = sweep_plane(&layout, &phases, SweepPlane::Z(0.20), 0.06, 0.002).map_err(|e| e.to_string())?;
    let took = started.elapsed();
    let peak = grid
        .iter()
        .max_by(|a, b| a.value.norm().total_cmp(&b.value.norm()))
        .unwrap();
    check(
        rel < 1e-9
            && contrast > 3.0
            && took < Duration::from_secs(10)
            && grid.len() == 61 * 61
            && peak.pos.distance(focus) < 1e-9,
        format!(
            "|U| relative error {rel:.1e}, contrast {contrast:.2}, {} samples in {:.2} s",
            grid.len(),
            took.as_secs_f64()
        ),
    )
}

fn random_rotation(rng: &mut ChaCha8Rng) -> RigidTransform {
    // uniform unit quaternion -> axis/angle
    let n = Normal::new(0.0, 1.0).unwrap();
    let q: [f64; 4] = std::array::from_fn(|_| n.sample(rng));
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
    let t = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let rows = [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ];
    RigidTransform::new(rows, t).unwrap()
}

// 7. calibration recovers synthetic transforms
fn calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.001).unwrap();
    let (mut worst_rot, mut worst_t, mut worst_rms) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let truth = random_rotation(&mut rng);
        let n = rng.random_range(4..=10);
        let src: Vec<Vec3> = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                )
            })
            .collect();
        let dst: Vec<Vec3> = src.iter().map(|&p| truth.apply(p)).collect();
        let got = solve_rigid_transform(&src, &dst).map_err(|e| e.to_string())?;
        worst_rot = worst_rot.max(got.rotation_angle_to(&truth));
        worst_t = worst_t.max((got.translation() - truth.translation()).norm());

        let noisy: Vec<Vec3> = dst
            .iter()
            .map(|&p| p + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
            .collect();
        let fit = solve_rigid_transform(&src, &noisy).map_err(|e| e.to_string())?;
        worst_rms = worst_rms.max(calibration_residual(&fit, &src, &noisy).map_err(|e| e.to_string())?);
    }
    check(
        worst_rot < 1e-7 && worst_t < 1e-9 && worst_rms < 0.003,
        format!(
            "worst rotation {worst_rot:.1e} rad, translation {worst_t:.1e} m, noisy rms {:.2} mm",
            worst_rms * 1e3
        ),
    )
}

// 8. determinism and protocol round trip
fn determinism(dir: &Path) -> Outcome {
    let mut same = true;
    for name in ["rest-touch", "sweep", "exercise", "flatline"] {
        let s = Scenario::bundled(name).map_err(|e| e.to_string())?;
        let a = run_scenario(&s).map_err(|e| e.to_string())?.focal_log();
        let b = run_scenario(&s).map_err(|e| e.to_string())?.focal_log();
        same &= a == b && !a.is_empty();
    }
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(format!("det-{run}"));
        let status = bin()
            .args(["scenario", "--bundled", "rest-touch", "--out"])
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("scenario exited with {status}"));
        }
        logs.push(std::fs::read(out.join("focal.csv")).map_err(|e| e.to_string())?);
    }
    same &= logs[0] == logs[1];

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let total = 10_000;
    let ok = (0..total)
        .filter(|_| {
            let m = common::random_message(&mut rng);
            decode(&encode_line(&m)).is_ok_and(|back| back == m)
        })
        .count();
    check(
        same && ok == total,
        format!("focal logs identical: {same}, fuzz round trip {ok}/{total}"),
    )
}

// 9. wall-clock cadence
fn cadence() -> Outcome {
    let mut cfg = Config::default();
    cfg.server.tcp_port = 0;
    cfg.server.ws_port = 0;
    let mut opts = ServeOptions::new(cfg);
    opts.ticks = Some(630);
    let server = start(opts).map_err(|e| e.to_string())?;
    let wearable = WearableEmulator::new(HrTrace::constant(70.0).map_err(|e| e.to_string())?);
    let emu =
        run_wearable_emulator(wearable, server.tcp_addr(), Some(10.2), ClockMode::Wall).map_err(|e| e.to_string())?;
    let sent = emu.join().map_err(|e| e.to_string())?.sent;
    let stats = server.join();
    let times = &stats.frame_times;
    let span = times.last().unwrap() - times.first().unwrap();
    let rate = (times.len() - 1) as f64 / span;
    // per-second windows over the first ten seconds
    let windows: Vec<usize> = (0..10)
        .map(|s| {
            times
                .iter()
                .filter(|&&t| t >= times[0] + s as f64 && t < times[0] + s as f64 + 1.0)
                .count()
        })
        .collect();
    let windows_ok = windows.iter().all(|&n| (57..=63).contains(&n));
    let intervals: Vec<f64> = stats.hr_arrivals.windows(2).map(|w| w[1] - w[0]).collect();
    let hr_ok = intervals.len() >= 2 && intervals.iter().all(|d| (d - 5.0).abs() <= 0.1);
    check(
        (rate - 60.0).abs() <= 3.0 && windows_ok && hr_ok && sent == 3,
        format!(
            "{:.2} Hz over {span:.2} s, per-second counts {windows:?}, wearable intervals {:?}",
            rate,
            intervals.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: [Criterion; 9] = [
        ("stm geometry", Box::new(|| stm_geometry(dir.path()))),
        ("heartbeat sync", Box::new(|| heartbeat_sync(dir.path()))),
        ("flatline", Box::new(|| flatline(dir.path()))),
        ("intersection gate", Box::new(intersection_gate)),
        ("latency budget", Box::new(latency_budget)),
        ("focusing oracle", Box::new(focusing_oracle)),
        ("calibration", Box::new(calibration)),
        ("determinism and protocol", Box::new(|| determinism(dir.path()))),
        ("cadence", Box::new(cadence)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
