//! One heartbeat of focal points at 72 bpm, in each haptic mode.

use bioholo::cli::{render, RenderOptions};
use bioholo::config::Config;
use bioholo::geometry::Vec3;
use bioholo::haptics::HapticMode;

fn main() {
    let cfg = Config::default();
    let center = cfg.scene.anchor;
    for mode in [
        HapticMode::PulsingRadius,
        HapticMode::PulsingIntensity,
        HapticMode::AmFixed(200.0),
    ] {
        let cmds = render(
            &cfg,
            &RenderOptions {
                bpm: 72.0,
                mode,
                duration: 60.0 / 72.0,
                palm: None,
                normal: Vec3::Z,
            },
        )
        .unwrap();
        println!("{} ({} commands)", mode.name(), cmds.len());
        // every 5th frame, first sample of the frame
        for c in cmds.iter().step_by(45) {
            let r = c.pos.distance(center);
            let bar = "#".repeat((r * 1000.0).round() as usize);
            println!("  t={:.3}  r={:.4} m  i={:.2}  {bar}", c.t, r, c.intensity);
        }
    }
}
