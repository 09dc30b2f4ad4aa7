//! A real-time server with all three device emulators on loopback for a few seconds.
//!
//! ```text
//! cargo run --example live_server -- 4
//! ```

use std::time::Duration;

use bioholo::config::Config;
use bioholo::emulators::net::{run_hand_emulator, run_haptic_emulator, run_wearable_emulator};
use bioholo::emulators::{HandEmulator, HandScript, HapticDevice, HrTrace, PalmKey, WearableEmulator};
use bioholo::geometry::Vec3;
use bioholo::hand::HandId;
use bioholo::sync::{start, ClockMode, ServeOptions};

fn main() {
    let seconds: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3.0);
    let mut cfg = Config::default();
    cfg.server.tcp_port = 0;
    cfg.server.ws_port = 0;
    let tracker = cfg.tracker;
    let server = start(ServeOptions::new(cfg)).expect("bind");
    println!("tcp {}  ws {}", server.tcp_addr(), server.ws_addr());

    let haptic = run_haptic_emulator(HapticDevice::new(), server.tcp_addr()).unwrap();
    let wearable = WearableEmulator::new(HrTrace::constant(80.0).unwrap());
    let w = run_wearable_emulator(wearable, server.tcp_addr(), Some(seconds), ClockMode::Wall).unwrap();

    // palm dips into the heart and back out
    let keys = [(0.0, 0.45), (seconds / 2.0, 0.30), (seconds, 0.45)]
        .map(|(t, z)| PalmKey {
            t,
            palm: Vec3::new(0.0, 0.0, z),
            normal: Vec3::Z,
        })
        .to_vec();
    let script = HandScript::new(keys, HandId::Right, false).unwrap();
    let h = run_hand_emulator(
        HandEmulator::new(script, tracker),
        server.tcp_addr(),
        Some(seconds),
        ClockMode::Wall,
    )
    .unwrap();

    let hr = w.join().unwrap();
    let hands = h.join().unwrap();
    std::thread::sleep(Duration::from_millis(100));
    haptic.stop();
    let device = haptic.join().unwrap().haptic.unwrap();
    server.shutdown();
    let stats = server.join();

    println!(
        "frames {}  hr sent {}  hand frames sent {}",
        stats.frames, hr.sent, hands.sent
    );
    println!("focal commands {}  violations {}", device.commands, device.violations);
    if let [first, .., last] = stats.frame_times[..] {
        println!(
            "frame rate {:.2} Hz",
            (stats.frame_times.len() - 1) as f64 / (last - first)
        );
    }
}
