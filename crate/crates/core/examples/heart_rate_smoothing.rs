//! Wearable readings every 5 s through the 6 s smoothing window.
//! The trace rests, jumps to 120 bpm, then flatlines.

use bioholo::biosignal::{flatline, HrBuffer, DEFAULT_STALENESS_TIMEOUT, DEFAULT_WINDOW};
use bioholo::emulators::{HrTrace, Interpolation, WearableEmulator};

fn main() {
    let trace = HrTrace::new(vec![(0.0, 62.0), (20.0, 120.0), (40.0, 0.0)], Interpolation::Step).unwrap();
    let mut wearable = WearableEmulator::new(trace);
    let mut buf = HrBuffer::new(DEFAULT_WINDOW, DEFAULT_STALENESS_TIMEOUT);

    println!("{:>5}  {:>8}  {:>8}  state", "t", "reading", "smoothed");
    for tick in 0..=55 {
        let now = tick as f64;
        let mut reading = String::new();
        for s in wearable.due(now) {
            reading = format!("{:.0}", s.bpm);
            buf.ingest(s).unwrap();
        }
        let smoothed = buf.smoothed_bpm(now);
        let state = if flatline(smoothed) { "static" } else { "beating" };
        let shown = smoothed.map_or("-".into(), |b| format!("{b:.1}"));
        println!("{now:>5.0}  {reading:>8}  {shown:>8}  {state}");
    }
}
