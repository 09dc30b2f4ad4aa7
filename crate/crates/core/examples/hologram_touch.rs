//! Which palm positions touch the pulsating heart, at diastole and at the peak of a beat.

use std::f64::consts::TAU;

use bioholo::biosignal::{BeatPhase, PULSE_PEAK};
use bioholo::geometry::Vec3;
use bioholo::hand::{intersect_targets, HandFrame, HandId, DEFAULT_FINGERTIP_RADIUS};
use bioholo::scene::{HeartHologram, SceneConfig};

fn main() {
    let mut heart = HeartHologram::new(&SceneConfig::default()).unwrap();
    heart.flatline = false;
    heart.bpm = Some(70.0);

    for (label, fraction) in [("rest", 0.6), ("peak", PULSE_PEAK)] {
        heart.phase = BeatPhase::new(fraction * TAU);
        println!("{label}: scale {:.3}", heart.surface_scale());
        // fingers point along +x, so they lead the palm in from -x
        for x in [-0.12, -0.092, -0.088, -0.07, 0.0] {
            let palm = heart.anchor() + Vec3::new(x, 0.0, 0.0);
            let hand = HandFrame::synthesize(0.0, HandId::Right, palm, Vec3::Z, DEFAULT_FINGERTIP_RADIUS);
            let targets = intersect_targets(&hand, &heart);
            let what = match targets.first() {
                None => "no contact".to_string(),
                Some(&t) if t == palm => "palm".to_string(),
                Some(t) => format!("fingertip at x={:.3}", t.x),
            };
            println!("  palm x={x:+.3}  sdf={:+.4}  {what}", heart.signed_distance(palm));
        }
    }
}
