//! What goes over the wire: a short session written out line by line.

use bioholo::biosignal::HeartRateSample;
use bioholo::config::Config;
use bioholo::geometry::Vec3;
use bioholo::hand::{HandFrame, HandId};
use bioholo::sync::{decode, encode, DeviceKind, Message, ServerCore, PROTO_VERSION};

fn main() {
    let mut core = ServerCore::new(&Config::default()).unwrap();
    // the handshake is answered by the session layer, not the core
    println!("-> {}", encode(&Message::hello(DeviceKind::Wearable)));
    println!(
        "<- {}",
        encode(&Message::Welcome {
            session: 1,
            proto: PROTO_VERSION
        })
    );
    let inbound = [
        Message::HrUpdate(HeartRateSample { t: 0.0, bpm: 68.0 }),
        Message::HandUpdate(HandFrame::synthesize(
            0.0,
            HandId::Left,
            Vec3::new(0.0, 0.0, 0.3),
            Vec3::Z,
            0.04,
        )),
    ];
    for m in &inbound {
        let line = encode(m);
        println!("-> {line}");
        if let Some(reply) = core.submit(decode(&line).unwrap(), 0.0) {
            println!("<- {}", encode(&reply));
        }
    }
    let out = core.frame_tick(0.0);
    println!("<- {}", encode(&Message::FrameState(out.frame)));
    let mut batch = out.focal;
    batch.commands.truncate(2);
    println!("<- {}  (truncated)", encode(&Message::FocalBatch(batch)));

    for bad in [
        "{\"type\":\"hr_update\"",
        "{\"type\":\"teleport\"}",
        "{\"type\":\"hello\",\"device\":\"ui\",\"proto\":9}",
    ] {
        println!("!! {bad}\n   {}", decode(bad).unwrap_err());
    }
}
