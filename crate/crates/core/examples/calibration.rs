//! Recover the headset-to-device transform from four or more matched points.
//!
//! ```text
//! cargo run --example calibration
//! ```

use bioholo::geometry::{CorrespondenceSet, RigidTransform, Vec3};

fn main() {
    // ground truth: 30 degrees about z, then a 12 cm lift
    let truth = RigidTransform::from_axis_angle(Vec3::Z, 30f64.to_radians(), Vec3::new(0.02, -0.01, 0.12));

    let marks = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(0.1, 0.0, 0.0),
        Vec3::new(0.0, 0.1, 0.0),
        Vec3::new(0.0, 0.0, 0.1),
        Vec3::new(0.05, 0.05, 0.02),
    ];
    let mut csv = String::from("sx,sy,sz,dx,dy,dz\n");
    for (i, m) in marks.iter().enumerate() {
        // a little millimeter-scale jitter on the device side
        let jitter = Vec3::new(0.0004, -0.0003, 0.0002) * if i % 2 == 0 { 1.0 } else { -1.0 };
        let d = truth.apply(*m) + jitter;
        csv += &format!("{},{},{},{},{},{}\n", m.x, m.y, m.z, d.x, d.y, d.z);
    }

    let pairs = CorrespondenceSet::parse_csv(&csv).expect("csv");
    let (fit, rms) = pairs.solve().expect("non-degenerate points");

    println!("rotation:");
    for row in fit.rotation_rows() {
        println!("  {:>9.6} {:>9.6} {:>9.6}", row[0], row[1], row[2]);
    }
    let t = fit.translation();
    println!("translation: {:.4} {:.4} {:.4}", t.x, t.y, t.z);
    println!("rms residual: {:.2} mm", rms * 1e3);
    println!("angle to truth: {:.2e} rad", fit.rotation_angle_to(&truth));

    let palm_in_headset = Vec3::new(0.03, 0.02, 0.15);
    let p = fit.apply(palm_in_headset);
    println!(
        "palm (0.03, 0.02, 0.15) in the headset frame is ({:.4}, {:.4}, {:.4}) on the device",
        p.x, p.y, p.z
    );
}
