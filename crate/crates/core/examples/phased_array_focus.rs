//! Focus the 16x16 array 20 cm up and print a coarse map of |U| across the focal plane.

use bioholo::array_physics::{sweep_plane, ArrayConfig, ArrayLayout, SweepPlane};
use bioholo::geometry::Vec3;

fn main() {
    let layout = ArrayLayout::new(&ArrayConfig::default());
    let focus = Vec3::new(0.0, 0.0, 0.20);
    let phases = layout.solve_phases(focus).unwrap();

    let peak = layout.field_at(&phases, focus).unwrap().norm();
    let side = layout
        .field_at(&phases, focus + Vec3::new(0.01, 0.0, 0.0))
        .unwrap()
        .norm();
    println!(
        "{} elements, |U| at focus {peak:.1}, upper bound {:.1}",
        layout.len(),
        layout.aligned_magnitude(focus)
    );
    println!("10 mm off-axis: {side:.1} (contrast {:.1})", peak / side);

    let grid = sweep_plane(&layout, &phases, SweepPlane::Z(0.20), 0.06, 0.005).unwrap();
    let n = (grid.len() as f64).sqrt() as usize;
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for row in grid.chunks(n) {
        let line: String = row
            .iter()
            .map(|s| shades[((s.value.norm() / peak) * 9.0).round().min(9.0) as usize])
            .flat_map(|c| [c, c])
            .collect();
        println!("{line}");
    }
}
