//! Replay every bundled scenario on the virtual clock and print the reports.
//! Pass a TOML path to run your own instead.

use bioholo::emulators::scenario::BUNDLED;
use bioholo::emulators::{run_scenario, Scenario};

fn main() {
    let scenarios: Vec<Scenario> = match std::env::args().nth(1) {
        Some(path) => vec![Scenario::load(path.as_ref()).expect("scenario")],
        None => BUNDLED
            .iter()
            .map(|(name, _)| Scenario::bundled(name).unwrap())
            .collect(),
    };
    for s in &scenarios {
        let run = run_scenario(s).expect("run");
        print!("{}", run.report_text());
        println!();
    }
}
