//! Summary statistics of a capture, alone and next to synthetic traffic.

use nprint_synth::corpus;
use nprint_synth::generator::{self, DEFAULT_TAU};
use nprint_synth::repair;
use nprint_synth::traffic_report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let real = corpus::reference_flow();
    let profile = generator::build_class_profile(std::slice::from_ref(&real), "amazon", DEFAULT_TAU)?;
    let synth = repair::repair(&generator::generate(&profile, 11), &profile, 11).flow;

    let a = traffic_report::report(&real);
    let b = traffic_report::report(&synth);
    print!("{}", traffic_report::side_by_side(&[("real", &a), ("synthetic", &b)]));
    if std::env::args().any(|a| a == "--json") {
        println!("{}", a.to_json());
    }
    Ok(())
}
