//! Generated rows are rarely valid packets; repair fixes that and
//! validation confirms it.

use nprint_synth::corpus::{self, TrafficClass};
use nprint_synth::generator::{self, DEFAULT_TAU};
use nprint_synth::nprint;
use nprint_synth::repair;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flows = corpus::class_flows(TrafficClass::Streaming, 40, 7);
    let profile = generator::build_class_profile(&flows, "streaming", DEFAULT_TAU)?;
    let raw = generator::generate(&profile, 42);

    let undecodable = raw.real_rows().iter().filter(|r| nprint::decode_packet(r).is_err()).count();
    println!("raw sample: {} rows, {undecodable} not decodable", raw.n_real());

    let (intra, log) = repair::repair_intra(&raw);
    println!("intra-packet: {} findings, {} rows kept", log.findings.len(), intra.n_real());
    let (_inter, log) = repair::repair_inter(&intra, &profile);
    println!("inter-packet: {} findings, notes {:?}", log.findings.len(), log.notes);

    let fixed = repair::repair(&raw, &profile, 42);
    let check = repair::validate(&fixed.flow);
    println!(
        "full pipeline: {} packets over {:.1} ms, repaired fraction {:.3}, violations {}",
        fixed.flow.len(),
        fixed.flow.duration_us() as f64 / 1000.0,
        fixed.report.repaired_fraction,
        check.violations.len()
    );
    for f in fixed.report.violations.iter().take(5) {
        println!("  {} @{}: {}", f.rule, f.packet, f.description);
    }
    Ok(())
}
