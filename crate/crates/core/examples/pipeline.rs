//! Capture in, synthetic capture out: profile, generate, repair, write,
//! re-read, validate and score. Outputs go to OUT_DIR (default: a temp dir).
//!
//!     NPRINT_SYNTH_SEED=3 cargo run --example pipeline -- [OUT_DIR]

use std::path::PathBuf;

use nprint_synth::corpus::{self, TrafficClass};
use nprint_synth::generator::{self, DEFAULT_TAU};
use nprint_synth::metrics::{self, MetricMode};
use nprint_synth::{image_codec, nprint, pcap, repair, traffic_report};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("nprint-pipeline"));
    let seed: u64 = std::env::var("NPRINT_SYNTH_SEED").ok().map(|s| s.parse()).transpose()?.unwrap_or(0);
    std::fs::create_dir_all(&out)?;

    for class in TrafficClass::ALL {
        // Real side: captures on disk, read back the way a user's would be.
        let mut real = Vec::new();
        for (i, f) in corpus::class_flows(class, 30, 7).iter().enumerate() {
            let path = out.join(format!("real_{}_{i:02}.pcap", class.label()));
            pcap::write_pcap(&f.packets, &path)?;
            real.extend(pcap::split_flows(&pcap::read_pcap(&path)?));
        }
        let profile = generator::build_class_profile(&real, class.label(), DEFAULT_TAU)?;

        let mut synth = Vec::new();
        let mut worst = 0.0f64;
        for i in 0..10 {
            let s = seed + i;
            let raw = generator::generate(&profile, s);
            image_codec::matrix_to_image(&raw, out.join(format!("synth_{}_{i:02}.png", class.label())))?;
            let fixed = repair::repair(&raw, &profile, s);
            worst = worst.max(fixed.report.repaired_fraction);
            let path = out.join(format!("synth_{}_{i:02}.pcap", class.label()));
            pcap::write_pcap(&fixed.flow.packets, &path)?;
            synth.extend(pcap::split_flows(&pcap::read_pcap(&path)?));
        }
        let violations: usize = synth.iter().map(|f| repair::validate(f).violations.len()).sum();
        let real_m: Vec<_> = real.iter().map(nprint::encode_flow).collect::<Result<_, _>>()?;
        let synth_m: Vec<_> = synth.iter().map(nprint::encode_flow).collect::<Result<_, _>>()?;
        let score = metrics::compare_matrices(&real_m, &synth_m, MetricMode::PerBit)?;
        let rep = traffic_report::report_packets(synth.iter().flat_map(|f| &f.packets));
        println!(
            "{:<13} {} synthetic flows, {} packets, {violations} violations, checksum errors {}, worst repaired fraction {worst:.3}, per-bit JSD {:.4}",
            class.label(),
            synth.len(),
            rep.packet_count,
            rep.checksum_errors,
            score.average.jsd
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
