//! Write the synthetic training corpus as pcap files, one directory per
//! class, plus the reference capture. Usage:
//!
//!     cargo run --example write_corpus -- [OUT_DIR] [FLOWS_PER_CLASS]

use std::path::PathBuf;

use nprint_synth::corpus::{self, TrafficClass};
use nprint_synth::pcap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("nprint-corpus"));
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);

    for class in TrafficClass::ALL {
        let dir = out.join(class.label());
        std::fs::create_dir_all(&dir)?;
        for (i, flow) in corpus::class_flows(class, n, 7).iter().enumerate() {
            pcap::write_pcap(&flow.packets, dir.join(format!("{}_{i:03}.pcap", class.label())))?;
        }
        println!("{:<13} {n} flows -> {}", class.label(), dir.display());
    }
    let reference = corpus::reference_flow();
    pcap::write_pcap(&reference.packets, out.join("reference.pcap"))?;
    println!("reference     {} packets -> {}", reference.len(), out.join("reference.pcap").display());
    Ok(())
}
