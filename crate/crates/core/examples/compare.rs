//! Distributional distance between real and synthetic traffic.

use nprint_synth::corpus::{self, TrafficClass};
use nprint_synth::generator::{self, DEFAULT_TAU};
use nprint_synth::metrics::{self, MetricMode};
use nprint_synth::nprint::{self, NprintMatrix};
use nprint_synth::repair;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flows = corpus::class_flows(TrafficClass::Social, 50, 7);
    let profile = generator::build_class_profile(&flows, "social", DEFAULT_TAU)?;
    let real: Vec<NprintMatrix> = flows.iter().map(nprint::encode_flow).collect::<Result<_, _>>()?;
    let synth: Vec<NprintMatrix> = (0..50).map(|s| repair::repair(&generator::generate(&profile, s), &profile, s).matrix).collect();
    let noise: Vec<NprintMatrix> = real.iter().enumerate().map(|(s, m)| generator::random_matrix(m.n_real(), s as u64)).collect();

    for mode in [MetricMode::PerBit, MetricMode::PerField] {
        let s = metrics::compare_matrices(&real, &synth, mode)?;
        let r = metrics::compare_matrices(&real, &noise, mode)?;
        println!(
            "{mode:>9}: synthetic jsd {:.3} tvd {:.3} hd {:.3} | random jsd {:.3} tvd {:.3} hd {:.3}",
            s.average.jsd, s.average.tvd, s.average.hd, r.average.jsd, r.average.tvd, r.average.hd
        );
    }
    println!();
    print!("{}", metrics::compare_matrices(&real, &synth, MetricMode::PerField)?);
    Ok(())
}
