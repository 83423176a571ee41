//! Learn a per-column profile from one traffic class and sample images.
//!
//!     cargo run --example profile_generate -- [streaming|conferencing|social] [SEED]

use nprint_synth::corpus::{self, TrafficClass};
use nprint_synth::generator::{self, DEFAULT_TAU};
use nprint_synth::image_codec;
use nprint_synth::nprint::Region;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let class: TrafficClass = args.next().as_deref().unwrap_or("streaming").parse()?;
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let flows = corpus::class_flows(class, 40, 7);
    let profile = generator::build_class_profile(&flows, class.label(), DEFAULT_TAU)?;
    let allowed = (0..profile.column_marginals.len()).filter(|&c| profile.mask.is_allowed(c)).count();
    let frozen = (0..profile.column_marginals.len()).filter(|&c| profile.mask.frozen_value(c).is_some()).count();
    println!("{}: {} flows, {allowed} allowed columns, {frozen} frozen", profile.label, flows.len());
    println!("protocol mix: {:?}", profile.protocol_mix());

    let out = std::env::temp_dir().join(format!("nprint-{}", class.label()));
    std::fs::create_dir_all(&out)?;
    profile.save(out.join("profile.json"))?;
    for i in 0..3 {
        let m = generator::generate(&profile, seed + i);
        let populated: Vec<String> = Region::ALL
            .iter()
            .map(|&r| format!("{r:?}={}", m.real_rows().iter().filter(|row| row.region_populated(r)).count()))
            .collect();
        image_codec::matrix_to_image(&m, out.join(format!("synth_{i}.png")))?;
        println!("seed {}: {} rows [{}]", seed + i, m.n_real(), populated.join(" "));
    }
    println!("profile and images in {}", out.display());
    Ok(())
}
