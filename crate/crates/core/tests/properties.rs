//! Property tests over the public API, each against a brute-force or
//! independently written oracle.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use proptest::prelude::*;

use nprint_synth::corpus::{self, TrafficClass};
use nprint_synth::generator::{self, ClassProfile, DEFAULT_TAU};
use nprint_synth::image_codec::{self, GRAY, GREEN, RED};
use nprint_synth::nprint::{self, NprintMatrix, Region, Trit};
use nprint_synth::packet::{FiveTuple, FlowTrace, Packet};
use nprint_synth::{pcap, repair, traffic_report};

mod common;

fn class_profile(class: TrafficClass) -> ClassProfile {
    let flows = corpus::class_flows(class, 40, 7);
    generator::build_class_profile(&flows, class.label(), DEFAULT_TAU).unwrap()
}

fn arb_class() -> impl Strategy<Value = TrafficClass> {
    prop::sample::select(TrafficClass::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn capture_roundtrip_is_exact(pkts in common::arb_flow(40)) {
        let back = pcap::read_pcap_from(pcap::pcap_bytes(&pkts).as_slice()).unwrap();
        prop_assert_eq!(back, pkts);
    }

    #[test]
    fn split_matches_brute_force_grouping(
        pkts in common::arb_flow(60),
        picks in prop::collection::vec((0usize..3, any::<bool>()), 60),
    ) {
        let pool = [
            (Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2), 1000, 80),
            (Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 3), 1001, 443),
            (Ipv4Addr::new(172, 16, 0, 5), Ipv4Addr::new(10, 0, 0, 2), 5353, 53),
        ];
        let pkts: Vec<Packet> = pkts
            .into_iter()
            .zip(&picks)
            .map(|(mut p, &(i, flip))| {
                let (a, b, pa, pb) = pool[i];
                let t = FiveTuple { src: a, dst: b, src_port: pa, dst_port: pb, protocol: p.protocol() };
                p.set_endpoints(&if flip { t.reversed() } else { t });
                p
            })
            .collect();

        let mut order: Vec<FiveTuple> = Vec::new();
        let mut groups: BTreeMap<FiveTuple, Vec<Packet>> = BTreeMap::new();
        for p in &pkts {
            let key = p.five_tuple().canonical();
            if !groups.contains_key(&key) {
                order.push(key);
            }
            groups.entry(key).or_default().push(p.clone());
        }
        let flows = pcap::split_flows(&pkts);
        prop_assert_eq!(flows.len(), order.len());
        prop_assert_eq!(flows.iter().map(FlowTrace::len).sum::<usize>(), pkts.len());
        for (f, key) in flows.iter().zip(&order) {
            prop_assert_eq!(&f.packets, &groups[key]);
        }
    }

    #[test]
    fn single_packet_codec_roundtrip((ip, th, payload) in common::arb_headers()) {
        let p = Packet::new(0, ip, th, payload).unwrap();
        let row = nprint::encode_packet(&p).unwrap();
        prop_assert_eq!(row.populated_prefix(Region::Ipv4), p.ip_header.len() * 8);
        prop_assert_eq!(nprint::decode_packet(&row).unwrap(), p);
    }

    #[test]
    fn image_pixels_tally_the_trits(pkts in common::arb_flow(30)) {
        let m = nprint::encode_flow(&FlowTrace::from_packets(pkts, None).unwrap()).unwrap();
        let mut trits = [0usize; 3];
        for row in m.rows() {
            for t in row.trits() {
                trits[(t.value() + 1) as usize] += 1;
            }
        }
        let img = image_codec::matrix_to_rgb(&m);
        let mut pixels = [0usize; 3];
        for px in img.pixels() {
            let slot = match px.0 {
                GRAY => 0,
                RED => 1,
                GREEN => 2,
                other => return Err(TestCaseError::fail(format!("unexpected color {other:?}"))),
            };
            pixels[slot] += 1;
        }
        prop_assert_eq!(pixels, trits);
        let back = image_codec::decode_image_bytes(&image_codec::encode_png(&m).unwrap(), Default::default()).unwrap();
        prop_assert!(back.rows() == m.rows());
    }

    #[test]
    fn report_tallies_are_consistent(pkts in common::arb_flow(60)) {
        let r = traffic_report::report_packets(&pkts);
        prop_assert_eq!(r.packet_count, pkts.len() as u64);
        prop_assert_eq!(r.size_bins.iter().sum::<u64>(), r.packet_count);
        prop_assert_eq!(r.protocol_distribution.values().sum::<u64>(), r.packet_count);
        let f = r.flags;
        for n in [f.syn, f.ack, f.fin, f.rst, f.psh, f.urg] {
            prop_assert!(n <= r.packet_count);
        }
        prop_assert_eq!(r.byte_count, pkts.iter().map(|p| u64::from(p.total_length())).sum::<u64>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn generated_matrices_hold_structure(class in arb_class(), seed in any::<u64>()) {
        let profile = class_profile(class);
        let m = generator::generate(&profile, seed);
        prop_assert!(m.check().is_ok());
        prop_assert!(m.n_real() >= 1);
        prop_assert_eq!(generator::generate(&profile, seed), m.clone());
        for row in m.real_rows() {
            prop_assert!(row.region_populated(Region::Ipv4));
            let transports = Region::TRANSPORT.iter().filter(|&&r| row.region_populated(r)).count();
            prop_assert_eq!(transports, 1);
            for (c, t) in row.trits().iter().enumerate() {
                if !profile.mask.is_allowed(c) {
                    prop_assert_eq!(*t, Trit::Vacant);
                } else if let (Some(v), true) = (profile.mask.frozen_value(c), t.is_populated()) {
                    prop_assert_eq!(*t, v);
                }
            }
        }
    }

    #[test]
    fn repair_is_complete_bounded_and_deterministic(class in arb_class(), seed in any::<u64>()) {
        let profile = class_profile(class);
        let raw = generator::generate(&profile, seed);
        let a = repair::repair(&raw, &profile, seed);
        prop_assert!((0.0..=1.0).contains(&a.report.repaired_fraction));
        let check = repair::validate(&a.flow);
        prop_assert!(check.is_compliant(), "{:?}", check.violations);
        prop_assert!(a.flow.packets.windows(2).all(|w| w[0].timestamp_us <= w[1].timestamp_us));
        let b = repair::repair(&raw, &profile, seed);
        prop_assert_eq!(a.matrix, b.matrix);
        prop_assert_eq!(a.flow.packets, b.flow.packets);
    }
}

/// With about a thousand columns under test, a handful of 3-sigma
/// excursions are expected by chance; more than 1% would mean a bias.
#[test]
fn column_frequencies_track_the_marginals() {
    let profile = class_profile(TrafficClass::Streaming);
    let mut rows: Vec<NprintMatrix> = Vec::new();
    let mut total = 0;
    let mut seed = 0;
    while total < 10_000 {
        let m = generator::generate(&profile, seed);
        total += m.n_real();
        rows.push(m);
        seed += 1;
    }
    let (mut tested, mut outside) = (0usize, 0usize);
    for c in 0..nprint::ROW_BITS {
        if !profile.mask.is_allowed(c) || profile.mask.frozen_value(c).is_some() {
            continue;
        }
        let (mut n, mut ones) = (0u64, 0u64);
        for row in rows.iter().flat_map(|m| m.real_rows()) {
            match row.get(c) {
                Trit::Set => (n, ones) = (n + 1, ones + 1),
                Trit::Unset => n += 1,
                Trit::Vacant => {}
            }
        }
        if n < 30 {
            continue;
        }
        let p = profile.column_marginals[c];
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        tested += 1;
        if (ones as f64 / n as f64 - p).abs() > 3.0 * sigma {
            outside += 1;
        }
    }
    assert!(tested > 300, "only {tested} columns tested");
    assert!(outside * 100 <= tested, "{outside} of {tested} columns outside 3 sigma");
}

#[test]
fn reference_capture_keeps_count_and_duration() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reference.pcap");
    pcap::write_pcap(&corpus::reference_flow().packets, &path).unwrap();
    let flows = pcap::split_flows(&pcap::read_pcap(&path).unwrap());
    assert_eq!(flows.len(), 1);
    assert_eq!(flows[0].len(), 1024);
    assert_eq!(flows[0].duration_us(), 602_296);
    assert_eq!(flows[0].directional_groups(), 2);
}

#[test]
fn encoded_reference_decodes_to_a_compliant_flow() {
    let reference = corpus::reference_flow();
    let m = nprint::encode_flow(&reference).unwrap();
    let mut back = nprint::decode_flow(&m).unwrap();
    for (b, r) in back.packets.iter_mut().zip(&reference.packets) {
        b.timestamp_us = r.timestamp_us;
    }
    let report = repair::validate(&back);
    assert!(report.is_compliant(), "{:?}", report.violations);
    assert_eq!(traffic_report::report(&back).checksum_errors, 0);
}
