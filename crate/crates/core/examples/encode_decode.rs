//! Packets to bit rows and back, through a pcap file on disk.

use nprint_synth::corpus::{self, TrafficClass};
use nprint_synth::nprint::{self, Region, Trit};
use nprint_synth::pcap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flow = corpus::class_flows(TrafficClass::Social, 1, 3).remove(0);
    let dir = tempfile_dir();
    let path = dir.join("social.pcap");
    pcap::write_pcap(&flow.packets, &path)?;

    let packets = pcap::read_pcap(&path)?;
    let flows = pcap::split_flows(&packets);
    println!("{} packets in {} flow(s), tuple {:?}", packets.len(), flows.len(), flows[0].five_tuple);

    let m = nprint::encode_flow(&flows[0])?;
    let first = &m.rows()[0];
    let render = |r: Region| {
        first.region(r)[..32]
            .iter()
            .map(|t| match t {
                Trit::Set => '1',
                Trit::Unset => '0',
                Trit::Vacant => '.',
            })
            .collect::<String>()
    };
    println!("{} real rows of {}", m.n_real(), m.rows().len());
    for r in Region::ALL {
        println!("  {r:?} first word: {}  ({} populated bits)", render(r), first.populated_prefix(r));
    }

    let back = nprint::decode_flow(&m)?;
    let same = back.packets.iter().zip(&flows[0].packets).all(|(a, b)| {
        a.ip_header == b.ip_header && a.transport_header == b.transport_header && a.payload_len == b.payload_len
    });
    println!("headers survive the roundtrip: {same}");
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join("nprint-encode-decode");
    std::fs::create_dir_all(&d).expect("temp dir");
    d
}
