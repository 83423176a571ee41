//! Randomly crafted, structurally valid packets.

#![allow(dead_code)]

use nprint_synth::packet::{Packet, IPPROTO_ICMP, IPPROTO_TCP, IPPROTO_UDP};
use proptest::prelude::*;

/// (IPv4 header, transport header, payload length): random bytes with
/// version, IHL, protocol, lengths and fragment fields made consistent.
pub fn arb_headers() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, usize)> {
    let kind = prop_oneof![Just(IPPROTO_TCP), Just(IPPROTO_UDP), Just(IPPROTO_ICMP)];
    (
        kind,
        5u8..=15,
        5u8..=15,
        prop::collection::vec(any::<u8>(), 60),
        prop::collection::vec(any::<u8>(), 60),
        0usize..1500,
    )
        .prop_map(|(proto, ihl, doff, ip_bytes, th_bytes, payload)| {
            let mut ip = ip_bytes[..usize::from(ihl) * 4].to_vec();
            ip[0] = 0x40 | ihl;
            ip[6] &= 0xc0; // reserved and DF may be set; never a fragment
            ip[7] = 0;
            ip[9] = proto;
            let mut th = if proto == IPPROTO_TCP { th_bytes[..usize::from(doff) * 4].to_vec() } else { th_bytes[..8].to_vec() };
            if proto == IPPROTO_TCP {
                th[12] = (doff << 4) | (th[12] & 0x0f);
            }
            let total = ip.len() + th.len() + payload;
            ip[2..4].copy_from_slice(&(total as u16).to_be_bytes());
            if proto == IPPROTO_UDP {
                th[4..6].copy_from_slice(&((total - ip.len()) as u16).to_be_bytes());
            }
            (ip, th, payload)
        })
}

/// Packets with non-decreasing timestamps starting at 0.
pub fn arb_flow(max_len: usize) -> impl Strategy<Value = Vec<Packet>> {
    prop::collection::vec((arb_headers(), 0u64..2_000_000), 1..max_len).prop_map(|pkts| {
        let mut t = 0;
        pkts.into_iter()
            .enumerate()
            .map(|(i, ((ip, th, payload), gap))| {
                if i > 0 {
                    t += gap;
                }
                Packet::new(t, ip, th, payload).expect("crafted packet is well formed")
            })
            .collect()
    })
}
