//! Network-analysis summary of a flow: counts, distributions and error
//! tallies, as JSON or a two-column text table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::packet::{FiveTuple, FlowTrace, Packet, TcpFlags, TransportKind};

pub const SIZE_BINS: [&str; 5] = ["0-499", "500-999", "1000-1499", "1500-1999", "2000+"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlagCounts {
    pub syn: u64,
    pub ack: u64,
    pub fin: u64,
    pub rst: u64,
    pub psh: u64,
    pub urg: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrafficReport {
    pub packet_count: u64,
    /// Sum of IPv4 total lengths, payload included.
    pub byte_count: u64,
    pub avg_tcp_window: f64,
    pub protocol_distribution: BTreeMap<String, u64>,
    pub flags: FlagCounts,
    pub src_ports: BTreeMap<u16, u64>,
    pub dst_ports: BTreeMap<u16, u64>,
    /// Packet counts per [`SIZE_BINS`] entry, by IPv4 total length.
    pub size_bins: [u64; 5],
    pub src_ips: BTreeMap<Ipv4Addr, u64>,
    pub dst_ips: BTreeMap<Ipv4Addr, u64>,
    /// Hops, not seconds.
    pub avg_ttl: f64,
    pub session_count: u64,
    pub checksum_errors: u64,
    pub fragmented_packets: u64,
    /// Distinct (src, dst, protocol, IP ID) among fragments.
    pub fragmented_datagrams: u64,
}

fn size_bin(len: usize) -> usize {
    (len / 500).min(4)
}

/// Summarize any sequence of packets.
pub fn report_packets<'a>(packets: impl IntoIterator<Item = &'a Packet>) -> TrafficReport {
    let mut r = TrafficReport::default();
    for k in [TransportKind::Tcp, TransportKind::Udp, TransportKind::Icmp] {
        r.protocol_distribution.insert(k.to_string(), 0);
    }
    let (mut window_sum, mut tcp_packets, mut ttl_sum) = (0u64, 0u64, 0u64);
    let mut sessions: BTreeSet<FiveTuple> = BTreeSet::new();
    let mut datagrams: BTreeSet<(Ipv4Addr, Ipv4Addr, u8, u16)> = BTreeSet::new();
    for p in packets {
        r.packet_count += 1;
        let len = usize::from(p.total_length());
        r.byte_count += len as u64;
        r.size_bins[size_bin(len)] += 1;
        *r.protocol_distribution.entry(p.transport_kind.to_string()).or_insert(0) += 1;
        *r.src_ips.entry(p.src()).or_insert(0) += 1;
        *r.dst_ips.entry(p.dst()).or_insert(0) += 1;
        if let Some((s, d)) = p.ports() {
            *r.src_ports.entry(s).or_insert(0) += 1;
            *r.dst_ports.entry(d).or_insert(0) += 1;
        }
        ttl_sum += u64::from(p.ttl());
        if let (Some(w), Some(f)) = (p.tcp_window(), p.tcp_flags()) {
            tcp_packets += 1;
            window_sum += u64::from(w);
            for (bit, slot) in [
                (TcpFlags::SYN, &mut r.flags.syn),
                (TcpFlags::ACK, &mut r.flags.ack),
                (TcpFlags::FIN, &mut r.flags.fin),
                (TcpFlags::RST, &mut r.flags.rst),
                (TcpFlags::PSH, &mut r.flags.psh),
                (TcpFlags::URG, &mut r.flags.urg),
            ] {
                *slot += u64::from(f.has(bit));
            }
        }
        if !p.ip_checksum_ok() || !p.transport_checksum_ok() {
            r.checksum_errors += 1;
        }
        if p.is_fragment() {
            r.fragmented_packets += 1;
            datagrams.insert((p.src(), p.dst(), p.protocol(), p.ip_id()));
        }
        sessions.insert(p.five_tuple().canonical());
    }
    r.session_count = sessions.len() as u64;
    r.fragmented_datagrams = datagrams.len() as u64;
    if tcp_packets > 0 {
        r.avg_tcp_window = window_sum as f64 / tcp_packets as f64;
    }
    if r.packet_count > 0 {
        r.avg_ttl = ttl_sum as f64 / r.packet_count as f64;
    }
    r
}

pub fn report(f: &FlowTrace) -> TrafficReport {
    report_packets(&f.packets)
}

fn distribution<K: ToString>(m: &BTreeMap<K, u64>) -> String {
    let mut v: Vec<(&K, &u64)> = m.iter().collect();
    v.sort_by(|a, b| b.1.cmp(a.1));
    v.iter().map(|(k, n)| format!("{} ({n})", k.to_string())).collect::<Vec<_>>().join(", ")
}

impl TrafficReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// (metric, value) pairs, averages to two decimals.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let f = &self.flags;
        vec![
            ("Packet count", self.packet_count.to_string()),
            ("Byte count", self.byte_count.to_string()),
            ("Avg. TCP window", format!("{:.2}", self.avg_tcp_window)),
            (
                "Protocols",
                ["TCP", "UDP", "ICMP"]
                    .iter()
                    .map(|k| format!("{k}: {}", self.protocol_distribution.get(*k).copied().unwrap_or(0)))
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            (
                "Flags",
                format!("SYN: {}, ACK: {}, FIN: {}, RST: {}, PSH: {}, URG: {}", f.syn, f.ack, f.fin, f.rst, f.psh, f.urg),
            ),
            ("Src ports", distribution(&self.src_ports)),
            ("Dst ports", distribution(&self.dst_ports)),
            (
                "Packet sizes",
                SIZE_BINS.iter().zip(self.size_bins).map(|(b, n)| format!("{b}: {n}")).collect::<Vec<_>>().join(", "),
            ),
            ("Src IPs", distribution(&self.src_ips)),
            ("Dst IPs", distribution(&self.dst_ips)),
            ("Avg. TTL (hops)", format!("{:.2}", self.avg_ttl)),
            ("Sessions", self.session_count.to_string()),
            ("Checksum errors", self.checksum_errors.to_string()),
            ("Fragmented packets", self.fragmented_packets.to_string()),
            ("Fragmented datagrams", self.fragmented_datagrams.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        side_by_side(&[("value", self)])
    }
}

/// One metric column per report, e.g. real next to synthetic.
pub fn side_by_side(columns: &[(&str, &TrafficReport)]) -> String {
    let rows: Vec<Vec<(&str, String)>> = columns.iter().map(|(_, r)| r.rows()).collect();
    let name_w = rows.first().map_or(0, |r| r.iter().map(|(k, _)| k.len()).max().unwrap_or(0));
    let widths: Vec<usize> = columns
        .iter()
        .zip(&rows)
        .map(|((h, _), r)| r.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(h.len()))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "metric");
    for ((h, _), w) in columns.iter().zip(&widths) {
        let _ = write!(out, " | {h:<w$}");
    }
    out.push('\n');
    let total = name_w + widths.iter().map(|w| w + 3).sum::<usize>();
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for i in 0..rows.first().map_or(0, Vec::len) {
        let _ = write!(out, "{:<name_w$}", rows[0][i].0);
        for (r, w) in rows.iter().zip(&widths) {
            let _ = write!(out, " | {:<w$}", r[i].1);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{IPPROTO_ICMP, IPPROTO_TCP, IPPROTO_UDP};

    fn pkt(proto: u8, total: usize, ttl: u8, id: u16, frag: u16) -> Packet {
        let mut ip = vec![0x45, 0, 0, 0, 0, 0, 0, 0, ttl, proto, 0, 0, 10, 0, 0, 1, 10, 0, 0, 2];
        ip[2..4].copy_from_slice(&(total as u16).to_be_bytes());
        ip[4..6].copy_from_slice(&id.to_be_bytes());
        ip[6..8].copy_from_slice(&frag.to_be_bytes());
        let th = match proto {
            IPPROTO_TCP => {
                let mut h = vec![0u8; 20];
                h[0..2].copy_from_slice(&1000u16.to_be_bytes());
                h[2..4].copy_from_slice(&80u16.to_be_bytes());
                h[12] = 0x50;
                h[13] = 0x12;
                h[14..16].copy_from_slice(&100u16.to_be_bytes());
                h
            }
            IPPROTO_UDP => {
                let mut h = vec![0, 53, 0, 53, 0, 0, 0, 0];
                h[4..6].copy_from_slice(&((total - 20) as u16).to_be_bytes());
                h
            }
            _ => vec![8, 0, 0, 0, 0, 1, 0, 1],
        };
        let payload = total - 20 - th.len();
        let mut p = Packet::new(0, ip, th, payload).unwrap();
        p.recompute_checksums();
        p
    }

    #[test]
    fn empty_flow_is_all_zero() {
        let r = report_packets(&[]);
        assert_eq!(r.packet_count, 0);
        assert_eq!(r.avg_ttl, 0.0);
        assert_eq!(r.size_bins, [0; 5]);
        assert_eq!(r.session_count, 0);
    }

    #[test]
    fn hand_tallied_five_packets() {
        let mut bad = pkt(IPPROTO_TCP, 600, 60, 1, 0);
        bad.ip_header[10] ^= 1;
        let pkts = vec![
            pkt(IPPROTO_TCP, 40, 64, 1, 0),
            bad,
            pkt(IPPROTO_UDP, 1600, 50, 2, 0x2000),
            pkt(IPPROTO_UDP, 2100, 50, 2, 0x0010),
            pkt(IPPROTO_ICMP, 1000, 1, 3, 0),
        ];
        let r = report_packets(&pkts);
        assert_eq!(r.packet_count, 5);
        assert_eq!(r.byte_count, 40 + 600 + 1600 + 2100 + 1000);
        assert_eq!(r.avg_tcp_window, 100.0);
        assert_eq!(r.protocol_distribution["TCP"], 2);
        assert_eq!(r.protocol_distribution["UDP"], 2);
        assert_eq!(r.protocol_distribution["ICMP"], 1);
        assert_eq!(r.flags, FlagCounts { syn: 2, ack: 2, ..Default::default() });
        assert_eq!(r.src_ports[&1000], 2);
        assert_eq!(r.dst_ports[&53], 2);
        assert_eq!(r.size_bins, [1, 1, 1, 1, 1]);
        assert!((r.avg_ttl - 45.0).abs() < 1e-12);
        assert_eq!(r.session_count, 3);
        assert_eq!(r.checksum_errors, 1);
        assert_eq!(r.fragmented_packets, 2);
        assert_eq!(r.fragmented_datagrams, 1);
        assert_eq!(r.size_bins.iter().sum::<u64>(), r.packet_count);
    }

    #[test]
    fn text_table_has_two_decimals() {
        let r = report_packets(&[pkt(IPPROTO_TCP, 40, 64, 1, 0), pkt(IPPROTO_TCP, 40, 63, 2, 0)]);
        let t = side_by_side(&[("real", &r), ("synthetic", &r)]);
        assert!(t.contains("63.50"));
        assert!(t.lines().next().unwrap().contains("synthetic"));
    }
}
