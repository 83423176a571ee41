//! Classic pcap files with raw-IPv4 link types, and flow splitting.
//!
//! Reading accepts microsecond and nanosecond magics in either byte order
//! and the raw-IP link types 101, 228, 12, 14 and 129. Writing always emits
//! little-endian microsecond files with link type 101.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::fsutil;
use crate::packet::{FiveTuple, FlowTrace, Packet, PacketError};

const MAGIC_US: u32 = 0xa1b2_c3d4;
const MAGIC_NS: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_RAW: u32 = 101;
const ACCEPTED_LINKTYPES: [u32; 5] = [101, 228, 12, 14, 129];
pub const SNAPLEN: u32 = 65535;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed global header: {0}")]
    BadHeader(String),
    #[error("unsupported link type {0}, expected raw IP")]
    UnsupportedLinkType(u32),
    #[error("record {index} truncated")]
    TruncatedRecord { index: usize },
    #[error("record {index}: {source}")]
    BadPacket {
        index: usize,
        #[source]
        source: PacketError,
    },
}

#[derive(Clone, Copy)]
struct Format {
    big_endian: bool,
    nanos: bool,
}

impl Format {
    fn u32(&self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        if self.big_endian {
            u32::from_be_bytes(a)
        } else {
            u32::from_le_bytes(a)
        }
    }
}

pub fn read_pcap(path: impl AsRef<Path>) -> Result<Vec<Packet>, PcapError> {
    read_pcap_from(BufReader::new(File::open(path)?))
}

/// Read every record. Timestamps are rebased so the first packet is at 0 µs.
pub fn read_pcap_from<R: Read>(mut r: R) -> Result<Vec<Packet>, PcapError> {
    let mut gh = [0u8; 24];
    r.read_exact(&mut gh).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => PcapError::BadHeader("file shorter than 24 bytes".into()),
        _ => PcapError::Io(e),
    })?;
    let le = u32::from_le_bytes([gh[0], gh[1], gh[2], gh[3]]);
    let fmt = match le {
        MAGIC_US => Format { big_endian: false, nanos: false },
        MAGIC_NS => Format { big_endian: false, nanos: true },
        m if m.swap_bytes() == MAGIC_US => Format { big_endian: true, nanos: false },
        m if m.swap_bytes() == MAGIC_NS => Format { big_endian: true, nanos: true },
        m => return Err(PcapError::BadHeader(format!("unknown magic {m:#010x}"))),
    };
    let linktype = fmt.u32(&gh[20..24]) & 0x0fff_ffff;
    if !ACCEPTED_LINKTYPES.contains(&linktype) {
        return Err(PcapError::UnsupportedLinkType(linktype));
    }

    let mut packets = Vec::new();
    let mut first_ts: Option<u64> = None;
    let mut rh = [0u8; 16];
    let mut buf = Vec::new();
    for index in 0.. {
        match read_full(&mut r, &mut rh)? {
            0 => break,
            16 => {}
            _ => return Err(PcapError::TruncatedRecord { index }),
        }
        let sec = u64::from(fmt.u32(&rh[0..4]));
        let frac = u64::from(fmt.u32(&rh[4..8]));
        let incl = fmt.u32(&rh[8..12]) as usize;
        let ts = sec * 1_000_000 + if fmt.nanos { frac / 1000 } else { frac };
        buf.resize(incl, 0);
        if read_full(&mut r, &mut buf)? != incl {
            return Err(PcapError::TruncatedRecord { index });
        }
        let base = *first_ts.get_or_insert(ts);
        let p = Packet::parse(&buf, ts.saturating_sub(base))
            .map_err(|source| PcapError::BadPacket { index, source })?;
        packets.push(p);
    }
    Ok(packets)
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

/// Write a pcap atomically (temp file, then rename).
pub fn write_pcap(packets: &[Packet], path: impl AsRef<Path>) -> Result<(), PcapError> {
    fsutil::write_atomic(path.as_ref(), |f| {
        let mut w = BufWriter::new(f);
        write_pcap_to(packets, &mut w)?;
        w.flush()
    })?;
    Ok(())
}

pub fn write_pcap_to<W: Write>(packets: &[Packet], w: &mut W) -> io::Result<()> {
    w.write_all(&MAGIC_US.to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?;
    w.write_all(&4u16.to_le_bytes())?;
    w.write_all(&0i32.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&SNAPLEN.to_le_bytes())?;
    w.write_all(&LINKTYPE_RAW.to_le_bytes())?;
    for p in packets {
        let bytes = p.to_bytes();
        let sec = (p.timestamp_us / 1_000_000) as u32;
        let usec = (p.timestamp_us % 1_000_000) as u32;
        w.write_all(&sec.to_le_bytes())?;
        w.write_all(&usec.to_le_bytes())?;
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn pcap_bytes(packets: &[Packet]) -> Vec<u8> {
    let mut out = Vec::new();
    write_pcap_to(packets, &mut out).expect("writing to a Vec cannot fail");
    out
}

/// Partition packets into bidirectional flows keyed by unordered 5-tuple.
///
/// Packet order inside each flow is preserved and flows come out in order
/// of their first packet. Non-TCP/UDP packets use ports 0.
pub fn split_flows(packets: &[Packet]) -> Vec<FlowTrace> {
    let mut index: HashMap<FiveTuple, usize> = HashMap::new();
    let mut flows: Vec<FlowTrace> = Vec::new();
    for p in packets {
        let t = p.five_tuple();
        let slot = *index.entry(t.canonical()).or_insert_with(|| {
            flows.push(FlowTrace { packets: Vec::new(), five_tuple: t, label: None });
            flows.len() - 1
        });
        flows[slot].packets.push(p.clone());
    }
    flows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{TransportKind, IPPROTO_UDP};

    fn ip_bytes(proto: u8, total: u16, src: [u8; 4], dst: [u8; 4]) -> Vec<u8> {
        let mut ip = vec![0x45, 0, 0, 0, 0, 1, 0x40, 0, 64, proto, 0, 0];
        ip[2..4].copy_from_slice(&total.to_be_bytes());
        ip.extend_from_slice(&src);
        ip.extend_from_slice(&dst);
        ip
    }

    fn udp(ts: u64, sport: u16, dport: u16, payload: usize) -> Packet {
        udp_between(ts, [10, 0, 0, 1], [10, 0, 0, 9], sport, dport, payload)
    }

    fn udp_between(ts: u64, src: [u8; 4], dst: [u8; 4], sport: u16, dport: u16, payload: usize) -> Packet {
        let total = (20 + 8 + payload) as u16;
        let ip = ip_bytes(IPPROTO_UDP, total, src, dst);
        let mut h = vec![0u8; 8];
        h[0..2].copy_from_slice(&sport.to_be_bytes());
        h[2..4].copy_from_slice(&dport.to_be_bytes());
        h[4..6].copy_from_slice(&((8 + payload) as u16).to_be_bytes());
        let mut p = Packet::new(ts, ip, h, payload).unwrap();
        p.recompute_checksums();
        p
    }

    #[test]
    fn hand_crafted_40_byte_tcp_record() {
        // RFC 791 / RFC 793 layout, assembled byte by byte
        let mut rec = Vec::new();
        rec.extend_from_slice(&[0x45, 0x00, 0x00, 0x28]); // v4 ihl5, tos, total 40
        rec.extend_from_slice(&[0xab, 0xcd, 0x40, 0x00]); // id, DF
        rec.extend_from_slice(&[0x40, 0x06, 0x00, 0x00]); // ttl 64, tcp, csum
        rec.extend_from_slice(&[192, 168, 1, 2, 93, 184, 216, 34]);
        rec.extend_from_slice(&[0xc3, 0x50, 0x01, 0xbb]); // 50000 -> 443
        rec.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 2]); // seq 1 ack 2
        rec.extend_from_slice(&[0x50, 0x10, 0x01, 0x00]); // doff 5, ACK, win 256
        rec.extend_from_slice(&[0, 0, 0, 0]);
        let mut file = Vec::new();
        file.extend_from_slice(&MAGIC_US.to_le_bytes());
        file.extend_from_slice(&[2, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        file.extend_from_slice(&65535u32.to_le_bytes());
        file.extend_from_slice(&101u32.to_le_bytes());
        file.extend_from_slice(&5u32.to_le_bytes());
        file.extend_from_slice(&7u32.to_le_bytes());
        file.extend_from_slice(&40u32.to_le_bytes());
        file.extend_from_slice(&40u32.to_le_bytes());
        file.extend_from_slice(&rec);

        let pkts = read_pcap_from(&file[..]).unwrap();
        assert_eq!(pkts.len(), 1);
        let p = &pkts[0];
        assert_eq!(p.timestamp_us, 0);
        assert_eq!(p.payload_len, 0);
        assert_eq!(p.transport_kind, TransportKind::Tcp);
        assert_eq!(p.ip_id(), 0xabcd);
        assert!(p.dont_fragment());
        assert_eq!(p.ttl(), 64);
        assert_eq!(p.src().octets(), [192, 168, 1, 2]);
        assert_eq!(p.dst().octets(), [93, 184, 216, 34]);
        assert_eq!(p.ports(), Some((50000, 443)));
        assert_eq!(p.tcp_seq(), Some(1));
        assert_eq!(p.tcp_ack(), Some(2));
        assert_eq!(p.tcp_window(), Some(256));
        assert_eq!(p.to_bytes(), rec);
    }

    #[test]
    fn empty_capture() {
        let bytes = pcap_bytes(&[]);
        assert_eq!(bytes.len(), 24);
        assert!(read_pcap_from(&bytes[..]).unwrap().is_empty());
    }

    #[test]
    fn big_endian_and_nanosecond_magic() {
        let p = udp(0, 1, 2, 4);
        let raw = p.to_bytes();
        let mut file = Vec::new();
        file.extend_from_slice(&MAGIC_NS.to_be_bytes());
        file.extend_from_slice(&[0, 2, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0]);
        file.extend_from_slice(&65535u32.to_be_bytes());
        file.extend_from_slice(&129u32.to_be_bytes());
        for (s, ns) in [(10u32, 500_000u32), (10, 2_500_000)] {
            file.extend_from_slice(&s.to_be_bytes());
            file.extend_from_slice(&ns.to_be_bytes());
            file.extend_from_slice(&(raw.len() as u32).to_be_bytes());
            file.extend_from_slice(&(raw.len() as u32).to_be_bytes());
            file.extend_from_slice(&raw);
        }
        let pkts = read_pcap_from(&file[..]).unwrap();
        assert_eq!(pkts.iter().map(|p| p.timestamp_us).collect::<Vec<_>>(), vec![0, 2000]);
    }

    #[test]
    fn rejects_ethernet_linktype() {
        let mut bytes = pcap_bytes(&[]);
        bytes[20..24].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(read_pcap_from(&bytes[..]), Err(PcapError::UnsupportedLinkType(1))));
    }

    #[test]
    fn rejects_bad_magic_and_short_header() {
        let mut bytes = pcap_bytes(&[]);
        bytes[0] = 0;
        assert!(matches!(read_pcap_from(&bytes[..]), Err(PcapError::BadHeader(_))));
        assert!(matches!(read_pcap_from(&bytes[..10]), Err(PcapError::BadHeader(_))));
    }

    #[test]
    fn truncated_record_names_index() {
        let pkts = vec![udp(0, 1, 2, 0), udp(5, 1, 2, 0)];
        let bytes = pcap_bytes(&pkts);
        let cut = &bytes[..bytes.len() - 3];
        match read_pcap_from(cut) {
            Err(PcapError::TruncatedRecord { index }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        // partial record header
        let cut = &bytes[..24 + 16 + 28 + 7];
        assert!(matches!(read_pcap_from(cut), Err(PcapError::TruncatedRecord { index: 1 })));
    }

    #[test]
    fn roundtrip_preserves_everything_but_payload_bytes() {
        let pkts = vec![udp(0, 1, 2, 10), udp(1_500_000, 2, 1, 0), udp(1_500_001, 1, 2, 1400)];
        let back = read_pcap_from(&pcap_bytes(&pkts)[..]).unwrap();
        assert_eq!(back, pkts);
    }

    #[test]
    fn split_interleaved_flows() {
        let (a, b) = ([10, 0, 0, 1], [10, 0, 0, 9]);
        let pkts = vec![
            udp_between(0, a, b, 1, 2, 0),
            udp_between(1, a, b, 3, 4, 0),
            udp_between(2, b, a, 2, 1, 0),
            udp_between(3, b, a, 4, 3, 0),
            udp_between(4, a, b, 1, 2, 0),
        ];
        let flows = split_flows(&pkts);
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[0].packets.len(), 3);
        assert_eq!(flows[1].packets.len(), 2);
        assert_eq!(flows[0].five_tuple.src_port, 1);
        assert_eq!(flows[0].directional_groups(), 2);
        assert_eq!(flows[1].packets[1].timestamp_us, 3);
    }

    #[test]
    fn other_protocols_group_without_ports() {
        let mut ip = ip_bytes(47, 24, [1, 1, 1, 1], [2, 2, 2, 2]);
        ip[9] = 47;
        let gre = Packet::new(0, ip.clone(), vec![], 4).unwrap();
        let flows = split_flows(&[gre.clone(), gre]);
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].five_tuple.src_port, 0);
        assert_eq!(flows[0].five_tuple.protocol, 47);
    }
}
