//! Parsed raw-IPv4 packets, 5-tuples and flows.

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checksum;

pub const IPPROTO_ICMP: u8 = 1;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

pub const IPV4_MIN_HEADER: usize = 20;
pub const IPV4_MAX_HEADER: usize = 60;
pub const TCP_MIN_HEADER: usize = 20;
pub const TCP_MAX_HEADER: usize = 60;
pub const UDP_HEADER: usize = 8;
pub const ICMP_HEADER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Tcp,
    Udp,
    Icmp,
    Other,
}

impl TransportKind {
    pub fn from_protocol(protocol: u8) -> Self {
        match protocol {
            IPPROTO_TCP => TransportKind::Tcp,
            IPPROTO_UDP => TransportKind::Udp,
            IPPROTO_ICMP => TransportKind::Icmp,
            _ => TransportKind::Other,
        }
    }

    /// Protocol number, `None` for [`TransportKind::Other`].
    pub fn protocol(self) -> Option<u8> {
        match self {
            TransportKind::Tcp => Some(IPPROTO_TCP),
            TransportKind::Udp => Some(IPPROTO_UDP),
            TransportKind::Icmp => Some(IPPROTO_ICMP),
            TransportKind::Other => None,
        }
    }
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportKind::Tcp => "TCP",
            TransportKind::Udp => "UDP",
            TransportKind::Icmp => "ICMP",
            TransportKind::Other => "OTHER",
        })
    }
}

/// TCP flag bits as they sit in bytes 12..14 of the header (NS is bit 8).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TcpFlags(pub u16);

impl TcpFlags {
    pub const FIN: u16 = 0x001;
    pub const SYN: u16 = 0x002;
    pub const RST: u16 = 0x004;
    pub const PSH: u16 = 0x008;
    pub const ACK: u16 = 0x010;
    pub const URG: u16 = 0x020;
    pub const ECE: u16 = 0x040;
    pub const CWR: u16 = 0x080;
    pub const NS: u16 = 0x100;

    pub fn has(self, bit: u16) -> bool {
        self.0 & bit != 0
    }

    pub fn set(&mut self, bit: u16, on: bool) {
        if on {
            self.0 |= bit;
        } else {
            self.0 &= !bit;
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("not an IPv4 packet (version {0})")]
    NotIpv4(u8),
    #[error("IPv4 header length {0} outside 20..=60 bytes")]
    BadIhl(usize),
    #[error("captured {have} bytes, need at least {need}")]
    Truncated { have: usize, need: usize },
    #[error("IPv4 total length {total} smaller than headers ({headers} bytes)")]
    TotalLengthTooSmall { total: usize, headers: usize },
    #[error("IPv4 total length {0} exceeds 65535")]
    TotalLengthOverflow(usize),
    #[error("transport header length {len} invalid for {kind}")]
    BadTransportHeader { kind: TransportKind, len: usize },
    #[error("transport kind {kind} disagrees with protocol field {protocol}")]
    ProtocolMismatch { kind: TransportKind, protocol: u8 },
    #[error("IPv4 total length field {field} != header and payload size {actual}")]
    TotalLengthMismatch { field: usize, actual: usize },
}

/// One raw-IPv4 packet: headers verbatim, payload by length only.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    pub timestamp_us: u64,
    pub ip_header: Vec<u8>,
    pub transport_kind: TransportKind,
    pub transport_header: Vec<u8>,
    pub payload_len: usize,
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn transport_header_len(kind: TransportKind, available: &[u8]) -> Result<usize, PacketError> {
    match kind {
        TransportKind::Tcp => {
            if available.len() < TCP_MIN_HEADER {
                return Err(PacketError::Truncated { have: available.len(), need: TCP_MIN_HEADER });
            }
            let len = usize::from(available[12] >> 4) * 4;
            if !(TCP_MIN_HEADER..=TCP_MAX_HEADER).contains(&len) {
                return Err(PacketError::BadTransportHeader { kind, len });
            }
            Ok(len)
        }
        TransportKind::Udp => Ok(UDP_HEADER),
        TransportKind::Icmp => Ok(ICMP_HEADER),
        TransportKind::Other => Ok(0),
    }
}

impl Packet {
    /// Build a packet from header bytes, checking every structural invariant.
    pub fn new(
        timestamp_us: u64,
        ip_header: Vec<u8>,
        transport_header: Vec<u8>,
        payload_len: usize,
    ) -> Result<Self, PacketError> {
        if ip_header.len() < IPV4_MIN_HEADER {
            return Err(PacketError::BadIhl(ip_header.len()));
        }
        let kind = TransportKind::from_protocol(ip_header[9]);
        let p = Packet { timestamp_us, ip_header, transport_kind: kind, transport_header, payload_len };
        p.validate()?;
        Ok(p)
    }

    /// Parse captured raw-IP bytes. `bytes` may be shorter than the total
    /// length (snaplen), but must hold every header.
    pub fn parse(bytes: &[u8], timestamp_us: u64) -> Result<Self, PacketError> {
        if bytes.len() < IPV4_MIN_HEADER {
            return Err(PacketError::Truncated { have: bytes.len(), need: IPV4_MIN_HEADER });
        }
        let version = bytes[0] >> 4;
        if version != 4 {
            return Err(PacketError::NotIpv4(version));
        }
        let ihl = usize::from(bytes[0] & 0x0f) * 4;
        if ihl < IPV4_MIN_HEADER {
            return Err(PacketError::BadIhl(ihl));
        }
        if bytes.len() < ihl {
            return Err(PacketError::Truncated { have: bytes.len(), need: ihl });
        }
        let total = usize::from(be16(bytes, 2));
        let kind = TransportKind::from_protocol(bytes[9]);
        let rest = &bytes[ihl..];
        let thl = transport_header_len(kind, rest)?;
        if total < ihl + thl {
            return Err(PacketError::TotalLengthTooSmall { total, headers: ihl + thl });
        }
        if rest.len() < thl {
            return Err(PacketError::Truncated { have: bytes.len(), need: ihl + thl });
        }
        Ok(Packet {
            timestamp_us,
            ip_header: bytes[..ihl].to_vec(),
            transport_kind: kind,
            transport_header: rest[..thl].to_vec(),
            payload_len: total - ihl - thl,
        })
    }

    pub fn validate(&self) -> Result<(), PacketError> {
        let h = &self.ip_header;
        if h.len() < IPV4_MIN_HEADER || h.len() > IPV4_MAX_HEADER {
            return Err(PacketError::BadIhl(h.len()));
        }
        let version = h[0] >> 4;
        if version != 4 {
            return Err(PacketError::NotIpv4(version));
        }
        if usize::from(h[0] & 0x0f) * 4 != h.len() {
            return Err(PacketError::BadIhl(usize::from(h[0] & 0x0f) * 4));
        }
        if TransportKind::from_protocol(h[9]) != self.transport_kind {
            return Err(PacketError::ProtocolMismatch { kind: self.transport_kind, protocol: h[9] });
        }
        let thl = transport_header_len(self.transport_kind, &self.transport_header)?;
        if thl != self.transport_header.len() {
            return Err(PacketError::BadTransportHeader {
                kind: self.transport_kind,
                len: self.transport_header.len(),
            });
        }
        let actual = self.wire_len();
        if actual > usize::from(u16::MAX) {
            return Err(PacketError::TotalLengthOverflow(actual));
        }
        if usize::from(self.total_length()) != actual {
            return Err(PacketError::TotalLengthMismatch { field: usize::from(self.total_length()), actual });
        }
        Ok(())
    }

    /// Header bytes followed by a zero-filled payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.ip_header);
        out.extend_from_slice(&self.transport_header);
        out.resize(out.len() + self.payload_len, 0);
        out
    }

    pub fn wire_len(&self) -> usize {
        self.ip_header.len() + self.transport_header.len() + self.payload_len
    }

    pub fn version(&self) -> u8 {
        self.ip_header[0] >> 4
    }

    pub fn ihl_bytes(&self) -> usize {
        usize::from(self.ip_header[0] & 0x0f) * 4
    }

    pub fn tos(&self) -> u8 {
        self.ip_header[1]
    }

    pub fn total_length(&self) -> u16 {
        be16(&self.ip_header, 2)
    }

    pub fn ip_id(&self) -> u16 {
        be16(&self.ip_header, 4)
    }

    pub fn ip_reserved_flag(&self) -> bool {
        self.ip_header[6] & 0x80 != 0
    }

    pub fn dont_fragment(&self) -> bool {
        self.ip_header[6] & 0x40 != 0
    }

    pub fn more_fragments(&self) -> bool {
        self.ip_header[6] & 0x20 != 0
    }

    pub fn fragment_offset(&self) -> u16 {
        be16(&self.ip_header, 6) & 0x1fff
    }

    pub fn is_fragment(&self) -> bool {
        self.more_fragments() || self.fragment_offset() != 0
    }

    pub fn ttl(&self) -> u8 {
        self.ip_header[8]
    }

    pub fn protocol(&self) -> u8 {
        self.ip_header[9]
    }

    pub fn ip_checksum(&self) -> u16 {
        be16(&self.ip_header, 10)
    }

    pub fn src(&self) -> Ipv4Addr {
        Ipv4Addr::new(self.ip_header[12], self.ip_header[13], self.ip_header[14], self.ip_header[15])
    }

    pub fn dst(&self) -> Ipv4Addr {
        Ipv4Addr::new(self.ip_header[16], self.ip_header[17], self.ip_header[18], self.ip_header[19])
    }

    /// Source and destination ports for TCP and UDP.
    pub fn ports(&self) -> Option<(u16, u16)> {
        match self.transport_kind {
            TransportKind::Tcp | TransportKind::Udp => {
                Some((be16(&self.transport_header, 0), be16(&self.transport_header, 2)))
            }
            _ => None,
        }
    }

    pub fn tcp_seq(&self) -> Option<u32> {
        self.is_tcp().then(|| be32(&self.transport_header, 4))
    }

    pub fn tcp_ack(&self) -> Option<u32> {
        self.is_tcp().then(|| be32(&self.transport_header, 8))
    }

    pub fn tcp_data_offset_bytes(&self) -> Option<usize> {
        self.is_tcp().then(|| usize::from(self.transport_header[12] >> 4) * 4)
    }

    pub fn tcp_reserved(&self) -> Option<u8> {
        self.is_tcp().then(|| (self.transport_header[12] >> 1) & 0x07)
    }

    pub fn tcp_flags(&self) -> Option<TcpFlags> {
        self.is_tcp().then(|| {
            TcpFlags((u16::from(self.transport_header[12] & 0x01) << 8) | u16::from(self.transport_header[13]))
        })
    }

    pub fn tcp_window(&self) -> Option<u16> {
        self.is_tcp().then(|| be16(&self.transport_header, 14))
    }

    pub fn tcp_urgent_pointer(&self) -> Option<u16> {
        self.is_tcp().then(|| be16(&self.transport_header, 18))
    }

    pub fn udp_length(&self) -> Option<u16> {
        (self.transport_kind == TransportKind::Udp).then(|| be16(&self.transport_header, 4))
    }

    /// Checksum field of the transport header, if the protocol has one.
    pub fn transport_checksum_field(&self) -> Option<u16> {
        match self.transport_kind {
            TransportKind::Tcp => Some(be16(&self.transport_header, 16)),
            TransportKind::Udp => Some(be16(&self.transport_header, 6)),
            TransportKind::Icmp => Some(be16(&self.transport_header, 2)),
            TransportKind::Other => None,
        }
    }

    fn is_tcp(&self) -> bool {
        self.transport_kind == TransportKind::Tcp
    }

    pub fn ip_checksum_ok(&self) -> bool {
        checksum::internet_checksum(&self.ip_header) == 0
    }

    /// Transport checksum check with the payload taken as zero bytes.
    /// A UDP checksum of zero means "not computed" and passes.
    pub fn transport_checksum_ok(&self) -> bool {
        match self.transport_kind {
            TransportKind::Tcp | TransportKind::Udp => {
                if self.transport_kind == TransportKind::Udp && be16(&self.transport_header, 6) == 0 {
                    return true;
                }
                let seg_len = (self.transport_header.len() + self.payload_len) as u16;
                let sum = checksum::sum_words(
                    &self.transport_header,
                    checksum::pseudo_header_sum(self.src(), self.dst(), self.protocol(), seg_len),
                );
                checksum::fold(sum) == 0
            }
            TransportKind::Icmp => checksum::internet_checksum(&self.transport_header) == 0,
            TransportKind::Other => true,
        }
    }

    /// Recompute IPv4 and transport checksums over the zero-filled payload.
    pub fn recompute_checksums(&mut self) {
        let (src, dst, proto) = (self.src(), self.dst(), self.protocol());
        match self.transport_kind {
            TransportKind::Tcp => {
                self.transport_header[16..18].fill(0);
                let c = checksum::transport_checksum(src, dst, proto, &self.transport_header, self.payload_len);
                self.transport_header[16..18].copy_from_slice(&c.to_be_bytes());
            }
            TransportKind::Udp => {
                self.transport_header[6..8].fill(0);
                let mut c = checksum::transport_checksum(src, dst, proto, &self.transport_header, self.payload_len);
                if c == 0 {
                    c = 0xFFFF;
                }
                self.transport_header[6..8].copy_from_slice(&c.to_be_bytes());
            }
            TransportKind::Icmp => {
                self.transport_header[2..4].fill(0);
                let c = checksum::internet_checksum(&self.transport_header);
                self.transport_header[2..4].copy_from_slice(&c.to_be_bytes());
            }
            TransportKind::Other => {}
        }
        self.ip_header[10..12].fill(0);
        let c = checksum::internet_checksum(&self.ip_header);
        self.ip_header[10..12].copy_from_slice(&c.to_be_bytes());
    }

    pub fn set_ip_id(&mut self, id: u16) {
        self.ip_header[4..6].copy_from_slice(&id.to_be_bytes());
    }

    pub fn set_endpoints(&mut self, t: &FiveTuple) {
        self.ip_header[12..16].copy_from_slice(&t.src.octets());
        self.ip_header[16..20].copy_from_slice(&t.dst.octets());
        if matches!(self.transport_kind, TransportKind::Tcp | TransportKind::Udp) {
            self.transport_header[0..2].copy_from_slice(&t.src_port.to_be_bytes());
            self.transport_header[2..4].copy_from_slice(&t.dst_port.to_be_bytes());
        }
    }

    /// No-op on non-TCP packets, as are the other TCP setters.
    pub fn set_tcp_seq(&mut self, seq: u32) {
        if self.is_tcp() {
            self.transport_header[4..8].copy_from_slice(&seq.to_be_bytes());
        }
    }

    pub fn set_tcp_ack(&mut self, ack: u32) {
        if self.is_tcp() {
            self.transport_header[8..12].copy_from_slice(&ack.to_be_bytes());
        }
    }

    pub fn set_tcp_flags(&mut self, flags: TcpFlags) {
        if self.is_tcp() {
            self.transport_header[12] = (self.transport_header[12] & 0xfe) | ((flags.0 >> 8) as u8 & 1);
            self.transport_header[13] = flags.0 as u8;
        }
    }

    /// Sequence space a TCP segment consumes: payload plus one each for SYN and FIN.
    pub fn tcp_seq_len(&self) -> u32 {
        let f = self.tcp_flags().unwrap_or_default();
        self.payload_len as u32 + u32::from(f.has(TcpFlags::SYN)) + u32::from(f.has(TcpFlags::FIN))
    }

    pub fn five_tuple(&self) -> FiveTuple {
        let (src_port, dst_port) = self.ports().unwrap_or((0, 0));
        FiveTuple { src: self.src(), dst: self.dst(), src_port, dst_port, protocol: self.protocol() }
    }
}

/// Flow key. Orientation matters for equality; use [`FiveTuple::canonical`]
/// for direction-free grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FiveTuple {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FiveTuple {
    pub fn reversed(&self) -> Self {
        FiveTuple {
            src: self.dst,
            dst: self.src,
            src_port: self.dst_port,
            dst_port: self.src_port,
            protocol: self.protocol,
        }
    }

    pub fn canonical(&self) -> Self {
        let rev = self.reversed();
        if (rev.src, rev.src_port) < (self.src, self.src_port) {
            rev
        } else {
            *self
        }
    }

    pub fn matches_either(&self, other: &FiveTuple) -> bool {
        self == other || self.reversed() == *other
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{} -> {}:{} proto {}", self.src, self.src_port, self.dst, self.dst_port, self.protocol)
    }
}

/// Ordered packets of one bidirectional conversation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowTrace {
    pub packets: Vec<Packet>,
    pub five_tuple: FiveTuple,
    pub label: Option<String>,
}

impl FlowTrace {
    /// Flow keyed by its first packet's orientation.
    pub fn from_packets(packets: Vec<Packet>, label: Option<String>) -> Option<Self> {
        let five_tuple = packets.first()?.five_tuple();
        Some(FlowTrace { packets, five_tuple, label })
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn duration_us(&self) -> u64 {
        match (self.packets.first(), self.packets.last()) {
            (Some(a), Some(b)) => b.timestamp_us.saturating_sub(a.timestamp_us),
            _ => 0,
        }
    }

    /// Number of distinct directed (src, dst, ports) groups; a normal
    /// bidirectional conversation has two.
    pub fn directional_groups(&self) -> usize {
        let mut seen: Vec<FiveTuple> = Vec::new();
        for p in &self.packets {
            let t = p.five_tuple();
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
        seen.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tcp_syn() -> Packet {
        let mut ip = vec![
            0x45, 0, 0, 40, 0x12, 0x34, 0x40, 0, 64, IPPROTO_TCP, 0, 0, 10, 0, 0, 1, 10, 0, 0, 2,
        ];
        let mut tcp = vec![0u8; 20];
        tcp[0..2].copy_from_slice(&1234u16.to_be_bytes());
        tcp[2..4].copy_from_slice(&80u16.to_be_bytes());
        tcp[4..8].copy_from_slice(&1000u32.to_be_bytes());
        tcp[12] = 5 << 4;
        tcp[13] = 0x02;
        tcp[14..16].copy_from_slice(&65535u16.to_be_bytes());
        ip[2..4].copy_from_slice(&40u16.to_be_bytes());
        let mut p = Packet::new(0, ip, tcp, 0).unwrap();
        p.recompute_checksums();
        p
    }

    #[test]
    fn parse_minimal_tcp() {
        let p = tcp_syn();
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 40);
        let q = Packet::parse(&bytes, 7).unwrap();
        assert_eq!(q.transport_kind, TransportKind::Tcp);
        assert_eq!(q.payload_len, 0);
        assert_eq!(q.ports(), Some((1234, 80)));
        assert_eq!(q.tcp_seq(), Some(1000));
        assert!(q.tcp_flags().unwrap().has(TcpFlags::SYN));
        assert!(q.ip_checksum_ok());
        assert!(q.transport_checksum_ok());
    }

    #[test]
    fn snaplen_truncated_payload_is_fine() {
        let mut p = tcp_syn();
        p.payload_len = 100;
        p.ip_header[2..4].copy_from_slice(&140u16.to_be_bytes());
        let bytes = p.to_bytes();
        let q = Packet::parse(&bytes[..40], 0).unwrap();
        assert_eq!(q.payload_len, 100);
    }

    #[test]
    fn rejects_protocol_mismatch() {
        let p = tcp_syn();
        let err = Packet {
            transport_kind: TransportKind::Udp,
            ..p
        }
        .validate()
        .unwrap_err();
        assert!(matches!(err, PacketError::ProtocolMismatch { .. }));
    }

    #[test]
    fn rejects_total_length_mismatch() {
        let mut p = tcp_syn();
        p.payload_len = 3;
        assert!(matches!(p.validate(), Err(PacketError::TotalLengthMismatch { .. })));
    }

    #[test]
    fn flipped_bit_breaks_checksum() {
        let mut p = tcp_syn();
        p.transport_header[17] ^= 1;
        assert!(!p.transport_checksum_ok());
        assert!(p.ip_checksum_ok());
    }

    #[test]
    fn canonical_tuple_is_orientation_free() {
        let t = tcp_syn().five_tuple();
        assert_eq!(t.canonical(), t.reversed().canonical());
        assert!(t.matches_either(&t.reversed()));
    }
}
