//! Fixed-width tri-valued bit rows and 1024-row flow matrices.
//!
//! Column layout (MSB-first inside every byte):
//!
//! | columns     | region | bytes |
//! |-------------|--------|-------|
//! | 0..480      | IPv4   | 60    |
//! | 480..960    | TCP    | 60    |
//! | 960..1024   | UDP    | 8     |
//! | 1024..1088  | ICMP   | 8     |
//!
//! A header occupies a populated prefix of its region; every other column
//! is [`Trit::Vacant`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{FlowTrace, Packet, PacketError, TransportKind, IPV4_MIN_HEADER};

pub const ROW_BITS: usize = 1088;
pub const MATRIX_ROWS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(i8)]
pub enum Trit {
    #[default]
    Vacant = -1,
    Unset = 0,
    Set = 1,
}

impl Trit {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Trit::Set
        } else {
            Trit::Unset
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Trit::Vacant),
            0 => Some(Trit::Unset),
            1 => Some(Trit::Set),
            _ => None,
        }
    }

    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn is_populated(self) -> bool {
        self != Trit::Vacant
    }
}

impl Serialize for Trit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Trit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i8::deserialize(d)?;
        Trit::from_i8(v).ok_or_else(|| serde::de::Error::custom(format!("trit out of range: {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Ipv4,
    Tcp,
    Udp,
    Icmp,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Ipv4, Region::Tcp, Region::Udp, Region::Icmp];
    pub const TRANSPORT: [Region; 3] = [Region::Tcp, Region::Udp, Region::Icmp];

    pub fn offset(self) -> usize {
        match self {
            Region::Ipv4 => 0,
            Region::Tcp => 480,
            Region::Udp => 960,
            Region::Icmp => 1024,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Region::Ipv4 | Region::Tcp => 480,
            Region::Udp | Region::Icmp => 64,
        }
    }

    pub fn columns(self) -> std::ops::Range<usize> {
        self.offset()..self.offset() + self.width()
    }

    pub fn of_column(col: usize) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.columns().contains(&col))
    }

    pub fn for_transport(kind: TransportKind) -> Option<Region> {
        match kind {
            TransportKind::Tcp => Some(Region::Tcp),
            TransportKind::Udp => Some(Region::Udp),
            TransportKind::Icmp => Some(Region::Icmp),
            TransportKind::Other => None,
        }
    }

    pub fn transport_kind(self) -> Option<TransportKind> {
        match self {
            Region::Ipv4 => None,
            Region::Tcp => Some(TransportKind::Tcp),
            Region::Udp => Some(TransportKind::Udp),
            Region::Icmp => Some(TransportKind::Icmp),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Ipv4 => "ipv4",
            Region::Tcp => "tcp",
            Region::Udp => "udp",
            Region::Icmp => "icmp",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("transport {0} has no columns in the bit layout")]
    Unencodable(TransportKind),
    #[error("fragmented datagrams are not encoded")]
    Fragment,
    #[error("{region} header of {len} bytes exceeds its {max}-byte region")]
    HeaderTooLong { region: Region, len: usize, max: usize },
    #[error("invalid packet: {0}")]
    Packet(#[from] PacketError),
    #[error("flow has no packets")]
    EmptyFlow,
}

/// One reason a row does not decode to a packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowViolation {
    NotPrefix { region: Region },
    NotByteAligned { region: Region, bits: usize },
    MultipleTransports { regions: Vec<Region> },
    NoTransport,
    Ipv4TooShort { bits: usize },
    IhlMismatch { ihl_bytes: usize, populated_bytes: usize },
    DataOffsetMismatch { offset_bytes: usize, populated_bytes: usize },
    TransportLength { region: Region, bytes: usize },
    ProtocolMismatch { protocol: u8, region: Region },
    TotalLengthTooSmall { total: usize, headers: usize },
    Version { version: u8 },
}

impl fmt::Display for RowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowViolation::NotPrefix { region } => write!(f, "{region} populated bits are not a contiguous prefix"),
            RowViolation::NotByteAligned { region, bits } => write!(f, "{region} populated prefix of {bits} bits is not whole bytes"),
            RowViolation::MultipleTransports { regions } => {
                let names: Vec<String> = regions.iter().map(|r| r.to_string()).collect();
                write!(f, "multiple transport regions populated: {}", names.join(", "))
            }
            RowViolation::NoTransport => write!(f, "no transport region populated"),
            RowViolation::Ipv4TooShort { bits } => write!(f, "IPv4 prefix of {bits} bits is shorter than 160"),
            RowViolation::IhlMismatch { ihl_bytes, populated_bytes } => write!(f, "IHL says {ihl_bytes} bytes but {populated_bytes} populated"),
            RowViolation::DataOffsetMismatch { offset_bytes, populated_bytes } => write!(f, "TCP data offset says {offset_bytes} bytes but {populated_bytes} populated"),
            RowViolation::TransportLength { region, bytes } => write!(f, "{region} header of {bytes} bytes has the wrong size"),
            RowViolation::ProtocolMismatch { protocol, region } => write!(f, "protocol field {protocol} disagrees with populated {region} region"),
            RowViolation::TotalLengthTooSmall { total, headers } => write!(f, "total length {total} below header bytes {headers}"),
            RowViolation::Version { version } => write!(f, "IP version {version} is not 4"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("padding row")]
    Padding,
    #[error("row violates the layout: {}", join(.0))]
    Violations(Vec<RowViolation>),
    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<DecodeError>,
    },
}

fn join(v: &[RowViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// One packet as 1088 trits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitRow(Box<[Trit; ROW_BITS]>);

impl fmt::Debug for BitRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitRow(")?;
        for r in Region::ALL {
            let n = self.populated_prefix(r);
            write!(f, "{r}:{n} ")?;
        }
        write!(f, ")")
    }
}

impl Default for BitRow {
    fn default() -> Self {
        Self::padding()
    }
}

impl BitRow {
    pub fn padding() -> Self {
        BitRow(Box::new([Trit::Vacant; ROW_BITS]))
    }

    pub fn from_trits(trits: &[Trit]) -> Option<Self> {
        let arr: [Trit; ROW_BITS] = trits.try_into().ok()?;
        Some(BitRow(Box::new(arr)))
    }

    pub fn trits(&self) -> &[Trit; ROW_BITS] {
        &self.0
    }

    pub fn trits_mut(&mut self) -> &mut [Trit; ROW_BITS] {
        &mut self.0
    }

    pub fn get(&self, col: usize) -> Trit {
        self.0[col]
    }

    pub fn set(&mut self, col: usize, t: Trit) {
        self.0[col] = t;
    }

    pub fn region(&self, r: Region) -> &[Trit] {
        &self.0[r.columns()]
    }

    pub fn is_padding(&self) -> bool {
        self.0.iter().all(|t| *t == Trit::Vacant)
    }

    pub fn region_populated(&self, r: Region) -> bool {
        self.region(r).iter().any(|t| t.is_populated())
    }

    /// Length of the leading run of populated columns in `r`.
    pub fn populated_prefix(&self, r: Region) -> usize {
        self.region(r).iter().take_while(|t| t.is_populated()).count()
    }

    pub fn populated_count(&self) -> usize {
        self.0.iter().filter(|t| t.is_populated()).count()
    }

    /// Write `bytes` MSB-first at the start of region `r`; the remainder of
    /// the region is set vacant.
    pub fn write_region(&mut self, r: Region, bytes: &[u8]) {
        let cols = &mut self.0[r.columns()];
        cols.fill(Trit::Vacant);
        for (i, b) in bytes.iter().enumerate() {
            for k in 0..8 {
                cols[i * 8 + k] = Trit::from_bit(b & (0x80 >> k) != 0);
            }
        }
    }

    /// Bytes of the populated prefix of `r`, or `None` if the prefix is not
    /// whole bytes. Trailing populated columns after a gap are ignored here.
    pub fn read_region(&self, r: Region) -> Option<Vec<u8>> {
        let n = self.populated_prefix(r);
        if !n.is_multiple_of(8) {
            return None;
        }
        let cols = self.region(r);
        Some(
            (0..n / 8)
                .map(|i| (0..8).fold(0u8, |acc, k| (acc << 1) | u8::from(cols[i * 8 + k] == Trit::Set)))
                .collect(),
        )
    }

    /// Read a big-endian unsigned field of `width` bits at region-relative
    /// bit `offset`. `None` if any of its bits is vacant.
    pub fn read_bits(&self, r: Region, offset: usize, width: usize) -> Option<u64> {
        let cols = &self.region(r)[offset..offset + width];
        cols.iter().try_fold(0u64, |acc, t| match t {
            Trit::Vacant => None,
            t => Some((acc << 1) | u64::from(*t == Trit::Set)),
        })
    }

    /// Overwrite a populated field. Bits are written even if vacant before.
    pub fn write_bits(&mut self, r: Region, offset: usize, width: usize, value: u64) {
        let base = r.offset() + offset;
        for k in 0..width {
            let bit = (value >> (width - 1 - k)) & 1 == 1;
            self.0[base + k] = Trit::from_bit(bit);
        }
    }

    /// Structural checks decode needs, all reported at once.
    pub fn violations(&self) -> Vec<RowViolation> {
        let mut v = Vec::new();
        for r in Region::ALL {
            let n = self.populated_prefix(r);
            if self.region(r)[n..].iter().any(|t| t.is_populated()) {
                v.push(RowViolation::NotPrefix { region: r });
            }
            if !n.is_multiple_of(8) {
                v.push(RowViolation::NotByteAligned { region: r, bits: n });
            }
        }
        let ip_bits = self.populated_prefix(Region::Ipv4);
        if ip_bits < IPV4_MIN_HEADER * 8 {
            v.push(RowViolation::Ipv4TooShort { bits: ip_bits });
        }
        let transports: Vec<Region> = Region::TRANSPORT.into_iter().filter(|r| self.region_populated(*r)).collect();
        match transports.len() {
            0 => v.push(RowViolation::NoTransport),
            1 => {}
            _ => v.push(RowViolation::MultipleTransports { regions: transports.clone() }),
        }
        if !v.is_empty() {
            return v;
        }
        let ip = self.read_region(Region::Ipv4).expect("aligned");
        let transport = transports[0];
        let th = self.read_region(transport).expect("aligned");
        if ip[0] >> 4 != 4 {
            v.push(RowViolation::Version { version: ip[0] >> 4 });
        }
        let ihl_bytes = usize::from(ip[0] & 0x0f) * 4;
        if ihl_bytes != ip.len() {
            v.push(RowViolation::IhlMismatch { ihl_bytes, populated_bytes: ip.len() });
        }
        let expected_proto = transport.transport_kind().and_then(|k| k.protocol()).expect("transport region");
        if ip[9] != expected_proto {
            v.push(RowViolation::ProtocolMismatch { protocol: ip[9], region: transport });
        }
        match transport {
            Region::Tcp => {
                if th.len() < 20 {
                    v.push(RowViolation::TransportLength { region: transport, bytes: th.len() });
                } else {
                    let off = usize::from(th[12] >> 4) * 4;
                    if off != th.len() {
                        v.push(RowViolation::DataOffsetMismatch { offset_bytes: off, populated_bytes: th.len() });
                    }
                }
            }
            _ => {
                if th.len() != 8 {
                    v.push(RowViolation::TransportLength { region: transport, bytes: th.len() });
                }
            }
        }
        let total = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
        if total < ip.len() + th.len() {
            v.push(RowViolation::TotalLengthTooSmall { total, headers: ip.len() + th.len() });
        }
        v
    }

    pub fn populated_transport(&self) -> Option<Region> {
        let mut it = Region::TRANSPORT.into_iter().filter(|r| self.region_populated(*r));
        let first = it.next()?;
        it.next().is_none().then_some(first)
    }
}

/// Encode one packet as a row.
pub fn encode_packet(p: &Packet) -> Result<BitRow, EncodeError> {
    let region = Region::for_transport(p.transport_kind).ok_or(EncodeError::Unencodable(p.transport_kind))?;
    p.validate()?;
    if p.is_fragment() {
        return Err(EncodeError::Fragment);
    }
    for (r, len) in [(Region::Ipv4, p.ip_header.len()), (region, p.transport_header.len())] {
        if len * 8 > r.width() {
            return Err(EncodeError::HeaderTooLong { region: r, len, max: r.width() / 8 });
        }
    }
    let mut row = BitRow::padding();
    row.write_region(Region::Ipv4, &p.ip_header);
    row.write_region(region, &p.transport_header);
    Ok(row)
}

/// Decode a row into a packet with timestamp 0. Payload length comes from
/// the IPv4 total length minus both headers.
pub fn decode_packet(row: &BitRow) -> Result<Packet, DecodeError> {
    if row.is_padding() {
        return Err(DecodeError::Padding);
    }
    let v = row.violations();
    if !v.is_empty() {
        return Err(DecodeError::Violations(v));
    }
    let transport = row.populated_transport().expect("checked");
    let ip = row.read_region(Region::Ipv4).expect("checked");
    let th = row.read_region(transport).expect("checked");
    let total = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
    let payload_len = total - ip.len() - th.len();
    Ok(Packet {
        timestamp_us: 0,
        ip_header: ip,
        transport_kind: transport.transport_kind().expect("transport"),
        transport_header: th,
        payload_len,
    })
}

/// A flow as 1024 rows; rows at and after `n_real` are padding.
#[derive(Clone, PartialEq, Eq)]
pub struct NprintMatrix {
    rows: Vec<BitRow>,
    n_real: usize,
    pub label: Option<String>,
}

impl fmt::Debug for NprintMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NprintMatrix").field("n_real", &self.n_real).field("label", &self.label).finish()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("{0} rows exceed the {MATRIX_ROWS}-row matrix")]
    TooManyRows(usize),
    #[error("row {0} after n_real is not padding")]
    NonPaddingTail(usize),
}

impl NprintMatrix {
    pub fn empty(label: Option<String>) -> Self {
        NprintMatrix { rows: vec![BitRow::padding(); MATRIX_ROWS], n_real: 0, label }
    }

    /// Build from leading rows; the rest is padded.
    pub fn from_rows(mut rows: Vec<BitRow>, label: Option<String>) -> Result<Self, MatrixError> {
        if rows.len() > MATRIX_ROWS {
            return Err(MatrixError::TooManyRows(rows.len()));
        }
        let n_real = rows.len();
        rows.resize(MATRIX_ROWS, BitRow::padding());
        Ok(NprintMatrix { rows, n_real, label })
    }

    /// Build from all 1024 rows; `n_real` is one past the last non-padding row.
    pub fn from_full(rows: Vec<BitRow>, label: Option<String>) -> Result<Self, MatrixError> {
        if rows.len() > MATRIX_ROWS {
            return Err(MatrixError::TooManyRows(rows.len()));
        }
        let n_real = rows.iter().rposition(|r| !r.is_padding()).map_or(0, |i| i + 1);
        Self::from_rows(rows.into_iter().take(n_real).collect(), label)
    }

    pub fn n_real(&self) -> usize {
        self.n_real
    }

    pub fn rows(&self) -> &[BitRow] {
        &self.rows
    }

    pub fn real_rows(&self) -> &[BitRow] {
        &self.rows[..self.n_real]
    }

    pub fn real_rows_mut(&mut self) -> &mut [BitRow] {
        &mut self.rows[..self.n_real]
    }

    /// Keep only the real rows whose index satisfies `keep`, compacting them.
    pub fn retain_rows(&mut self, mut keep: impl FnMut(usize, &BitRow) -> bool) {
        let mut kept: Vec<BitRow> = Vec::with_capacity(self.n_real);
        for (i, r) in self.rows[..self.n_real].iter().enumerate() {
            if keep(i, r) {
                kept.push(r.clone());
            }
        }
        let label = self.label.take();
        *self = Self::from_rows(kept, label).expect("never grows");
    }

    pub fn check(&self) -> Result<(), MatrixError> {
        if self.rows.len() != MATRIX_ROWS {
            return Err(MatrixError::TooManyRows(self.rows.len()));
        }
        match self.rows[self.n_real..].iter().position(|r| !r.is_padding()) {
            Some(i) => Err(MatrixError::NonPaddingTail(self.n_real + i)),
            None => Ok(()),
        }
    }
}

/// Encode the first 1024 packets of a flow.
pub fn encode_flow(f: &FlowTrace) -> Result<NprintMatrix, EncodeError> {
    if f.packets.is_empty() {
        return Err(EncodeError::EmptyFlow);
    }
    let rows = f.packets.iter().take(MATRIX_ROWS).map(encode_packet).collect::<Result<Vec<_>, _>>()?;
    Ok(NprintMatrix::from_rows(rows, f.label.clone()).expect("at most 1024 rows"))
}

/// Decode every non-padding row. Timestamps are left at 0.
pub fn decode_flow(m: &NprintMatrix) -> Result<FlowTrace, DecodeError> {
    let packets = m
        .real_rows()
        .iter()
        .enumerate()
        .map(|(row, r)| decode_packet(r).map_err(|e| DecodeError::Row { row, source: Box::new(e) }))
        .collect::<Result<Vec<_>, _>>()?;
    let five_tuple = packets.first().map(|p| p.five_tuple()).unwrap_or(crate::packet::FiveTuple {
        src: std::net::Ipv4Addr::UNSPECIFIED,
        dst: std::net::Ipv4Addr::UNSPECIFIED,
        src_port: 0,
        dst_port: 0,
        protocol: 0,
    });
    Ok(FlowTrace { packets, five_tuple, label: m.label.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{IPPROTO_ICMP, IPPROTO_TCP, IPPROTO_UDP};

    fn ip(proto: u8, ihl_words: u8, total: u16) -> Vec<u8> {
        let len = usize::from(ihl_words) * 4;
        let mut h = vec![0u8; len];
        h[0] = 0x40 | ihl_words;
        h[2..4].copy_from_slice(&total.to_be_bytes());
        h[8] = 64;
        h[9] = proto;
        h[12..16].copy_from_slice(&[10, 1, 2, 3]);
        h[16..20].copy_from_slice(&[10, 3, 2, 1]);
        for (i, b) in h.iter_mut().enumerate().skip(20) {
            *b = i as u8;
        }
        h
    }

    fn tcp_packet(ihl_words: u8, doff_words: u8, payload: usize) -> Packet {
        let tl = usize::from(doff_words) * 4;
        let total = (usize::from(ihl_words) * 4 + tl + payload) as u16;
        let mut t = vec![0xa5u8; tl];
        t[12] = doff_words << 4;
        Packet::new(0, ip(IPPROTO_TCP, ihl_words, total), t, payload).unwrap()
    }

    fn udp_packet() -> Packet {
        Packet::new(0, ip(IPPROTO_UDP, 5, 40), vec![0, 53, 0, 53, 0, 20, 0, 0], 12).unwrap()
    }

    #[test]
    fn minimal_tcp_populates_exact_columns() {
        let row = encode_packet(&tcp_packet(5, 5, 0)).unwrap();
        for c in 0..ROW_BITS {
            let populated = (0..160).contains(&c) || (480..640).contains(&c);
            assert_eq!(row.get(c).is_populated(), populated, "column {c}");
        }
    }

    #[test]
    fn udp_populates_udp_region_only() {
        let row = encode_packet(&udp_packet()).unwrap();
        assert!(row.region(Region::Udp).iter().all(|t| t.is_populated()));
        assert!(row.region(Region::Tcp).iter().all(|t| *t == Trit::Vacant));
        assert!(row.region(Region::Icmp).iter().all(|t| *t == Trit::Vacant));
    }

    #[test]
    fn ihl_six_populates_192_bits() {
        let row = encode_packet(&tcp_packet(6, 5, 3)).unwrap();
        let populated = row.region(Region::Ipv4).iter().filter(|t| t.is_populated()).count();
        assert_eq!(populated, 192);
        assert_eq!(decode_packet(&row).unwrap(), tcp_packet(6, 5, 3));
    }

    #[test]
    fn options_roundtrip() {
        let p = tcp_packet(15, 15, 1000);
        assert_eq!(decode_packet(&encode_packet(&p).unwrap()).unwrap(), p);
        let icmp = Packet::new(0, ip(IPPROTO_ICMP, 5, 84), vec![8, 0, 0, 0, 0, 1, 0, 2], 56).unwrap();
        assert_eq!(decode_packet(&encode_packet(&icmp).unwrap()).unwrap(), icmp);
    }

    #[test]
    fn other_protocol_is_unencodable() {
        let p = Packet::new(0, ip(47, 5, 24), vec![], 4).unwrap();
        assert_eq!(encode_packet(&p), Err(EncodeError::Unencodable(TransportKind::Other)));
    }

    #[test]
    fn fragments_are_rejected() {
        let mut p = udp_packet();
        p.ip_header[6] |= 0x20;
        assert_eq!(encode_packet(&p), Err(EncodeError::Fragment));
    }

    #[test]
    fn padding_row_error() {
        assert_eq!(decode_packet(&BitRow::padding()), Err(DecodeError::Padding));
    }

    #[test]
    fn both_tcp_and_udp_listed() {
        let mut row = encode_packet(&tcp_packet(5, 5, 0)).unwrap();
        row.write_region(Region::Udp, &[0; 8]);
        match decode_packet(&row) {
            Err(DecodeError::Violations(v)) => {
                assert!(v.contains(&RowViolation::MultipleTransports { regions: vec![Region::Tcp, Region::Udp] }))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unaligned_and_holed_prefixes() {
        let mut row = encode_packet(&tcp_packet(5, 5, 0)).unwrap();
        row.set(Region::Tcp.offset() + 160, Trit::Set);
        row.set(Region::Tcp.offset() + 170, Trit::Set);
        let v = row.violations();
        assert!(v.contains(&RowViolation::NotPrefix { region: Region::Tcp }));
        assert!(v.contains(&RowViolation::NotByteAligned { region: Region::Tcp, bits: 161 }));
    }

    #[test]
    fn ihl_contradiction_reported() {
        let mut row = encode_packet(&tcp_packet(5, 5, 0)).unwrap();
        row.write_bits(Region::Ipv4, 4, 4, 6);
        assert_eq!(
            decode_packet(&row),
            Err(DecodeError::Violations(vec![RowViolation::IhlMismatch { ihl_bytes: 24, populated_bytes: 20 }]))
        );
    }

    #[test]
    fn flow_padding_and_truncation() {
        let f = FlowTrace::from_packets(vec![tcp_packet(5, 8, 10); 3], Some("x".into())).unwrap();
        let m = encode_flow(&f).unwrap();
        assert_eq!(m.n_real(), 3);
        assert!(m.rows()[3..].iter().all(BitRow::is_padding));
        assert_eq!(decode_flow(&m).unwrap(), f);

        let long = FlowTrace::from_packets(vec![udp_packet(); 1500], None).unwrap();
        let m = encode_flow(&long).unwrap();
        assert_eq!(m.n_real(), 1024);
        assert_eq!(decode_flow(&m).unwrap().packets.len(), 1024);
    }

    #[test]
    fn from_full_finds_last_real_row() {
        let mut rows = vec![BitRow::padding(); MATRIX_ROWS];
        rows[4] = encode_packet(&udp_packet()).unwrap();
        let m = NprintMatrix::from_full(rows, None).unwrap();
        assert_eq!(m.n_real(), 5);
        m.check().unwrap();
    }

    #[test]
    fn field_bits_roundtrip() {
        let mut row = encode_packet(&udp_packet()).unwrap();
        assert_eq!(row.read_bits(Region::Udp, 32, 16), Some(20));
        row.write_bits(Region::Udp, 32, 16, 0xbeef);
        assert_eq!(row.read_bits(Region::Udp, 32, 16), Some(0xbeef));
        assert_eq!(row.read_bits(Region::Tcp, 0, 16), None);
    }
}
