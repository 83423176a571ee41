//! Named header fields and where their bits sit in a row.

use crate::nprint::{BitRow, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderField {
    pub name: &'static str,
    pub region: Region,
    /// Bit offset from the start of the region.
    pub offset: usize,
    pub width: usize,
}

impl HeaderField {
    const fn new(name: &'static str, region: Region, offset: usize, width: usize) -> Self {
        HeaderField { name, region, offset, width }
    }

    /// Field value, or `None` if any of its bits is vacant.
    pub fn read(&self, row: &BitRow) -> Option<u64> {
        row.read_bits(self.region, self.offset, self.width)
    }

    pub fn write(&self, row: &mut BitRow, value: u64) {
        row.write_bits(self.region, self.offset, self.width, value);
    }

    pub fn columns(&self) -> std::ops::Range<usize> {
        let start = self.region.offset() + self.offset;
        start..start + self.width
    }
}

pub const IP_VERSION: HeaderField = HeaderField::new("ipv4.version", Region::Ipv4, 0, 4);
pub const IP_IHL: HeaderField = HeaderField::new("ipv4.ihl", Region::Ipv4, 4, 4);
pub const IP_TOS: HeaderField = HeaderField::new("ipv4.tos", Region::Ipv4, 8, 8);
pub const IP_TOTAL_LENGTH: HeaderField = HeaderField::new("ipv4.total_length", Region::Ipv4, 16, 16);
pub const IP_ID: HeaderField = HeaderField::new("ipv4.id", Region::Ipv4, 32, 16);
pub const IP_RESERVED: HeaderField = HeaderField::new("ipv4.flag_reserved", Region::Ipv4, 48, 1);
pub const IP_DF: HeaderField = HeaderField::new("ipv4.flag_df", Region::Ipv4, 49, 1);
pub const IP_MF: HeaderField = HeaderField::new("ipv4.flag_mf", Region::Ipv4, 50, 1);
pub const IP_FRAG_OFFSET: HeaderField = HeaderField::new("ipv4.fragment_offset", Region::Ipv4, 51, 13);
pub const IP_TTL: HeaderField = HeaderField::new("ipv4.ttl", Region::Ipv4, 64, 8);
pub const IP_PROTOCOL: HeaderField = HeaderField::new("ipv4.protocol", Region::Ipv4, 72, 8);
pub const IP_CHECKSUM: HeaderField = HeaderField::new("ipv4.checksum", Region::Ipv4, 80, 16);
pub const IP_SRC: HeaderField = HeaderField::new("ipv4.src", Region::Ipv4, 96, 32);
pub const IP_DST: HeaderField = HeaderField::new("ipv4.dst", Region::Ipv4, 128, 32);

pub const TCP_SPORT: HeaderField = HeaderField::new("tcp.src_port", Region::Tcp, 0, 16);
pub const TCP_DPORT: HeaderField = HeaderField::new("tcp.dst_port", Region::Tcp, 16, 16);
pub const TCP_SEQ: HeaderField = HeaderField::new("tcp.seq", Region::Tcp, 32, 32);
pub const TCP_ACK: HeaderField = HeaderField::new("tcp.ack", Region::Tcp, 64, 32);
pub const TCP_DATA_OFFSET: HeaderField = HeaderField::new("tcp.data_offset", Region::Tcp, 96, 4);
pub const TCP_RESERVED: HeaderField = HeaderField::new("tcp.reserved", Region::Tcp, 100, 3);
/// NS through FIN, nine bits.
pub const TCP_FLAGS: HeaderField = HeaderField::new("tcp.flags", Region::Tcp, 103, 9);
pub const TCP_WINDOW: HeaderField = HeaderField::new("tcp.window", Region::Tcp, 112, 16);
pub const TCP_CHECKSUM: HeaderField = HeaderField::new("tcp.checksum", Region::Tcp, 128, 16);
pub const TCP_URGENT: HeaderField = HeaderField::new("tcp.urgent_pointer", Region::Tcp, 144, 16);

pub const UDP_SPORT: HeaderField = HeaderField::new("udp.src_port", Region::Udp, 0, 16);
pub const UDP_DPORT: HeaderField = HeaderField::new("udp.dst_port", Region::Udp, 16, 16);
pub const UDP_LENGTH: HeaderField = HeaderField::new("udp.length", Region::Udp, 32, 16);
pub const UDP_CHECKSUM: HeaderField = HeaderField::new("udp.checksum", Region::Udp, 48, 16);

pub const ICMP_TYPE: HeaderField = HeaderField::new("icmp.type", Region::Icmp, 0, 8);
pub const ICMP_CODE: HeaderField = HeaderField::new("icmp.code", Region::Icmp, 8, 8);
pub const ICMP_CHECKSUM: HeaderField = HeaderField::new("icmp.checksum", Region::Icmp, 16, 16);
pub const ICMP_REST: HeaderField = HeaderField::new("icmp.rest", Region::Icmp, 32, 32);

/// Every fixed-position header field; options are left to per-bit scoring.
pub const ALL: &[HeaderField] = &[
    IP_VERSION,
    IP_IHL,
    IP_TOS,
    IP_TOTAL_LENGTH,
    IP_ID,
    IP_RESERVED,
    IP_DF,
    IP_MF,
    IP_FRAG_OFFSET,
    IP_TTL,
    IP_PROTOCOL,
    IP_CHECKSUM,
    IP_SRC,
    IP_DST,
    TCP_SPORT,
    TCP_DPORT,
    TCP_SEQ,
    TCP_ACK,
    TCP_DATA_OFFSET,
    TCP_RESERVED,
    TCP_FLAGS,
    TCP_WINDOW,
    TCP_CHECKSUM,
    TCP_URGENT,
    UDP_SPORT,
    UDP_DPORT,
    UDP_LENGTH,
    UDP_CHECKSUM,
    ICMP_TYPE,
    ICMP_CODE,
    ICMP_CHECKSUM,
    ICMP_REST,
];

pub fn by_name(name: &str) -> Option<HeaderField> {
    ALL.iter().copied().find(|f| f.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_headers_tile_their_regions() {
        for (region, bits) in [(Region::Ipv4, 160), (Region::Tcp, 160), (Region::Udp, 64), (Region::Icmp, 64)] {
            let mut covered = vec![0u8; bits];
            for f in ALL.iter().filter(|f| f.region == region) {
                for b in f.offset..f.offset + f.width {
                    covered[b] += 1;
                }
            }
            assert!(covered.iter().all(|c| *c == 1), "{region}");
        }
    }

    #[test]
    fn names_are_unique() {
        for f in ALL {
            assert_eq!(by_name(f.name), Some(*f));
        }
    }
}
