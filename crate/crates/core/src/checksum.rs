//! Internet checksum: ones-complement of the ones-complement sum of 16-bit words.

use std::net::Ipv4Addr;

/// Accumulate big-endian 16-bit words of `data` onto `initial`.
///
/// An odd trailing byte is padded with a zero low byte.
pub fn sum_words(data: &[u8], initial: u32) -> u32 {
    let mut sum = initial;
    let mut chunks = data.chunks_exact(2);
    for pair in &mut chunks {
        sum = sum.wrapping_add(u32::from(u16::from_be_bytes([pair[0], pair[1]])));
        // keep headroom so long inputs never overflow
        if sum & 0x8000_0000 != 0 {
            sum = (sum & 0xFFFF) + (sum >> 16);
        }
    }
    if let [last] = chunks.remainder() {
        sum = sum.wrapping_add(u32::from(*last) << 8);
    }
    sum
}

/// Fold carries and complement.
pub fn fold(mut sum: u32) -> u16 {
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

pub fn internet_checksum(data: &[u8]) -> u16 {
    fold(sum_words(data, 0))
}

/// Sum of the IPv4 pseudo-header used by TCP and UDP checksums.
pub fn pseudo_header_sum(src: Ipv4Addr, dst: Ipv4Addr, protocol: u8, transport_len: u16) -> u32 {
    let mut sum = sum_words(&src.octets(), 0);
    sum = sum_words(&dst.octets(), sum);
    sum += u32::from(protocol);
    sum += u32::from(transport_len);
    sum
}

/// Checksum of a transport segment whose payload is `payload_len` zero bytes.
///
/// `header` must have its checksum field zeroed. Zero bytes add nothing to the
/// word sum, so the payload only enters through the pseudo-header length.
pub fn transport_checksum(
    src: Ipv4Addr,
    dst: Ipv4Addr,
    protocol: u8,
    header: &[u8],
    payload_len: usize,
) -> u16 {
    let seg_len = (header.len() + payload_len) as u16;
    let sum = sum_words(header, pseudo_header_sum(src, dst, protocol, seg_len));
    fold(sum)
}
