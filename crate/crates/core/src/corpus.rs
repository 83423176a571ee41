//! Deterministic fixture traffic: a hand-tallied 1024-packet HTTPS capture
//! and seeded per-class flow corpora.
//!
//! Every flow here is built segment by segment with exact seq/ack
//! bookkeeping, per-direction IP IDs and valid checksums, so it passes
//! [`crate::repair::validate`] unchanged.

use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::packet::{FlowTrace, Packet, TcpFlags, IPPROTO_TCP, IPPROTO_UDP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    /// Long TCP/443 downloads.
    Streaming,
    /// Bidirectional UDP media.
    Conferencing,
    /// Short request/response TCP sessions.
    Social,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 3] = [TrafficClass::Streaming, TrafficClass::Conferencing, TrafficClass::Social];

    pub fn label(self) -> &'static str {
        match self {
            TrafficClass::Streaming => "streaming",
            TrafficClass::Conferencing => "conferencing",
            TrafficClass::Social => "social",
        }
    }
}

impl std::str::FromStr for TrafficClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TrafficClass::ALL.into_iter().find(|c| c.label() == s).ok_or_else(|| format!("unknown class {s:?}"))
    }
}

const SYN_OPTIONS: [u8; 20] = [2, 4, 5, 0xb4, 4, 2, 8, 10, 0, 0, 0, 0, 0, 0, 0, 0, 1, 3, 3, 7];

fn ip_header(src: Ipv4Addr, dst: Ipv4Addr, proto: u8, total: usize, id: u16, ttl: u8) -> Vec<u8> {
    let mut ip = vec![0x45, 0, 0, 0, 0, 0, 0x40, 0, ttl, proto, 0, 0];
    ip[2..4].copy_from_slice(&(total as u16).to_be_bytes());
    ip[4..6].copy_from_slice(&id.to_be_bytes());
    ip.extend_from_slice(&src.octets());
    ip.extend_from_slice(&dst.octets());
    ip
}

#[derive(Debug, Clone)]
struct Side {
    addr: Ipv4Addr,
    port: u16,
    next_seq: u32,
    ip_id: u16,
    ttl: u8,
    tsval: u32,
}

/// Builds a TCP conversation one segment at a time.
struct TcpBuilder {
    sides: [Side; 2],
    packets: Vec<Packet>,
    now_us: u64,
}

struct Segment {
    from_client: bool,
    flags: u16,
    payload: usize,
    window: u16,
    urgent: u16,
    syn_options: bool,
}

impl TcpBuilder {
    fn new(client: Side, server: Side) -> Self {
        TcpBuilder { sides: [client, server], packets: Vec::new(), now_us: 0 }
    }

    fn push(&mut self, gap_us: u64, s: Segment) {
        let (me, peer) = if s.from_client { (0, 1) } else { (1, 0) };
        self.now_us += gap_us;
        let flags = TcpFlags(s.flags);
        let ack = if flags.has(TcpFlags::ACK) { self.sides[peer].next_seq } else { 0 };
        let mut opts: Vec<u8> = if s.syn_options { SYN_OPTIONS.to_vec() } else { vec![1, 1, 8, 10, 0, 0, 0, 0, 0, 0, 0, 0] };
        let tsval = self.sides[me].tsval;
        let tsecr = self.sides[peer].tsval;
        let at = opts.len() - 8;
        opts[at..at + 4].copy_from_slice(&tsval.to_be_bytes());
        if flags.has(TcpFlags::ACK) {
            opts[at + 4..at + 8].copy_from_slice(&tsecr.to_be_bytes());
        }
        let side = &self.sides[me];
        let peer_side = &self.sides[peer];
        let mut h = vec![0u8; 20];
        h[0..2].copy_from_slice(&side.port.to_be_bytes());
        h[2..4].copy_from_slice(&peer_side.port.to_be_bytes());
        h[4..8].copy_from_slice(&side.next_seq.to_be_bytes());
        h[8..12].copy_from_slice(&ack.to_be_bytes());
        h[12] = (((20 + opts.len()) / 4) as u8) << 4;
        h[13] = s.flags as u8;
        h[14..16].copy_from_slice(&s.window.to_be_bytes());
        h[18..20].copy_from_slice(&s.urgent.to_be_bytes());
        h.extend_from_slice(&opts);
        let total = 20 + h.len() + s.payload;
        let ip = ip_header(side.addr, peer_side.addr, IPPROTO_TCP, total, side.ip_id, side.ttl);
        let mut p = Packet::new(self.now_us, ip, h, s.payload).expect("well-formed segment");
        p.recompute_checksums();
        let consumed = p.tcp_seq_len();
        let side = &mut self.sides[me];
        side.next_seq = side.next_seq.wrapping_add(consumed);
        side.ip_id = side.ip_id.wrapping_add(1);
        side.tsval = side.tsval.wrapping_add(1 + (gap_us / 1000) as u32);
        self.packets.push(p);
    }

    fn seg(&mut self, gap_us: u64, from_client: bool, flags: u16, payload: usize, window: u16) {
        self.push(gap_us, Segment { from_client, flags, payload, window, urgent: 0, syn_options: false });
    }

    fn handshake(&mut self, rng: &mut ChaCha8Rng, rtt_us: u64) {
        let w = 64240;
        self.push(0, Segment { from_client: true, flags: 0x02, payload: 0, window: w, urgent: 0, syn_options: true });
        self.push(rtt_us, Segment { from_client: false, flags: 0x12, payload: 0, window: 65160, urgent: 0, syn_options: true });
        self.seg(rng.gen_range(50..400), true, 0x10, 0, 502);
    }

    fn teardown(&mut self, rng: &mut ChaCha8Rng, rtt_us: u64) {
        self.seg(rng.gen_range(100..2000), true, 0x11, 0, 502);
        self.seg(rtt_us, false, 0x11, 0, 501);
        self.seg(rng.gen_range(50..400), true, 0x10, 0, 502);
    }

    fn finish(self, label: &str) -> FlowTrace {
        FlowTrace::from_packets(self.packets, Some(label.to_string())).expect("at least one packet")
    }
}

fn side(addr: Ipv4Addr, port: u16, rng: &mut ChaCha8Rng, ttl: u8) -> Side {
    Side { addr, port, next_seq: rng.gen(), ip_id: rng.gen(), ttl, tsval: rng.gen_range(1..1 << 30) }
}

fn client_addr(rng: &mut ChaCha8Rng) -> Ipv4Addr {
    Ipv4Addr::new(192, 168, 1, rng.gen_range(2..60))
}

const CDN: [[u8; 4]; 4] = [[151, 101, 2, 10], [151, 101, 66, 10], [104, 16, 120, 5], [23, 55, 161, 20]];
const MEDIA: [[u8; 4]; 3] = [[170, 114, 52, 2], [170, 114, 10, 80], [52, 112, 240, 9]];
const WEB: [[u8; 4]; 4] = [[31, 13, 71, 36], [31, 13, 80, 12], [157, 240, 22, 35], [104, 244, 42, 1]];

fn streaming_flow(rng: &mut ChaCha8Rng) -> FlowTrace {
    let server = Ipv4Addr::from(CDN[rng.gen_range(0..CDN.len())]);
    let (addr, port, ttl) = (client_addr(rng), rng.gen_range(40000..61000), rng.gen_range(50..58));
    let c = side(addr, port, rng, 64);
    let s = side(server, 443, rng, ttl);
    let rtt = rng.gen_range(8_000..30_000);
    let mut b = TcpBuilder::new(c, s);
    b.handshake(rng, rtt);
    b.seg(rng.gen_range(100..500), true, 0x18, rng.gen_range(300..600), 502);
    b.seg(rtt, false, 0x10, 0, 501);
    let segments = rng.gen_range(30..160);
    for k in 0..segments {
        let last = k + 1 == segments;
        let len = if last { rng.gen_range(100..1448) } else { 1448 };
        let flags = if last || k % 10 == 9 { 0x18 } else { 0x10 };
        b.seg(rng.gen_range(20..300), false, flags, len, 501);
        if k % 2 == 1 || last {
            b.seg(rng.gen_range(20..200), true, 0x10, 0, rng.gen_range(1500..3000));
        }
    }
    b.teardown(rng, rtt);
    b.finish(TrafficClass::Streaming.label())
}

fn social_flow(rng: &mut ChaCha8Rng) -> FlowTrace {
    let server = Ipv4Addr::from(WEB[rng.gen_range(0..WEB.len())]);
    let port = if rng.gen_bool(0.85) { 443 } else { 80 };
    let (addr, cport, ttl) = (client_addr(rng), rng.gen_range(40000..61000), rng.gen_range(52..60));
    let c = side(addr, cport, rng, 64);
    let s = side(server, port, rng, ttl);
    let rtt = rng.gen_range(15_000..60_000);
    let mut b = TcpBuilder::new(c, s);
    b.handshake(rng, rtt);
    for _ in 0..rng.gen_range(1..4) {
        b.seg(rng.gen_range(1000..50_000), true, 0x18, rng.gen_range(200..900), 502);
        let parts = rng.gen_range(1..6);
        for k in 0..parts {
            let len = if k + 1 == parts { rng.gen_range(80..1400) } else { 1400 };
            let gap = if k == 0 { rtt } else { rng.gen_range(50..500) };
            b.seg(gap, false, if k + 1 == parts { 0x18 } else { 0x10 }, len, 280);
        }
        b.seg(rng.gen_range(50..300), true, 0x10, 0, 502);
    }
    b.teardown(rng, rtt);
    b.finish(TrafficClass::Social.label())
}

fn conferencing_flow(rng: &mut ChaCha8Rng) -> FlowTrace {
    let server = Ipv4Addr::from(MEDIA[rng.gen_range(0..MEDIA.len())]);
    let client = client_addr(rng);
    let (cport, sport) = (rng.gen_range(50000..60000), [3478u16, 8801, 19302][rng.gen_range(0..3)]);
    let mut ids: [u16; 2] = [rng.gen(), rng.gen()];
    let ttls = [64u8, rng.gen_range(45..58)];
    let mut now = 0u64;
    let mut packets = Vec::new();
    for k in 0..rng.gen_range(60..240) {
        let from_client = k == 0 || rng.gen_bool(0.5);
        let d = usize::from(!from_client);
        let (src, dst, sp, dp) = if from_client { (client, server, cport, sport) } else { (server, client, sport, cport) };
        let payload = if rng.gen_bool(0.1) { rng.gen_range(20..80) } else { rng.gen_range(120..1100) };
        let ip = ip_header(src, dst, IPPROTO_UDP, 28 + payload, ids[d], ttls[d]);
        let mut h = vec![0u8; 8];
        h[0..2].copy_from_slice(&sp.to_be_bytes());
        h[2..4].copy_from_slice(&dp.to_be_bytes());
        h[4..6].copy_from_slice(&((8 + payload) as u16).to_be_bytes());
        if k > 0 {
            now += rng.gen_range(2_000..22_000);
        }
        let mut p = Packet::new(now, ip, h, payload).expect("well-formed datagram");
        p.recompute_checksums();
        packets.push(p);
        ids[d] = ids[d].wrapping_add(1);
    }
    FlowTrace::from_packets(packets, Some(TrafficClass::Conferencing.label().into())).expect("non-empty")
}

/// `n` flows of one class, deterministic in `seed`.
pub fn class_flows(class: TrafficClass, n: usize, seed: u64) -> Vec<FlowTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class as u64 + 1);
    (0..n)
        .map(|_| match class {
            TrafficClass::Streaming => streaming_flow(&mut rng),
            TrafficClass::Conferencing => conferencing_flow(&mut rng),
            TrafficClass::Social => social_flow(&mut rng),
        })
        .collect()
}

pub const REFERENCE_CLIENT: Ipv4Addr = Ipv4Addr::new(192, 168, 43, 37);
pub const REFERENCE_SERVER: Ipv4Addr = Ipv4Addr::new(54, 182, 199, 148);
pub const REFERENCE_CLIENT_PORT: u16 = 46508;
pub const REFERENCE_DURATION_US: u64 = 602_296;

/// A 1024-packet mid-stream HTTPS download whose header statistics are
/// fixed by construction: 303 client packets and 721 server packets,
/// 1,100,406 IP bytes, TCP window sum 33,525,708, TTL sum 190,986, ACK on
/// all but the first packet, URG on 16 server packets, no SYN/FIN/RST/PSH,
/// spanning 602,296 µs.
pub fn reference_flow() -> FlowTrace {
    const N: usize = 1024;
    const CLIENT_PACKETS: usize = 303;
    let client = Side {
        addr: REFERENCE_CLIENT,
        port: REFERENCE_CLIENT_PORT,
        next_seq: 0x5f3a_91c2,
        ip_id: 0x2b40,
        ttl: 64,
        tsval: 3_015_872_110,
    };
    let server = Side { addr: REFERENCE_SERVER, port: 443, next_seq: 0x0c7e_22d5, ip_id: 0x91a0, ttl: 238, tsval: 1_902_455_008 };
    let mut b = TcpBuilder::new(client, server);

    // server payload sizes: 3 pure ACKs, 6 x 700 B, 6 x 1200 B, 680 x 1520 B, 26 x 1519 B (IP total lengths)
    let server_total = |k: usize| -> usize {
        match k {
            30 | 330 | 630 => 52,
            _ if k.is_multiple_of(120) && k < 720 => 700,
            _ if k % 120 == 60 => 1200,
            _ if k % 27 == 13 && k < 700 => 1519,
            _ => 1520,
        }
    };
    let (mut k_server, mut k_client) = (0usize, 0usize);
    let mut last_ts = 0u64;
    for i in 0..N {
        let ts = i as u64 * REFERENCE_DURATION_US / (N as u64 - 1);
        let gap = ts - last_ts;
        last_ts = ts;
        let from_client = (i * CLIENT_PACKETS) % N < CLIENT_PACKETS;
        if from_client {
            let flags = if i == 0 { 0 } else { TcpFlags::ACK };
            b.seg(gap, true, flags, 0, 65535);
            k_client += 1;
        } else {
            if k_server >= 717 {
                b.sides[1].ttl = 237;
            }
            let total = server_total(k_server);
            let urg = k_server % 45 == 7;
            let window = if k_server == 720 { 18843 } else { 18958 };
            b.push(
                gap,
                Segment {
                    from_client: false,
                    flags: TcpFlags::ACK | if urg { TcpFlags::URG } else { 0 },
                    payload: total - 52,
                    window,
                    urgent: u16::from(urg),
                    syn_options: false,
                },
            );
            k_server += 1;
        }
    }
    debug_assert_eq!((k_client, k_server), (CLIENT_PACKETS, N - CLIENT_PACKETS));
    b.finish("amazon")
}
