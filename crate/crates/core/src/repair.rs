//! Protocol-compliance repair of generated matrices, and a validator for
//! decoded flows.
//!
//! Repair runs in three stages, each driven by the rule table in
//! `data/dependency_rules.toml`: intra-packet fixes on single rows, then
//! inter-packet fixes across the flow, then checksums. Every rule id in the
//! table is dispatched to code here; the table decides the order.
//!
//! Initial values (endpoints, ISNs, IP IDs) come from majority votes over
//! the generated bits, so a flow that is already compliant passes through
//! unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fields;
use crate::generator::ClassProfile;
use crate::nprint::{decode_packet, encode_packet, BitRow, NprintMatrix, Region, RowViolation};
use crate::packet::{FiveTuple, FlowTrace, Packet, TcpFlags, TransportKind};
use crate::rules::{DependencyRuleSet, Rule, Stage};

/// Stream id for timestamp resampling, kept clear of the generator's streams.
const TIMESTAMP_STREAM: u64 = u64::MAX;

/// One rule firing (during repair) or one failed check (during validation).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    /// Row of the input matrix, or packet index of the validated flow.
    pub packet: usize,
    pub field: String,
    pub rule: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub packets: usize,
    pub violations: Vec<Finding>,
    /// Dropped rows, warnings and other flow-level remarks.
    pub repair_notes: Vec<String>,
    /// Changed trits over populated trits of the input; 0 for validation.
    pub repaired_fraction: f64,
}

impl ComplianceReport {
    pub fn is_compliant(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// What one stage did.
#[derive(Debug, Clone, Default)]
pub struct StageLog {
    pub findings: Vec<Finding>,
    pub notes: Vec<String>,
    /// Input row index of every surviving output row.
    pub kept: Vec<usize>,
}

/// Output of the full pipeline.
#[derive(Debug, Clone)]
pub struct Repaired {
    pub matrix: NprintMatrix,
    pub flow: FlowTrace,
    pub report: ComplianceReport,
}

fn finding(packet: usize, rule: &Rule) -> Finding {
    Finding { packet, field: rule.field.clone(), rule: rule.id.clone(), description: rule.rule.clone() }
}

fn check(packet: usize, field: &str, rule: &str, description: String) -> Finding {
    Finding { packet, field: field.into(), rule: rule.into(), description }
}

// ------------------------------------------------------------------ intra

/// Why a row cannot become a legal header by rewriting fields alone.
fn structural_defect(row: &BitRow) -> Option<String> {
    let fatal: Vec<String> = row
        .violations()
        .into_iter()
        .filter(|v| {
            matches!(
                v,
                RowViolation::NotPrefix { .. }
                    | RowViolation::NotByteAligned { .. }
                    | RowViolation::Ipv4TooShort { .. }
                    | RowViolation::NoTransport
                    | RowViolation::MultipleTransports { .. }
                    | RowViolation::TransportLength { .. }
            )
        })
        .map(|v| v.to_string())
        .collect();
    if !fatal.is_empty() {
        return Some(fatal.join("; "));
    }
    let ip_bits = row.populated_prefix(Region::Ipv4);
    if !ip_bits.is_multiple_of(32) {
        return Some(format!("IPv4 prefix of {ip_bits} bits is not whole 32-bit words"));
    }
    let tcp_bits = row.populated_prefix(Region::Tcp);
    if !tcp_bits.is_multiple_of(32) {
        return Some(format!("TCP prefix of {tcp_bits} bits is not whole 32-bit words"));
    }
    None
}

fn apply_intra(id: &str, row: &mut BitRow) {
    let transport = row.populated_transport().expect("structurally legal row");
    let ip_bits = row.populated_prefix(Region::Ipv4) as u64;
    let t_bits = row.populated_prefix(transport) as u64;
    match id {
        "ip.version" => fields::IP_VERSION.write(row, 4),
        "ip.protocol" => {
            let proto = transport.transport_kind().and_then(|k| k.protocol()).expect("transport region");
            fields::IP_PROTOCOL.write(row, u64::from(proto));
        }
        "ip.ihl" => fields::IP_IHL.write(row, ip_bits / 32),
        "ip.flags.reserved" => fields::IP_RESERVED.write(row, 0),
        "ip.fragment" => {
            fields::IP_MF.write(row, 0);
            fields::IP_FRAG_OFFSET.write(row, 0);
        }
        "tcp.data_offset" if transport == Region::Tcp => fields::TCP_DATA_OFFSET.write(row, t_bits / 32),
        "tcp.reserved" if transport == Region::Tcp => fields::TCP_RESERVED.write(row, 0),
        "ip.total_length" => {
            let headers = (ip_bits + t_bits) / 8;
            let total = fields::IP_TOTAL_LENGTH.read(row).expect("populated");
            if total < headers {
                fields::IP_TOTAL_LENGTH.write(row, headers);
            }
        }
        "udp.length" if transport == Region::Udp => {
            let total = fields::IP_TOTAL_LENGTH.read(row).expect("populated");
            fields::UDP_LENGTH.write(row, total - ip_bits / 8);
        }
        _ => {}
    }
}

/// Intra-packet repair with the shipped rule table.
pub fn repair_intra(m: &NprintMatrix) -> (NprintMatrix, StageLog) {
    repair_intra_with(m, DependencyRuleSet::builtin())
}

pub fn repair_intra_with(m: &NprintMatrix, rules: &DependencyRuleSet) -> (NprintMatrix, StageLog) {
    let intra: Vec<&Rule> = rules.stage(Stage::Intra).collect();
    let per_row: Vec<(Option<BitRow>, Vec<Finding>, Option<String>)> = m
        .real_rows()
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            if let Some(why) = structural_defect(row) {
                return (None, Vec::new(), Some(format!("row {i} dropped: {why}")));
            }
            let mut row = row.clone();
            let mut found = Vec::new();
            for rule in &intra {
                let before = row.clone();
                apply_intra(&rule.id, &mut row);
                if row != before {
                    found.push(finding(i, rule));
                }
            }
            (Some(row), found, None)
        })
        .collect();

    let mut log = StageLog::default();
    let mut rows = Vec::new();
    for (i, (row, found, note)) in per_row.into_iter().enumerate() {
        log.findings.extend(found);
        log.notes.extend(note);
        if let Some(r) = row {
            rows.push(r);
            log.kept.push(i);
        }
    }
    let out = NprintMatrix::from_rows(rows, m.label.clone()).expect("never grows");
    (out, log)
}

// ------------------------------------------------------------------ inter

/// Per-bit majority over `width`-bit values; ties take the first value's bit.
fn bit_vote(values: &[u64], width: usize) -> u64 {
    let Some(first) = values.first() else { return 0 };
    let mut out = 0u64;
    for b in 0..width {
        let ones = values.iter().filter(|v| (*v >> b) & 1 == 1).count();
        let zeros = values.len() - ones;
        let bit = match ones.cmp(&zeros) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => (first >> b) & 1,
        };
        out |= bit << b;
    }
    out
}

fn tuple_distance(a: &FiveTuple, b: &FiveTuple) -> u32 {
    (u32::from(a.src) ^ u32::from(b.src)).count_ones()
        + (u32::from(a.dst) ^ u32::from(b.dst)).count_ones()
        + (a.src_port ^ b.src_port).count_ones()
        + (a.dst_port ^ b.dst_port).count_ones()
}

fn vote_tuple(tuples: &[FiveTuple], protocol: u8) -> FiveTuple {
    let canon: Vec<FiveTuple> = tuples.iter().map(|t| t.canonical()).collect();
    let pick = |f: fn(&FiveTuple) -> u64, width| bit_vote(&canon.iter().map(f).collect::<Vec<_>>(), width);
    FiveTuple {
        src: (pick(|t| u64::from(u32::from(t.src)), 32) as u32).into(),
        dst: (pick(|t| u64::from(u32::from(t.dst)), 32) as u32).into(),
        src_port: pick(|t| u64::from(t.src_port), 16) as u16,
        dst_port: pick(|t| u64::from(t.dst_port), 16) as u16,
        protocol,
    }
}

struct FlowState<'a> {
    packets: Vec<Packet>,
    /// Input row of each packet.
    rows: Vec<usize>,
    /// true = initiator -> responder.
    forward: Vec<bool>,
    tuple: Option<FiveTuple>,
    isn: [Option<u32>; 2],
    profile: &'a ClassProfile,
    notes: Vec<String>,
}

fn dir(forward: bool) -> usize {
    usize::from(!forward)
}

impl FlowState<'_> {
    fn is_tcp(&self) -> bool {
        self.packets.first().is_some_and(|p| p.transport_kind == TransportKind::Tcp)
    }

    fn tuple(&self) -> FiveTuple {
        self.tuple.unwrap_or_else(|| self.packets[0].five_tuple())
    }

    fn orient(&mut self, i: usize) {
        let t = self.tuple();
        let t = if self.forward[i] { t } else { t.reversed() };
        self.packets[i].set_endpoints(&t);
    }

    fn flags(&self, i: usize) -> TcpFlags {
        self.packets[i].tcp_flags().unwrap_or_default()
    }

    fn set_flag(&mut self, i: usize, bit: u16, on: bool) {
        let mut f = self.flags(i);
        f.set(bit, on);
        self.packets[i].set_tcp_flags(f);
    }

    fn endpoints(&mut self) {
        // transport vote: minority-protocol rows cannot share one 5-tuple
        let mut counts: Vec<(TransportKind, usize)> = Vec::new();
        for p in &self.packets {
            match counts.iter_mut().find(|(k, _)| *k == p.transport_kind) {
                Some((_, n)) => *n += 1,
                None => counts.push((p.transport_kind, 1)),
            }
        }
        let Some(winner) = counts.iter().fold(None::<(TransportKind, usize)>, |best, c| match best {
            Some(b) if b.1 >= c.1 => Some(b),
            _ => Some(*c),
        }) else {
            return;
        };
        let mut i = 0;
        while i < self.packets.len() {
            if self.packets[i].transport_kind != winner.0 {
                self.notes.push(format!("row {} dropped: {} in a {} flow", self.rows[i], self.packets[i].transport_kind, winner.0));
                self.packets.remove(i);
                self.rows.remove(i);
                self.forward.remove(i);
            } else {
                i += 1;
            }
        }

        let protocol = winner.0.protocol().expect("encodable transport");
        let tuples: Vec<FiveTuple> = self.packets.iter().map(|p| p.five_tuple()).collect();
        let voted = vote_tuple(&tuples, protocol);
        let nearest = self
            .profile
            .tuple_samples
            .iter()
            .filter(|s| s.protocol == protocol)
            .min_by_key(|s| tuple_distance(&voted, s).min(tuple_distance(&voted, &s.reversed())));
        self.tuple = Some(match nearest {
            Some(s) => *s,
            None => {
                self.notes.push(format!("no {} 5-tuple in the profile; keeping the voted endpoints", winner.0));
                voted
            }
        });
    }

    fn direction(&mut self) {
        let t = self.tuple();
        for i in 0..self.packets.len() {
            let own = self.packets[i].five_tuple();
            self.forward[i] = tuple_distance(&own, &t) <= tuple_distance(&own, &t.reversed());
            self.orient(i);
        }
    }

    fn handshake(&mut self) {
        if !self.is_tcp() {
            return;
        }
        let n = self.packets.len();
        let syn_seen = (0..n).any(|i| self.flags(i).has(TcpFlags::SYN));
        if syn_seen && n >= 3 {
            for (i, (fwd, syn, ack)) in [(true, true, false), (false, true, true), (true, false, true)].into_iter().enumerate() {
                self.forward[i] = fwd;
                self.orient(i);
                self.set_flag(i, TcpFlags::SYN, syn);
                self.set_flag(i, TcpFlags::ACK, ack);
                self.set_flag(i, TcpFlags::FIN, false);
                self.set_flag(i, TcpFlags::RST, false);
            }
            for i in 3..n {
                self.set_flag(i, TcpFlags::SYN, false);
                self.set_flag(i, TcpFlags::ACK, true);
            }
        } else {
            if syn_seen {
                self.notes.push(format!("{n}-row TCP flow is too short for a handshake; repaired as mid-stream"));
            }
            for i in 0..n {
                self.set_flag(i, TcpFlags::SYN, false);
            }
        }
    }

    fn teardown(&mut self) {
        if !self.is_tcp() {
            return;
        }
        let n = self.packets.len();
        for d in [true, false] {
            let idx: Vec<usize> = (0..n).filter(|i| self.forward[*i] == d).collect();
            let Some(last_fin) = idx.iter().rposition(|i| self.flags(*i).has(TcpFlags::FIN)) else { continue };
            // keep the last FIN if only payload-free segments follow it
            let quiet_after = idx[last_fin + 1..].iter().all(|i| self.packets[*i].payload_len == 0);
            let keep = if quiet_after { last_fin } else { idx.len() - 1 };
            for (k, i) in idx.iter().enumerate() {
                self.set_flag(*i, TcpFlags::FIN, k == keep);
            }
        }
        let any_rst = (0..n).any(|i| self.flags(i).has(TcpFlags::RST));
        for i in 0..n {
            self.set_flag(i, TcpFlags::RST, any_rst && i + 1 == n);
        }
    }

    /// ISN per direction from `seq - sequence space consumed before it`.
    fn vote_isns(&self) -> [Option<u32>; 2] {
        let mut cands: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
        let mut consumed = [0u32; 2];
        for (i, p) in self.packets.iter().enumerate() {
            let d = dir(self.forward[i]);
            cands[d].push(u64::from(p.tcp_seq().unwrap_or(0).wrapping_sub(consumed[d])));
            consumed[d] = consumed[d].wrapping_add(p.tcp_seq_len());
        }
        cands.map(|c| (!c.is_empty()).then(|| bit_vote(&c, 32) as u32))
    }

    fn seq(&mut self) {
        if !self.is_tcp() {
            return;
        }
        self.isn = self.vote_isns();
        let mut next = self.isn;
        for i in 0..self.packets.len() {
            let d = dir(self.forward[i]);
            let s = next[d].expect("direction has packets");
            self.packets[i].set_tcp_seq(s);
            next[d] = Some(s.wrapping_add(self.packets[i].tcp_seq_len()));
        }
    }

    fn ack(&mut self) {
        if !self.is_tcp() {
            return;
        }
        let mut isn = if self.isn.iter().all(Option::is_none) { self.vote_isns() } else { self.isn };
        // a silent peer's ISN is whatever this side acknowledges
        for d in 0..2 {
            if isn[d].is_none() {
                let acks: Vec<u64> = (0..self.packets.len())
                    .filter(|i| dir(self.forward[*i]) != d && self.flags(*i).has(TcpFlags::ACK))
                    .map(|i| u64::from(self.packets[i].tcp_ack().unwrap_or(0)))
                    .collect();
                isn[d] = (!acks.is_empty()).then(|| bit_vote(&acks, 32) as u32);
            }
        }
        let mut next = isn;
        for i in 0..self.packets.len() {
            let d = dir(self.forward[i]);
            let f = self.flags(i);
            if f.has(TcpFlags::ACK) {
                if let Some(a) = next[1 - d] {
                    self.packets[i].set_tcp_ack(a);
                }
            } else if f.has(TcpFlags::SYN) {
                self.packets[i].set_tcp_ack(0);
            }
            if let Some(s) = next[d].as_mut() {
                *s = s.wrapping_add(self.packets[i].tcp_seq_len());
            }
        }
    }

    fn ip_id(&mut self) {
        let mut cands: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
        for (i, p) in self.packets.iter().enumerate() {
            let d = dir(self.forward[i]);
            cands[d].push(u64::from(p.ip_id().wrapping_sub(cands[d].len() as u16)));
        }
        let base = cands.map(|c| bit_vote(&c, 16) as u16);
        let mut k = [0u16; 2];
        for i in 0..self.packets.len() {
            let d = dir(self.forward[i]);
            self.packets[i].set_ip_id(base[d].wrapping_add(k[d]));
            k[d] = k[d].wrapping_add(1);
        }
    }

    fn apply(&mut self, id: &str) {
        if self.packets.is_empty() {
            return;
        }
        match id {
            "flow.endpoints" => self.endpoints(),
            "flow.direction" => self.direction(),
            "tcp.handshake" => self.handshake(),
            "tcp.teardown" => self.teardown(),
            "tcp.seq" => self.seq(),
            "tcp.ack" => self.ack(),
            "ip.id" => self.ip_id(),
            _ => {}
        }
    }
}

/// Inter-packet repair with the shipped rule table. Expects intra repair
/// to have run; rows that still do not decode are dropped.
pub fn repair_inter(m: &NprintMatrix, profile: &ClassProfile) -> (NprintMatrix, StageLog) {
    repair_inter_with(m, profile, DependencyRuleSet::builtin())
}

pub fn repair_inter_with(m: &NprintMatrix, profile: &ClassProfile, rules: &DependencyRuleSet) -> (NprintMatrix, StageLog) {
    let mut state = FlowState {
        packets: Vec::new(),
        rows: Vec::new(),
        forward: Vec::new(),
        tuple: None,
        isn: [None, None],
        profile,
        notes: Vec::new(),
    };
    for (i, row) in m.real_rows().iter().enumerate() {
        match decode_packet(row) {
            Ok(p) => {
                state.packets.push(p);
                state.rows.push(i);
                state.forward.push(true);
            }
            Err(e) => state.notes.push(format!("row {i} dropped: {e}")),
        }
    }

    let mut findings = Vec::new();
    for rule in rules.stage(Stage::Inter) {
        let before: Vec<(usize, Packet)> = state.rows.iter().copied().zip(state.packets.iter().cloned()).collect();
        state.apply(&rule.id);
        for (row, p) in state.rows.iter().zip(&state.packets) {
            let changed = before.iter().find(|(r, _)| r == row).is_some_and(|(_, old)| old != p);
            if changed {
                findings.push(finding(*row, rule));
            }
        }
    }
    findings.sort_by_key(|f| f.packet);

    let rows = state.packets.iter().map(|p| encode_packet(p).expect("repaired packets encode")).collect();
    let out = NprintMatrix::from_rows(rows, m.label.clone()).expect("never grows");
    (out, StageLog { findings, notes: state.notes, kept: state.rows })
}

// --------------------------------------------------------------- checksums

/// Recompute IPv4 and transport checksums on every decodable row.
pub fn finalize_checksums(m: &NprintMatrix) -> NprintMatrix {
    finalize_with_log(m, DependencyRuleSet::builtin()).0
}

fn finalize_with_log(m: &NprintMatrix, rules: &DependencyRuleSet) -> (NprintMatrix, Vec<Finding>) {
    let stage: Vec<&Rule> = rules.stage(Stage::Checksum).collect();
    let per_row: Vec<(BitRow, Vec<Finding>)> = m
        .real_rows()
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let Ok(mut p) = decode_packet(row) else { return (row.clone(), Vec::new()) };
            let (ip_before, l4_before) = (p.ip_checksum(), p.transport_checksum_field());
            p.recompute_checksums();
            let mut found = Vec::new();
            for rule in &stage {
                let changed = match rule.id.as_str() {
                    "ip.checksum" => p.ip_checksum() != ip_before,
                    "l4.checksum" => p.transport_checksum_field() != l4_before,
                    _ => false,
                };
                if changed {
                    found.push(finding(i, rule));
                }
            }
            (encode_packet(&p).expect("decoded packets re-encode"), found)
        })
        .collect();
    let (rows, found): (Vec<BitRow>, Vec<Vec<Finding>>) = per_row.into_iter().unzip();
    let out = NprintMatrix::from_rows(rows, m.label.clone()).expect("same size");
    (out, found.into_iter().flatten().collect())
}

// -------------------------------------------------------------- timestamps

/// Resample inter-arrival gaps from the profile. First packet at 0.
pub fn assign_timestamps(f: &FlowTrace, profile: &ClassProfile, seed: u64) -> FlowTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TIMESTAMP_STREAM);
    let samples = &profile.inter_arrival_samples;
    if samples.is_empty() {
        log::warn!("profile {:?} has no inter-arrival samples; using 1 ms gaps", profile.label);
    }
    let mut out = f.clone();
    let mut t = 0u64;
    for (i, p) in out.packets.iter_mut().enumerate() {
        if i > 0 {
            t += if samples.is_empty() { 1000 } else { samples[rng.gen_range(0..samples.len())] };
        }
        p.timestamp_us = t;
    }
    out
}

// ---------------------------------------------------------------- pipeline

fn changed_trits(a: &BitRow, b: &BitRow) -> usize {
    a.trits().iter().zip(b.trits().iter()).filter(|(x, y)| x != y).count()
}

/// Intra, inter and checksum repair, then timestamps. `seed` only drives
/// timestamp resampling.
pub fn repair(m: &NprintMatrix, profile: &ClassProfile, seed: u64) -> Repaired {
    repair_with(m, profile, seed, DependencyRuleSet::builtin())
}

pub fn repair_with(m: &NprintMatrix, profile: &ClassProfile, seed: u64, rules: &DependencyRuleSet) -> Repaired {
    let (intra, log1) = repair_intra_with(m, rules);
    let (inter, log2) = repair_inter_with(&intra, profile, rules);
    let (done, sums) = finalize_with_log(&inter, rules);

    // map final rows back to input rows
    let kept: Vec<usize> = log2.kept.iter().map(|j| log1.kept[*j]).collect();
    let mut violations = log1.findings;
    violations.extend(log2.findings.into_iter().map(|mut f| {
        f.packet = log1.kept[f.packet];
        f
    }));
    violations.extend(sums.into_iter().map(|mut f| {
        f.packet = kept[f.packet];
        f
    }));
    violations.sort_by_key(|f| f.packet);
    let mut notes = log1.notes;
    notes.extend(log2.notes.into_iter().map(|n| remap_note(&n, &log1.kept)));
    if profile.inter_arrival_samples.is_empty() {
        notes.push("no inter-arrival samples; timestamps use 1 ms gaps".into());
    }

    let original = m.real_rows();
    let populated: usize = original.iter().map(BitRow::populated_count).sum();
    let mut changed: usize = kept.iter().zip(done.real_rows()).map(|(i, r)| changed_trits(&original[*i], r)).sum();
    let mut survivors = vec![false; original.len()];
    for i in &kept {
        survivors[*i] = true;
    }
    changed += original.iter().zip(&survivors).filter(|(_, s)| !**s).map(|(r, _)| r.populated_count()).sum::<usize>();
    let repaired_fraction = if populated == 0 { 0.0 } else { (changed as f64 / populated as f64).min(1.0) };

    let flow = crate::nprint::decode_flow(&done).expect("repaired rows decode");
    let flow = assign_timestamps(&flow, profile, seed);
    Repaired {
        matrix: done,
        report: ComplianceReport { packets: flow.len(), violations, repair_notes: notes, repaired_fraction },
        flow,
    }
}

/// Inter-stage notes name rows of the intra output; rewrite to input rows.
fn remap_note(note: &str, kept: &[usize]) -> String {
    let Some(rest) = note.strip_prefix("row ") else { return note.to_string() };
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    match digits.parse::<usize>().ok().and_then(|j| kept.get(j)) {
        Some(i) => format!("row {i}{}", &rest[digits.len()..]),
        None => note.to_string(),
    }
}

// -------------------------------------------------------------- validation

fn check_packet(i: usize, p: &Packet, out: &mut Vec<Finding>) {
    if p.version() != 4 {
        out.push(check(i, "ip.version", "ip.version", format!("version {}", p.version())));
    }
    if let Err(e) = p.validate() {
        out.push(check(i, "ip.ihl", "ip.total_length", format!("header structure: {e}")));
    }
    if p.transport_kind == TransportKind::Other {
        out.push(check(i, "ip.protocol", "ip.protocol", format!("protocol {} has no bit layout", p.protocol())));
    }
    if p.is_fragment() {
        out.push(check(i, "ip.fragment", "ip.fragment", "fragmented datagram".into()));
    }
    if p.ip_reserved_flag() {
        out.push(check(i, "ip.flags.reserved", "ip.flags.reserved", "reserved flag set".into()));
    }
    if !p.ip_checksum_ok() {
        out.push(check(i, "ip.checksum", "ip.checksum", format!("bad IPv4 checksum {:#06x}", p.ip_checksum())));
    }
    if let Some(r) = p.tcp_reserved().filter(|r| *r != 0) {
        out.push(check(i, "tcp.reserved", "tcp.reserved", format!("reserved bits {r:#05b}")));
    }
    if !p.transport_checksum_ok() {
        let v = p.transport_checksum_field().unwrap_or(0);
        let field = match p.transport_kind {
            TransportKind::Udp => "udp.checksum",
            TransportKind::Icmp => "icmp.checksum",
            _ => "tcp.checksum",
        };
        out.push(check(i, field, "l4.checksum", format!("bad transport checksum {v:#06x}")));
    }
    if let Some(len) = p.udp_length() {
        let want = 8 + p.payload_len;
        if usize::from(len) != want {
            out.push(check(i, "udp.length", "udp.length", format!("UDP length {len}, expected {want}")));
        }
    }
    if let Some(off) = p.tcp_data_offset_bytes().filter(|o| *o != p.transport_header.len()) {
        out.push(check(i, "tcp.data_offset", "tcp.data_offset", format!("data offset {off} bytes")));
    }
}

fn check_tcp(f: &FlowTrace, out: &mut Vec<Finding>) {
    let n = f.packets.len();
    let t = f.five_tuple;
    let fwd: Vec<bool> = f.packets.iter().map(|p| p.five_tuple() == t).collect();
    let flags: Vec<TcpFlags> = f.packets.iter().map(|p| p.tcp_flags().unwrap_or_default()).collect();

    if flags.iter().any(|x| x.has(TcpFlags::SYN)) {
        let want = [(true, true, false), (false, true, true), (true, false, true)];
        for (i, (d, syn, ack)) in want.into_iter().enumerate().take(n) {
            if fwd[i] != d || flags[i].has(TcpFlags::SYN) != syn || flags[i].has(TcpFlags::ACK) != ack {
                let stage = ["SYN", "SYN-ACK", "ACK"][i];
                out.push(check(i, "tcp.flags.handshake", "tcp.handshake", format!("packet {i} is not the handshake {stage}")));
            }
        }
        for (i, fl) in flags.iter().enumerate().skip(3) {
            if fl.has(TcpFlags::SYN) {
                out.push(check(i, "tcp.flags.handshake", "tcp.handshake", "SYN after the handshake".into()));
            }
        }
    }

    // sequence walk: expected seq per direction, resynchronized after a miss
    let mut next: [Option<u32>; 2] = [None, None];
    let mut first_seq: [Option<u32>; 2] = [None, None];
    for (i, p) in f.packets.iter().enumerate() {
        let d = dir(fwd[i]);
        if first_seq[d].is_none() {
            first_seq[d] = p.tcp_seq();
        }
    }
    let mut last_ack: [Option<u32>; 2] = [None, None];
    for (i, p) in f.packets.iter().enumerate() {
        let d = dir(fwd[i]);
        let seq = p.tcp_seq().unwrap_or(0);
        if let Some(e) = next[d] {
            if seq != e {
                out.push(check(i, "tcp.seq", "tcp.seq", format!("seq {seq}, expected {e}")));
            }
        }
        next[d] = Some(seq.wrapping_add(p.tcp_seq_len()));

        if flags[i].has(TcpFlags::ACK) {
            let ack = p.tcp_ack().unwrap_or(0);
            // cannot acknowledge data the peer has not sent
            if let Some(limit) = next[1 - d].or(first_seq[1 - d]) {
                if limit.wrapping_sub(ack) >= 1 << 31 {
                    out.push(check(i, "tcp.ack", "tcp.ack", format!("ack {ack} beyond peer's next seq {limit}")));
                }
            }
            if let Some(prev) = last_ack[d] {
                if ack.wrapping_sub(prev) >= 1 << 31 {
                    out.push(check(i, "tcp.ack", "tcp.ack", format!("ack {ack} went backwards from {prev}")));
                }
            }
            last_ack[d] = Some(ack);
        }
    }

    for d in [true, false] {
        let idx: Vec<usize> = (0..n).filter(|i| fwd[*i] == d).collect();
        let mut fin_seen = false;
        for i in idx {
            if fin_seen && (flags[i].has(TcpFlags::FIN) || f.packets[i].payload_len > 0) {
                out.push(check(i, "tcp.flags.handshake", "tcp.teardown", "data or a second FIN after FIN".into()));
            }
            fin_seen |= flags[i].has(TcpFlags::FIN);
        }
    }
    for (i, fl) in flags.iter().enumerate() {
        if fl.has(TcpFlags::RST) && i + 1 != n {
            out.push(check(i, "tcp.flags.handshake", "tcp.teardown", "packets follow RST".into()));
        }
    }
}

/// Check a flow against every rule the repair stage enforces.
pub fn validate(f: &FlowTrace) -> ComplianceReport {
    let mut out = Vec::new();
    for (i, p) in f.packets.iter().enumerate() {
        check_packet(i, p, &mut out);
        if !p.five_tuple().matches_either(&f.five_tuple) {
            out.push(check(i, "ip.src", "flow.endpoints", format!("{} is not {}", p.five_tuple(), f.five_tuple)));
        }
        if i > 0 && p.timestamp_us < f.packets[i - 1].timestamp_us {
            out.push(check(i, "timestamp", "timestamps", "timestamp went backwards".into()));
        }
    }
    if f.packets.first().is_some_and(|p| p.transport_kind == TransportKind::Tcp) {
        check_tcp(f, &mut out);
    }
    out.sort_by_key(|x| x.packet);
    ComplianceReport { packets: f.len(), violations: out, repair_notes: Vec::new(), repaired_fraction: 0.0 }
}
