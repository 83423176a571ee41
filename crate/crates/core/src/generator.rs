//! Per-class profiles learned from real flows, and a mask-constrained
//! sampler that emits new matrices from them.
//!
//! The sampler draws every allowed, unfrozen column of a row as an
//! independent Bernoulli with the class's per-column marginal. Columns the
//! class never populates (below the `tau` threshold) stay vacant and
//! columns whose populated value never varies are copied verbatim. The
//! transport region is fixed before any bits are drawn, so at most one
//! transport region is ever populated.
//!
//! Randomness is ChaCha8 keyed by the seed: stream 0 picks the flow shape,
//! stream `i + 1` drives row `i`. Rows can therefore be sampled in any order
//! or in parallel with identical output.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil;
use crate::nprint::{encode_flow, BitRow, EncodeError, NprintMatrix, Region, Trit, MATRIX_ROWS, ROW_BITS};
use crate::packet::{FiveTuple, FlowTrace, TransportKind};

pub const PROFILE_VERSION: u32 = 1;
pub const DEFAULT_TAU: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("no flows to learn from")]
    Empty,
    #[error("flow {index} is labelled {found:?}, expected {expected:?}")]
    LabelMismatch { index: usize, found: String, expected: String },
    #[error("flow {index}: {source}")]
    Encode {
        index: usize,
        #[source]
        source: EncodeError,
    },
    #[error("profile version {0} is not supported (expected {PROFILE_VERSION})")]
    Version(u32),
    #[error("invalid profile: {0}")]
    Invalid(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which columns a class may populate, and which are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMask {
    pub allowed: Vec<bool>,
    /// Column -> forced value, only for allowed columns.
    pub frozen: BTreeMap<usize, Trit>,
}

impl RegionMask {
    pub fn is_allowed(&self, col: usize) -> bool {
        self.allowed[col]
    }

    pub fn frozen_value(&self, col: usize) -> Option<Trit> {
        self.frozen.get(&col).copied()
    }

    /// True when the whole region prefix of `bytes` may be populated.
    pub fn allows_prefix(&self, region: Region, bytes: usize) -> bool {
        let start = region.offset();
        self.allowed[start..start + bytes * 8].iter().all(|a| *a)
    }

    fn check(&self) -> Result<(), ProfileError> {
        if self.allowed.len() != ROW_BITS {
            return Err(ProfileError::Invalid(format!("mask has {} columns", self.allowed.len())));
        }
        for (col, t) in &self.frozen {
            if *col >= ROW_BITS || !self.allowed[*col] {
                return Err(ProfileError::Invalid(format!("frozen column {col} is not allowed")));
            }
            if *t == Trit::Vacant {
                return Err(ProfileError::Invalid(format!("frozen column {col} forced vacant")));
            }
        }
        Ok(())
    }
}

/// Everything the sampler and the repair stage learn about one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub version: u32,
    pub label: String,
    pub tau: f64,
    /// P(bit = 1 | populated) per column; 0 for never-populated columns.
    pub column_marginals: Vec<f64>,
    /// Share of real rows populating each column.
    pub populated_fraction: Vec<f64>,
    pub mask: RegionMask,
    /// Packet inter-arrival gaps in microseconds, pooled across flows.
    pub inter_arrival_samples: Vec<u64>,
    pub tuple_samples: Vec<FiveTuple>,
    /// Real-row count of every training flow (capped at 1024).
    pub length_rows: Vec<usize>,
    /// Transport of every training flow, parallel to `length_rows`.
    pub flow_transports: Vec<TransportKind>,
    /// Header byte lengths seen per region, as length -> row count.
    pub header_lengths: BTreeMap<Region, BTreeMap<usize, u64>>,
}

#[derive(Clone)]
struct ColumnCounts {
    rows: u64,
    populated: Vec<u64>,
    set: Vec<u64>,
    header_lengths: BTreeMap<Region, BTreeMap<usize, u64>>,
}

impl ColumnCounts {
    fn new() -> Self {
        ColumnCounts { rows: 0, populated: vec![0; ROW_BITS], set: vec![0; ROW_BITS], header_lengths: BTreeMap::new() }
    }

    fn add_matrix(&mut self, m: &NprintMatrix) {
        for row in m.real_rows() {
            self.rows += 1;
            for (c, t) in row.trits().iter().enumerate() {
                if t.is_populated() {
                    self.populated[c] += 1;
                    if *t == Trit::Set {
                        self.set[c] += 1;
                    }
                }
            }
            for r in Region::ALL {
                let n = row.populated_prefix(r);
                if n > 0 {
                    *self.header_lengths.entry(r).or_default().entry(n / 8).or_insert(0) += 1;
                }
            }
        }
    }

    fn merge(mut self, other: ColumnCounts) -> Self {
        self.rows += other.rows;
        for c in 0..ROW_BITS {
            self.populated[c] += other.populated[c];
            self.set[c] += other.set[c];
        }
        for (r, m) in other.header_lengths {
            let dst = self.header_lengths.entry(r).or_default();
            for (len, n) in m {
                *dst.entry(len).or_insert(0) += n;
            }
        }
        self
    }

    fn mask(&self, tau: f64) -> RegionMask {
        let mut allowed = vec![false; ROW_BITS];
        let mut frozen = BTreeMap::new();
        for c in 0..ROW_BITS {
            let pop = self.populated[c];
            allowed[c] = pop > 0 && pop as f64 >= tau * self.rows as f64;
            if allowed[c] && (self.set[c] == 0 || self.set[c] == pop) {
                frozen.insert(c, Trit::from_bit(self.set[c] == pop));
            }
        }
        RegionMask { allowed, frozen }
    }
}

fn encode_all(flows: &[FlowTrace]) -> Result<Vec<NprintMatrix>, ProfileError> {
    flows
        .par_iter()
        .enumerate()
        .map(|(index, f)| encode_flow(f).map_err(|source| ProfileError::Encode { index, source }))
        .collect()
}

fn count(matrices: &[NprintMatrix]) -> ColumnCounts {
    matrices
        .par_iter()
        .fold(ColumnCounts::new, |mut acc, m| {
            acc.add_matrix(m);
            acc
        })
        .reduce(ColumnCounts::new, ColumnCounts::merge)
}

/// Columns populated in at least `tau` of the real rows are allowed;
/// allowed columns with a single observed value are frozen to it.
pub fn derive_region_mask(flows: &[FlowTrace], tau: f64) -> Result<RegionMask, ProfileError> {
    if flows.is_empty() {
        return Err(ProfileError::Empty);
    }
    Ok(count(&encode_all(flows)?).mask(tau))
}

pub fn build_class_profile(flows: &[FlowTrace], label: &str, tau: f64) -> Result<ClassProfile, ProfileError> {
    if flows.is_empty() {
        return Err(ProfileError::Empty);
    }
    for (index, f) in flows.iter().enumerate() {
        if let Some(found) = &f.label {
            if found != label {
                return Err(ProfileError::LabelMismatch { index, found: found.clone(), expected: label.into() });
            }
        }
    }
    let matrices = encode_all(flows)?;
    let counts = count(&matrices);
    let mask = counts.mask(tau);
    let column_marginals = (0..ROW_BITS)
        .map(|c| if counts.populated[c] == 0 { 0.0 } else { counts.set[c] as f64 / counts.populated[c] as f64 })
        .collect();
    let populated_fraction = (0..ROW_BITS)
        .map(|c| if counts.rows == 0 { 0.0 } else { counts.populated[c] as f64 / counts.rows as f64 })
        .collect();
    let inter_arrival_samples = flows
        .iter()
        .flat_map(|f| f.packets.windows(2).map(|w| w[1].timestamp_us.saturating_sub(w[0].timestamp_us)))
        .collect();
    let profile = ClassProfile {
        version: PROFILE_VERSION,
        label: label.to_string(),
        tau,
        column_marginals,
        populated_fraction,
        mask,
        inter_arrival_samples,
        tuple_samples: flows.iter().map(|f| f.five_tuple).collect(),
        length_rows: matrices.iter().map(NprintMatrix::n_real).collect(),
        flow_transports: flows.iter().map(|f| f.packets[0].transport_kind).collect(),
        header_lengths: counts.header_lengths,
    };
    profile.validate()?;
    Ok(profile)
}

impl ClassProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.version != PROFILE_VERSION {
            return Err(ProfileError::Version(self.version));
        }
        self.mask.check()?;
        if self.column_marginals.len() != ROW_BITS || self.populated_fraction.len() != ROW_BITS {
            return Err(ProfileError::Invalid("per-column vectors must have 1088 entries".into()));
        }
        if self.column_marginals.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ProfileError::Invalid("marginal outside [0, 1]".into()));
        }
        if self.tuple_samples.is_empty() {
            return Err(ProfileError::Invalid("no 5-tuple samples".into()));
        }
        if self.length_rows.is_empty() || self.length_rows.len() != self.flow_transports.len() {
            return Err(ProfileError::Invalid("flow shapes missing or inconsistent".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ProfileError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ProfileError> {
        #[derive(Deserialize)]
        struct Probe {
            version: u32,
        }
        let probe: Probe = serde_json::from_str(s)?;
        if probe.version != PROFILE_VERSION {
            return Err(ProfileError::Version(probe.version));
        }
        let p: ClassProfile = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProfileError> {
        let json = self.to_json()?;
        fsutil::write_atomic(path.as_ref(), |f| std::io::Write::write_all(f, json.as_bytes()))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProfileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Share of training rows per transport.
    pub fn protocol_mix(&self) -> BTreeMap<TransportKind, f64> {
        let mut mix = BTreeMap::new();
        let total: usize = self.length_rows.iter().sum();
        for (n, t) in self.length_rows.iter().zip(&self.flow_transports) {
            *mix.entry(*t).or_insert(0.0) += *n as f64 / total.max(1) as f64;
        }
        mix
    }
}

/// Header lengths (bytes) a region may take, weighted by frequency.
struct LengthChoice {
    lengths: Vec<usize>,
    dist: Option<WeightedIndex<u64>>,
}

impl LengthChoice {
    fn new(profile: &ClassProfile, region: Region, fixed: Option<usize>) -> Self {
        let seen = profile.header_lengths.get(&region);
        let mut lengths = Vec::new();
        let mut weights = Vec::new();
        match fixed {
            Some(len) => {
                if profile.mask.allows_prefix(region, len) {
                    lengths.push(len);
                    weights.push(1);
                }
            }
            None => {
                for (len, n) in seen.into_iter().flatten() {
                    if profile.mask.allows_prefix(region, *len) {
                        lengths.push(*len);
                        weights.push(*n);
                    }
                }
            }
        }
        let dist = WeightedIndex::new(&weights).ok();
        LengthChoice { lengths, dist }
    }

    fn usable(&self) -> bool {
        self.dist.is_some()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let d = self.dist.as_ref().expect("checked usable");
        self.lengths[d.sample(rng)]
    }
}

fn transport_lengths(profile: &ClassProfile, kind: TransportKind) -> Option<(Region, LengthChoice)> {
    let region = Region::for_transport(kind)?;
    let choice = match kind {
        TransportKind::Tcp => LengthChoice::new(profile, region, None),
        _ => LengthChoice::new(profile, region, Some(8)),
    };
    choice.usable().then_some((region, choice))
}

fn row_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sample one matrix. Deterministic in `(profile, seed)`.
pub fn generate(profile: &ClassProfile, seed: u64) -> NprintMatrix {
    let mut shape_rng = row_rng(seed, 0);
    let idx = shape_rng.gen_range(0..profile.length_rows.len());
    let n_real = profile.length_rows[idx].clamp(1, MATRIX_ROWS);

    let ip_lengths = LengthChoice::new(profile, Region::Ipv4, None);
    let transport = transport_lengths(profile, profile.flow_transports[idx]).or_else(|| {
        [TransportKind::Tcp, TransportKind::Udp, TransportKind::Icmp]
            .into_iter()
            .find_map(|k| transport_lengths(profile, k))
    });
    let Some((region, t_lengths)) = transport.filter(|_| ip_lengths.usable()) else {
        return NprintMatrix::empty(Some(profile.label.clone()));
    };

    let rows: Vec<BitRow> = (0..n_real)
        .into_par_iter()
        .map(|i| {
            let mut rng = row_rng(seed, i as u64 + 1);
            let ip_len = ip_lengths.draw(&mut rng);
            let t_len = t_lengths.draw(&mut rng);
            let mut row = BitRow::padding();
            let cols = Region::Ipv4.offset()..Region::Ipv4.offset() + ip_len * 8;
            let cols = cols.chain(region.offset()..region.offset() + t_len * 8);
            for c in cols {
                let t = match profile.mask.frozen_value(c) {
                    Some(t) => t,
                    None => Trit::from_bit(rng.gen_bool(profile.column_marginals[c])),
                };
                row.set(c, t);
            }
            row
        })
        .collect();
    NprintMatrix::from_rows(rows, Some(profile.label.clone())).expect("at most 1024 rows")
}

/// Baseline: `rows` rows of fair coin flips in every column.
pub fn random_matrix(rows: usize, seed: u64) -> NprintMatrix {
    let rows = rows.min(MATRIX_ROWS);
    let out: Vec<BitRow> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let mut rng = row_rng(seed, i as u64 + 1);
            let mut row = BitRow::padding();
            for c in 0..ROW_BITS {
                row.set(c, Trit::from_bit(rng.gen_bool(0.5)));
            }
            row
        })
        .collect();
    NprintMatrix::from_rows(out, None).expect("at most 1024 rows")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{Packet, IPPROTO_TCP, IPPROTO_UDP};

    fn pkt(proto: u8, sport: u16, ts: u64, payload: usize, salt: u8) -> Packet {
        let thl = if proto == IPPROTO_TCP { 20 } else { 8 };
        let total = (20 + thl + payload) as u16;
        let mut ip = vec![0x45, 0, 0, 0, 0, salt, 0x40, 0, 64, proto, 0, 0, 10, 0, 0, 1, 10, 0, 0, 2];
        ip[2..4].copy_from_slice(&total.to_be_bytes());
        let mut t = vec![0u8; thl];
        t[0..2].copy_from_slice(&sport.to_be_bytes());
        t[2..4].copy_from_slice(&443u16.to_be_bytes());
        if proto == IPPROTO_TCP {
            t[4] = salt;
            t[12] = 0x50;
            t[13] = 0x10;
        } else {
            t[4..6].copy_from_slice(&((8 + payload) as u16).to_be_bytes());
        }
        Packet::new(ts, ip, t, payload).unwrap()
    }

    fn flow(proto: u8, n: usize, salt: u8) -> FlowTrace {
        let pk = (0..n).map(|i| pkt(proto, 5000, i as u64 * 10, i % 3, salt.wrapping_add(i as u8))).collect();
        FlowTrace::from_packets(pk, Some("c".into())).unwrap()
    }

    #[test]
    fn constant_column_is_frozen() {
        let p = build_class_profile(&[flow(IPPROTO_TCP, 10, 0), flow(IPPROTO_TCP, 5, 9)], "c", DEFAULT_TAU).unwrap();
        // TCP data offset high bit (column 480 + 96) is always 0, ACK bit always 1
        assert_eq!(p.mask.frozen_value(480 + 96), Some(Trit::Unset));
        assert_eq!(p.mask.frozen_value(480 + 107), Some(Trit::Set));
        // IPv4 version nibble 0100
        assert_eq!(p.mask.frozen_value(1), Some(Trit::Set));
        assert!(p.mask.frozen_value(480 + 39).is_none(), "seq varies with salt");
    }

    #[test]
    fn identical_packets_freeze_every_populated_column() {
        let f = FlowTrace::from_packets(vec![pkt(IPPROTO_TCP, 1, 0, 0, 0); 4], None).unwrap();
        let p = build_class_profile(&[f], "c", DEFAULT_TAU).unwrap();
        assert_eq!(p.mask.frozen.len(), 320);
        let m = generate(&p, 3);
        let first = m.real_rows()[0].clone();
        assert!(m.real_rows().iter().all(|r| *r == first));
        assert_eq!(first, crate::nprint::encode_packet(&pkt(IPPROTO_TCP, 1, 0, 0, 0)).unwrap());
    }

    #[test]
    fn marginals_match_counting_oracle() {
        let flows = [flow(IPPROTO_TCP, 17, 3), flow(IPPROTO_TCP, 9, 200)];
        let p = build_class_profile(&flows, "c", DEFAULT_TAU).unwrap();
        for c in 0..ROW_BITS {
            let (mut pop, mut set) = (0, 0);
            for f in &flows {
                for pk in &f.packets {
                    let t = crate::nprint::encode_packet(pk).unwrap().get(c);
                    pop += u32::from(t.is_populated());
                    set += u32::from(t == Trit::Set);
                }
            }
            let want = if pop == 0 { 0.0 } else { f64::from(set) / f64::from(pop) };
            assert_eq!(p.column_marginals[c], want, "column {c}");
        }
        assert_eq!(p.inter_arrival_samples.len(), 16 + 8);
        assert_eq!(p.length_rows, vec![17, 9]);
    }

    #[test]
    fn pure_protocol_masks() {
        let tcp = derive_region_mask(&[flow(IPPROTO_TCP, 5, 0)], DEFAULT_TAU).unwrap();
        assert!(Region::Udp.columns().chain(Region::Icmp.columns()).all(|c| !tcp.allowed[c]));
        let udp = derive_region_mask(&[flow(IPPROTO_UDP, 5, 0)], DEFAULT_TAU).unwrap();
        assert!(Region::Tcp.columns().all(|c| !udp.allowed[c]));
        assert!(Region::Udp.columns().all(|c| udp.allowed[c]));
    }

    #[test]
    fn mixed_ninety_ten_keeps_both_regions() {
        let flows = [flow(IPPROTO_TCP, 90, 0), flow(IPPROTO_UDP, 10, 0)];
        let mask = derive_region_mask(&flows, 0.01).unwrap();
        // oracle: UDP columns populated in 10/100 rows >= 0.01
        assert!(mask.allowed[Region::Udp.offset()]);
        assert!(mask.allowed[Region::Tcp.offset()]);
        assert!(!mask.allowed[Region::Icmp.offset()]);
        // at tau = 0.2 the UDP region drops out
        let mask = derive_region_mask(&flows, 0.2).unwrap();
        assert!(!mask.allowed[Region::Udp.offset()]);
    }

    #[test]
    fn empty_and_mislabelled_inputs() {
        assert!(matches!(build_class_profile(&[], "c", 0.01), Err(ProfileError::Empty)));
        let mut f = flow(IPPROTO_TCP, 3, 0);
        f.label = Some("other".into());
        assert!(matches!(build_class_profile(&[f], "c", 0.01), Err(ProfileError::LabelMismatch { .. })));
    }

    #[test]
    fn deterministic_and_masked() {
        let p = build_class_profile(&[flow(IPPROTO_TCP, 40, 1), flow(IPPROTO_TCP, 30, 77)], "c", 0.01).unwrap();
        let a = generate(&p, 11);
        assert_eq!(a, generate(&p, 11));
        assert_ne!(a, generate(&p, 12));
        a.check().unwrap();
        for row in a.real_rows() {
            assert_eq!(row.populated_transport(), Some(Region::Tcp));
            for c in 0..ROW_BITS {
                if !p.mask.allowed[c] {
                    assert_eq!(row.get(c), Trit::Vacant);
                }
                if let Some(t) = p.mask.frozen_value(c) {
                    if row.get(c).is_populated() {
                        assert_eq!(row.get(c), t);
                    }
                }
            }
        }
    }

    #[test]
    fn json_roundtrip_and_version_gate() {
        let p = build_class_profile(&[flow(IPPROTO_UDP, 6, 0)], "c", 0.01).unwrap();
        let json = p.to_json().unwrap();
        assert_eq!(ClassProfile::from_json(&json).unwrap(), p);
        let bumped = json.replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(matches!(ClassProfile::from_json(&bumped), Err(ProfileError::Version(9))));
    }
}
