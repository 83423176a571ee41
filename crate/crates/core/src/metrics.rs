//! Distributional similarity between real and synthetic traffic.
//!
//! Two feature universes are supported. [`MetricMode::PerField`] treats each
//! fixed header field as a categorical variable over its decoded integer
//! value; rows where the field is vacant are left out. [`MetricMode::PerBit`]
//! treats each of the 1088 columns as a categorical over {-1, 0, 1}, which
//! scores exactly what the matrix encodes, vacancy included.
//!
//! All three scores are normalized to [0, 1]: Jensen-Shannon divergence with
//! base-2 logs, total variation distance, and Hellinger distance.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{self, HeaderField};
use crate::nprint::{encode_flow, EncodeError, NprintMatrix, Region, Trit, ROW_BITS};
use crate::packet::FlowTrace;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("cannot compare field {0:?} with field {1:?}")]
    FieldMismatch(String, String),
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error("flow {index}: {source}")]
    Encode {
        index: usize,
        #[source]
        source: EncodeError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMode {
    #[default]
    PerField,
    PerBit,
}

impl std::str::FromStr for MetricMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-field" => Ok(MetricMode::PerField),
            "per-bit" => Ok(MetricMode::PerBit),
            _ => Err(format!("unknown metric mode {s:?} (per-field or per-bit)")),
        }
    }
}

impl fmt::Display for MetricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricMode::PerField => "per-field",
            MetricMode::PerBit => "per-bit",
        })
    }
}

/// Empirical categorical distribution of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDistribution {
    pub field: String,
    pub probs: BTreeMap<i64, f64>,
    pub samples: u64,
}

impl FieldDistribution {
    /// Normalize raw counts. An empty count map gives an empty distribution.
    pub fn from_counts(field: impl Into<String>, counts: &BTreeMap<i64, u64>) -> Self {
        let samples: u64 = counts.values().sum();
        let probs = if samples == 0 {
            BTreeMap::new()
        } else {
            counts.iter().filter(|(_, n)| **n > 0).map(|(k, n)| (*k, *n as f64 / samples as f64)).collect()
        };
        FieldDistribution { field: field.into(), probs, samples }
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    fn prob(&self, k: &i64) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    fn support_union<'a>(&'a self, other: &'a Self) -> impl Iterator<Item = &'a i64> {
        let mut keys: Vec<&i64> = self.probs.keys().chain(other.probs.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
    }

    fn disjoint(&self, other: &Self) -> bool {
        self.probs.keys().all(|k| !other.probs.contains_key(k))
    }
}

fn same_field(p: &FieldDistribution, q: &FieldDistribution) -> Result<(), MetricError> {
    if p.field != q.field {
        return Err(MetricError::FieldMismatch(p.field.clone(), q.field.clone()));
    }
    Ok(())
}

/// Jensen-Shannon divergence, base 2.
pub fn jsd(p: &FieldDistribution, q: &FieldDistribution) -> Result<f64, MetricError> {
    same_field(p, q)?;
    if p.disjoint(q) {
        return Ok(1.0);
    }
    let mut sum = 0.0;
    for k in p.support_union(q) {
        let (a, b) = (p.prob(k), q.prob(k));
        let m = 0.5 * (a + b);
        if a > 0.0 {
            sum += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            sum += 0.5 * b * (b / m).log2();
        }
    }
    Ok(sum.clamp(0.0, 1.0))
}

/// Total variation distance, half the L1 distance.
pub fn tvd(p: &FieldDistribution, q: &FieldDistribution) -> Result<f64, MetricError> {
    same_field(p, q)?;
    if p.disjoint(q) {
        return Ok(1.0);
    }
    let sum: f64 = p.support_union(q).map(|k| (p.prob(k) - q.prob(k)).abs()).sum();
    Ok((0.5 * sum).clamp(0.0, 1.0))
}

/// Hellinger distance, scaled by 1/sqrt(2).
pub fn hellinger(p: &FieldDistribution, q: &FieldDistribution) -> Result<f64, MetricError> {
    same_field(p, q)?;
    if p.disjoint(q) {
        return Ok(1.0);
    }
    let sum: f64 = p.support_union(q).map(|k| (p.prob(k).sqrt() - q.prob(k).sqrt()).powi(2)).sum();
    Ok((sum.sqrt() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub jsd: f64,
    pub tvd: f64,
    pub hd: f64,
}

impl Scores {
    fn of(p: &FieldDistribution, q: &FieldDistribution) -> Result<Self, MetricError> {
        Ok(Scores { jsd: jsd(p, q)?, tvd: tvd(p, q)?, hd: hellinger(p, q)? })
    }

    fn mean(all: &[Scores]) -> Scores {
        if all.is_empty() {
            return Scores::default();
        }
        let n = all.len() as f64;
        Scores {
            jsd: all.iter().map(|s| s.jsd).sum::<f64>() / n,
            tvd: all.iter().map(|s| s.tvd).sum::<f64>() / n,
            hd: all.iter().map(|s| s.hd).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldScore {
    pub field: String,
    #[serde(flatten)]
    pub scores: Scores,
    pub real_samples: u64,
    pub synth_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub mode: MetricMode,
    pub real_flows: usize,
    pub synth_flows: usize,
    /// Mean over every scored feature.
    pub average: Scores,
    /// IPv4 protocol field alone, independent of `mode`.
    pub protocol: Scores,
    pub fields: Vec<FieldScore>,
}

impl SimilarityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for SimilarityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.fields.iter().map(|s| s.field.len()).max().unwrap_or(0).max(24);
        writeln!(f, "{:<width$}  {:>8}  {:>8}  {:>8}", format!("feature ({})", self.mode), "JSD", "TVD", "HD")?;
        writeln!(f, "{}", "-".repeat(width + 30))?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, s: &Scores| {
            writeln!(f, "{name:<width$}  {:>8.4}  {:>8.4}  {:>8.4}", s.jsd, s.tvd, s.hd)
        };
        row(f, "average", &self.average)?;
        row(f, "protocol", &self.protocol)?;
        writeln!(f, "{}", "-".repeat(width + 30))?;
        for s in &self.fields {
            row(f, &s.field, &s.scores)?;
        }
        Ok(())
    }
}

fn field_counts(matrices: &[NprintMatrix], field: &HeaderField) -> BTreeMap<i64, u64> {
    let mut counts = BTreeMap::new();
    for m in matrices {
        for row in m.real_rows() {
            if let Some(v) = field.read(row) {
                *counts.entry(v as i64).or_insert(0) += 1;
            }
        }
    }
    counts
}

fn encode_all(flows: &[FlowTrace]) -> Result<Vec<NprintMatrix>, MetricError> {
    flows
        .par_iter()
        .enumerate()
        .map(|(index, f)| encode_flow(f).map_err(|source| MetricError::Encode { index, source }))
        .collect()
}

/// Distribution of a named header field over every packet carrying it.
pub fn field_distribution(flows: &[FlowTrace], field: &str) -> Result<FieldDistribution, MetricError> {
    let f = fields::by_name(field).ok_or_else(|| MetricError::UnknownField(field.into()))?;
    let matrices = encode_all(flows)?;
    Ok(FieldDistribution::from_counts(field, &field_counts(&matrices, &f)))
}

/// Human-readable name of a column, e.g. `tcp.flags[7]` or `ipv4.options[3]`.
pub fn column_name(col: usize) -> String {
    if let Some(f) = fields::ALL.iter().find(|f| f.columns().contains(&col)) {
        return format!("{}[{}]", f.name, col - f.columns().start);
    }
    let r = Region::of_column(col).expect("column in range");
    format!("{r}.options[{}]", col - r.offset() - 160)
}

fn column_counts(matrices: &[NprintMatrix]) -> Vec<[u64; 3]> {
    matrices
        .par_iter()
        .fold(
            || vec![[0u64; 3]; ROW_BITS],
            |mut acc, m| {
                for row in m.real_rows() {
                    for (c, t) in row.trits().iter().enumerate() {
                        acc[c][(t.value() + 1) as usize] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![[0u64; 3]; ROW_BITS],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    for k in 0..3 {
                        x[k] += y[k];
                    }
                }
                a
            },
        )
}

fn trit_distribution(name: String, counts: &[u64; 3]) -> FieldDistribution {
    let map: BTreeMap<i64, u64> = [Trit::Vacant, Trit::Unset, Trit::Set]
        .into_iter()
        .zip(counts)
        .map(|(t, n)| (i64::from(t.value()), *n))
        .collect();
    FieldDistribution::from_counts(name, &map)
}

/// Score two scored-or-empty distributions: skipped when both are empty,
/// 1 when only one side has samples.
fn score_pair(p: &FieldDistribution, q: &FieldDistribution) -> Option<Scores> {
    match (p.is_empty(), q.is_empty()) {
        (true, true) => None,
        (false, false) => Some(Scores::of(p, q).expect("same field")),
        _ => Some(Scores { jsd: 1.0, tvd: 1.0, hd: 1.0 }),
    }
}

/// Compare two matrix sets.
pub fn compare_matrices(
    real: &[NprintMatrix],
    synth: &[NprintMatrix],
    mode: MetricMode,
) -> Result<SimilarityReport, MetricError> {
    if real.is_empty() {
        return Err(MetricError::Empty("real"));
    }
    if synth.is_empty() {
        return Err(MetricError::Empty("synthetic"));
    }
    let fields: Vec<FieldScore> = match mode {
        MetricMode::PerField => fields::ALL
            .par_iter()
            .filter_map(|f| {
                let p = FieldDistribution::from_counts(f.name, &field_counts(real, f));
                let q = FieldDistribution::from_counts(f.name, &field_counts(synth, f));
                score_pair(&p, &q).map(|scores| FieldScore {
                    field: f.name.to_string(),
                    scores,
                    real_samples: p.samples,
                    synth_samples: q.samples,
                })
            })
            .collect(),
        MetricMode::PerBit => {
            let (a, b) = rayon::join(|| column_counts(real), || column_counts(synth));
            (0..ROW_BITS)
                .filter_map(|c| {
                    let name = column_name(c);
                    let p = trit_distribution(name.clone(), &a[c]);
                    let q = trit_distribution(name.clone(), &b[c]);
                    score_pair(&p, &q).map(|scores| FieldScore {
                        field: name,
                        scores,
                        real_samples: p.samples,
                        synth_samples: q.samples,
                    })
                })
                .collect()
        }
    };
    let all: Vec<Scores> = fields.iter().map(|f| f.scores).collect();
    let proto = |ms: &[NprintMatrix]| FieldDistribution::from_counts(fields::IP_PROTOCOL.name, &field_counts(ms, &fields::IP_PROTOCOL));
    let protocol = score_pair(&proto(real), &proto(synth)).unwrap_or_default();
    Ok(SimilarityReport {
        mode,
        real_flows: real.len(),
        synth_flows: synth.len(),
        average: Scores::mean(&all),
        protocol,
        fields,
    })
}

/// Compare two flow sets; flows are encoded first.
pub fn compare(real: &[FlowTrace], synth: &[FlowTrace], mode: MetricMode) -> Result<SimilarityReport, MetricError> {
    compare_matrices(&encode_all(real)?, &encode_all(synth)?, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(pairs: &[(i64, f64)]) -> FieldDistribution {
        FieldDistribution { field: "x".into(), probs: pairs.iter().copied().collect(), samples: 1 }
    }

    #[test]
    fn two_point_hand_values() {
        // p = {a: .5, b: .5}, q = {a: 1}
        let p = dist(&[(0, 0.5), (1, 0.5)]);
        let q = dist(&[(0, 1.0)]);
        // m = {a: .75, b: .25}
        let want_jsd = 0.5 * (0.5 * (0.5f64 / 0.75).log2() + 0.5 * 2f64.log2()) + 0.5 * (1.0f64 / 0.75).log2();
        assert!((jsd(&p, &q).unwrap() - want_jsd).abs() < 1e-15);
        assert!((tvd(&p, &q).unwrap() - 0.5).abs() < 1e-15);
        let want_hd = ((0.5f64.sqrt() - 1.0).powi(2) + 0.5).sqrt() / 2f64.sqrt();
        assert!((hellinger(&p, &q).unwrap() - want_hd).abs() < 1e-15);
    }

    #[test]
    fn disjoint_is_one_and_identity_is_zero() {
        let p = dist(&[(0, 0.3), (1, 0.7)]);
        let q = dist(&[(2, 1.0)]);
        for f in [jsd, tvd, hellinger] {
            assert_eq!(f(&p, &q).unwrap(), 1.0);
            assert_eq!(f(&p, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn field_mismatch_is_an_error() {
        let p = dist(&[(0, 1.0)]);
        let mut q = p.clone();
        q.field = "y".into();
        assert!(matches!(jsd(&p, &q), Err(MetricError::FieldMismatch(..))));
    }

    #[test]
    fn column_names() {
        assert_eq!(column_name(0), "ipv4.version[0]");
        assert_eq!(column_name(160), "ipv4.options[0]");
        assert_eq!(column_name(480 + 107), "tcp.flags[4]");
        assert_eq!(column_name(1087), "icmp.rest[31]");
    }

    fn arb_pair() -> impl Strategy<Value = (FieldDistribution, FieldDistribution)> {
        (1usize..8).prop_flat_map(|n| {
            (prop::collection::vec(0u32..100, n), prop::collection::vec(0u32..100, n)).prop_filter_map(
                "non-empty",
                |(a, b)| {
                    let mk = |w: &[u32]| {
                        let counts: BTreeMap<i64, u64> = w.iter().enumerate().map(|(k, v)| (k as i64, u64::from(*v))).collect();
                        FieldDistribution::from_counts("x", &counts)
                    };
                    let (p, q) = (mk(&a), mk(&b));
                    (!p.is_empty() && !q.is_empty()).then_some((p, q))
                },
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_bounded(pq in arb_pair()) {
            let (p, q) = pq;
            for f in [jsd, tvd, hellinger] {
                let (a, b) = (f(&p, &q).unwrap(), f(&q, &p).unwrap());
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert_eq!(f(&p, &p).unwrap(), 0.0);
            }
        }

        #[test]
        fn tvd_triangle(a in arb_pair(), c in arb_pair()) {
            let (p, q) = a;
            let r = c.0;
            prop_assert!(tvd(&p, &r).unwrap() <= tvd(&p, &q).unwrap() + tvd(&q, &r).unwrap() + 1e-12);
        }

        #[test]
        fn probabilities_sum_to_one(pq in arb_pair()) {
            let s: f64 = pq.0.probs.values().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
