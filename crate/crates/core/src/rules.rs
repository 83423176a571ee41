//! The shipped dependency-rule tables and field classification.

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUILTIN: &str = include_str!("../data/dependency_rules.toml");

/// Rule ids the repair engine knows how to execute.
pub const KNOWN_RULES: &[&str] = &[
    "ip.version",
    "ip.protocol",
    "ip.ihl",
    "ip.flags.reserved",
    "ip.fragment",
    "tcp.data_offset",
    "tcp.reserved",
    "ip.total_length",
    "udp.length",
    "flow.endpoints",
    "flow.direction",
    "tcp.handshake",
    "tcp.teardown",
    "tcp.seq",
    "tcp.ack",
    "ip.id",
    "ip.checksum",
    "l4.checksum",
];

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule table: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported rule table version {0}")]
    Version(u32),
    #[error("rule {0:?} is not implemented by the repair engine")]
    Unknown(String),
    #[error("rule {rule:?} depends on {input:?}, which is evaluated later or is itself")]
    Order { rule: String, input: String },
    #[error("field {0:?} is classified twice")]
    DuplicateField(String),
    #[error("rule {rule:?} targets unclassified field {field:?}")]
    UnclassifiedField { rule: String, field: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Intra,
    Inter,
    Checksum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Critical,
    Flexible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub id: String,
    pub class: Criticality,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub field: String,
    pub inputs: Vec<String>,
    pub stage: Stage,
    pub rule: String,
}

#[derive(Deserialize)]
struct RuleFile {
    version: u32,
    field: Vec<FieldEntry>,
    intra: Vec<Rule>,
    inter: Vec<Rule>,
}

/// Critical fields are recomputed; flexible fields keep generated values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldClass {
    pub critical: BTreeSet<String>,
    pub flexible: BTreeSet<String>,
}

/// Intra- and inter-packet rules in evaluation order.
#[derive(Debug, Clone)]
pub struct DependencyRuleSet {
    pub version: u32,
    pub fields: Vec<FieldEntry>,
    pub intra_rules: Vec<Rule>,
    pub inter_rules: Vec<Rule>,
}

impl DependencyRuleSet {
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let file: RuleFile = toml::from_str(text)?;
        if file.version != 1 {
            return Err(RuleError::Version(file.version));
        }
        let set = DependencyRuleSet {
            version: file.version,
            fields: file.field,
            intra_rules: file.intra,
            inter_rules: file.inter,
        };
        set.check()?;
        Ok(set)
    }

    pub fn builtin() -> &'static DependencyRuleSet {
        static SET: OnceLock<DependencyRuleSet> = OnceLock::new();
        SET.get_or_init(|| DependencyRuleSet::parse(BUILTIN).expect("shipped rule table is valid"))
    }

    pub fn source_text() -> &'static str {
        BUILTIN
    }

    /// All rules sorted by stage, file order within a stage.
    pub fn evaluation_order(&self) -> Vec<&Rule> {
        let mut all: Vec<&Rule> = self.intra_rules.iter().chain(&self.inter_rules).collect();
        all.sort_by_key(|r| r.stage);
        all
    }

    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &Rule> {
        self.evaluation_order().into_iter().filter(move |r| r.stage == stage)
    }

    pub fn field_class(&self) -> FieldClass {
        let pick = |c: Criticality| {
            self.fields.iter().filter(|f| f.class == c).map(|f| f.id.clone()).collect::<BTreeSet<_>>()
        };
        FieldClass { critical: pick(Criticality::Critical), flexible: pick(Criticality::Flexible) }
    }

    fn check(&self) -> Result<(), RuleError> {
        let mut seen_fields = HashSet::new();
        for f in &self.fields {
            if !seen_fields.insert(f.id.as_str()) {
                return Err(RuleError::DuplicateField(f.id.clone()));
            }
        }
        let order = self.evaluation_order();
        let rule_ids: HashSet<&str> = order.iter().map(|r| r.id.as_str()).collect();
        let mut done: HashSet<&str> = HashSet::new();
        for r in &order {
            if !KNOWN_RULES.contains(&r.id.as_str()) {
                return Err(RuleError::Unknown(r.id.clone()));
            }
            if !seen_fields.contains(r.field.as_str()) {
                return Err(RuleError::UnclassifiedField { rule: r.id.clone(), field: r.field.clone() });
            }
            for input in &r.inputs {
                // inputs that are not rule ids are raw generated fields or regions
                if rule_ids.contains(input.as_str()) && (!done.contains(input.as_str()) || *input == r.id) {
                    return Err(RuleError::Order { rule: r.id.clone(), input: input.clone() });
                }
            }
            done.insert(r.id.as_str());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_is_consistent() {
        let set = DependencyRuleSet::builtin();
        let class = set.field_class();
        assert!(class.critical.is_disjoint(&class.flexible));
        assert_eq!(class.critical.len() + class.flexible.len(), set.fields.len());
        for f in ["tcp.seq", "tcp.ack", "ip.checksum", "ip.id", "ip.src", "l4.dst_port"] {
            assert!(class.critical.contains(f), "{f}");
        }
        for f in ["tcp.window", "ip.ttl", "ip.tos"] {
            assert!(class.flexible.contains(f), "{f}");
        }
        let order: Vec<&str> = set.evaluation_order().iter().map(|r| r.id.as_str()).collect();
        let pos = |id: &str| order.iter().position(|x| *x == id).unwrap();
        assert!(pos("ip.ihl") < pos("ip.total_length"));
        assert!(pos("tcp.seq") < pos("tcp.ack"));
        assert!(pos("ip.total_length") < pos("flow.endpoints"));
        assert!(pos("tcp.ack") < pos("l4.checksum"));
        assert_eq!(order.len(), KNOWN_RULES.len());
    }

    #[test]
    fn cycles_and_forward_references_rejected() {
        let text = BUILTIN.replace(
            "inputs = [\"ip.total_length\", \"ip.ihl\"]",
            "inputs = [\"ip.total_length\", \"ip.ihl\", \"tcp.seq\"]",
        );
        assert!(matches!(DependencyRuleSet::parse(&text), Err(RuleError::Order { .. })));
        let text = BUILTIN.replace("inputs = [\"tcp.seq\"]", "inputs = [\"tcp.ack\"]");
        assert!(matches!(DependencyRuleSet::parse(&text), Err(RuleError::Order { .. })));
    }

    #[test]
    fn unknown_rule_rejected() {
        let text = BUILTIN.replace("id = \"ip.id\"\nfield = \"ip.id\"", "id = \"ip.mystery\"\nfield = \"ip.id\"");
        assert!(matches!(DependencyRuleSet::parse(&text), Err(RuleError::Unknown(_))));
    }
}
