//! Packet captures as tri-valued bit images, mask-constrained traffic
//! synthesis, protocol-compliance repair and fidelity scoring.
//!
//! The pipeline, end to end:
//!
//! ```no_run
//! use nprint_synth::{corpus, generator, nprint, repair};
//!
//! let flows = corpus::class_flows(corpus::TrafficClass::Social, 50, 1);
//! let profile = generator::build_class_profile(&flows, "social", generator::DEFAULT_TAU)?;
//! let raw = generator::generate(&profile, 7);
//! let fixed = repair::repair(&raw, &profile, 7);
//! assert!(repair::validate(&fixed.flow).is_compliant());
//! let _matrix: &nprint::NprintMatrix = &fixed.matrix;
//! # Ok::<(), nprint_synth::Error>(())
//! ```

pub mod checksum;
pub mod corpus;
pub mod fields;
pub mod fsutil;
pub mod generator;
pub mod image_codec;
pub mod metrics;
pub mod nprint;
pub mod packet;
pub mod pcap;
pub mod repair;
pub mod rules;
pub mod traffic_report;

use thiserror::Error;

/// Any error the library's operations can return.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Pcap(#[from] pcap::PcapError),
    #[error(transparent)]
    Image(#[from] image_codec::ImageError),
    #[error(transparent)]
    Encode(#[from] nprint::EncodeError),
    #[error(transparent)]
    Decode(#[from] nprint::DecodeError),
    #[error(transparent)]
    Profile(#[from] generator::ProfileError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error(transparent)]
    Rules(#[from] rules::RuleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
