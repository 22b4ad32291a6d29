//! Fairness monitoring for ranked hiring pipelines over secret-shared
//! protected attributes.
//!
//! A deployer holds ranking data in the clear and one additive share of each
//! candidate's protected attributes; a trusted third party (TTP) holds the
//! other share. The two jointly compute group fairness metrics, reveal only
//! aggregates that pass a minimum group size, post-process them into
//! verdicts and persist dated snapshots.

pub mod domain;
pub mod field;
pub mod metrics;
pub mod mpc;
pub mod oracle;
pub mod pipeline;
pub mod postprocess;
pub mod sharing;
pub mod simulator;
pub mod stats;

pub use domain::{
    AggregateStatus, AttributeCodes, CandidateRecord, Dimension, GroupSchema, GroupSelector, Level,
    MetricAggregate, MetricKind, Revealed, SchemaError, UnitKey, Violation, ViolationKind,
};
pub use field::{FieldElement, Fp, MODULUS};
pub use mpc::{CommStats, MpcError, Session, SharedValue};
pub use sharing::{AttributeShare, Party, ShareError, ShareStore};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub(crate) fn fingerprint_json<T: serde::Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Cryptographic generator seeded from the operating system.
pub fn secure_rng() -> ChaCha20Rng {
    ChaCha20Rng::from_os_rng()
}

/// Reproducible generator for simulations and tests. Shares and triples drawn
/// from it are predictable to anyone who knows the seed.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
