//! Trace files, mempool logs and deterministic synthetic fixtures.

pub mod fixture;
mod io;
mod mempool;

pub use fixture::{generate_fixture, Fixture, FixtureSpec, GroundTruth, ReplayKind, SpecError};
pub use io::{
    load_trace, validate_block, validate_trace, MempoolEntry, Trace, TraceError, TraceMetadata,
};
pub use mempool::{diff_private_transactions, MempoolLog, PrivateTxSets};
