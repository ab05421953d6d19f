//! Measurement toolkit for blockchain extractable value (BEV) on
//! decentralized-exchange traces.
//!
//! Detectors for sandwich attacks, cyclic arbitrage, liquidations and
//! gas-clogging periods run over a JSON-lines block trace. A toy replay engine
//! finds transactions an adversary could profitably copy, two auction models
//! cover relay bidding and peer-to-peer propagation, and a fork-race model
//! turns per-block BEV into a forking threshold.
//!
//! Most work starts from [`trace::load_trace`] or
//! [`trace::generate_fixture`] and ends in [`report::scan_trace`].

pub mod arbitrage;
pub mod auction;
pub mod chain;
pub mod clogging;
pub mod fork;
pub mod liquidation;
pub mod replay;
pub mod report;
pub mod sandwich;
pub mod trace;

pub use chain::{Address, AssetAmount, AssetId, Block, Price, Transaction, TxHash};
pub use report::{scan_trace, BevReport, Detector, DetectorSet};
pub use trace::{generate_fixture, load_trace, Fixture, FixtureSpec, Trace};
