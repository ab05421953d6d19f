use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::codec::dec;
use crate::chain::{Block, DecodedEvent};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("block {block}, field `{field}`: {message}")]
    Validation {
        block: u64,
        field: String,
        message: String,
    },
}

impl TraceError {
    fn invalid(block: u64, field: impl Into<String>, message: impl Into<String>) -> Self {
        TraceError::Validation {
            block,
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub source: String,
    pub chain_id: String,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "crate::chain::codec::opt_dec"
    )]
    pub generator_seed: Option<u64>,
}

/// A recorded (or synthesized) sequence of blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub metadata: TraceMetadata,
    pub blocks: Vec<Block>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    metadata: TraceMetadata,
}

impl Trace {
    pub fn block_by_number(&self, number: u64) -> Option<&Block> {
        self.blocks
            .binary_search_by_key(&number, |b| b.number)
            .ok()
            .map(|i| &self.blocks[i])
    }

    pub fn transaction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.transactions.len()).sum()
    }

    /// Serializes in the line-delimited format: an optional metadata line,
    /// then one block object per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        let header = HeaderLine {
            metadata: self.metadata.clone(),
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for block in &self.blocks {
            serde_json::to_writer(&mut w, block).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Parses and validates a trace from any reader.
    pub fn read_from<R: Read>(r: R) -> Result<Trace, TraceError> {
        let reader = BufReader::new(r);
        let mut trace = Trace::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if lineno == 1 {
                if let Ok(h) = serde_json::from_str::<HeaderLine>(&line) {
                    trace.metadata = h.metadata;
                    continue;
                }
            }
            let block: Block = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            trace.blocks.push(block);
        }
        validate_trace(&trace)?;
        Ok(trace)
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    Trace::read_from(File::open(path)?)
}

/// Checks every block-level and trace-level invariant.
pub fn validate_trace(trace: &Trace) -> Result<(), TraceError> {
    let mut known_markets: BTreeSet<&str> = BTreeSet::new();
    let mut prev: Option<u64> = None;
    for block in &trace.blocks {
        if let Some(p) = prev {
            if block.number <= p {
                return Err(TraceError::invalid(
                    block.number,
                    "number",
                    format!("block numbers must strictly increase (previous {p})"),
                ));
            }
        }
        prev = Some(block.number);
        known_markets.extend(block.pool_states.iter().map(|p| p.market_id.as_str()));
        validate_block(block)?;
        for tx in &block.transactions {
            for swap in tx.swaps() {
                if !known_markets.contains(swap.market_id.as_str()) {
                    return Err(TraceError::invalid(
                        block.number,
                        "events.market_id",
                        format!(
                            "market {} has no pool snapshot at or before this block",
                            swap.market_id
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

pub fn validate_block(block: &Block) -> Result<(), TraceError> {
    let n = block.number;
    let mut gas: u128 = 0;
    for (pos, tx) in block.transactions.iter().enumerate() {
        if tx.index as usize != pos {
            return Err(TraceError::invalid(
                n,
                "transactions.index",
                format!(
                    "transaction {} has index {} at position {pos}; indices must be contiguous from 0",
                    tx.hash, tx.index
                ),
            ));
        }
        gas += u128::from(tx.gas_used);
        for ev in &tx.events {
            match ev {
                DecodedEvent::Swap(s) => {
                    let a = &s.action;
                    if a.asset_in == a.asset_out {
                        return Err(TraceError::invalid(
                            n,
                            "events.asset_out",
                            format!("swap in tx {} trades {} for itself", tx.hash, a.asset_in),
                        ));
                    }
                    if a.amount_in.is_zero() || a.amount_out.is_zero() {
                        return Err(TraceError::invalid(
                            n,
                            "events.amount",
                            format!("swap in tx {} has a zero amount", tx.hash),
                        ));
                    }
                }
                DecodedEvent::OracleUpdate(o) => {
                    if !o.price_native.is_positive() {
                        return Err(TraceError::invalid(
                            n,
                            "events.price_native",
                            format!("oracle price for {} must be positive", o.asset),
                        ));
                    }
                }
                DecodedEvent::Liquidation(_) | DecodedEvent::Transfer(_) => {}
            }
        }
    }
    if gas > u128::from(block.gas_limit) {
        return Err(TraceError::invalid(
            n,
            "gas_limit",
            format!("transactions use {gas} gas, above the limit {}", block.gas_limit),
        ));
    }
    for p in &block.pool_states {
        if p.fee_bps >= 10_000 {
            return Err(TraceError::invalid(
                n,
                "pool_states.fee_bps",
                format!("market {} fee {} outside [0, 10000)", p.market_id, p.fee_bps),
            ));
        }
        if p.asset_x == p.asset_y {
            return Err(TraceError::invalid(
                n,
                "pool_states.asset_y",
                format!("market {} pairs an asset with itself", p.market_id),
            ));
        }
    }
    for (asset, price) in &block.prices {
        if !price.is_positive() {
            return Err(TraceError::invalid(
                n,
                "prices",
                format!("price of {asset} must be positive"),
            ));
        }
    }
    for pos in &block.positions {
        let t = &pos.liquidation_threshold;
        if !t.is_positive() || *t > crate::chain::Price::from_integer(1.into()) {
            return Err(TraceError::invalid(
                n,
                "positions.liquidation_threshold",
                format!("threshold for {} outside (0, 1]", pos.borrower),
            ));
        }
        if pos.collateral.amount.is_zero() || pos.debt.amount.is_zero() {
            return Err(TraceError::invalid(
                n,
                "positions.amount",
                format!("position of {} must carry positive amounts", pos.borrower),
            ));
        }
    }
    Ok(())
}

/// Mempool observation: when a transaction hash was first seen on the P2P network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MempoolEntry {
    pub hash: crate::chain::TxHash,
    #[serde(with = "dec")]
    pub first_seen_ms: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Address, Transaction, TxHash, TxStatus};
    use num_bigint::BigUint;

    fn tx(index: u32, gas_used: u64) -> Transaction {
        Transaction {
            hash: TxHash::from_low_u64(index as u64 + 1),
            index,
            sender: Address::from_low_u64(1),
            to: Some(Address::from_low_u64(2)),
            value: BigUint::default(),
            gas_price: 1u32.into(),
            gas_used,
            input: vec![0xab],
            status: TxStatus::Success,
            events: vec![],
        }
    }

    fn block(number: u64, txs: Vec<Transaction>) -> Block {
        Block {
            number,
            gas_limit: 100_000,
            block_reward_plus_fees: 2u32.into(),
            prices: Default::default(),
            pool_states: vec![],
            transactions: txs,
            positions: vec![],
            world_state: None,
        }
    }

    #[test]
    fn well_formed_two_block_file() {
        let t = Trace {
            metadata: TraceMetadata {
                source: "unit".into(),
                chain_id: "1".into(),
                generator_seed: None,
            },
            blocks: vec![block(1, vec![tx(0, 21_000)]), block(2, vec![])],
        };
        let text = t.to_text();
        let back = Trace::read_from(text.as_bytes()).unwrap();
        assert_eq!(back.blocks.len(), 2);
        assert_eq!(back, t);
    }

    #[test]
    fn header_line_is_optional() {
        let t = Trace {
            metadata: TraceMetadata::default(),
            blocks: vec![block(5, vec![])],
        };
        let text = t.to_text();
        let body = text.lines().nth(1).unwrap();
        let back = Trace::read_from(body.as_bytes()).unwrap();
        assert_eq!(back.blocks, t.blocks);
    }

    #[test]
    fn duplicate_index_rejected() {
        let t = Trace {
            metadata: TraceMetadata::default(),
            blocks: vec![block(1, vec![tx(0, 1), tx(0, 1)])],
        };
        let err = Trace::read_from(t.to_text().as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            TraceError::Validation { block: 1, ref field, .. } if field == "transactions.index"
        ));
    }

    #[test]
    fn gas_over_limit_rejected() {
        let t = Trace {
            metadata: TraceMetadata::default(),
            blocks: vec![block(1, vec![tx(0, 60_000), tx(1, 60_000)])],
        };
        let err = Trace::read_from(t.to_text().as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            TraceError::Validation { ref field, .. } if field == "gas_limit"
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let t = Trace {
            metadata: TraceMetadata::default(),
            blocks: vec![block(1, vec![])],
        };
        let mut text = t.to_text();
        text.push_str("{not json\n");
        match Trace::read_from(text.as_bytes()).unwrap_err() {
            TraceError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_increasing_numbers_rejected() {
        let t = Trace {
            metadata: TraceMetadata::default(),
            blocks: vec![block(2, vec![]), block(2, vec![])],
        };
        assert!(matches!(
            validate_trace(&t),
            Err(TraceError::Validation { ref field, .. }) if field == "number"
        ));
    }

    #[test]
    fn integers_travel_as_strings() {
        let t = Trace {
            metadata: TraceMetadata::default(),
            blocks: vec![block(7, vec![tx(0, 21_000)])],
        };
        let line = t.to_text().lines().nth(1).unwrap().to_string();
        assert!(line.contains(r#""number":"7""#), "{line}");
        assert!(line.contains(r#""gas_used":"21000""#), "{line}");
        assert!(line.contains(r#""input":"0xab""#), "{line}");
        assert!(line.contains(r#""from":"0x"#), "{line}");
    }
}
