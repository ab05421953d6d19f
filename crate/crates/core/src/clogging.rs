//! Clogging periods: runs of consecutive blocks in which one address
//! consumes more than 80% of the gas limit.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use serde::Serialize;

use crate::chain::codec::dec;
use crate::chain::{gas_cost, Address, Block, Price};
use crate::trace::Trace;

pub const MIN_PERIOD_BLOCKS: u64 = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CloggingPeriod {
    pub address: Address,
    #[serde(with = "dec")]
    pub start_block: u64,
    #[serde(with = "dec")]
    pub end_block: u64,
    #[serde(with = "dec")]
    pub length_blocks: u64,
    #[serde(with = "dec")]
    pub avg_gas_share: Price,
    #[serde(with = "dec")]
    pub total_gas_used: u128,
    #[serde(with = "dec")]
    pub total_cost_native: BigUint,
}

#[derive(Default, Clone)]
struct Usage {
    gas: u64,
    cost: BigUint,
}

/// Gas used and fees paid per address, counting a transaction toward both
/// its sender and its `to` address.
pub fn attributed_usage(block: &Block) -> BTreeMap<Address, (u64, BigUint)> {
    let mut m: BTreeMap<Address, Usage> = BTreeMap::new();
    for tx in &block.transactions {
        let fee = gas_cost(tx);
        let mut add = |a: Address| {
            let u = m.entry(a).or_default();
            u.gas += tx.gas_used;
            u.cost += &fee;
        };
        add(tx.sender);
        if let Some(to) = tx.to.filter(|t| *t != tx.sender) {
            add(to);
        }
    }
    m.into_iter().map(|(a, u)| (a, (u.gas, u.cost))).collect()
}

/// Strictly more than 80% of the gas limit.
pub fn exceeds_share(gas: u64, gas_limit: u64) -> bool {
    u128::from(gas) * 10 > u128::from(gas_limit) * 8
}

struct Run {
    start: u64,
    end: u64,
    share_sum: Price,
    gas: u128,
    cost: BigUint,
}

impl Run {
    fn into_period(self, address: Address) -> Option<CloggingPeriod> {
        let len = self.end - self.start + 1;
        (len >= MIN_PERIOD_BLOCKS).then(|| CloggingPeriod {
            address,
            start_block: self.start,
            end_block: self.end,
            length_blocks: len,
            avg_gas_share: self.share_sum / Price::from_integer(BigInt::from(len)),
            total_gas_used: self.gas,
            total_cost_native: self.cost,
        })
    }
}

pub fn detect_clogging_periods(trace: &Trace) -> Vec<CloggingPeriod> {
    let mut open: BTreeMap<Address, Run> = BTreeMap::new();
    let mut out = Vec::new();
    let mut prev_number: Option<u64> = None;
    for block in &trace.blocks {
        let contiguous = prev_number.is_some_and(|p| p + 1 == block.number);
        prev_number = Some(block.number);
        let hot: BTreeMap<Address, (u64, BigUint)> = if block.gas_limit == 0 {
            BTreeMap::new()
        } else {
            attributed_usage(block)
                .into_iter()
                .filter(|(_, (g, _))| exceeds_share(*g, block.gas_limit))
                .collect()
        };
        let closing: Vec<Address> = open
            .keys()
            .filter(|a| !contiguous || !hot.contains_key(a))
            .copied()
            .collect();
        for a in closing {
            if let Some(p) = open.remove(&a).and_then(|r| r.into_period(a)) {
                out.push(p);
            }
        }
        for (a, (gas, cost)) in hot {
            let share = Price::new(BigInt::from(gas), BigInt::from(block.gas_limit));
            let run = open.entry(a).or_insert_with(|| Run {
                start: block.number,
                end: block.number,
                share_sum: Price::default(),
                gas: 0,
                cost: BigUint::default(),
            });
            run.end = block.number;
            run.share_sum += share;
            run.gas += u128::from(gas);
            run.cost += cost;
        }
    }
    for (a, r) in open {
        if let Some(p) = r.into_period(a) {
            out.push(p);
        }
    }
    out.sort_by_key(|x| (x.start_block, x.address));
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DurationRow {
    pub label: String,
    pub count: u64,
    #[serde(with = "dec")]
    pub avg_gas_used: u128,
    #[serde(with = "dec")]
    pub avg_cost_native: BigUint,
}

/// Periods grouped into 5-block duration buckets (5-9, 10-14, ...).
pub fn clogging_duration_table(periods: &[CloggingPeriod]) -> Vec<DurationRow> {
    let mut groups: BTreeMap<u64, (u64, u128, BigUint)> = BTreeMap::new();
    for p in periods {
        let g = groups.entry(p.length_blocks / 5).or_default();
        g.0 += 1;
        g.1 += p.total_gas_used;
        g.2 += &p.total_cost_native;
    }
    groups
        .into_iter()
        .map(|(k, (n, gas, cost))| DurationRow {
            label: format!("{}-{} blocks", k * 5, k * 5 + 4),
            count: n,
            avg_gas_used: gas / u128::from(n),
            avg_cost_native: cost / BigUint::from(n),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Transaction, TxHash, TxStatus};

    fn block(number: u64, share_pct: u64) -> Block {
        let gas_limit = 1_000_000u64;
        let mut txs = vec![];
        if share_pct > 0 {
            txs.push(Transaction {
                hash: TxHash::from_low_u64(number),
                index: 0,
                sender: Address::from_low_u64(7),
                to: Some(Address::from_low_u64(8)),
                value: BigUint::default(),
                gas_price: 2u32.into(),
                gas_used: gas_limit * share_pct / 100,
                input: vec![],
                status: TxStatus::Success,
                events: vec![],
            });
        }
        Block {
            number,
            gas_limit,
            block_reward_plus_fees: 1u32.into(),
            prices: Default::default(),
            pool_states: vec![],
            transactions: txs,
            positions: vec![],
            world_state: None,
        }
    }

    fn trace(shares: &[u64]) -> Trace {
        Trace {
            metadata: Default::default(),
            blocks: shares
                .iter()
                .enumerate()
                .map(|(i, s)| block(i as u64 + 1, *s))
                .collect(),
        }
    }

    fn sender_periods(t: &Trace) -> Vec<CloggingPeriod> {
        detect_clogging_periods(t)
            .into_iter()
            .filter(|p| p.address == Address::from_low_u64(7))
            .collect()
    }

    #[test]
    fn five_blocks_at_85() {
        let p = sender_periods(&trace(&[85; 5]));
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].length_blocks, 5);
        assert_eq!(p[0].avg_gas_share, Price::new(17.into(), 20.into()));
    }

    #[test]
    fn four_blocks_not_enough() {
        assert!(sender_periods(&trace(&[85; 4])).is_empty());
    }

    #[test]
    fn maximal_run_after_dip() {
        let p = sender_periods(&trace(&[85, 85, 70, 85, 85, 85, 85, 85]));
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].start_block, p[0].end_block), (4, 8));
    }

    #[test]
    fn exactly_eighty_is_not_clogging() {
        assert!(sender_periods(&trace(&[80; 6])).is_empty());
        assert_eq!(sender_periods(&trace(&[81; 6])).len(), 1);
    }

    #[test]
    fn sender_and_contract_both_reported() {
        assert_eq!(detect_clogging_periods(&trace(&[90; 5])).len(), 2);
    }

    #[test]
    fn gap_in_numbering_breaks_run() {
        let mut t = trace(&[90; 6]);
        for b in t.blocks.iter_mut().skip(3) {
            b.number += 10;
        }
        assert!(sender_periods(&t).is_empty());
    }

    #[test]
    fn duration_rows() {
        let p = sender_periods(&trace(&[85; 12]));
        let rows = clogging_duration_table(&p);
        assert_eq!(rows[0].label, "10-14 blocks");
        assert_eq!(rows[0].count, 1);
    }
}
