//! Generalized front-running by transaction replay.
//!
//! A replay copies a pending transaction, swaps the sender for the adversary,
//! rewrites every 20-byte occurrence of the original sender inside the calldata,
//! and executes the copy locally one position ahead of the original. Tokens
//! gained are sold into their native pool so profit is measured in the native
//! currency alone.

mod vm;

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::codec::dec;
use crate::chain::{amm_swap_out, Address, AssetAmount, AssetId, Transaction, TxHash, NATIVE_UNIT};
use crate::trace::Trace;

pub use vm::{
    diff_balances, execute_transaction, read_address_word, BalanceDeltas, ContractPattern,
    ContractSpec, Execution, Payout, PayoutStep, RevertReason, ToyWorldState, VmError,
    PLAIN_TRANSFER_GAS, SELECTOR_BYTES, WORD_BYTES,
};

/// Gas charged for each token-to-native conversion trade.
pub const CONVERSION_GAS: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternClass {
    SenderBenefits,
    ControllableInput,
    NotReplayable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayCandidate {
    #[serde(with = "dec")]
    pub block_number: u64,
    pub victim_hash: TxHash,
    #[serde(with = "dec")]
    pub victim_index: u32,
    #[serde(skip)]
    pub replay: Transaction,
    #[serde(with = "dec")]
    pub gas_price_used: BigUint,
    #[serde(with = "dec")]
    pub profit_native: BigInt,
    pub pattern_class: PatternClass,
    pub token_gains: Vec<AssetAmount>,
    /// Occurrences of the victim's address rewritten in the calldata.
    pub substitution_count: usize,
    pub reverted: bool,
    /// Victim paid zero gas price: only a miner can order a replay ahead of it.
    pub miner_only: bool,
    #[serde(with = "dec")]
    pub upfront_capital: BigUint,
}

/// Replaces every non-overlapping occurrence of `from` in `input` (scanning
/// left to right over the original bytes) with `to`. Returns the rewritten
/// bytes and the number of replacements.
pub fn substitute_address(input: &[u8], from: &Address, to: &Address) -> (Vec<u8>, usize) {
    let pat = from.as_bytes();
    let mut out = input.to_vec();
    let mut count = 0;
    let mut i = 0;
    while i + Address::LEN <= input.len() {
        if &input[i..i + Address::LEN] == pat {
            out[i..i + Address::LEN].copy_from_slice(to.as_bytes());
            count += 1;
            i += Address::LEN;
        } else {
            i += 1;
        }
    }
    (out, count)
}

/// Builds the replay transaction: adversary as sender, same value, sender
/// address substituted in the calldata, every other field copied.
pub fn construct_replay(victim: &Transaction, adversary: &Address) -> Transaction {
    construct_replay_counted(victim, adversary).0
}

fn construct_replay_counted(victim: &Transaction, adversary: &Address) -> (Transaction, usize) {
    let (input, count) = substitute_address(&victim.input, &victim.sender, adversary);
    let mut tx = victim.clone();
    tx.sender = *adversary;
    tx.value = victim.value.clone();
    tx.input = input;
    (tx, count)
}

struct VariantOutcome {
    profit: BigInt,
    token_gains: Vec<AssetAmount>,
    reverted: bool,
}

/// Executes `tx` for the adversary on a private copy of `state`, then converts
/// token gains to native. The adversary is lent exactly value plus gas so the
/// outcome does not depend on its balance.
fn run_variant(state: &ToyWorldState, tx: &Transaction, adversary: &Address) -> VariantOutcome {
    let mut s = state.clone();
    let native = AssetId::native();
    let loan = BigUint::from(s.gas_for(tx)) * &tx.gas_price + &tx.value;
    s.credit(&native, adversary, &loan);
    let before = s.clone();

    let reverted = match s.apply(tx) {
        Ok((status, _, _)) => status == crate::chain::TxStatus::Reverted,
        Err(_) => true,
    };
    let deltas = diff_balances(&before, &s);

    let mut profit = deltas
        .get(&(native.clone(), *adversary))
        .cloned()
        .unwrap_or_default();

    let mut token_gains = Vec::new();
    for ((asset, holder), d) in &deltas {
        if holder != adversary || asset.is_native() || !d.is_positive() {
            continue;
        }
        let gained = d.magnitude().clone();
        token_gains.push(AssetAmount {
            asset: asset.clone(),
            amount: gained.clone(),
        });
        let Some(pool) = s.native_pool_for(asset).cloned() else {
            continue;
        };
        let input = AssetAmount {
            asset: asset.clone(),
            amount: gained,
        };
        if let Ok(swap) = amm_swap_out(&pool, &input) {
            let fee = BigUint::from(CONVERSION_GAS) * &tx.gas_price;
            profit += BigInt::from(swap.output.amount) - BigInt::from(fee);
            s.pools.insert(pool.market_id.clone(), swap.pool_after);
        }
    }
    VariantOutcome {
        profit,
        token_gains,
        reverted,
    }
}

/// Evaluates the replay of `victim` on the pre-state at the victim's position.
pub fn evaluate_replay(
    state: &ToyWorldState,
    victim: &Transaction,
    adversary: &Address,
    block_number: u64,
) -> ReplayCandidate {
    let (mut replay, substitution_count) = construct_replay_counted(victim, adversary);
    let gas_price = &victim.gas_price + 1u32;
    replay.gas_price = gas_price.clone();
    let substituted = run_variant(state, &replay, adversary);

    let pattern_class = if substitution_count == 0 {
        if substituted.profit.is_positive() {
            PatternClass::SenderBenefits
        } else {
            PatternClass::NotReplayable
        }
    } else {
        let mut plain = replay.clone();
        plain.input = victim.input.clone();
        if run_variant(state, &plain, adversary).profit.is_positive() {
            PatternClass::SenderBenefits
        } else if substituted.profit.is_positive() {
            PatternClass::ControllableInput
        } else {
            PatternClass::NotReplayable
        }
    };

    ReplayCandidate {
        block_number,
        victim_hash: victim.hash,
        victim_index: victim.index,
        gas_price_used: gas_price,
        profit_native: substituted.profit,
        pattern_class,
        token_gains: substituted.token_gains,
        substitution_count,
        reverted: substituted.reverted,
        miner_only: victim.is_zero_gas_price(),
        upfront_capital: victim.value.clone(),
        replay,
    }
}

/// Upfront-capital histogram over profitable replays, in whole native coins.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CapitalBuckets {
    pub zero: u64,
    pub up_to_10: u64,
    pub up_to_100: u64,
    pub above_100: u64,
}

impl CapitalBuckets {
    pub fn add(&mut self, value: &BigUint) {
        let unit = BigUint::from(NATIVE_UNIT);
        if value.is_zero() {
            self.zero += 1;
        } else if *value <= &unit * 10u32 {
            self.up_to_10 += 1;
        } else if *value <= &unit * 100u32 {
            self.up_to_100 += 1;
        } else {
            self.above_100 += 1;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReplayScan {
    pub candidates: Vec<ReplayCandidate>,
    #[serde(with = "dec")]
    pub total_profit: BigInt,
    pub capital: CapitalBuckets,
    pub miner_only: u64,
    pub evaluated: u64,
    /// Blocks without a world-state snapshot.
    pub skipped_blocks: u64,
}

/// Evaluates every contract call in blocks carrying a world-state snapshot,
/// at its exact position, and keeps the profitable replays.
pub fn scan_replayable(trace: &Trace, adversary: &Address) -> ReplayScan {
    let per_block: Vec<Option<(Vec<ReplayCandidate>, u64)>> = trace
        .blocks
        .par_iter()
        .map(|block| {
            let mut state = block.world_state.clone()?;
            let mut found = Vec::new();
            let mut evaluated = 0;
            for tx in &block.transactions {
                let is_call = tx.to.is_some_and(|to| state.contracts.contains_key(&to));
                if is_call && tx.sender != *adversary {
                    evaluated += 1;
                    let cand = evaluate_replay(&state, tx, adversary, block.number);
                    if cand.profit_native.is_positive() {
                        found.push(cand);
                    }
                }
                // unreplayable or foreign transactions simply do not touch the toy state
                let _ = state.apply(tx);
            }
            Some((found, evaluated))
        })
        .collect();

    let mut scan = ReplayScan::default();
    for entry in per_block {
        match entry {
            None => scan.skipped_blocks += 1,
            Some((found, evaluated)) => {
                scan.evaluated += evaluated;
                for c in found {
                    scan.total_profit += &c.profit_native;
                    scan.capital.add(&c.upfront_capital);
                    if c.miner_only {
                        scan.miner_only += 1;
                    }
                    scan.candidates.push(c);
                }
            }
        }
    }
    if scan.skipped_blocks > 0 {
        log::warn!(
            "replay scan skipped {} blocks without a world-state snapshot",
            scan.skipped_blocks
        );
    }
    scan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::TxStatus;

    fn addr(v: u64) -> Address {
        Address::from_low_u64(v)
    }

    fn tx_with_input(sender: Address, input: Vec<u8>) -> Transaction {
        Transaction {
            hash: TxHash::from_low_u64(9),
            index: 3,
            sender,
            to: Some(addr(500)),
            value: 7u32.into(),
            gas_price: 10u32.into(),
            gas_used: 50_000,
            input,
            status: TxStatus::Success,
            events: vec![],
        }
    }

    #[test]
    fn substitution_rewrites_embedded_sender() {
        let victim = addr(0xabc);
        let adv = addr(0xdef);
        let mut input = vec![1, 2, 3];
        input.extend(victim.0);
        input.extend([9, 9]);
        let tx = tx_with_input(victim, input.clone());
        let replay = construct_replay(&tx, &adv);
        let mut expected = vec![1, 2, 3];
        expected.extend(adv.0);
        expected.extend([9, 9]);
        assert_eq!(replay.input, expected);
        assert_eq!(replay.sender, adv);
        assert_eq!(replay.value, tx.value);
        assert_eq!(replay.input.len(), tx.input.len());
    }

    #[test]
    fn substitution_without_occurrence_is_noop() {
        let tx = tx_with_input(addr(1), vec![0xde, 0xad, 0xbe, 0xef]);
        let replay = construct_replay(&tx, &addr(2));
        assert_eq!(replay.input, tx.input);
        assert_eq!(replay.value, BigUint::from(7u32));
        assert_eq!(replay.gas_price, tx.gas_price);
        assert_eq!(replay.to, tx.to);
    }

    #[test]
    fn substitution_counts_every_occurrence() {
        let v = addr(0x11);
        let mut input = Vec::new();
        input.extend(v.0);
        input.extend([0u8; 5]);
        input.extend(v.0);
        let (out, n) = substitute_address(&input, &v, &addr(0x22));
        assert_eq!(n, 2);
        assert_eq!(out.len(), input.len());
        assert_eq!(substitute_address(&out, &v, &addr(0x22)).1, 0);
    }

    #[test]
    fn overlapping_patterns_replace_left_to_right() {
        // a pattern made of a repeated byte overlaps itself at every offset
        let v = Address([7u8; 20]);
        let input = vec![7u8; 30];
        let (out, n) = substitute_address(&input, &v, &Address([1u8; 20]));
        assert_eq!(n, 1);
        assert_eq!(&out[..20], &[1u8; 20]);
        assert_eq!(&out[20..], &[7u8; 10]);
    }

    #[test]
    fn capital_buckets_use_whole_coins() {
        let mut b = CapitalBuckets::default();
        let unit = BigUint::from(NATIVE_UNIT);
        b.add(&BigUint::zero());
        b.add(&(&unit * 10u32));
        b.add(&(&unit * 10u32 + 1u32));
        b.add(&(&unit * 100u32 + 1u32));
        assert_eq!(
            b,
            CapitalBuckets {
                zero: 1,
                up_to_10: 1,
                up_to_100: 1,
                above_100: 1
            }
        );
    }
}
