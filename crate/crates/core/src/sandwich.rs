//! Sandwich attack detection over the swap legs of a single block.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::chain::codec::dec;
use crate::chain::{gas_cost, AssetId, Block, Price, SwapEvent, Transaction, TxHash, GWEI};

/// Position and hash of a transaction inside its block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TxRef {
    #[serde(with = "dec")]
    pub index: u32,
    pub hash: TxHash,
}

impl TxRef {
    pub fn of(tx: &Transaction) -> Self {
        TxRef {
            index: tx.index,
            hash: tx.hash,
        }
    }
}

/// An amount that may be negative, tagged with its asset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SignedAmount {
    pub asset: AssetId,
    #[serde(with = "dec")]
    pub amount: BigInt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SandwichInstance {
    #[serde(with = "dec")]
    pub block_number: u64,
    pub front: TxRef,
    pub victim: TxRef,
    pub back: TxRef,
    pub market_id: String,
    pub asset_x: AssetId,
    pub asset_y: AssetId,
    pub perfect: bool,
    pub additional_victims: Vec<TxRef>,
    pub profit: SignedAmount,
    #[serde(with = "dec")]
    pub gas_cost_native: BigUint,
    pub privately_relayed: bool,
    pub intermediate_tx_count: u32,
    #[serde(with = "dec")]
    pub front_gas_price: BigUint,
    #[serde(with = "dec")]
    pub victim_gas_price: BigUint,
    #[serde(with = "dec")]
    pub back_gas_price: BigUint,
}

impl SandwichInstance {
    /// Profit in native units net of gas, when the profit asset is native.
    pub fn net_native_profit(&self) -> Option<BigInt> {
        self.profit
            .asset
            .is_native()
            .then(|| &self.profit.amount - BigInt::from(self.gas_cost_native.clone()))
    }
}

struct Leg<'a> {
    pos: usize,
    tx: &'a Transaction,
    swap: &'a SwapEvent,
}

fn legs(block: &Block) -> Vec<Leg<'_>> {
    block
        .transactions
        .iter()
        .enumerate()
        .flat_map(|(pos, tx)| tx.swaps().map(move |swap| Leg { pos, tx, swap }))
        .collect()
}

fn same_actor(a: &Transaction, b: &Transaction) -> bool {
    a.sender == b.sender || (a.to.is_some() && a.to == b.to)
}

/// `in(A2)` within the closed window [90%, 110%] of `out(A1)`.
fn within_window(back_in: &BigUint, front_out: &BigUint) -> bool {
    let lhs = back_in * 10u32;
    lhs >= front_out * 9u32 && lhs <= front_out * 11u32
}

fn is_victim_leg(leg: &Leg<'_>, front: &Leg<'_>, back: &Leg<'_>) -> bool {
    leg.pos > front.pos
        && leg.pos < back.pos
        && leg.swap.market_id == front.swap.market_id
        && leg.swap.action.asset_in == front.swap.action.asset_in
        && leg.swap.action.asset_out == front.swap.action.asset_out
        && leg.tx.sender != front.tx.sender
        && leg.tx.sender != back.tx.sender
}

pub fn detect_sandwiches(block: &Block) -> Vec<SandwichInstance> {
    let legs = legs(block);
    let mut used_back: BTreeSet<usize> = BTreeSet::new();
    let mut used_front: BTreeSet<usize> = BTreeSet::new();
    let mut out = Vec::new();

    for (fi, front) in legs.iter().enumerate() {
        if used_back.contains(&front.pos) || used_front.contains(&front.pos) {
            continue;
        }
        let fa = &front.swap.action;
        for back in legs[fi + 1..].iter() {
            if back.pos <= front.pos || used_back.contains(&back.pos) {
                continue;
            }
            let ba = &back.swap.action;
            if back.swap.market_id != front.swap.market_id
                || ba.asset_in != fa.asset_out
                || ba.asset_out != fa.asset_in
                || !same_actor(front.tx, back.tx)
                || !within_window(&ba.amount_in, &fa.amount_out)
            {
                continue;
            }
            let mut victims: Vec<&Leg<'_>> = Vec::new();
            for v in legs.iter().filter(|l| is_victim_leg(l, front, back)) {
                if victims.last().map(|p| p.pos) != Some(v.pos) {
                    victims.push(v);
                }
            }
            let Some((victim, rest)) = victims.split_first() else {
                continue;
            };
            used_front.insert(front.pos);
            used_back.insert(back.pos);
            let between = (back.pos - front.pos - 1) as u32;
            out.push(SandwichInstance {
                block_number: block.number,
                front: TxRef::of(front.tx),
                victim: TxRef::of(victim.tx),
                back: TxRef::of(back.tx),
                market_id: front.swap.market_id.clone(),
                asset_x: fa.asset_in.clone(),
                asset_y: fa.asset_out.clone(),
                perfect: ba.amount_in == fa.amount_out,
                additional_victims: rest.iter().map(|l| TxRef::of(l.tx)).collect(),
                profit: SignedAmount {
                    asset: fa.asset_in.clone(),
                    amount: BigInt::from(ba.amount_out.clone())
                        - BigInt::from(fa.amount_in.clone()),
                },
                gas_cost_native: gas_cost(front.tx) + gas_cost(back.tx),
                privately_relayed: front.tx.is_zero_gas_price() && back.tx.is_zero_gas_price(),
                intermediate_tx_count: between - victims.len() as u32,
                front_gas_price: front.tx.gas_price.clone(),
                victim_gas_price: victim.tx.gas_price.clone(),
                back_gas_price: back.tx.gas_price.clone(),
            });
            break;
        }
    }
    out
}

/// Independent re-check of H1 to H5 for a reported instance against its block.
pub fn verify_sandwich(block: &Block, inst: &SandwichInstance) -> bool {
    let find = |r: &TxRef| {
        block
            .transactions
            .get(r.index as usize)
            .filter(|t| t.hash == r.hash)
    };
    let (Some(a1), Some(v), Some(a2)) = (find(&inst.front), find(&inst.victim), find(&inst.back))
    else {
        return false;
    };
    if block.number != inst.block_number || !(a1.index < v.index && v.index < a2.index) {
        return false;
    }
    let on_market = |t: &'_ Transaction, from: &AssetId, to: &AssetId| -> Vec<SwapEvent> {
        t.swaps()
            .filter(|s| {
                s.market_id == inst.market_id
                    && &s.action.asset_in == from
                    && &s.action.asset_out == to
            })
            .cloned()
            .collect()
    };
    let (x, y) = (&inst.asset_x, &inst.asset_y);
    let s1 = on_market(a1, x, y);
    let sv = on_market(v, x, y);
    let s2 = on_market(a2, y, x);
    if s1.is_empty() || sv.is_empty() || s2.is_empty() {
        return false;
    }
    let h4 = a1.sender == a2.sender || matches!((a1.to, a2.to), (Some(p), Some(q)) if p == q);
    let victim_distinct = v.sender != a1.sender && v.sender != a2.sender;
    let lo = Price::new(9.into(), 10.into());
    let hi = Price::new(11.into(), 10.into());
    let h5 = s1.iter().any(|f| {
        s2.iter().any(|b| {
            let ratio = Price::new(
                BigInt::from(b.action.amount_in.clone()),
                BigInt::from(f.action.amount_out.clone()),
            );
            ratio >= lo && ratio <= hi
        })
    });
    h4 && victim_distinct && h5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BidBucket {
    AtMostOne,
    UpTo1_1,
    UpTo1_1Pow2,
    UpTo1_1Pow3,
    UpTo1_1Pow4,
    Above1_1Pow4,
}

impl BidBucket {
    /// Estimated number of counter-reactive bids; 5 stands for "5 or more".
    pub fn estimated_bids(self) -> u32 {
        match self {
            BidBucket::AtMostOne | BidBucket::UpTo1_1 => 1,
            BidBucket::UpTo1_1Pow2 => 2,
            BidBucket::UpTo1_1Pow3 => 3,
            BidBucket::UpTo1_1Pow4 => 4,
            BidBucket::Above1_1Pow4 => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BidBucket::AtMostOne => "r<=1",
            BidBucket::UpTo1_1 => "1<r<=1.1",
            BidBucket::UpTo1_1Pow2 => "1.1<r<=1.1^2",
            BidBucket::UpTo1_1Pow3 => "1.1^2<r<=1.1^3",
            BidBucket::UpTo1_1Pow4 => "1.1^3<r<=1.1^4",
            BidBucket::Above1_1Pow4 => "r>1.1^4",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BidRoundEstimate {
    #[serde(with = "dec")]
    pub ratio: Price,
    pub bucket: BidBucket,
    pub estimated_bids: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NotApplicable {
    #[error("victim gas price is zero")]
    PrivateVictim,
    #[error("back-run gas price is zero")]
    PrivateBackrun,
}

/// Bucket of a gas price ratio, compared exactly against powers of 1.1.
pub fn bid_bucket(ratio: &Price) -> BidBucket {
    if *ratio <= Price::one() {
        return BidBucket::AtMostOne;
    }
    let step = Price::new(11.into(), 10.into());
    let mut bound = step.clone();
    for bucket in [
        BidBucket::UpTo1_1,
        BidBucket::UpTo1_1Pow2,
        BidBucket::UpTo1_1Pow3,
        BidBucket::UpTo1_1Pow4,
    ] {
        if *ratio <= bound {
            return bucket;
        }
        bound = &bound * &step;
    }
    BidBucket::Above1_1Pow4
}

pub fn estimate_bid_rounds(inst: &SandwichInstance) -> Result<BidRoundEstimate, NotApplicable> {
    if inst.victim_gas_price.is_zero() {
        return Err(NotApplicable::PrivateVictim);
    }
    let ratio = Price::new(
        BigInt::from(inst.front_gas_price.clone()),
        BigInt::from(inst.victim_gas_price.clone()),
    );
    let bucket = bid_bucket(&ratio);
    Ok(BidRoundEstimate {
        ratio,
        bucket,
        estimated_bids: bucket.estimated_bids(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum GasDeltaBucket {
    Negative,
    Below1Gwei,
    Below10Gwei,
    Below100Gwei,
    AtLeast100Gwei,
}

pub fn gas_delta_bucket(delta: &BigInt) -> GasDeltaBucket {
    let gwei = BigInt::from(GWEI);
    if delta.sign() == num_bigint::Sign::Minus {
        GasDeltaBucket::Negative
    } else if *delta < gwei {
        GasDeltaBucket::Below1Gwei
    } else if *delta < &gwei * 10 {
        GasDeltaBucket::Below10Gwei
    } else if *delta < &gwei * 100 {
        GasDeltaBucket::Below100Gwei
    } else {
        GasDeltaBucket::AtLeast100Gwei
    }
}

/// Bucket of `gas_price(V) - gas_price(A2)` in GWei.
pub fn backrun_gas_delta(inst: &SandwichInstance) -> Result<GasDeltaBucket, NotApplicable> {
    if inst.back_gas_price.is_zero() {
        return Err(NotApplicable::PrivateBackrun);
    }
    let d = BigInt::from(inst.victim_gas_price.clone()) - BigInt::from(inst.back_gas_price.clone());
    Ok(gas_delta_bucket(&d))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PositionStats {
    pub public: BTreeMap<u32, u64>,
    pub private: BTreeMap<u32, u64>,
}

pub fn sandwich_position_stats(instances: &[SandwichInstance]) -> PositionStats {
    let mut stats = PositionStats::default();
    for i in instances {
        let h = if i.privately_relayed {
            &mut stats.private
        } else {
            &mut stats.public
        };
        *h.entry(i.intermediate_tx_count).or_default() += 1;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Address, DecodedEvent, SwapAction, TxStatus};

    fn swap_tx(
        index: u32,
        sender: u64,
        to: u64,
        gas_price: u64,
        legs: &[(&str, &str, u64, &str, u64)],
    ) -> Transaction {
        Transaction {
            hash: TxHash::from_low_u64(1000 + index as u64),
            index,
            sender: Address::from_low_u64(sender),
            to: Some(Address::from_low_u64(to)),
            value: BigUint::default(),
            gas_price: gas_price.into(),
            gas_used: 100_000,
            input: vec![],
            status: TxStatus::Success,
            events: legs
                .iter()
                .map(|(m, ai, ia, ao, oa)| {
                    DecodedEvent::Swap(SwapEvent {
                        platform: "uni".into(),
                        market_id: (*m).into(),
                        action: SwapAction {
                            asset_in: (*ai).into(),
                            amount_in: (*ia).into(),
                            asset_out: (*ao).into(),
                            amount_out: (*oa).into(),
                        },
                    })
                })
                .collect(),
        }
    }

    fn block(txs: Vec<Transaction>) -> Block {
        Block {
            number: 10,
            gas_limit: 30_000_000,
            block_reward_plus_fees: 1u32.into(),
            prices: Default::default(),
            pool_states: vec![],
            transactions: txs,
            positions: vec![],
            world_state: None,
        }
    }

    fn triple(back_in: u64) -> Block {
        block(vec![
            swap_tx(0, 1, 50, 30, &[("m", "NATIVE", 100, "T", 1000)]),
            swap_tx(1, 2, 60, 20, &[("m", "NATIVE", 50, "T", 400)]),
            swap_tx(2, 1, 50, 10, &[("m", "T", back_in, "NATIVE", 120)]),
        ])
    }

    #[test]
    fn perfect_sandwich() {
        let b = triple(1000);
        let found = detect_sandwiches(&b);
        assert_eq!(found.len(), 1);
        let s = &found[0];
        assert!(s.perfect);
        assert_eq!((s.front.index, s.victim.index, s.back.index), (0, 1, 2));
        assert_eq!(s.profit.amount, BigInt::from(20));
        assert_eq!(s.intermediate_tx_count, 0);
        assert!(verify_sandwich(&b, s));
    }

    #[test]
    fn window_is_closed() {
        assert_eq!(detect_sandwiches(&triple(900)).len(), 1);
        assert_eq!(detect_sandwiches(&triple(1100)).len(), 1);
        assert!(detect_sandwiches(&triple(899)).is_empty());
        assert!(detect_sandwiches(&triple(1101)).is_empty());
        assert!(detect_sandwiches(&triple(1150)).is_empty());
    }

    #[test]
    fn needs_shared_actor() {
        let mut b = triple(1000);
        b.transactions[2].sender = Address::from_low_u64(7);
        b.transactions[2].to = Some(Address::from_low_u64(8));
        assert!(detect_sandwiches(&b).is_empty());
        b.transactions[2].to = Some(Address::from_low_u64(50));
        assert_eq!(detect_sandwiches(&b).len(), 1);
    }

    #[test]
    fn victim_must_trade_same_direction() {
        let mut b = triple(1000);
        b.transactions[1] = swap_tx(1, 2, 60, 20, &[("m", "T", 50, "NATIVE", 4)]);
        assert!(detect_sandwiches(&b).is_empty());
    }

    #[test]
    fn counts_intermediates_and_extra_victims() {
        let b = block(vec![
            swap_tx(0, 1, 50, 30, &[("m", "NATIVE", 100, "T", 1000)]),
            swap_tx(1, 2, 60, 20, &[("m", "NATIVE", 50, "T", 400)]),
            swap_tx(2, 3, 60, 20, &[("z", "NATIVE", 50, "T", 400)]),
            swap_tx(3, 4, 60, 20, &[("m", "NATIVE", 5, "T", 40)]),
            swap_tx(4, 5, 61, 20, &[]),
            swap_tx(5, 1, 50, 10, &[("m", "T", 1000, "NATIVE", 120)]),
        ]);
        let s = &detect_sandwiches(&b)[0];
        assert_eq!(s.additional_victims.len(), 1);
        assert_eq!(s.intermediate_tx_count, 2);
    }

    #[test]
    fn back_run_is_used_once() {
        let b = block(vec![
            swap_tx(0, 1, 50, 30, &[("m", "NATIVE", 100, "T", 1000)]),
            swap_tx(1, 1, 50, 30, &[("m", "NATIVE", 100, "T", 1000)]),
            swap_tx(2, 2, 60, 20, &[("m", "NATIVE", 50, "T", 400)]),
            swap_tx(3, 1, 50, 10, &[("m", "T", 1000, "NATIVE", 120)]),
        ]);
        let found = detect_sandwiches(&b);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].front.index, 0);
    }

    #[test]
    fn bid_bucket_boundaries() {
        let r = |n: i64, d: i64| Price::new(n.into(), d.into());
        assert_eq!(bid_bucket(&r(105, 100)).estimated_bids(), 1);
        assert_eq!(bid_bucket(&r(121, 100)), BidBucket::UpTo1_1Pow2);
        assert_eq!(bid_bucket(&r(3, 2)), BidBucket::Above1_1Pow4);
        assert_eq!(bid_bucket(&r(14641, 10000)), BidBucket::UpTo1_1Pow4);
        assert_eq!(bid_bucket(&r(1, 1)), BidBucket::AtMostOne);
    }

    #[test]
    fn gas_delta_buckets() {
        let g = |x: i64| BigInt::from(x) * BigInt::from(GWEI) / 10;
        assert_eq!(gas_delta_bucket(&g(5)), GasDeltaBucket::Below1Gwei);
        assert_eq!(gas_delta_bucket(&g(-20)), GasDeltaBucket::Negative);
        assert_eq!(gas_delta_bucket(&g(1000)), GasDeltaBucket::AtLeast100Gwei);
        assert_eq!(gas_delta_bucket(&g(10)), GasDeltaBucket::Below10Gwei);
    }

    #[test]
    fn position_histogram() {
        assert_eq!(sandwich_position_stats(&[]), PositionStats::default());
        let s = detect_sandwiches(&triple(1000));
        let stats = sandwich_position_stats(&s);
        assert_eq!(stats.public.get(&0), Some(&1));
    }

    #[test]
    fn private_victim_not_applicable() {
        let mut s = detect_sandwiches(&triple(1000)).remove(0);
        s.victim_gas_price = BigUint::default();
        assert_eq!(estimate_bid_rounds(&s), Err(NotApplicable::PrivateVictim));
    }
}
