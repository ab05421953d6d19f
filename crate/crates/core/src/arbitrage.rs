//! Single-transaction cyclic arbitrage detection and block-top re-execution.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigInt, BigUint};
use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::chain::codec::dec;
use crate::chain::{amm_swap_out, gas_cost, AssetAmount, AssetId, Block, PoolState, SwapEvent};
use crate::sandwich::TxRef;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StateClass {
    BlockState,
    NetworkState,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ArbitrageCycle {
    #[serde(with = "dec")]
    pub block_number: u64,
    pub tx: TxRef,
    pub swaps: Vec<SwapEvent>,
    pub loop_asset: AssetId,
    #[serde(with = "dec")]
    pub revenue: BigInt,
    pub n_markets: usize,
    pub n_platforms: usize,
    #[serde(with = "dec")]
    pub gas_cost_native: BigUint,
    pub privately_relayed: bool,
    pub state_class: StateClass,
}

fn links(prev: &SwapEvent, next: &SwapEvent) -> bool {
    next.action.asset_in == prev.action.asset_out && next.action.amount_in <= prev.action.amount_out
}

/// Longest closing chain `swaps[a..=b]`, ties broken by the earliest start.
fn longest_cycle(swaps: &[&SwapEvent]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for a in 0..swaps.len() {
        let mut b = a;
        let mut closing = None;
        while b + 1 < swaps.len() && links(swaps[b], swaps[b + 1]) {
            b += 1;
            if swaps[b].action.asset_out == swaps[a].action.asset_in {
                closing = Some(b);
            }
        }
        if let Some(end) = closing {
            if best.is_none_or(|(ba, bb)| end - a > bb - ba) {
                best = Some((a, end));
            }
        }
    }
    best
}

pub fn detect_arbitrages(block: &Block) -> Vec<ArbitrageCycle> {
    let mut out = Vec::new();
    for tx in &block.transactions {
        let swaps: Vec<&SwapEvent> = tx.swaps().collect();
        if swaps.len() < 2 {
            continue;
        }
        let Some((a, b)) = longest_cycle(&swaps) else {
            continue;
        };
        let chain: Vec<SwapEvent> = swaps[a..=b].iter().map(|s| (*s).clone()).collect();
        let first = &chain[0].action;
        let last = &chain[chain.len() - 1].action;
        let revenue = BigInt::from(last.amount_out.clone()) - BigInt::from(first.amount_in.clone());
        if !revenue.is_positive() {
            continue;
        }
        let n_markets = chain.iter().map(|s| &s.market_id).collect::<BTreeSet<_>>().len();
        let n_platforms = chain.iter().map(|s| &s.platform).collect::<BTreeSet<_>>().len();
        out.push(ArbitrageCycle {
            block_number: block.number,
            tx: TxRef::of(tx),
            loop_asset: first.asset_in.clone(),
            swaps: chain,
            revenue,
            n_markets,
            n_platforms,
            gas_cost_native: gas_cost(tx),
            privately_relayed: tx.is_zero_gas_price(),
            state_class: StateClass::Unknown,
        });
    }
    out
}

/// Re-executes the cycle with its original input against `pools`, the
/// snapshots at the top of the block.
pub fn classify_arbitrage_state(
    cycle: &ArbitrageCycle,
    pools: &BTreeMap<String, PoolState>,
) -> StateClass {
    let mut local: BTreeMap<&str, PoolState> = BTreeMap::new();
    let first = &cycle.swaps[0].action;
    let mut holding = AssetAmount::new(first.asset_in.clone(), first.amount_in.clone());
    for s in &cycle.swaps {
        let pool = match local.get(s.market_id.as_str()) {
            Some(p) => p.clone(),
            None => match pools.get(&s.market_id) {
                Some(p) => p.clone(),
                None => return StateClass::Unknown,
            },
        };
        if holding.asset != s.action.asset_in {
            return StateClass::Unknown;
        }
        let Ok(r) = amm_swap_out(&pool, &holding) else {
            return StateClass::NetworkState;
        };
        holding = r.output;
        local.insert(s.market_id.as_str(), r.pool_after);
    }
    if holding.asset == first.asset_in && holding.amount > first.amount_in {
        StateClass::BlockState
    } else {
        StateClass::NetworkState
    }
}

/// Independent re-check of the cycle heuristics against the block.
pub fn verify_arbitrage(block: &Block, cycle: &ArbitrageCycle) -> bool {
    let Some(tx) = block
        .transactions
        .get(cycle.tx.index as usize)
        .filter(|t| t.hash == cycle.tx.hash)
    else {
        return false;
    };
    let n = cycle.swaps.len();
    if n < 2 {
        return false;
    }
    let events: Vec<&SwapEvent> = tx.swaps().collect();
    let contiguous = events
        .windows(n)
        .any(|w| w.iter().zip(&cycle.swaps).all(|(a, b)| *a == b));
    let chained = (1..n).all(|i| {
        let (p, q) = (&cycle.swaps[i - 1].action, &cycle.swaps[i].action);
        q.asset_in == p.asset_out && q.amount_in <= p.amount_out
    });
    let (s1, sn) = (&cycle.swaps[0].action, &cycle.swaps[n - 1].action);
    let closes = s1.asset_in == sn.asset_out && cycle.loop_asset == s1.asset_in;
    let rev = BigInt::from(sn.amount_out.clone()) - BigInt::from(s1.amount_in.clone());
    contiguous
        && chained
        && closes
        && rev == cycle.revenue
        && rev.is_positive()
        && cycle.n_platforms <= cycle.n_markets
}

pub const SCOPE_ROWS: [&str; 5] = ["2", "3", "4", "5", ">=6"];
pub const SCOPE_COLS: [&str; 4] = ["1", "2", "3", ">=4"];

/// Cycle counts by market count (rows) and platform count (columns).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ScopeTable {
    pub counts: [[u64; 4]; 5],
}

impl ScopeTable {
    pub fn cell(&self, n_markets: usize, n_platforms: usize) -> u64 {
        self.counts[scope_row(n_markets)][scope_col(n_platforms)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

fn scope_row(n_markets: usize) -> usize {
    n_markets.clamp(2, 6) - 2
}

fn scope_col(n_platforms: usize) -> usize {
    n_platforms.clamp(1, 4) - 1
}

pub fn arbitrage_scope_table(cycles: &[ArbitrageCycle]) -> ScopeTable {
    let mut t = ScopeTable::default();
    for c in cycles {
        t.counts[scope_row(c.n_markets)][scope_col(c.n_platforms)] += 1;
    }
    for (r, row) in t.counts.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if c > r + 1 {
                assert_eq!(*v, 0, "more platforms than markets in scope table");
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Address, DecodedEvent, SwapAction, Transaction, TxHash, TxStatus};

    fn sw(market: &str, platform: &str, ai: &str, ia: u64, ao: &str, oa: u64) -> SwapEvent {
        SwapEvent {
            platform: platform.into(),
            market_id: market.into(),
            action: SwapAction {
                asset_in: ai.into(),
                amount_in: ia.into(),
                asset_out: ao.into(),
                amount_out: oa.into(),
            },
        }
    }

    fn block_with(swaps: Vec<SwapEvent>) -> Block {
        Block {
            number: 3,
            gas_limit: 30_000_000,
            block_reward_plus_fees: 1u32.into(),
            prices: Default::default(),
            pool_states: vec![],
            transactions: vec![Transaction {
                hash: TxHash::from_low_u64(1),
                index: 0,
                sender: Address::from_low_u64(1),
                to: Some(Address::from_low_u64(2)),
                value: BigUint::default(),
                gas_price: 1u32.into(),
                gas_used: 200_000,
                input: vec![],
                status: TxStatus::Success,
                events: swaps.into_iter().map(DecodedEvent::Swap).collect(),
            }],
            positions: vec![],
            world_state: None,
        }
    }

    #[test]
    fn two_point_cycle() {
        let b = block_with(vec![
            sw("a", "p1", "NATIVE", 1000, "TKA", 500),
            sw("b", "p2", "TKA", 500, "NATIVE", 1200),
        ]);
        let c = detect_arbitrages(&b);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].revenue, BigInt::from(200));
        assert_eq!((c[0].n_markets, c[0].n_platforms), (2, 2));
        assert!(verify_arbitrage(&b, &c[0]));
    }

    #[test]
    fn single_swap_is_not_a_cycle() {
        let b = block_with(vec![sw("a", "p1", "NATIVE", 1000, "TKA", 500)]);
        assert!(detect_arbitrages(&b).is_empty());
    }

    #[test]
    fn broken_chain() {
        let b = block_with(vec![
            sw("a", "p1", "NATIVE", 1000, "TKA", 500),
            sw("b", "p1", "TKB", 500, "NATIVE", 1200),
        ]);
        assert!(detect_arbitrages(&b).is_empty());
    }

    #[test]
    fn overspent_link_rejected() {
        let b = block_with(vec![
            sw("a", "p1", "NATIVE", 1000, "TKA", 500),
            sw("b", "p1", "TKA", 501, "NATIVE", 1200),
        ]);
        assert!(detect_arbitrages(&b).is_empty());
    }

    #[test]
    fn dust_left_mid_cycle_is_allowed() {
        let b = block_with(vec![
            sw("a", "p1", "NATIVE", 1000, "TKA", 500),
            sw("b", "p1", "TKA", 499, "NATIVE", 1200),
        ]);
        assert_eq!(detect_arbitrages(&b)[0].revenue, BigInt::from(200));
    }

    #[test]
    fn longest_chain_wins() {
        let b = block_with(vec![
            sw("a", "p1", "NATIVE", 1000, "TKA", 500),
            sw("b", "p1", "TKA", 500, "TKB", 400),
            sw("c", "p2", "TKB", 400, "NATIVE", 1100),
        ]);
        let c = detect_arbitrages(&b);
        assert_eq!(c[0].swaps.len(), 3);
        assert_eq!((c[0].n_markets, c[0].n_platforms), (3, 2));
    }

    #[test]
    fn unprofitable_loop_not_reported() {
        let b = block_with(vec![
            sw("a", "p1", "NATIVE", 1000, "TKA", 500),
            sw("b", "p1", "TKA", 500, "NATIVE", 1000),
        ]);
        assert!(detect_arbitrages(&b).is_empty());
    }

    fn pool(m: &str, x: &str, y: &str, rx: u64, ry: u64) -> PoolState {
        PoolState {
            market_id: m.into(),
            asset_x: x.into(),
            asset_y: y.into(),
            reserve_x: rx.into(),
            reserve_y: ry.into(),
            fee_bps: 0,
        }
    }

    #[test]
    fn state_classification() {
        let b = block_with(vec![
            sw("a", "p1", "NATIVE", 100, "TKA", 90),
            sw("b", "p2", "TKA", 90, "NATIVE", 150),
        ]);
        let c = &detect_arbitrages(&b)[0];
        let mut pools = BTreeMap::new();
        pools.insert("a".to_string(), pool("a", "NATIVE", "TKA", 1000, 1000));
        pools.insert("b".to_string(), pool("b", "TKA", "NATIVE", 1000, 2000));
        assert_eq!(classify_arbitrage_state(c, &pools), StateClass::BlockState);
        pools.insert("b".to_string(), pool("b", "TKA", "NATIVE", 1000, 1000));
        assert_eq!(classify_arbitrage_state(c, &pools), StateClass::NetworkState);
        pools.remove("a");
        assert_eq!(classify_arbitrage_state(c, &pools), StateClass::Unknown);
    }

    #[test]
    fn scope_table_cells() {
        assert_eq!(arbitrage_scope_table(&[]).total(), 0);
        let b = block_with(vec![
            sw("a", "p1", "NATIVE", 1000, "TKA", 500),
            sw("b", "p2", "TKA", 500, "NATIVE", 1200),
        ]);
        let t = arbitrage_scope_table(&detect_arbitrages(&b));
        assert_eq!(t.cell(2, 2), 1);
        assert_eq!(t.cell(2, 3), 0);
    }
}
