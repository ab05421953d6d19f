//! Fixed-spread liquidation analysis: health, front/back classification,
//! internal back-running and liquidator profiles.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::codec::dec;
use crate::chain::{
    exact_value, gas_cost, value_in_native, Address, AssetAmount, AssetId, Block, BorrowPosition,
    DecodedEvent, Price, Transaction,
};
use crate::sandwich::TxRef;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiquidationError {
    #[error("asset {0} has no price")]
    CannotEvaluate(AssetId),
    #[error("position has zero debt value")]
    ZeroDebt,
    #[error("no position snapshot before the liquidation")]
    Unclassifiable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LiquidationStrategy {
    FrontRun,
    BackRun,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LiquidatorProfile {
    FrontOnly,
    BackOnly,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LiquidationRecord {
    #[serde(with = "dec")]
    pub block_number: u64,
    pub tx: TxRef,
    pub platform: String,
    pub borrower: Address,
    pub liquidator: Address,
    pub debt_repaid: AssetAmount,
    pub collateral_received: AssetAmount,
    /// `None` when an asset was unpriced.
    #[serde(with = "crate::chain::codec::opt_dec")]
    pub profit_native: Option<BigInt>,
    /// `None` when no pre-block position snapshot exists.
    pub strategy: Option<LiquidationStrategy>,
    pub internal_backrun: bool,
    pub privately_relayed: bool,
    #[serde(with = "dec")]
    pub gas_price: BigUint,
}

pub fn health_factor(
    position: &BorrowPosition,
    prices: &BTreeMap<AssetId, Price>,
) -> Result<Price, LiquidationError> {
    let coll = exact_value(&position.collateral, prices)
        .ok_or_else(|| LiquidationError::CannotEvaluate(position.collateral.asset.clone()))?;
    let debt = exact_value(&position.debt, prices)
        .ok_or_else(|| LiquidationError::CannotEvaluate(position.debt.asset.clone()))?;
    if debt.is_zero() {
        return Err(LiquidationError::ZeroDebt);
    }
    Ok(coll * &position.liquidation_threshold / debt)
}

/// FrontRun iff the position was already liquidatable in the pre-block state.
pub fn classify_liquidation(
    position_before: Option<&BorrowPosition>,
    prices_before: &BTreeMap<AssetId, Price>,
) -> Result<LiquidationStrategy, LiquidationError> {
    let pos = position_before.ok_or(LiquidationError::Unclassifiable)?;
    let h = health_factor(pos, prices_before).map_err(|e| match e {
        LiquidationError::CannotEvaluate(_) => LiquidationError::Unclassifiable,
        other => other,
    })?;
    Ok(if h < Price::one() {
        LiquidationStrategy::FrontRun
    } else {
        LiquidationStrategy::BackRun
    })
}

/// Second evaluation path: cross-multiplied integer comparison.
pub fn liquidatable_by_cross_product(
    position: &BorrowPosition,
    prices: &BTreeMap<AssetId, Price>,
) -> Option<bool> {
    let price_of = |a: &AssetId| -> Option<Price> {
        if a.is_native() {
            Some(Price::one())
        } else {
            prices.get(a).cloned()
        }
    };
    let pc = price_of(&position.collateral.asset)?;
    let pd = price_of(&position.debt.asset)?;
    let t = &position.liquidation_threshold;
    let lhs = BigInt::from(position.collateral.amount.clone())
        * pc.numer()
        * t.numer()
        * pd.denom();
    let rhs = BigInt::from(position.debt.amount.clone()) * pd.numer() * pc.denom() * t.denom();
    Some(lhs < rhs)
}

pub fn detect_internal_backrun(tx: &Transaction) -> bool {
    let mut seen_oracle = false;
    for e in &tx.events {
        match e {
            DecodedEvent::OracleUpdate(_) => seen_oracle = true,
            DecodedEvent::Liquidation(_) if seen_oracle => return true,
            _ => {}
        }
    }
    false
}

pub fn liquidation_profit(
    collateral_received: &AssetAmount,
    debt_repaid: &AssetAmount,
    gas: &BigUint,
    prices: &BTreeMap<AssetId, Price>,
) -> Result<BigInt, LiquidationError> {
    let c = value_in_native(collateral_received, prices);
    if c.unpriced {
        return Err(LiquidationError::CannotEvaluate(collateral_received.asset.clone()));
    }
    let d = value_in_native(debt_repaid, prices);
    if d.unpriced {
        return Err(LiquidationError::CannotEvaluate(debt_repaid.asset.clone()));
    }
    Ok(BigInt::from(c.value) - BigInt::from(d.value) - BigInt::from(gas.clone()))
}

/// All liquidation events of a block. Profit uses prices current at the event
/// (block-start prices plus every earlier oracle update in the block); gas is
/// charged to the first liquidation of each transaction.
pub fn detect_liquidations(block: &Block) -> Vec<LiquidationRecord> {
    let mut prices = block.prices.clone();
    let mut out = Vec::new();
    for tx in &block.transactions {
        let internal = detect_internal_backrun(tx);
        let mut gas = gas_cost(tx);
        for e in &tx.events {
            match e {
                DecodedEvent::OracleUpdate(o) => {
                    prices.insert(o.asset.clone(), o.price_native.clone());
                }
                DecodedEvent::Liquidation(l) => {
                    let position = block.position(&l.platform, &l.borrower);
                    out.push(LiquidationRecord {
                        block_number: block.number,
                        tx: TxRef::of(tx),
                        platform: l.platform.clone(),
                        borrower: l.borrower,
                        liquidator: l.liquidator,
                        debt_repaid: l.debt_repaid.clone(),
                        collateral_received: l.collateral.clone(),
                        profit_native: liquidation_profit(&l.collateral, &l.debt_repaid, &gas, &prices)
                            .ok(),
                        strategy: classify_liquidation(position, &block.prices).ok(),
                        internal_backrun: internal,
                        privately_relayed: tx.is_zero_gas_price(),
                        gas_price: tx.gas_price.clone(),
                    });
                    gas = BigUint::default();
                }
                _ => {}
            }
        }
    }
    out
}

/// Re-derives the strategy label of a record through the cross-product path.
pub fn verify_liquidation(block: &Block, rec: &LiquidationRecord) -> bool {
    let expected = block
        .position(&rec.platform, &rec.borrower)
        .and_then(|p| liquidatable_by_cross_product(p, &block.prices))
        .map(|front| {
            if front {
                LiquidationStrategy::FrontRun
            } else {
                LiquidationStrategy::BackRun
            }
        });
    expected == rec.strategy
}

pub fn liquidator_profile(records: &[LiquidationRecord]) -> BTreeMap<Address, LiquidatorProfile> {
    let mut seen: BTreeMap<Address, (bool, bool)> = BTreeMap::new();
    for r in records {
        let Some(s) = r.strategy else { continue };
        let e = seen.entry(r.liquidator).or_default();
        match s {
            LiquidationStrategy::FrontRun => e.0 = true,
            LiquidationStrategy::BackRun => e.1 = true,
        }
    }
    seen.into_iter()
        .map(|(a, flags)| {
            let p = match flags {
                (true, true) => LiquidatorProfile::Mixed,
                (true, false) => LiquidatorProfile::FrontOnly,
                _ => LiquidatorProfile::BackOnly,
            };
            (a, p)
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PlatformCounts {
    pub front_run: u64,
    pub back_run: u64,
    pub unclassified: u64,
    pub total: u64,
}

/// Front/back counts per platform.
pub fn strategy_counts(records: &[LiquidationRecord]) -> BTreeMap<String, PlatformCounts> {
    let mut out: BTreeMap<String, PlatformCounts> = BTreeMap::new();
    for r in records {
        let c = out.entry(r.platform.clone()).or_default();
        match r.strategy {
            Some(LiquidationStrategy::FrontRun) => c.front_run += 1,
            Some(LiquidationStrategy::BackRun) => c.back_run += 1,
            None => c.unclassified += 1,
        }
        c.total += 1;
    }
    out
}
