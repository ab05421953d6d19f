//! Exact constant-product swap arithmetic.
//!
//! Output for an input `in` with fee `f` (basis points):
//!
//! ```text
//! out = floor(reserve_out * in * (10000 - f) / (reserve_in * 10000 + in * (10000 - f)))
//! ```
//!
//! The whole input (fee included) is added to the input reserve, so the
//! product `reserve_x * reserve_y` never decreases.

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

use super::types::{AssetAmount, AssetId, PoolState};

pub const BPS_DENOMINATOR: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmmError {
    #[error("asset {asset} is not traded in market {market}")]
    InputAssetNotInPool { market: String, asset: AssetId },
    #[error("market {0} has an empty reserve")]
    EmptyPool(String),
    #[error("swap input must be positive")]
    ZeroInput,
    #[error("fee of {0} bps is outside [0, 10000)")]
    InvalidFee(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapResult {
    pub output: AssetAmount,
    pub pool_after: PoolState,
}

/// Raw curve evaluation on reserves, no pool bookkeeping.
pub fn constant_product_out(
    reserve_in: &BigUint,
    reserve_out: &BigUint,
    amount_in: &BigUint,
    fee_bps: u32,
) -> BigUint {
    let gamma_num = BigUint::from(BPS_DENOMINATOR - fee_bps);
    let effective_in = amount_in * &gamma_num;
    let numerator = reserve_out * &effective_in;
    let denominator = reserve_in * BigUint::from(BPS_DENOMINATOR) + effective_in;
    numerator / denominator
}

/// Swaps `input` through `pool`, returning the output and the post-swap pool.
pub fn amm_swap_out(pool: &PoolState, input: &AssetAmount) -> Result<SwapResult, AmmError> {
    if pool.fee_bps >= BPS_DENOMINATOR {
        return Err(AmmError::InvalidFee(pool.fee_bps));
    }
    let x_to_y = if input.asset == pool.asset_x {
        true
    } else if input.asset == pool.asset_y {
        false
    } else {
        return Err(AmmError::InputAssetNotInPool {
            market: pool.market_id.clone(),
            asset: input.asset.clone(),
        });
    };
    if input.amount.is_zero() {
        return Err(AmmError::ZeroInput);
    }
    if pool.reserve_x.is_zero() || pool.reserve_y.is_zero() {
        return Err(AmmError::EmptyPool(pool.market_id.clone()));
    }

    let (reserve_in, reserve_out, asset_out) = if x_to_y {
        (&pool.reserve_x, &pool.reserve_y, &pool.asset_y)
    } else {
        (&pool.reserve_y, &pool.reserve_x, &pool.asset_x)
    };
    let out = constant_product_out(reserve_in, reserve_out, &input.amount, pool.fee_bps);

    let mut pool_after = pool.clone();
    if x_to_y {
        pool_after.reserve_x += &input.amount;
        pool_after.reserve_y -= &out;
    } else {
        pool_after.reserve_y += &input.amount;
        pool_after.reserve_x -= &out;
    }
    Ok(SwapResult {
        output: AssetAmount {
            asset: asset_out.clone(),
            amount: out,
        },
        pool_after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(x: u64, y: u64, fee: u32) -> PoolState {
        PoolState {
            market_id: "m".into(),
            asset_x: "X".into(),
            asset_y: "Y".into(),
            reserve_x: x.into(),
            reserve_y: y.into(),
            fee_bps: fee,
        }
    }

    #[test]
    fn feeless_swap_matches_hand_computation() {
        let p = pool(1000, 1000, 0);
        let r = amm_swap_out(&p, &AssetAmount::new("X", 100u32)).unwrap();
        assert_eq!(r.output, AssetAmount::new("Y", 90u32));
        // k' = 1100 * 910 = 1_001_000 >= 1_000_000
        assert_eq!(r.pool_after.reserve_x, BigUint::from(1100u32));
        assert_eq!(r.pool_after.reserve_y, BigUint::from(910u32));
        let k = &p.reserve_x * &p.reserve_y;
        let k2 = &r.pool_after.reserve_x * &r.pool_after.reserve_y;
        assert!(k2 >= k);
    }

    #[test]
    fn fee_applies_multiply_then_divide() {
        // 1000 * 100 * 9970 / (1000 * 10000 + 100 * 9970) = 997000000 / 10997000 = 90.66..
        let r = amm_swap_out(&pool(1000, 1000, 30), &AssetAmount::new("X", 100u32)).unwrap();
        assert_eq!(r.output.amount, BigUint::from(90u32));
        let r = amm_swap_out(&pool(10_000, 10_000, 30), &AssetAmount::new("Y", 1000u32)).unwrap();
        // 10000*1000*9970 / (100_000_000 + 9_970_000) = 99_700_000_000 / 109_970_000 = 906.6..
        assert_eq!(r.output, AssetAmount::new("X", 906u32));
    }

    #[test]
    fn zero_input_rejected() {
        assert_eq!(
            amm_swap_out(&pool(1000, 1000, 0), &AssetAmount::new("X", 0u32)),
            Err(AmmError::ZeroInput)
        );
    }

    #[test]
    fn unknown_asset_and_empty_pool() {
        assert!(matches!(
            amm_swap_out(&pool(1000, 1000, 0), &AssetAmount::new("Z", 5u32)),
            Err(AmmError::InputAssetNotInPool { .. })
        ));
        assert_eq!(
            amm_swap_out(&pool(0, 1000, 0), &AssetAmount::new("X", 5u32)),
            Err(AmmError::EmptyPool("m".into()))
        );
    }

    #[test]
    fn round_trip_never_profits() {
        let p = pool(1000, 1000, 0);
        let there = amm_swap_out(&p, &AssetAmount::new("X", 100u32)).unwrap();
        let back = amm_swap_out(&there.pool_after, &there.output).unwrap();
        assert!(back.output.amount <= BigUint::from(100u32));
    }
}
