use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;

use super::types::{AssetAmount, AssetId, Price, Transaction};

/// Native-currency valuation of an amount. `unpriced` is set when the asset
/// had no entry in the price map, in which case `value` is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Valuation {
    pub value: BigUint,
    pub unpriced: bool,
}

/// `floor(amount * price)`; the native asset is valued at par.
pub fn value_in_native(amount: &AssetAmount, prices: &BTreeMap<AssetId, Price>) -> Valuation {
    if amount.asset.is_native() {
        return Valuation {
            value: amount.amount.clone(),
            unpriced: false,
        };
    }
    match prices.get(&amount.asset) {
        Some(price) => Valuation {
            value: floor_mul(&amount.amount, price),
            unpriced: false,
        },
        None => Valuation {
            value: BigUint::default(),
            unpriced: true,
        },
    }
}

/// Exact rational value of an amount, or `None` when unpriced.
pub fn exact_value(amount: &AssetAmount, prices: &BTreeMap<AssetId, Price>) -> Option<Price> {
    let qty = Price::from_integer(BigInt::from(amount.amount.clone()));
    if amount.asset.is_native() {
        return Some(qty);
    }
    prices.get(&amount.asset).map(|p| qty * p)
}

fn floor_mul(amount: &BigUint, price: &Price) -> BigUint {
    let product = BigInt::from(amount.clone()) * price.numer();
    let q = product.div_floor(price.denom());
    match q.sign() {
        Sign::Minus => BigUint::default(),
        _ => q.magnitude().clone(),
    }
}

/// `gas_used * gas_price`, exact.
pub fn gas_cost(tx: &Transaction) -> BigUint {
    &tx.gas_price * BigUint::from(tx.gas_used)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::types::{Address, TxHash, TxStatus};

    fn prices(entries: &[(&str, i64, i64)]) -> BTreeMap<AssetId, Price> {
        entries
            .iter()
            .map(|(a, n, d)| (AssetId::from(*a), Price::new((*n).into(), (*d).into())))
            .collect()
    }

    #[test]
    fn linear_pricing() {
        let v = value_in_native(&AssetAmount::new("TKA", 100u32), &prices(&[("TKA", 2, 1)]));
        assert_eq!(v.value, BigUint::from(200u32));
        assert!(!v.unpriced);
    }

    #[test]
    fn native_is_identity() {
        let v = value_in_native(&AssetAmount::native(5u32), &BTreeMap::new());
        assert_eq!(v.value, BigUint::from(5u32));
        assert!(!v.unpriced);
    }

    #[test]
    fn unpriced_is_zero_and_flagged() {
        let v = value_in_native(&AssetAmount::new("UNKNOWN", 7u32), &BTreeMap::new());
        assert_eq!(v.value, BigUint::default());
        assert!(v.unpriced);
    }

    #[test]
    fn fractional_price_floors() {
        let v = value_in_native(&AssetAmount::new("T", 10u32), &prices(&[("T", 1, 3)]));
        assert_eq!(v.value, BigUint::from(3u32));
    }

    fn tx(gas_used: u64, gas_price: u64) -> Transaction {
        Transaction {
            hash: TxHash::default(),
            index: 0,
            sender: Address::default(),
            to: None,
            value: BigUint::default(),
            gas_price: gas_price.into(),
            gas_used,
            input: vec![],
            status: TxStatus::Success,
            events: vec![],
        }
    }

    #[test]
    fn gas_cost_products() {
        assert_eq!(
            gas_cost(&tx(21_000, 1_000_000_000)),
            BigUint::from(21_000_000_000_000u64)
        );
        assert_eq!(gas_cost(&tx(21_000, 0)), BigUint::default());
        assert_eq!(gas_cost(&tx(0, 50)), BigUint::default());
    }
}
