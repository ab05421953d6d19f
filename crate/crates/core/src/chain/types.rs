use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::BigRational;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::codec::{self, dec, dec_map, hex_bytes};

/// Asset id of the chain's native currency. Valued at exactly 1 per base unit.
pub const NATIVE: &str = "NATIVE";

/// Base units in one whole native coin (Wei-like denomination).
pub const NATIVE_UNIT: u128 = 1_000_000_000_000_000_000;

/// Base units in one GWei.
pub const GWEI: u128 = 1_000_000_000;

/// Default AMM fee when a trace omits `fee_bps`.
pub const DEFAULT_FEE_BPS: u32 = 30;

pub type Price = BigRational;

macro_rules! fixed_bytes {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{}", hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(self, f)
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                codec::parse_fixed_hex::<$len>(s).map($name)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                dec::deserialize(d)
            }
        }
    };
}

fixed_bytes!(Address, 20);
fixed_bytes!(TxHash, 32);

impl Address {
    /// Deterministic address derived from a label, handy for fixtures and examples.
    pub fn from_low_u64(v: u64) -> Self {
        let mut b = [0u8; 20];
        b[12..].copy_from_slice(&v.to_be_bytes());
        Address(b)
    }
}

impl TxHash {
    pub fn from_low_u64(v: u64) -> Self {
        let mut b = [0u8; 32];
        b[24..].copy_from_slice(&v.to_be_bytes());
        TxHash(b)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssetId(pub String);

impl AssetId {
    pub fn new(s: impl Into<String>) -> Self {
        AssetId(s.into())
    }

    pub fn native() -> Self {
        AssetId(NATIVE.to_string())
    }

    pub fn is_native(&self) -> bool {
        self.0 == NATIVE
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for AssetId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for AssetId {
    fn from(s: &str) -> Self {
        AssetId(s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetAmount {
    pub asset: AssetId,
    #[serde(with = "dec")]
    pub amount: BigUint,
}

impl AssetAmount {
    pub fn new(asset: impl Into<AssetId>, amount: impl Into<BigUint>) -> Self {
        AssetAmount {
            asset: asset.into(),
            amount: amount.into(),
        }
    }

    pub fn native(amount: impl Into<BigUint>) -> Self {
        AssetAmount::new(AssetId::native(), amount)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Success,
    Reverted,
}

/// One swap: sells `amount_in` of `asset_in` for `amount_out` of `asset_out`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapAction {
    pub asset_in: AssetId,
    #[serde(with = "dec")]
    pub amount_in: BigUint,
    pub asset_out: AssetId,
    #[serde(with = "dec")]
    pub amount_out: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapEvent {
    pub platform: String,
    pub market_id: String,
    #[serde(flatten)]
    pub action: SwapAction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiquidationEvent {
    pub platform: String,
    pub borrower: Address,
    pub liquidator: Address,
    pub collateral: AssetAmount,
    pub debt_repaid: AssetAmount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleUpdateEvent {
    pub asset: AssetId,
    #[serde(with = "dec")]
    pub price_native: Price,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub token: AssetId,
    pub from: Address,
    pub to: Address,
    #[serde(with = "dec")]
    pub amount: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodedEvent {
    Swap(SwapEvent),
    Liquidation(LiquidationEvent),
    OracleUpdate(OracleUpdateEvent),
    Transfer(TransferEvent),
}

impl DecodedEvent {
    pub fn as_swap(&self) -> Option<&SwapEvent> {
        match self {
            DecodedEvent::Swap(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub hash: TxHash,
    #[serde(with = "dec")]
    pub index: u32,
    #[serde(rename = "from")]
    pub sender: Address,
    pub to: Option<Address>,
    #[serde(with = "dec")]
    pub value: BigUint,
    #[serde(with = "dec")]
    pub gas_price: BigUint,
    #[serde(with = "dec")]
    pub gas_used: u64,
    #[serde(with = "hex_bytes")]
    pub input: Vec<u8>,
    pub status: TxStatus,
    #[serde(default)]
    pub events: Vec<DecodedEvent>,
}

impl Transaction {
    pub fn swaps(&self) -> impl Iterator<Item = &SwapEvent> {
        self.events.iter().filter_map(DecodedEvent::as_swap)
    }

    pub fn is_zero_gas_price(&self) -> bool {
        self.gas_price == BigUint::default()
    }
}

fn default_fee_bps() -> u32 {
    DEFAULT_FEE_BPS
}

/// Constant-product pair market snapshot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    pub market_id: String,
    pub asset_x: AssetId,
    pub asset_y: AssetId,
    #[serde(with = "dec")]
    pub reserve_x: BigUint,
    #[serde(with = "dec")]
    pub reserve_y: BigUint,
    #[serde(default = "default_fee_bps")]
    pub fee_bps: u32,
}

/// Single-collateral, single-debt lending position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BorrowPosition {
    pub platform: String,
    pub borrower: Address,
    pub collateral: AssetAmount,
    pub debt: AssetAmount,
    #[serde(with = "dec")]
    pub liquidation_threshold: Price,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    #[serde(with = "dec")]
    pub number: u64,
    #[serde(with = "dec")]
    pub gas_limit: u64,
    #[serde(with = "dec")]
    pub block_reward_plus_fees: BigUint,
    #[serde(with = "dec_map", default)]
    pub prices: BTreeMap<AssetId, Price>,
    #[serde(default)]
    pub pool_states: Vec<PoolState>,
    pub transactions: Vec<Transaction>,
    /// Lending positions at block start; only present in traces that carry them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positions: Vec<BorrowPosition>,
    /// Toy-VM state at block start; only present in replay fixtures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world_state: Option<crate::replay::ToyWorldState>,
}

impl Block {
    pub fn pool(&self, market_id: &str) -> Option<&PoolState> {
        self.pool_states.iter().find(|p| p.market_id == market_id)
    }

    pub fn position(&self, platform: &str, borrower: &Address) -> Option<&BorrowPosition> {
        self.positions
            .iter()
            .find(|p| p.platform == platform && &p.borrower == borrower)
    }

    pub fn total_gas_used(&self) -> u64 {
        self.transactions.iter().map(|t| t.gas_used).sum()
    }
}

/// Transaction-ordering taxonomy; every classified instance carries one label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingStrategy {
    DestructiveFrontRun,
    ToleratingFrontRun,
    BackRun,
    Clogging,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_text_round_trip() {
        let a = Address::from_low_u64(0xdead_beef);
        let s = a.to_string();
        assert_eq!(s, "0x00000000000000000000000000000000deadbeef");
        assert_eq!(s.parse::<Address>().unwrap(), a);
        let upper = "0x00000000000000000000000000000000DEADBEEF";
        assert_eq!(upper.parse::<Address>().unwrap(), a);
        assert!("0x1234".parse::<Address>().is_err());
        assert!("00000000000000000000000000000000deadbeef".parse::<Address>().is_err());
    }

    #[test]
    fn swap_event_json_shape() {
        let ev = DecodedEvent::Swap(SwapEvent {
            platform: "uniswap_v2".into(),
            market_id: "m1".into(),
            action: SwapAction {
                asset_in: "NATIVE".into(),
                amount_in: 100u32.into(),
                asset_out: "TKA".into(),
                amount_out: 90u32.into(),
            },
        });
        let json = serde_json::to_string(&ev).unwrap();
        assert_eq!(
            json,
            r#"{"kind":"swap","platform":"uniswap_v2","market_id":"m1","asset_in":"NATIVE","amount_in":"100","asset_out":"TKA","amount_out":"90"}"#
        );
        let back: DecodedEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ev);
    }

    #[test]
    fn pool_fee_defaults_to_thirty_bps() {
        let p: PoolState = serde_json::from_str(
            r#"{"market_id":"m","asset_x":"NATIVE","asset_y":"TKA","reserve_x":"10","reserve_y":"20"}"#,
        )
        .unwrap();
        assert_eq!(p.fee_bps, 30);
    }

    #[test]
    fn oracle_price_is_rational_text() {
        let ev = DecodedEvent::OracleUpdate(OracleUpdateEvent {
            asset: "COL".into(),
            price_native: Price::new(3.into(), 4.into()),
        });
        let json = serde_json::to_string(&ev).unwrap();
        assert!(json.contains(r#""price_native":"3/4""#), "{json}");
        let back: DecodedEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ev);
    }
}
