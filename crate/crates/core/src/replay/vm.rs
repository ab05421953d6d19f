//! Deterministic toy VM standing in for EVM state.
//!
//! Contracts are declarative: each carries one payout pattern (who receives the
//! revenue) and a payout rule (what is paid). Execution charges a fixed gas
//! amount per contract, and a reverted call rolls back everything but gas.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigInt, BigUint};
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::codec::dec;
use crate::chain::{amm_swap_out, Address, AssetAmount, AssetId, PoolState, Transaction, TxStatus};

/// Gas charged for a call that is not a contract invocation.
pub const PLAIN_TRANSFER_GAS: u64 = 21_000;

/// Width of one ABI word, and of the selector preceding the first word.
pub const WORD_BYTES: usize = 32;
pub const SELECTOR_BYTES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContractPattern {
    /// Revenue goes to `msg.sender`, no authentication.
    TransferRevenueToSender,
    /// Revenue goes to an address read from the calldata word at `beneficiary_word_index`.
    SpecifyBeneficiary { beneficiary_word_index: u32 },
    /// Reverts unless `msg.sender == owner`; then pays the sender.
    Authentication { owner: Address },
    /// Revenue goes to a beneficiary fixed in contract storage.
    MoveBeneficiary { stored_beneficiary: Address },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PayoutStep {
    /// Contract sells `amount_in` of its own `asset_in` balance through `market_id`.
    Swap {
        market_id: String,
        asset_in: AssetId,
        #[serde(with = "dec")]
        amount_in: BigUint,
    },
    PayNative {
        #[serde(with = "dec")]
        amount: BigUint,
    },
    PayToken {
        asset: AssetId,
        #[serde(with = "dec")]
        amount: BigUint,
    },
    /// Pays the contract's whole balance of `asset`.
    PayTokenBalance { asset: AssetId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payout {
    /// Pay a fixed native amount.
    Fixed {
        #[serde(with = "dec")]
        amount: BigUint,
    },
    Program { steps: Vec<PayoutStep> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub pattern: ContractPattern,
    pub payout: Payout,
    #[serde(with = "dec")]
    pub gas_used: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("sender {sender} cannot cover value plus gas ({required} required, {available} available)")]
    InsufficientFunds {
        sender: Address,
        required: BigUint,
        available: BigUint,
    },
    #[error("transaction has no recipient")]
    MissingRecipient,
}

/// Why a call reverted; kept for diagnostics only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevertReason {
    Unauthorized,
    MalformedInput,
    InsufficientContractBalance(AssetId),
    Swap(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "WorldStateWire", from = "WorldStateWire")]
pub struct ToyWorldState {
    pub native: BTreeMap<Address, BigUint>,
    pub tokens: BTreeMap<(AssetId, Address), BigUint>,
    pub pools: BTreeMap<String, PoolState>,
    pub contracts: BTreeMap<Address, ContractSpec>,
}

/// Signed balance changes keyed by (asset, holder); native uses [`AssetId::native`].
pub type BalanceDeltas = BTreeMap<(AssetId, Address), BigInt>;

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub state: ToyWorldState,
    pub outcome: TxStatus,
    pub deltas: BalanceDeltas,
    pub gas_fee: BigUint,
    pub revert_reason: Option<RevertReason>,
}

impl ToyWorldState {
    pub fn native_balance(&self, who: &Address) -> BigUint {
        self.native.get(who).cloned().unwrap_or_default()
    }

    pub fn token_balance(&self, asset: &AssetId, who: &Address) -> BigUint {
        if asset.is_native() {
            return self.native_balance(who);
        }
        self.tokens
            .get(&(asset.clone(), *who))
            .cloned()
            .unwrap_or_default()
    }

    pub fn credit(&mut self, asset: &AssetId, who: &Address, amount: &BigUint) {
        if amount.is_zero() {
            return;
        }
        if asset.is_native() {
            *self.native.entry(*who).or_default() += amount;
        } else {
            *self.tokens.entry((asset.clone(), *who)).or_default() += amount;
        }
    }

    /// Debits `amount`, failing without change when the balance is short.
    pub fn debit(&mut self, asset: &AssetId, who: &Address, amount: &BigUint) -> bool {
        if amount.is_zero() {
            return true;
        }
        let slot = if asset.is_native() {
            self.native.get_mut(who)
        } else {
            self.tokens.get_mut(&(asset.clone(), *who))
        };
        match slot {
            Some(bal) if *bal >= *amount => {
                *bal -= amount;
                true
            }
            _ => false,
        }
    }

    /// Gas the VM charges for `tx`: the contract's declared constant, or a plain transfer.
    pub fn gas_for(&self, tx: &Transaction) -> u64 {
        tx.to
            .and_then(|to| self.contracts.get(&to))
            .map_or(PLAIN_TRANSFER_GAS, |c| c.gas_used)
    }

    /// The first pool (by market id) pairing `asset` with the native currency.
    pub fn native_pool_for(&self, asset: &AssetId) -> Option<&PoolState> {
        self.pools.values().find(|p| {
            (p.asset_x == *asset && p.asset_y.is_native())
                || (p.asset_y == *asset && p.asset_x.is_native())
        })
    }

    /// Applies `tx` in place. On error the state is untouched.
    pub fn apply(&mut self, tx: &Transaction) -> Result<(TxStatus, Option<RevertReason>, BigUint), VmError> {
        let to = tx.to.ok_or(VmError::MissingRecipient)?;
        let gas_fee = BigUint::from(self.gas_for(tx)) * &tx.gas_price;
        let required = &gas_fee + &tx.value;
        let available = self.native_balance(&tx.sender);
        if available < required {
            return Err(VmError::InsufficientFunds {
                sender: tx.sender,
                required,
                available,
            });
        }
        let native = AssetId::native();
        self.debit(&native, &tx.sender, &gas_fee);

        let checkpoint = self.clone();
        self.debit(&native, &tx.sender, &tx.value);
        self.credit(&native, &to, &tx.value);

        let result = match self.contracts.get(&to).cloned() {
            Some(contract) => self.run_contract(&contract, to, tx),
            None => Ok(()),
        };
        match result {
            Ok(()) => Ok((TxStatus::Success, None, gas_fee)),
            Err(reason) => {
                *self = checkpoint;
                Ok((TxStatus::Reverted, Some(reason), gas_fee))
            }
        }
    }

    fn run_contract(
        &mut self,
        contract: &ContractSpec,
        this: Address,
        tx: &Transaction,
    ) -> Result<(), RevertReason> {
        let beneficiary = match &contract.pattern {
            ContractPattern::TransferRevenueToSender => tx.sender,
            ContractPattern::SpecifyBeneficiary {
                beneficiary_word_index,
            } => read_address_word(&tx.input, *beneficiary_word_index as usize)
                .ok_or(RevertReason::MalformedInput)?,
            ContractPattern::Authentication { owner } => {
                if tx.sender != *owner {
                    return Err(RevertReason::Unauthorized);
                }
                tx.sender
            }
            ContractPattern::MoveBeneficiary { stored_beneficiary } => *stored_beneficiary,
        };

        let native = AssetId::native();
        match &contract.payout {
            Payout::Fixed { amount } => self.transfer(&native, &this, &beneficiary, amount),
            Payout::Program { steps } => {
                for step in steps {
                    match step {
                        PayoutStep::Swap {
                            market_id,
                            asset_in,
                            amount_in,
                        } => self.contract_swap(this, market_id, asset_in, amount_in)?,
                        PayoutStep::PayNative { amount } => {
                            self.transfer(&native, &this, &beneficiary, amount)?
                        }
                        PayoutStep::PayToken { asset, amount } => {
                            self.transfer(asset, &this, &beneficiary, amount)?
                        }
                        PayoutStep::PayTokenBalance { asset } => {
                            let all = self.token_balance(asset, &this);
                            self.transfer(asset, &this, &beneficiary, &all)?
                        }
                    }
                }
                Ok(())
            }
        }
    }

    fn transfer(
        &mut self,
        asset: &AssetId,
        from: &Address,
        to: &Address,
        amount: &BigUint,
    ) -> Result<(), RevertReason> {
        if !self.debit(asset, from, amount) {
            return Err(RevertReason::InsufficientContractBalance(asset.clone()));
        }
        self.credit(asset, to, amount);
        Ok(())
    }

    fn contract_swap(
        &mut self,
        trader: Address,
        market_id: &str,
        asset_in: &AssetId,
        amount_in: &BigUint,
    ) -> Result<(), RevertReason> {
        let pool = self
            .pools
            .get(market_id)
            .ok_or_else(|| RevertReason::Swap(format!("unknown market {market_id}")))?;
        let input = AssetAmount {
            asset: asset_in.clone(),
            amount: amount_in.clone(),
        };
        let result = amm_swap_out(pool, &input).map_err(|e| RevertReason::Swap(e.to_string()))?;
        if !self.debit(asset_in, &trader, amount_in) {
            return Err(RevertReason::InsufficientContractBalance(asset_in.clone()));
        }
        self.credit(&result.output.asset, &trader, &result.output.amount);
        self.pools.insert(market_id.to_string(), result.pool_after);
        Ok(())
    }

    /// Every (asset, holder) balance, native included.
    fn balance_sheet(&self) -> BTreeMap<(AssetId, Address), BigUint> {
        let native = AssetId::native();
        self.native
            .iter()
            .map(|(a, v)| ((native.clone(), *a), v.clone()))
            .chain(self.tokens.iter().map(|(k, v)| (k.clone(), v.clone())))
            .collect()
    }
}

/// Reads the address held in the low 20 bytes of ABI word `index`.
pub fn read_address_word(input: &[u8], index: usize) -> Option<Address> {
    let start = SELECTOR_BYTES + index * WORD_BYTES;
    let word = input.get(start..start + WORD_BYTES)?;
    let mut out = [0u8; 20];
    out.copy_from_slice(&word[WORD_BYTES - 20..]);
    Some(Address(out))
}

/// Runs `tx` against a copy of `state`.
pub fn execute_transaction(state: &ToyWorldState, tx: &Transaction) -> Result<Execution, VmError> {
    let mut next = state.clone();
    let (outcome, revert_reason, gas_fee) = next.apply(tx)?;
    let deltas = diff_balances(state, &next);
    Ok(Execution {
        state: next,
        outcome,
        deltas,
        gas_fee,
        revert_reason,
    })
}

pub fn diff_balances(before: &ToyWorldState, after: &ToyWorldState) -> BalanceDeltas {
    let a = before.balance_sheet();
    let b = after.balance_sheet();
    let keys: BTreeSet<_> = a.keys().chain(b.keys()).cloned().collect();
    keys.into_iter()
        .filter_map(|k| {
            let old = BigInt::from(a.get(&k).cloned().unwrap_or_default());
            let new = BigInt::from(b.get(&k).cloned().unwrap_or_default());
            let d = new - old;
            (!d.is_zero()).then_some((k, d))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TokenBalanceWire {
    asset: AssetId,
    holder: Address,
    #[serde(with = "dec")]
    amount: BigUint,
}

#[derive(Serialize, Deserialize)]
struct NativeBalanceWire {
    holder: Address,
    #[serde(with = "dec")]
    amount: BigUint,
}

#[derive(Serialize, Deserialize)]
struct ContractWire {
    address: Address,
    #[serde(flatten)]
    spec: ContractSpec,
}

#[derive(Serialize, Deserialize)]
struct WorldStateWire {
    #[serde(default)]
    native: Vec<NativeBalanceWire>,
    #[serde(default)]
    tokens: Vec<TokenBalanceWire>,
    #[serde(default)]
    pools: Vec<PoolState>,
    #[serde(default)]
    contracts: Vec<ContractWire>,
}

impl From<ToyWorldState> for WorldStateWire {
    fn from(s: ToyWorldState) -> Self {
        WorldStateWire {
            native: s
                .native
                .into_iter()
                .map(|(holder, amount)| NativeBalanceWire { holder, amount })
                .collect(),
            tokens: s
                .tokens
                .into_iter()
                .map(|((asset, holder), amount)| TokenBalanceWire {
                    asset,
                    holder,
                    amount,
                })
                .collect(),
            pools: s.pools.into_values().collect(),
            contracts: s
                .contracts
                .into_iter()
                .map(|(address, spec)| ContractWire { address, spec })
                .collect(),
        }
    }
}

impl From<WorldStateWire> for ToyWorldState {
    fn from(w: WorldStateWire) -> Self {
        ToyWorldState {
            native: w.native.into_iter().map(|b| (b.holder, b.amount)).collect(),
            tokens: w
                .tokens
                .into_iter()
                .map(|b| ((b.asset, b.holder), b.amount))
                .collect(),
            pools: w
                .pools
                .into_iter()
                .map(|p| (p.market_id.clone(), p))
                .collect(),
            contracts: w
                .contracts
                .into_iter()
                .map(|c| (c.address, c.spec))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::TxHash;

    const OWNER: u64 = 0x33;
    const STORED: u64 = 0x89;

    fn addr(v: u64) -> Address {
        Address::from_low_u64(v)
    }

    fn world(pattern: ContractPattern, payout: u64) -> ToyWorldState {
        let mut s = ToyWorldState::default();
        s.native.insert(addr(1), 1_000_000u64.into());
        s.native.insert(addr(2), 1_000_000u64.into());
        s.native.insert(addr(100), 10_000u64.into());
        s.contracts.insert(
            addr(100),
            ContractSpec {
                pattern,
                payout: Payout::Fixed {
                    amount: payout.into(),
                },
                gas_used: 10,
            },
        );
        s
    }

    fn call(sender: u64, input: Vec<u8>) -> Transaction {
        Transaction {
            hash: TxHash::from_low_u64(1),
            index: 0,
            sender: addr(sender),
            to: Some(addr(100)),
            value: BigUint::default(),
            gas_price: 2u32.into(),
            gas_used: 10,
            input,
            status: TxStatus::Success,
            events: vec![],
        }
    }

    fn delta(exec: &Execution, who: u64) -> BigInt {
        exec.deltas
            .get(&(AssetId::native(), addr(who)))
            .cloned()
            .unwrap_or_default()
    }

    #[test]
    fn sender_receives_revenue() {
        let s = world(ContractPattern::TransferRevenueToSender, 5);
        let exec = execute_transaction(&s, &call(1, vec![])).unwrap();
        assert_eq!(exec.outcome, TxStatus::Success);
        assert_eq!(delta(&exec, 1), BigInt::from(5 - 20));
    }

    #[test]
    fn authentication_reverts_for_strangers() {
        let s = world(ContractPattern::Authentication { owner: addr(OWNER) }, 5);
        let exec = execute_transaction(&s, &call(1, vec![])).unwrap();
        assert_eq!(exec.outcome, TxStatus::Reverted);
        assert_eq!(exec.revert_reason, Some(RevertReason::Unauthorized));
        // only the gas left the sender; the contract is untouched
        assert_eq!(delta(&exec, 1), BigInt::from(-20));
        assert_eq!(delta(&exec, 100), BigInt::zero());
        assert_eq!(exec.deltas.len(), 1);
    }

    #[test]
    fn stored_beneficiary_is_paid_regardless_of_sender() {
        let s = world(
            ContractPattern::MoveBeneficiary {
                stored_beneficiary: addr(STORED),
            },
            5,
        );
        let exec = execute_transaction(&s, &call(2, vec![])).unwrap();
        assert_eq!(exec.outcome, TxStatus::Success);
        assert_eq!(delta(&exec, STORED), BigInt::from(5));
        assert_eq!(delta(&exec, 2), BigInt::from(-20));
    }

    #[test]
    fn beneficiary_read_from_calldata() {
        let s = world(
            ContractPattern::SpecifyBeneficiary {
                beneficiary_word_index: 1,
            },
            7,
        );
        let mut input = vec![0xaa, 0xbb, 0xcc, 0xdd];
        input.extend([0u8; 32]);
        input.extend([0u8; 12]);
        input.extend(addr(2).0);
        let exec = execute_transaction(&s, &call(1, input)).unwrap();
        assert_eq!(delta(&exec, 2), BigInt::from(7));
        // short calldata reverts
        let exec = execute_transaction(&s, &call(1, vec![1, 2, 3, 4])).unwrap();
        assert_eq!(exec.outcome, TxStatus::Reverted);
    }

    #[test]
    fn insufficient_funds_leaves_state_alone() {
        let s = world(ContractPattern::TransferRevenueToSender, 5);
        let mut tx = call(7, vec![]);
        tx.value = 1u32.into();
        assert!(matches!(
            execute_transaction(&s, &tx),
            Err(VmError::InsufficientFunds { .. })
        ));
        let mut copy = s.clone();
        assert!(copy.apply(&tx).is_err());
        assert_eq!(copy, s);
    }

    #[test]
    fn contract_short_of_funds_reverts() {
        let s = world(ContractPattern::TransferRevenueToSender, 50_000);
        let exec = execute_transaction(&s, &call(1, vec![])).unwrap();
        assert_eq!(exec.outcome, TxStatus::Reverted);
    }

    #[test]
    fn program_swaps_then_pays_tokens() {
        let mut s = ToyWorldState::default();
        s.native.insert(addr(1), 1_000u64.into());
        s.tokens.insert(("TKA".into(), addr(100)), 100u64.into());
        s.pools.insert(
            "m".into(),
            PoolState {
                market_id: "m".into(),
                asset_x: "TKA".into(),
                asset_y: "TKB".into(),
                reserve_x: 1000u64.into(),
                reserve_y: 1000u64.into(),
                fee_bps: 0,
            },
        );
        s.contracts.insert(
            addr(100),
            ContractSpec {
                pattern: ContractPattern::TransferRevenueToSender,
                payout: Payout::Program {
                    steps: vec![
                        PayoutStep::Swap {
                            market_id: "m".into(),
                            asset_in: "TKA".into(),
                            amount_in: 100u64.into(),
                        },
                        PayoutStep::PayTokenBalance {
                            asset: "TKB".into(),
                        },
                    ],
                },
                gas_used: 1,
            },
        );
        let exec = execute_transaction(&s, &call(1, vec![])).unwrap();
        assert_eq!(exec.outcome, TxStatus::Success);
        assert_eq!(
            exec.deltas.get(&(AssetId::from("TKB"), addr(1))),
            Some(&BigInt::from(90))
        );
        assert_eq!(exec.state.pools["m"].reserve_x, BigUint::from(1100u32));
    }

    #[test]
    fn world_state_json_round_trip() {
        let s = world(ContractPattern::Authentication { owner: addr(OWNER) }, 5);
        let json = serde_json::to_string(&s).unwrap();
        let back: ToyWorldState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
