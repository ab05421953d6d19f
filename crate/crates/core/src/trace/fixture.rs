//! Deterministic synthetic traces with planted BEV instances, adversarial
//! near-miss decoys and a matching ground truth.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::io::{Trace, TraceMetadata};
use super::mempool::MempoolLog;
use crate::arbitrage::{detect_arbitrages, StateClass};
use crate::chain::codec::dec;
use crate::chain::{
    amm_swap_out, constant_product_out, Address, AssetAmount, AssetId, Block, BorrowPosition,
    DecodedEvent, LiquidationEvent, OracleUpdateEvent, PoolState, Price, SwapAction, SwapEvent,
    Transaction, TxHash, TxStatus, DEFAULT_FEE_BPS, GWEI, NATIVE_UNIT,
};
use crate::clogging::detect_clogging_periods;
use crate::liquidation::LiquidationStrategy;
use crate::replay::{
    ContractPattern, ContractSpec, Payout, PayoutStep, ToyWorldState, CONVERSION_GAS,
    SELECTOR_BYTES, WORD_BYTES,
};
use crate::sandwich::detect_sandwiches;

const SANDWICH_GAS: u64 = 150_000;
const VICTIM_GAS: u64 = 130_000;
const ARB_BASE_GAS: u64 = 120_000;
const ARB_GAS_PER_SWAP: u64 = 90_000;
const LIQUIDATION_GAS: u64 = 380_000;
const ORACLE_GAS: u64 = 70_000;
const NOISE_SWAP_GAS: u64 = 110_000;
const TRANSFER_GAS: u64 = 21_000;
const NOISE_MARKETS: usize = 16;
const USER_POOL: usize = 512;
const LIQUIDATOR_POOL: usize = 12;

pub const ARB_PLATFORMS: [&str; 5] = ["uniswap_v2", "sushiswap", "bancor", "balancer", "curve_pair"];
pub const LIQUIDATION_PLATFORMS: [&str; 4] = ["aave_v1", "aave_v2", "compound", "dydx"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub seed: u64,
    pub first_block: u64,
    pub n_blocks: u64,
    pub gas_limit: u64,
    pub sandwiches: u32,
    pub arbitrages: u32,
    pub liquidations: u32,
    pub clogging_periods: u32,
    /// Inclusive range of planted clogging period lengths.
    pub clogging_length: [u64; 2],
    pub replayables: u32,
    pub private_txs: u32,
    /// Mean noise transactions per block.
    pub noise_per_block: f64,
    /// Share of noise transactions that are router swaps.
    pub noise_swap_share: f64,
    /// Near-miss decoys of each kind per detector.
    pub decoys_per_kind: u32,
    /// Share of planted BEV transactions relayed privately at zero gas price.
    pub private_share: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 0,
            first_block: 1_000_000,
            n_blocks: 200,
            gas_limit: 30_000_000,
            sandwiches: 10,
            arbitrages: 10,
            liquidations: 10,
            clogging_periods: 2,
            clogging_length: [5, 9],
            replayables: 7,
            private_txs: 5,
            noise_per_block: 4.0,
            noise_swap_share: 0.5,
            decoys_per_kind: 1,
            private_share: 0.1,
        }
    }
}

impl FixtureSpec {
    pub fn small(seed: u64) -> Self {
        FixtureSpec {
            seed,
            ..Default::default()
        }
    }

    /// No noise and no decoys: only planted instances.
    pub fn clean(seed: u64) -> Self {
        FixtureSpec {
            seed,
            noise_per_block: 0.0,
            decoys_per_kind: 0,
            private_txs: 0,
            ..Default::default()
        }
    }

    /// At least 100 planted instances per detector, decoys and noise on.
    pub fn acceptance(seed: u64) -> Self {
        FixtureSpec {
            seed,
            n_blocks: 3_000,
            sandwiches: 160,
            arbitrages: 160,
            liquidations: 160,
            clogging_periods: 110,
            clogging_length: [5, 12],
            replayables: 35,
            private_txs: 40,
            noise_per_block: 6.0,
            decoys_per_kind: 6,
            ..Default::default()
        }
    }

    /// Large noisy trace for throughput measurements.
    pub fn throughput(seed: u64, n_blocks: u64, noise_per_block: f64) -> Self {
        let per = |k: u64| (n_blocks / k).min(u64::from(u32::MAX)) as u32;
        FixtureSpec {
            seed,
            n_blocks,
            sandwiches: per(20),
            arbitrages: per(20),
            liquidations: per(40),
            clogging_periods: per(400),
            replayables: 0,
            private_txs: per(50),
            noise_per_block,
            noise_swap_share: 0.3,
            decoys_per_kind: per(1000),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("invalid fixture spec: {0}")]
    Invalid(String),
    #[error("clogging needs {needed} blocks but the fixture has {available}")]
    ClogTooLong { needed: u64, available: u64 },
    #[error("no block has {0} gas left for a planted instance")]
    Capacity(u64),
    #[error("generated fixture failed its self-check: {0}")]
    SelfCheck(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandwichTruth {
    #[serde(with = "dec")]
    pub block: u64,
    pub front: TxHash,
    pub victim: TxHash,
    pub back: TxHash,
    pub additional_victims: Vec<TxHash>,
    pub market_id: String,
    pub perfect: bool,
    /// `in(A2) / out(A1)` the instance was built with.
    pub h5_ratio: String,
    #[serde(with = "dec")]
    pub profit: BigInt,
    pub intermediate_tx_count: u32,
    pub privately_relayed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbitrageTruth {
    #[serde(with = "dec")]
    pub block: u64,
    pub tx: TxHash,
    pub n_markets: usize,
    pub n_platforms: usize,
    #[serde(with = "dec")]
    pub revenue: BigInt,
    pub state: StateClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiquidationTruth {
    #[serde(with = "dec")]
    pub block: u64,
    pub tx: TxHash,
    pub platform: String,
    pub borrower: Address,
    pub liquidator: Address,
    pub strategy: LiquidationStrategy,
    pub internal_backrun: bool,
    #[serde(with = "dec")]
    pub health_before: Price,
    #[serde(with = "dec")]
    pub profit_native: BigInt,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CloggingTruth {
    pub address: Address,
    #[serde(with = "dec")]
    pub start_block: u64,
    #[serde(with = "dec")]
    pub end_block: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayKind {
    SenderFixed,
    SenderToken,
    SenderSwap,
    BeneficiaryOwn,
    BeneficiaryOther,
    Authentication,
    MoveBeneficiary,
}

impl ReplayKind {
    const ALL: [ReplayKind; 7] = [
        ReplayKind::SenderFixed,
        ReplayKind::SenderToken,
        ReplayKind::SenderSwap,
        ReplayKind::BeneficiaryOwn,
        ReplayKind::BeneficiaryOther,
        ReplayKind::Authentication,
        ReplayKind::MoveBeneficiary,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayTruth {
    #[serde(with = "dec")]
    pub block: u64,
    pub victim: TxHash,
    pub contract: Address,
    pub kind: ReplayKind,
    pub expected_class: crate::replay::PatternClass,
    #[serde(with = "dec")]
    pub expected_profit: BigInt,
    pub miner_only: bool,
    #[serde(with = "dec")]
    pub value: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoyTruth {
    pub detector: String,
    pub kind: String,
    #[serde(with = "dec")]
    pub block: u64,
    pub txs: Vec<TxHash>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub adversary: Address,
    pub sandwiches: Vec<SandwichTruth>,
    pub arbitrages: Vec<ArbitrageTruth>,
    pub liquidations: Vec<LiquidationTruth>,
    pub clogging: Vec<CloggingTruth>,
    pub replays: Vec<ReplayTruth>,
    pub private_not_broadcast: BTreeSet<TxHash>,
    pub private_zero_gas: BTreeSet<TxHash>,
    pub decoys: Vec<DecoyTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub trace: Trace,
    pub truth: GroundTruth,
    pub mempool: MempoolLog,
}

#[derive(Clone, Copy, Debug)]
enum Actor {
    SameSender,
    SameContract,
}

#[derive(Clone, Copy, Debug)]
enum SandwichDecoy {
    Ratio(u64, u64),
    DifferentActors,
    SameDirection,
    NoVictim,
}

#[derive(Clone, Debug)]
enum Unit {
    Sandwich {
        ratio: (u64, u64),
        actor: Actor,
        victims: usize,
        private: bool,
    },
    SandwichDecoy(SandwichDecoy),
    CrossBlockHead(usize),
    CrossBlockTail(usize),
    Arbitrage {
        markets: usize,
        platforms: usize,
        network_state: bool,
        private: bool,
    },
    ArbitrageDecoy(&'static str),
    Liquidation {
        kind: LiqKind,
        platform: &'static str,
        private: bool,
    },
    Replay(ReplayKind, usize),
    Private(bool),
}

#[derive(Clone, Copy, Debug)]
enum LiqKind {
    Front,
    FrontBoundary,
    BackSeparate,
    BackInternal,
    BackBoundary,
}

impl Unit {
    fn gas_budget(&self) -> u64 {
        match self {
            Unit::Sandwich { victims, .. } => 2 * SANDWICH_GAS + *victims as u64 * VICTIM_GAS,
            Unit::SandwichDecoy(_) | Unit::CrossBlockHead(_) => 2 * SANDWICH_GAS + VICTIM_GAS,
            Unit::CrossBlockTail(_) => SANDWICH_GAS,
            Unit::Arbitrage { markets, .. } => {
                ARB_BASE_GAS + *markets as u64 * ARB_GAS_PER_SWAP + NOISE_SWAP_GAS
            }
            Unit::ArbitrageDecoy(_) => ARB_BASE_GAS + 3 * ARB_GAS_PER_SWAP,
            Unit::Liquidation { .. } => LIQUIDATION_GAS + ORACLE_GAS,
            Unit::Replay(..) => 200_000,
            Unit::Private(_) => TRANSFER_GAS,
        }
    }
}

struct Draft {
    tx: Transaction,
    broadcast: bool,
}

#[derive(Default)]
struct BlockPlan {
    units: Vec<Unit>,
    clog: Option<(Address, Address, u64)>,
    noise: usize,
    used: u64,
}

struct BlockCtx {
    number: u64,
    snapshots: BTreeMap<String, PoolState>,
    prices: BTreeMap<AssetId, Price>,
    positions: Vec<BorrowPosition>,
    world: Option<ToyWorldState>,
    drafts: Vec<Draft>,
    noise_dirs: BTreeMap<usize, bool>,
}

struct Gen {
    rng: ChaCha8Rng,
    spec: FixtureSpec,
    pools: BTreeMap<String, PoolState>,
    platform_of: BTreeMap<String, String>,
    counter: u64,
    router: Address,
    users: Vec<Address>,
    liquidators: Vec<Address>,
    oracle: (Address, Address),
    truth: GroundTruth,
    cross_block: BTreeMap<usize, (String, BigUint, Address, Address)>,
    sandwich_gas_ratios: usize,
}

fn coin(x: u64) -> BigUint {
    BigUint::from(NATIVE_UNIT) * x
}

fn milli(x: u64) -> BigUint {
    BigUint::from(NATIVE_UNIT / 1000) * x
}

fn big(x: &BigUint) -> BigInt {
    BigInt::from(x.clone())
}

impl Gen {
    fn address(&mut self) -> Address {
        let mut b = [0u8; 20];
        self.rng.fill(&mut b[..]);
        Address(b)
    }

    fn hash(&mut self) -> TxHash {
        let mut b = [0u8; 32];
        self.rng.fill(&mut b[..]);
        TxHash(b)
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.counter += 1;
        format!("{prefix}{}", self.counter)
    }

    fn gwei(&mut self, lo: u64, hi: u64) -> BigUint {
        BigUint::from(self.rng.random_range(lo..=hi)) * BigUint::from(GWEI)
    }

    fn user(&mut self) -> Address {
        self.users[self.rng.random_range(0..self.users.len())]
    }

    #[allow(clippy::too_many_arguments)]
    fn tx(
        &mut self,
        sender: Address,
        to: Option<Address>,
        gas_price: BigUint,
        gas_used: u64,
        value: BigUint,
        input: Vec<u8>,
        events: Vec<DecodedEvent>,
    ) -> Transaction {
        Transaction {
            hash: self.hash(),
            index: 0,
            sender,
            to,
            value,
            gas_price,
            gas_used,
            input,
            status: TxStatus::Success,
            events,
        }
    }

    fn new_pool(&mut self, prefix: &str, x: AssetId, y: AssetId, rx: BigUint, ry: BigUint, platform: &str) -> String {
        let id = self.fresh(prefix);
        self.pools.insert(
            id.clone(),
            PoolState {
                market_id: id.clone(),
                asset_x: x,
                asset_y: y,
                reserve_x: rx,
                reserve_y: ry,
                fee_bps: DEFAULT_FEE_BPS,
            },
        );
        self.platform_of.insert(id.clone(), platform.to_string());
        id
    }

    fn swap(&mut self, ctx: &mut BlockCtx, market: &str, asset_in: &AssetId, amount: BigUint) -> SwapEvent {
        let pool = self.pools[market].clone();
        ctx.snapshots.entry(market.to_string()).or_insert_with(|| pool.clone());
        let input = AssetAmount::new(asset_in.clone(), amount.clone());
        let r = amm_swap_out(&pool, &input).expect("fixture swaps stay inside their pools");
        self.pools.insert(market.to_string(), r.pool_after);
        SwapEvent {
            platform: self.platform_of[market].clone(),
            market_id: market.to_string(),
            action: SwapAction {
                asset_in: asset_in.clone(),
                amount_in: amount,
                asset_out: r.output.asset,
                amount_out: r.output.amount,
            },
        }
    }

    fn quote(&self, market: &str, asset_in: &AssetId, amount: &BigUint) -> BigUint {
        let pool = &self.pools[market];
        let (rin, rout) = if &pool.asset_x == asset_in {
            (&pool.reserve_x, &pool.reserve_y)
        } else {
            (&pool.reserve_y, &pool.reserve_x)
        };
        constant_product_out(rin, rout, amount, pool.fee_bps)
    }

    fn push(&mut self, ctx: &mut BlockCtx, tx: Transaction, broadcast: bool) -> TxHash {
        let h = tx.hash;
        ctx.drafts.push(Draft { tx, broadcast });
        h
    }

    fn decoy(&mut self, detector: &str, kind: String, block: u64, txs: Vec<TxHash>) {
        self.truth.decoys.push(DecoyTruth {
            detector: detector.into(),
            kind,
            block,
            txs,
        });
    }

    // ---- sandwiches -------------------------------------------------------

    fn sandwich_market(&mut self) -> (String, AssetId) {
        let tok = AssetId::new(self.fresh("SWT"));
        let rx = coin(self.rng.random_range(500..5000));
        let ry = &rx * BigUint::from(self.rng.random_range(2u32..50));
        let m = self.new_pool("sw-", AssetId::native(), tok.clone(), rx, ry, "uniswap_v2");
        (m, tok)
    }

    /// Front-run input; with `divisor > 1` the input is nudged until the
    /// output is a multiple of `divisor`.
    fn front_input(&mut self, market: &str, divisor: u64) -> BigUint {
        let reserve = self.pools[market].reserve_x.clone();
        let mut amount = &reserve * BigUint::from(self.rng.random_range(5u32..30)) / 1000u32;
        if divisor > 1 {
            let d = BigUint::from(divisor);
            for _ in 0..400_000 {
                if (self.quote(market, &AssetId::native(), &amount) % &d).is_zero() {
                    break;
                }
                amount += 1u32;
            }
        }
        amount
    }

    fn scaled(out: &BigUint, num: u64, den: u64, round_up: bool) -> BigUint {
        let p = out * BigUint::from(num);
        let d = BigUint::from(den);
        if round_up {
            p.div_ceil(&d)
        } else {
            p / d
        }
    }

    fn victim_swap(&mut self, ctx: &mut BlockCtx, market: &str, gas_price: BigUint) -> TxHash {
        let reserve = self.pools[market].reserve_x.clone();
        let amount = &reserve * BigUint::from(self.rng.random_range(2u32..20)) / 1000u32;
        let ev = self.swap(ctx, market, &AssetId::native(), amount);
        let user = self.user();
        let router = self.router;
        let tx = self.tx(user, Some(router), gas_price, VICTIM_GAS, BigUint::default(), vec![0x38, 0xed, 0x17, 0x39], vec![DecodedEvent::Swap(ev)]);
        self.push(ctx, tx, true)
    }

    fn plant_sandwich(&mut self, ctx: &mut BlockCtx, ratio: (u64, u64), actor: Actor, n_victims: usize, private: bool) {
        let (market, tok) = self.sandwich_market();
        let native = AssetId::native();
        let divisor = ratio.1 / num_integer::gcd(ratio.0, ratio.1);
        let a1_in = self.front_input(&market, divisor);

        let victim_gp = self.gwei(5, 120);
        let ratios: [(u64, u64); 9] = [(105, 100), (110, 100), (115, 100), (121, 100), (125, 100), (133, 100), (140, 100), (150, 100), (95, 100)];
        let (rn, rd) = ratios[self.sandwich_gas_ratios % ratios.len()];
        self.sandwich_gas_ratios += 1;
        let deltas: [i64; 5] = [-2, 0, 3, 20, 150];
        let delta = deltas[self.rng.random_range(0..deltas.len())];
        let (front_gp, back_gp) = if private {
            (BigUint::default(), BigUint::default())
        } else {
            let f = &victim_gp * BigUint::from(rn) / BigUint::from(rd);
            let half = BigInt::from(GWEI / 2);
            let b = big(&victim_gp) - BigInt::from(delta) * BigInt::from(GWEI) - half;
            let b = if b < BigInt::from(GWEI) { BigInt::from(GWEI) } else { b };
            (f, b.to_biguint().expect("positive"))
        };

        let (e1, e2, c1, c2) = match actor {
            Actor::SameSender => {
                let e = self.address();
                (e, e, self.address(), self.address())
            }
            Actor::SameContract => {
                let c = self.address();
                (self.address(), self.address(), c, c)
            }
        };
        let ev1 = self.swap(ctx, &market, &native, a1_in.clone());
        let out1 = ev1.action.amount_out.clone();
        let front = self.tx(e1, Some(c1), front_gp, SANDWICH_GAS, BigUint::default(), vec![0x01], vec![DecodedEvent::Swap(ev1)]);
        let front = self.push(ctx, front, !private);
        let mut victims = Vec::new();
        for _ in 0..n_victims {
            let gp = victim_gp.clone();
            victims.push(self.victim_swap(ctx, &market, gp));
        }
        let a2_in = Self::scaled(&out1, ratio.0, ratio.1, ratio.0 < ratio.1);
        let ev2 = self.swap(ctx, &market, &tok, a2_in.clone());
        let out2 = ev2.action.amount_out.clone();
        let back = self.tx(e2, Some(c2), back_gp, SANDWICH_GAS, BigUint::default(), vec![0x02], vec![DecodedEvent::Swap(ev2)]);
        let back = self.push(ctx, back, !private);
        self.truth.sandwiches.push(SandwichTruth {
            block: ctx.number,
            front,
            victim: victims[0],
            back,
            additional_victims: victims[1..].to_vec(),
            market_id: market,
            perfect: a2_in == out1,
            h5_ratio: format!("{}/{}", ratio.0, ratio.1),
            profit: big(&out2) - big(&a1_in),
            intermediate_tx_count: 0,
            privately_relayed: private,
        });
    }

    fn sandwich_decoy(&mut self, ctx: &mut BlockCtx, kind: SandwichDecoy) {
        let (market, tok) = self.sandwich_market();
        let native = AssetId::native();
        let divisor = match kind {
            SandwichDecoy::Ratio(n, d) => d / num_integer::gcd(n, d),
            _ => 1,
        };
        let a1_in = self.front_input(&market, divisor);
        let e = self.address();
        let c = self.address();
        let gp = self.gwei(5, 100);
        let ev1 = self.swap(ctx, &market, &native, a1_in);
        let out1 = ev1.action.amount_out.clone();
        let t1 = self.tx(e, Some(c), gp.clone(), SANDWICH_GAS, BigUint::default(), vec![0x01], vec![DecodedEvent::Swap(ev1)]);
        let mut hashes = vec![self.push(ctx, t1, true)];
        if !matches!(kind, SandwichDecoy::NoVictim) {
            let h = self.victim_swap(ctx, &market, gp.clone());
            hashes.push(h);
        }
        let (sender2, to2, asset2, amount2) = match kind {
            SandwichDecoy::Ratio(n, d) => (e, c, tok.clone(), Self::scaled(&out1, n, d, n > d)),
            SandwichDecoy::DifferentActors => {
                let (s, t) = (self.address(), self.address());
                (s, t, tok.clone(), out1.clone())
            }
            SandwichDecoy::SameDirection => {
                let r = &self.pools[&market].reserve_x / 100u32;
                (e, c, native.clone(), r)
            }
            SandwichDecoy::NoVictim => (e, c, tok.clone(), out1.clone()),
        };
        let ev2 = self.swap(ctx, &market, &asset2, amount2);
        let t2 = self.tx(sender2, Some(to2), gp, SANDWICH_GAS, BigUint::default(), vec![0x02], vec![DecodedEvent::Swap(ev2)]);
        hashes.push(self.push(ctx, t2, true));
        let label = match kind {
            SandwichDecoy::Ratio(n, d) => format!("h5_ratio_{n}/{d}"),
            SandwichDecoy::DifferentActors => "h4_different_actors".into(),
            SandwichDecoy::SameDirection => "h3_same_direction".into(),
            SandwichDecoy::NoVictim => "no_victim".into(),
        };
        self.decoy("sandwich", label, ctx.number, hashes);
    }

    fn cross_block_head(&mut self, ctx: &mut BlockCtx, id: usize) {
        let (market, _) = self.sandwich_market();
        let a1_in = self.front_input(&market, 1);
        let e = self.address();
        let c = self.address();
        let gp = self.gwei(5, 100);
        let ev1 = self.swap(ctx, &market, &AssetId::native(), a1_in);
        let out1 = ev1.action.amount_out.clone();
        let t1 = self.tx(e, Some(c), gp.clone(), SANDWICH_GAS, BigUint::default(), vec![0x01], vec![DecodedEvent::Swap(ev1)]);
        let h1 = self.push(ctx, t1, true);
        let hv = self.victim_swap(ctx, &market, gp);
        self.cross_block.insert(id, (market, out1, e, c));
        self.decoy("sandwich", "h1_cross_block_head".into(), ctx.number, vec![h1, hv]);
    }

    fn cross_block_tail(&mut self, ctx: &mut BlockCtx, id: usize) {
        let (market, out1, e, c) = self.cross_block.remove(&id).expect("head precedes tail");
        let tok = self.pools[&market].asset_y.clone();
        let gp = self.gwei(5, 100);
        let ev2 = self.swap(ctx, &market, &tok, out1);
        let t2 = self.tx(e, Some(c), gp, SANDWICH_GAS, BigUint::default(), vec![0x02], vec![DecodedEvent::Swap(ev2)]);
        let h = self.push(ctx, t2, true);
        self.decoy("sandwich", "h1_cross_block_tail".into(), ctx.number, vec![h]);
    }

    // ---- arbitrage --------------------------------------------------------

    /// A loop NATIVE -> T1 -> ... -> NATIVE over `n` fresh markets whose last
    /// native reserve is inflated by `edge_bps`.
    fn arb_loop(&mut self, n: usize, platforms: usize, edge_bps: u64) -> (Vec<String>, Vec<AssetId>) {
        let mut assets = vec![AssetId::native()];
        for _ in 1..n {
            assets.push(AssetId::new(self.fresh("ART")));
        }
        assets.push(AssetId::native());
        let mut names: Vec<&'static str> = ARB_PLATFORMS.to_vec();
        names.shuffle(&mut self.rng);
        let chosen: Vec<&str> = names[..platforms].to_vec();
        let mut markets = Vec::new();
        for i in 0..n {
            let r = coin(self.rng.random_range(800..3000));
            let (rx, mut ry) = (r.clone(), r);
            if i == n - 1 {
                ry = &ry * BigUint::from(10_000 + edge_bps) / 10_000u32;
            }
            let platform = if i < platforms {
                chosen[i]
            } else {
                chosen[self.rng.random_range(0..platforms)]
            };
            markets.push(self.new_pool("arb-", assets[i].clone(), assets[i + 1].clone(), rx, ry, platform));
        }
        (markets, assets)
    }

    fn run_loop(&mut self, ctx: &mut BlockCtx, markets: &[String], assets: &[AssetId], input: BigUint) -> Vec<SwapEvent> {
        let mut amount = input;
        let mut events = Vec::new();
        for (i, m) in markets.iter().enumerate() {
            let ev = self.swap(ctx, m, &assets[i], amount);
            amount = ev.action.amount_out.clone();
            events.push(ev);
        }
        events
    }

    fn loop_quote(&self, markets: &[String], assets: &[AssetId], input: &BigUint) -> BigUint {
        let mut local: BTreeMap<&str, PoolState> = BTreeMap::new();
        let mut amount = input.clone();
        for (i, m) in markets.iter().enumerate() {
            let pool = local.get(m.as_str()).cloned().unwrap_or_else(|| self.pools[m].clone());
            let r = amm_swap_out(&pool, &AssetAmount::new(assets[i].clone(), amount)).expect("loop pool");
            amount = r.output.amount;
            local.insert(m.as_str(), r.pool_after);
        }
        amount
    }

    fn bot_tx(&mut self, ctx: &mut BlockCtx, events: Vec<SwapEvent>, private: bool) -> TxHash {
        let (bot, contract) = (self.address(), self.address());
        let gp = if private { BigUint::default() } else { self.gwei(20, 300) };
        let gas = ARB_BASE_GAS + ARB_GAS_PER_SWAP * events.len() as u64;
        let tx = self.tx(bot, Some(contract), gp, gas, BigUint::default(), vec![0xa5], events.into_iter().map(DecodedEvent::Swap).collect());
        self.push(ctx, tx, !private)
    }

    fn plant_arbitrage(&mut self, ctx: &mut BlockCtx, n: usize, platforms: usize, network_state: bool, private: bool) {
        let edge = if network_state { 0 } else { 500 + 150 * n as u64 };
        let (markets, assets) = self.arb_loop(n, platforms, edge);
        let mut input = &self.pools[&markets[0]].reserve_x / 500u32;
        if network_state {
            let m0 = markets[0].clone();
            let sell = &self.pools[&m0].reserve_y * BigUint::from(self.rng.random_range(15u32..30)) / 100u32;
            let ev = self.swap(ctx, &m0, &assets[1], sell);
            let user = self.user();
            let router = self.router;
            let gp = self.gwei(5, 100);
            let t = self.tx(user, Some(router), gp, NOISE_SWAP_GAS, BigUint::default(), vec![0x38], vec![DecodedEvent::Swap(ev)]);
            self.push(ctx, t, true);
            input = &self.pools[&m0].reserve_x / 50u32;
        }
        while self.loop_quote(&markets, &assets, &input) <= input {
            input /= 2u32;
            assert!(!input.is_zero(), "planted loop must be profitable");
        }
        let events = self.run_loop(ctx, &markets, &assets, input.clone());
        let revenue = big(&events[n - 1].action.amount_out) - big(&input);
        let tx = self.bot_tx(ctx, events, private);
        self.truth.arbitrages.push(ArbitrageTruth {
            block: ctx.number,
            tx,
            n_markets: n,
            n_platforms: platforms,
            revenue,
            state: if network_state {
                StateClass::NetworkState
            } else {
                StateClass::BlockState
            },
        });
    }

    fn arbitrage_decoy(&mut self, ctx: &mut BlockCtx, kind: &'static str) {
        let events = match kind {
            "broken_chain" => {
                let (ma, aa) = self.arb_loop(2, 1, 800);
                let (mb, ab) = self.arb_loop(2, 1, 800);
                let input = &self.pools[&ma[0]].reserve_x / 500u32;
                let e1 = self.swap(ctx, &ma[0], &aa[0], input.clone());
                let e2_in = &self.pools[&mb[1]].reserve_x / 500u32;
                let e2 = self.swap(ctx, &mb[1], &ab[1], e2_in);
                vec![e1, e2]
            }
            "overspent_link" => {
                let (m, a) = self.arb_loop(2, 2, 800);
                let input = &self.pools[&m[0]].reserve_x / 500u32;
                let e1 = self.swap(ctx, &m[0], &a[0], input);
                let more = &e1.action.amount_out + BigUint::from(self.rng.random_range(1u32..1000));
                let e2 = self.swap(ctx, &m[1], &a[1], more);
                vec![e1, e2]
            }
            _ => {
                let n = self.rng.random_range(2..=3);
                let (m, a) = self.arb_loop(n, 1, 0);
                let input = &self.pools[&m[0]].reserve_x / 500u32;
                self.run_loop(ctx, &m, &a, input)
            }
        };
        let h = self.bot_tx(ctx, events, false);
        self.decoy("arbitrage", kind.into(), ctx.number, vec![h]);
    }

    // ---- liquidations -----------------------------------------------------

    fn plant_liquidation(&mut self, ctx: &mut BlockCtx, kind: LiqKind, platform: &str, private: bool) {
        let asset = AssetId::new(self.fresh("COL"));
        let borrower = self.address();
        let thresholds = [(2i64, 3i64), (3, 4), (4, 5), (17, 20)];
        let (boundary, front) = match kind {
            LiqKind::Front => (false, true),
            LiqKind::FrontBoundary => (true, true),
            LiqKind::BackBoundary => (true, false),
            LiqKind::BackSeparate | LiqKind::BackInternal => (false, false),
        };
        let (price, t, collateral, debt) = if boundary {
            let m = self.rng.random_range(5u64..50);
            let coll = if front { coin(3 * m) - 1u32 } else { coin(3 * m) };
            (Price::one(), Price::new(2.into(), 3.into()), coll, coin(2 * m))
        } else {
            let (tn, td) = thresholds[self.rng.random_range(0..thresholds.len())];
            let t = Price::new(tn.into(), td.into());
            let price = Price::new(self.rng.random_range(200i64..4000).into(), 1000.into());
            let debt = coin(self.rng.random_range(10..200));
            let h = if front {
                Price::new(self.rng.random_range(80i64..=99).into(), 100.into())
            } else {
                Price::new(self.rng.random_range(101i64..=160).into(), 100.into())
            };
            // collateral = debt * h / (price * t), rounded so the health stays on its side
            let exact = Price::from_integer(big(&debt)) * &h / (&price * &t);
            let c = if front { exact.floor() } else { exact.ceil() };
            (price, t, c.to_integer().to_biguint().expect("positive"), debt)
        };
        let position = BorrowPosition {
            platform: platform.into(),
            borrower,
            collateral: AssetAmount::new(asset.clone(), collateral.clone()),
            debt: AssetAmount::native(debt.clone()),
            liquidation_threshold: t.clone(),
        };
        let health_before = Price::from_integer(big(&collateral)) * &price * &t / Price::from_integer(big(&debt));
        ctx.prices.insert(asset.clone(), price.clone());
        ctx.positions.push(position);

        let current = if front {
            price.clone()
        } else {
            &price * Price::new(85.into(), 100.into()) / &health_before
        };
        let oracle_event = DecodedEvent::OracleUpdate(OracleUpdateEvent {
            asset: asset.clone(),
            price_native: current.clone(),
        });
        let mut events = Vec::new();
        let internal = matches!(kind, LiqKind::BackInternal);
        if internal {
            events.push(oracle_event);
        } else if !front {
            let (o, oc) = self.oracle;
            let gp = self.gwei(5, 100);
            let t = self.tx(o, Some(oc), gp, ORACLE_GAS, BigUint::default(), vec![0x50], vec![oracle_event]);
            self.push(ctx, t, true);
        }
        let spread = match platform {
            "compound" => Price::new(108.into(), 100.into()),
            "dydx" => Price::new(105.into(), 100.into()),
            "aave_v1" => Price::new(110.into(), 100.into()),
            _ => Price::new(105.into(), 100.into()),
        };
        let repaid = &debt / 2u32;
        let received = (Price::from_integer(big(&repaid)) * &spread / &current)
            .floor()
            .to_integer()
            .to_biguint()
            .expect("positive");
        let liquidator = self.liquidators[self.rng.random_range(0..self.liquidators.len())];
        events.push(DecodedEvent::Liquidation(LiquidationEvent {
            platform: platform.into(),
            borrower,
            liquidator,
            collateral: AssetAmount::new(asset, received.clone()),
            debt_repaid: AssetAmount::native(repaid.clone()),
        }));
        let gp = if private { BigUint::default() } else { self.gwei(10, 400) };
        let gas_fee = &gp * BigUint::from(LIQUIDATION_GAS);
        let contract = self.address();
        let tx = self.tx(liquidator, Some(contract), gp, LIQUIDATION_GAS, BigUint::default(), vec![0x1d], events);
        let hash = self.push(ctx, tx, !private);
        let value = (big(&received) * current.numer()).div_floor(current.denom());
        self.truth.liquidations.push(LiquidationTruth {
            block: ctx.number,
            tx: hash,
            platform: platform.into(),
            borrower,
            liquidator,
            strategy: if front {
                LiquidationStrategy::FrontRun
            } else {
                LiquidationStrategy::BackRun
            },
            internal_backrun: internal,
            health_before,
            profit_native: value - big(&repaid) - big(&gas_fee),
        });
    }

    // ---- replay -----------------------------------------------------------

    fn plant_replay(&mut self, ctx: &mut BlockCtx, kind: ReplayKind, ordinal: usize) {
        let native = AssetId::native();
        let victim = self.address();
        let contract = self.address();
        let gp = if ordinal % 5 == 4 { BigUint::default() } else { self.gwei(1, 100) };
        let gas_used = self.rng.random_range(60_000u64..150_000);
        let replay_gas_fee = (&gp + 1u32) * BigUint::from(gas_used);
        let capital = [0u64, 0, 5, 50, 500];
        let value = match kind {
            ReplayKind::SenderToken | ReplayKind::SenderSwap => BigUint::default(),
            _ => coin(capital[(ordinal / 7) % capital.len()]),
        };
        let revenue = milli(self.rng.random_range(50..3000));

        let mut words: Vec<[u8; 32]> = (0..3)
            .map(|_| {
                let mut w = [0u8; 32];
                self.rng.fill(&mut w[..]);
                w
            })
            .collect();
        let put_address = |w: &mut [u8; 32], a: &Address| {
            w[..12].fill(0);
            w[12..].copy_from_slice(a.as_bytes());
        };
        let other = self.address();
        let world = ctx.world.get_or_insert_with(ToyWorldState::default);
        world.native.insert(victim, &value + coin(1000));
        let mut profit = BigInt::zero();
        let (pattern, payout, class) = match kind {
            ReplayKind::SenderFixed => {
                if ordinal.is_multiple_of(2) {
                    put_address(&mut words[1], &victim);
                }
                world.native.insert(contract, &value + &revenue);
                profit = big(&revenue) - big(&replay_gas_fee);
                (
                    ContractPattern::TransferRevenueToSender,
                    Payout::Fixed { amount: &value + &revenue },
                    crate::replay::PatternClass::SenderBenefits,
                )
            }
            ReplayKind::SenderToken => {
                let tok = AssetId::new(format!("RPT{ordinal}"));
                let reserve = coin(self.rng.random_range(100..1000));
                let pool = PoolState {
                    market_id: format!("rp-{ordinal}"),
                    asset_x: tok.clone(),
                    asset_y: native.clone(),
                    reserve_x: reserve.clone(),
                    reserve_y: reserve.clone(),
                    fee_bps: DEFAULT_FEE_BPS,
                };
                let conv = constant_product_out(&reserve, &reserve, &revenue, DEFAULT_FEE_BPS);
                world.pools.insert(pool.market_id.clone(), pool);
                world.tokens.insert((tok.clone(), contract), revenue.clone());
                profit = big(&conv)
                    - big(&((&gp + 1u32) * BigUint::from(CONVERSION_GAS)))
                    - big(&replay_gas_fee);
                (
                    ContractPattern::TransferRevenueToSender,
                    Payout::Program {
                        steps: vec![PayoutStep::PayToken { asset: tok, amount: revenue.clone() }],
                    },
                    crate::replay::PatternClass::SenderBenefits,
                )
            }
            ReplayKind::SenderSwap => {
                let tok = AssetId::new(format!("RPS{ordinal}"));
                let reserve = coin(self.rng.random_range(100..1000));
                let market = format!("rps-{ordinal}");
                let pool = PoolState {
                    market_id: market.clone(),
                    asset_x: tok.clone(),
                    asset_y: native.clone(),
                    reserve_x: reserve.clone(),
                    reserve_y: reserve.clone(),
                    fee_bps: DEFAULT_FEE_BPS,
                };
                let swap_out = constant_product_out(&reserve, &reserve, &revenue, DEFAULT_FEE_BPS);
                let float = milli(10);
                world.pools.insert(market.clone(), pool);
                world.tokens.insert((tok.clone(), contract), revenue.clone());
                world.native.insert(contract, float.clone());
                profit = big(&float) + big(&swap_out) - big(&replay_gas_fee);
                (
                    ContractPattern::TransferRevenueToSender,
                    Payout::Program {
                        steps: vec![
                            PayoutStep::Swap { market_id: market, asset_in: tok, amount_in: revenue.clone() },
                            PayoutStep::PayTokenBalance { asset: native.clone() },
                        ],
                    },
                    crate::replay::PatternClass::SenderBenefits,
                )
            }
            ReplayKind::BeneficiaryOwn | ReplayKind::BeneficiaryOther => {
                let idx = (ordinal % 3) as u32;
                let own = matches!(kind, ReplayKind::BeneficiaryOwn);
                put_address(&mut words[idx as usize], if own { &victim } else { &other });
                world.native.insert(contract, &value + &revenue);
                let class = if own {
                    profit = big(&revenue) - big(&replay_gas_fee);
                    crate::replay::PatternClass::ControllableInput
                } else {
                    profit = -big(&value) - big(&replay_gas_fee);
                    crate::replay::PatternClass::NotReplayable
                };
                (
                    ContractPattern::SpecifyBeneficiary { beneficiary_word_index: idx },
                    Payout::Fixed { amount: &value + &revenue },
                    class,
                )
            }
            ReplayKind::Authentication => {
                world.native.insert(contract, &value + &revenue);
                put_address(&mut words[0], &victim);
                profit -= big(&replay_gas_fee);
                (
                    ContractPattern::Authentication { owner: victim },
                    Payout::Fixed { amount: &value + &revenue },
                    crate::replay::PatternClass::NotReplayable,
                )
            }
            ReplayKind::MoveBeneficiary => {
                world.native.insert(contract, &value + &revenue);
                put_address(&mut words[0], &victim);
                profit = -big(&value) - big(&replay_gas_fee);
                (
                    ContractPattern::MoveBeneficiary { stored_beneficiary: victim },
                    Payout::Fixed { amount: &value + &revenue },
                    crate::replay::PatternClass::NotReplayable,
                )
            }
        };
        world.contracts.insert(
            contract,
            ContractSpec {
                pattern,
                payout,
                gas_used,
            },
        );
        let mut input = vec![0u8; SELECTOR_BYTES];
        self.rng.fill(&mut input[..]);
        for w in &words {
            input.extend_from_slice(w);
        }
        debug_assert_eq!(input.len(), SELECTOR_BYTES + 3 * WORD_BYTES);
        let broadcast = !gp.is_zero();
        let tx = self.tx(victim, Some(contract), gp.clone(), gas_used, value.clone(), input, vec![]);
        let hash = self.push(ctx, tx, broadcast);
        self.truth.replays.push(ReplayTruth {
            block: ctx.number,
            victim: hash,
            contract,
            kind,
            expected_class: class,
            expected_profit: profit,
            miner_only: gp.is_zero(),
            value,
        });
    }

    // ---- noise and private transactions -------------------------------------

    fn noise(&mut self, ctx: &mut BlockCtx) -> Draft {
        let user = self.user();
        if self.rng.random_bool(self.spec.noise_swap_share.clamp(0.0, 1.0)) {
            let k = self.rng.random_range(0..NOISE_MARKETS);
            let market = format!("noise-{k}");
            let buy = *ctx.noise_dirs.entry(k).or_insert_with(|| self.rng.random_bool(0.5));
            let pool = self.pools[&market].clone();
            let (asset, reserve) = if buy {
                (pool.asset_x.clone(), pool.reserve_x.clone())
            } else {
                (pool.asset_y.clone(), pool.reserve_y.clone())
            };
            let amount = &reserve * BigUint::from(self.rng.random_range(1u32..20)) / 100_000u32;
            let ev = self.swap(ctx, &market, &asset, amount);
            let gp = self.gwei(1, 150);
            let router = self.router;
            Draft {
                tx: self.tx(user, Some(router), gp, NOISE_SWAP_GAS, BigUint::default(), vec![0x38, 0xed], vec![DecodedEvent::Swap(ev)]),
                broadcast: true,
            }
        } else {
            let to = self.user();
            let gp = self.gwei(1, 150);
            let value = milli(self.rng.random_range(1..5000));
            Draft {
                tx: self.tx(user, Some(to), gp, TRANSFER_GAS, value, vec![], vec![]),
                broadcast: true,
            }
        }
    }

    fn private_tx(&mut self, ctx: &mut BlockCtx, zero_gas: bool) {
        let (from, to) = (self.user(), self.user());
        let gp = if zero_gas { BigUint::default() } else { self.gwei(1, 100) };
        let value = milli(self.rng.random_range(1..100));
        let t = self.tx(from, Some(to), gp, TRANSFER_GAS, value, vec![], vec![]);
        self.push(ctx, t, false);
    }
}

fn validate_spec(spec: &FixtureSpec) -> Result<(), SpecError> {
    if spec.n_blocks == 0 {
        return Err(SpecError::Invalid("n_blocks must be positive".into()));
    }
    if spec.gas_limit < 2_000_000 {
        return Err(SpecError::Invalid("gas_limit below 2,000,000".into()));
    }
    let [lo, hi] = spec.clogging_length;
    if lo < 5 || hi < lo {
        return Err(SpecError::Invalid(format!(
            "clogging_length [{lo}, {hi}] must satisfy 5 <= lo <= hi"
        )));
    }
    for (name, v) in [
        ("noise_per_block", spec.noise_per_block),
        ("noise_swap_share", spec.noise_swap_share),
        ("private_share", spec.private_share),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(SpecError::Invalid(format!("{name} must be a non-negative number")));
        }
    }
    if spec.noise_swap_share > 1.0 || spec.private_share > 1.0 {
        return Err(SpecError::Invalid("shares must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Builds a trace, its ground truth and a mempool log from `spec` alone.
pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture, SpecError> {
    validate_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let router = Address(rng.random());
    let users: Vec<Address> = (0..USER_POOL).map(|_| Address(rng.random())).collect();
    let liquidators: Vec<Address> = (0..LIQUIDATOR_POOL).map(|_| Address(rng.random())).collect();
    let oracle = (Address(rng.random()), Address(rng.random()));
    let adversary = Address(rng.random());
    let mut g = Gen {
        rng,
        spec: spec.clone(),
        pools: BTreeMap::new(),
        platform_of: BTreeMap::new(),
        counter: 0,
        router,
        users,
        liquidators,
        oracle,
        truth: GroundTruth {
            adversary,
            ..Default::default()
        },
        cross_block: BTreeMap::new(),
        sandwich_gas_ratios: 0,
    };
    for k in 0..NOISE_MARKETS {
        let tok = AssetId::new(format!("NZ{k}"));
        let r = coin(g.rng.random_range(5_000..50_000));
        let id = format!("noise-{k}");
        g.pools.insert(
            id.clone(),
            PoolState {
                market_id: id.clone(),
                asset_x: AssetId::native(),
                asset_y: tok,
                reserve_x: r.clone(),
                reserve_y: r * 3u32,
                fee_bps: DEFAULT_FEE_BPS,
            },
        );
        g.platform_of.insert(id, "uniswap_v2".into());
    }

    let n = spec.n_blocks as usize;
    let mut plans: Vec<BlockPlan> = (0..n).map(|_| BlockPlan::default()).collect();
    plan_clogging(&mut g, &mut plans)?;

    let d = spec.decoys_per_kind as usize;
    let mut units: Vec<Unit> = Vec::new();
    let h5_ratios = [(1, 1), (9, 10), (11, 10), (0, 0)];
    for i in 0..spec.sandwiches as usize {
        let ratio = match h5_ratios[i % h5_ratios.len()] {
            (0, 0) => (g.rng.random_range(92..=108), 100),
            r => r,
        };
        units.push(Unit::Sandwich {
            ratio,
            actor: if i % 2 == 0 { Actor::SameSender } else { Actor::SameContract },
            victims: if i % 5 == 3 { 2 } else { 1 },
            private: g.rng.random_bool(spec.private_share),
        });
    }
    for _ in 0..d {
        for kind in [
            SandwichDecoy::Ratio(11001, 10000),
            SandwichDecoy::Ratio(8999, 10000),
            SandwichDecoy::Ratio(111, 100),
            SandwichDecoy::Ratio(89, 100),
            SandwichDecoy::Ratio(115, 100),
            SandwichDecoy::DifferentActors,
            SandwichDecoy::SameDirection,
            SandwichDecoy::NoVictim,
        ] {
            units.push(Unit::SandwichDecoy(kind));
        }
    }
    for i in 0..spec.arbitrages as usize {
        let markets = 2 + i % 5;
        let platforms = 1 + (i / 5) % markets.min(4);
        units.push(Unit::Arbitrage {
            markets,
            platforms,
            network_state: i % 2 == 1,
            private: g.rng.random_bool(spec.private_share),
        });
    }
    for _ in 0..d {
        for kind in ["broken_chain", "overspent_link", "unprofitable"] {
            units.push(Unit::ArbitrageDecoy(kind));
        }
    }
    let liq_kinds = [
        LiqKind::Front,
        LiqKind::BackSeparate,
        LiqKind::Front,
        LiqKind::BackInternal,
        LiqKind::FrontBoundary,
        LiqKind::BackBoundary,
    ];
    for i in 0..spec.liquidations as usize {
        units.push(Unit::Liquidation {
            kind: liq_kinds[i % liq_kinds.len()],
            platform: LIQUIDATION_PLATFORMS[(i / liq_kinds.len() + i) % LIQUIDATION_PLATFORMS.len()],
            private: g.rng.random_bool(spec.private_share),
        });
    }
    for i in 0..spec.replayables as usize {
        units.push(Unit::Replay(ReplayKind::ALL[i % ReplayKind::ALL.len()], i));
    }
    for i in 0..spec.private_txs {
        units.push(Unit::Private(i % 2 == 0));
    }

    for unit in units {
        place(&mut g, &mut plans, unit, None)?;
    }
    for id in 0..d {
        place_cross_block(&mut g, &mut plans, id)?;
    }
    for plan in plans.iter_mut() {
        let mut k = spec.noise_per_block.floor() as usize;
        if g.rng.random_bool(spec.noise_per_block.fract()) {
            k += 1;
        }
        let room = ((spec.gas_limit - plan.used) / NOISE_SWAP_GAS) as usize;
        plan.noise = k.min(room);
        plan.used += plan.noise as u64 * NOISE_SWAP_GAS;
    }

    let mut blocks = Vec::with_capacity(n);
    let mut broadcast_map: Vec<(TxHash, u64, bool)> = Vec::new();
    for (i, plan) in plans.into_iter().enumerate() {
        let number = spec.first_block + i as u64;
        let (block, flags) = materialize(&mut g, number, plan);
        for (h, b) in flags {
            broadcast_map.push((h, number, b));
        }
        blocks.push(block);
    }

    let trace = Trace {
        metadata: TraceMetadata {
            source: "synthetic".into(),
            chain_id: "toy-1".into(),
            generator_seed: Some(spec.seed),
        },
        blocks,
    };

    let mut mempool = MempoolLog::default();
    for (h, number, broadcast) in &broadcast_map {
        if *broadcast {
            let t = number * 12_000 + g.rng.random_range(0..12_000);
            mempool.observe(*h, t);
        } else {
            g.truth.private_not_broadcast.insert(*h);
        }
    }
    for tx in trace.blocks.iter().flat_map(|b| &b.transactions) {
        if tx.is_zero_gas_price() {
            g.truth.private_zero_gas.insert(tx.hash);
        }
    }
    fill_positions(&trace, &mut g.truth);
    g.truth.clogging.sort();
    self_check(&trace, &g.truth)?;
    Ok(Fixture {
        trace,
        truth: g.truth,
        mempool,
    })
}

fn plan_clogging(g: &mut Gen, plans: &mut [BlockPlan]) -> Result<(), SpecError> {
    #[derive(Clone, Copy)]
    enum Clog {
        Planted(u64, bool),
        Short,
        Exact(u64),
    }
    let spec = g.spec.clone();
    let mut items = Vec::new();
    for i in 0..spec.clogging_periods {
        let len = g.rng.random_range(spec.clogging_length[0]..=spec.clogging_length[1]);
        items.push(Clog::Planted(len, i % 4 == 1));
    }
    for _ in 0..spec.decoys_per_kind {
        items.push(Clog::Short);
        items.push(Clog::Exact(g.rng.random_range(5..=7)));
    }
    let len_of = |c: &Clog| match c {
        Clog::Planted(l, _) | Clog::Exact(l) => *l,
        Clog::Short => 4,
    };
    let needed: u64 = items.iter().map(len_of).sum();
    if needed > spec.n_blocks {
        return Err(SpecError::ClogTooLong {
            needed,
            available: spec.n_blocks,
        });
    }
    items.shuffle(&mut g.rng);
    let mut free = spec.n_blocks - needed;
    let mut cursor = 0u64;
    let k = items.len() as u64;
    for (j, item) in items.into_iter().enumerate() {
        let remaining = k - j as u64;
        let gap = if free == 0 {
            0
        } else {
            g.rng.random_range(0..=free.min(2 * free / remaining.max(1) + 1))
        };
        free -= gap;
        cursor += gap;
        let (sender, contract) = (g.address(), g.address());
        let len = len_of(&item);
        let boundary_block = g.rng.random_range(0..len);
        for b in 0..len {
            let limit = spec.gas_limit;
            let gas = match item {
                Clog::Planted(_, true) if b == boundary_block => limit / 10 * 8 + 1,
                Clog::Planted(..) | Clog::Short => limit / 100 * g.rng.random_range(81..=88),
                Clog::Exact(_) => limit / 10 * 8,
            };
            let plan = &mut plans[(cursor + b) as usize];
            plan.clog = Some((sender, contract, gas));
            plan.used += gas;
        }
        let first = spec.first_block + cursor;
        let last = first + len - 1;
        match item {
            Clog::Planted(..) => {
                for a in [sender, contract] {
                    g.truth.clogging.push(CloggingTruth {
                        address: a,
                        start_block: first,
                        end_block: last,
                    });
                }
            }
            Clog::Short => g.decoy("clogging", "four_blocks".into(), first, vec![]),
            Clog::Exact(_) => g.decoy("clogging", "exactly_80_percent".into(), first, vec![]),
        }
        cursor += len;
    }
    Ok(())
}

fn place(g: &mut Gen, plans: &mut [BlockPlan], unit: Unit, at: Option<usize>) -> Result<usize, SpecError> {
    let need = unit.gas_budget();
    let limit = g.spec.gas_limit;
    let pick = |g: &mut Gen, plans: &[BlockPlan]| -> Option<usize> {
        for _ in 0..2_000 {
            let b = g.rng.random_range(0..plans.len());
            if plans[b].used + need <= limit {
                return Some(b);
            }
        }
        plans.iter().position(|p| p.used + need <= limit)
    };
    let b = match at {
        Some(b) if plans[b].used + need <= limit => b,
        Some(_) => return Err(SpecError::Capacity(need)),
        None => pick(g, plans).ok_or(SpecError::Capacity(need))?,
    };
    plans[b].used += need;
    plans[b].units.push(unit);
    Ok(b)
}

fn place_cross_block(g: &mut Gen, plans: &mut [BlockPlan], id: usize) -> Result<(), SpecError> {
    if plans.len() < 2 {
        return Err(SpecError::Invalid("cross-block decoys need two blocks".into()));
    }
    let head = Unit::CrossBlockHead(id);
    let tail = Unit::CrossBlockTail(id);
    let limit = g.spec.gas_limit;
    for _ in 0..2_000 {
        let b = g.rng.random_range(0..plans.len() - 1);
        if plans[b].used + head.gas_budget() <= limit && plans[b + 1].used + tail.gas_budget() <= limit {
            place(g, plans, head, Some(b))?;
            place(g, plans, tail, Some(b + 1))?;
            return Ok(());
        }
    }
    Err(SpecError::Capacity(head.gas_budget()))
}

fn materialize(g: &mut Gen, number: u64, mut plan: BlockPlan) -> (Block, Vec<(TxHash, bool)>) {
    let mut ctx = BlockCtx {
        number,
        snapshots: BTreeMap::new(),
        prices: BTreeMap::new(),
        positions: Vec::new(),
        world: None,
        drafts: Vec::new(),
        noise_dirs: BTreeMap::new(),
    };
    plan.units.shuffle(&mut g.rng);
    // tails first so that their market snapshot is taken before anything else in the block
    plan.units.sort_by_key(|u| !matches!(u, Unit::CrossBlockTail(_)));
    for unit in plan.units {
        match unit {
            Unit::Sandwich { ratio, actor, victims, private } => {
                g.plant_sandwich(&mut ctx, ratio, actor, victims, private)
            }
            Unit::SandwichDecoy(k) => g.sandwich_decoy(&mut ctx, k),
            Unit::CrossBlockHead(id) => g.cross_block_head(&mut ctx, id),
            Unit::CrossBlockTail(id) => g.cross_block_tail(&mut ctx, id),
            Unit::Arbitrage { markets, platforms, network_state, private } => {
                g.plant_arbitrage(&mut ctx, markets, platforms, network_state, private)
            }
            Unit::ArbitrageDecoy(k) => g.arbitrage_decoy(&mut ctx, k),
            Unit::Liquidation { kind, platform, private } => {
                g.plant_liquidation(&mut ctx, kind, platform, private)
            }
            Unit::Replay(kind, ordinal) => g.plant_replay(&mut ctx, kind, ordinal),
            Unit::Private(zero) => g.private_tx(&mut ctx, zero),
        }
    }
    let mut extra: Vec<Draft> = (0..plan.noise).map(|_| g.noise(&mut ctx)).collect();
    if let Some((sender, contract, gas)) = plan.clog {
        let parts = g.rng.random_range(2u64..=5);
        let mut left = gas;
        for p in 0..parts {
            let share = if p + 1 == parts { left } else { gas / parts };
            left -= share;
            let gp = g.gwei(50, 500);
            extra.push(Draft {
                tx: g.tx(sender, Some(contract), gp, share, BigUint::default(), vec![0xc1], vec![]),
                broadcast: true,
            });
        }
    }
    let mut drafts = ctx.drafts;
    for d in extra {
        let pos = g.rng.random_range(0..=drafts.len());
        drafts.insert(pos, d);
    }
    let mut flags = Vec::with_capacity(drafts.len());
    let mut txs = Vec::with_capacity(drafts.len());
    let mut fees = BigUint::default();
    for (i, d) in drafts.into_iter().enumerate() {
        let mut tx = d.tx;
        tx.index = i as u32;
        fees += &tx.gas_price * BigUint::from(tx.gas_used);
        flags.push((tx.hash, d.broadcast));
        txs.push(tx);
    }
    let block = Block {
        number,
        gas_limit: g.spec.gas_limit,
        block_reward_plus_fees: coin(2) + fees,
        prices: ctx.prices,
        pool_states: ctx.snapshots.into_values().collect(),
        transactions: txs,
        positions: ctx.positions,
        world_state: ctx.world,
    };
    (block, flags)
}

fn fill_positions(trace: &Trace, truth: &mut GroundTruth) {
    let mut index: BTreeMap<TxHash, u32> = BTreeMap::new();
    for tx in trace.blocks.iter().flat_map(|b| &b.transactions) {
        index.insert(tx.hash, tx.index);
    }
    for s in &mut truth.sandwiches {
        let (f, b) = (index[&s.front], index[&s.back]);
        s.intermediate_tx_count = b - f - 1 - 1 - s.additional_victims.len() as u32;
    }
}

/// Confirms that no decoy transaction is picked up by the detectors and that
/// every clogging decoy stays unreported.
fn self_check(trace: &Trace, truth: &GroundTruth) -> Result<(), SpecError> {
    let decoy_txs: BTreeSet<TxHash> = truth
        .decoys
        .iter()
        .flat_map(|d| d.txs.iter().copied())
        .collect();
    for block in &trace.blocks {
        for s in detect_sandwiches(block) {
            for h in [s.front.hash, s.victim.hash, s.back.hash] {
                if decoy_txs.contains(&h) {
                    return Err(SpecError::SelfCheck(format!("sandwich decoy {h} detected")));
                }
            }
        }
        for c in detect_arbitrages(block) {
            if decoy_txs.contains(&c.tx.hash) {
                return Err(SpecError::SelfCheck(format!("arbitrage decoy {} detected", c.tx.hash)));
            }
        }
    }
    let decoy_starts: BTreeSet<u64> = truth
        .decoys
        .iter()
        .filter(|d| d.detector == "clogging")
        .map(|d| d.block)
        .collect();
    for p in detect_clogging_periods(trace) {
        if decoy_starts.contains(&p.start_block) {
            return Err(SpecError::SelfCheck(format!(
                "clogging decoy starting at {} detected",
                p.start_block
            )));
        }
    }
    Ok(())
}
