//! Full-trace scans aggregated into a reproducible line-delimited report.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::Signed;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arbitrage::{
    arbitrage_scope_table, classify_arbitrage_state, detect_arbitrages, verify_arbitrage,
    ArbitrageCycle, ScopeTable, StateClass,
};
use crate::chain::codec::dec;
use crate::chain::{value_in_native, AssetAmount, AssetId, PoolState};
use crate::clogging::{clogging_duration_table, detect_clogging_periods, CloggingPeriod, DurationRow};
use crate::fork::{bev_multiplier_histogram, MultiplierSummary};
use crate::liquidation::{
    detect_liquidations, liquidator_profile, strategy_counts, verify_liquidation,
    LiquidationRecord, LiquidatorProfile, PlatformCounts,
};
use crate::sandwich::{
    backrun_gas_delta, detect_sandwiches, estimate_bid_rounds, sandwich_position_stats,
    verify_sandwich, PositionStats, SandwichInstance,
};
use crate::trace::Trace;

pub const REPORT_VERSION: &str = concat!("bevscope ", env!("CARGO_PKG_VERSION"));
pub const MULTIPLIER_THRESHOLDS: [u64; 6] = [1, 2, 4, 10, 100, 600];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Sandwich,
    Arbitrage,
    Liquidation,
    Clogging,
}

impl Detector {
    pub const ALL: [Detector; 4] = [
        Detector::Sandwich,
        Detector::Arbitrage,
        Detector::Liquidation,
        Detector::Clogging,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Sandwich => "sandwich",
            Detector::Arbitrage => "arbitrage",
            Detector::Liquidation => "liquidation",
            Detector::Clogging => "clogging",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown detector `{s}`; expected one of sandwich, arbitrage, liquidation, clogging"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DetectorSet(pub Vec<Detector>);

impl DetectorSet {
    pub fn all() -> Self {
        DetectorSet(Detector::ALL.to_vec())
    }

    pub fn only(list: &[Detector]) -> Self {
        let mut v = list.to_vec();
        v.sort();
        v.dedup();
        DetectorSet(v)
    }

    pub fn has(&self, d: Detector) -> bool {
        self.0.contains(&d)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub trace_checksum: String,
    #[serde(with = "crate::chain::codec::opt_dec")]
    pub seed: Option<u64>,
    pub flags: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    /// Gross sandwich profit per profit asset.
    #[serde(with = "crate::chain::codec::dec_map")]
    pub sandwich_profit: BTreeMap<AssetId, BigInt>,
    #[serde(with = "dec")]
    pub sandwich_gas_native: BigUint,
    /// Arbitrage revenue per loop asset.
    #[serde(with = "crate::chain::codec::dec_map")]
    pub arbitrage_revenue: BTreeMap<AssetId, BigInt>,
    #[serde(with = "dec")]
    pub arbitrage_gas_native: BigUint,
    #[serde(with = "dec")]
    pub liquidation_profit_native: BigInt,
    #[serde(with = "dec")]
    pub clogging_cost_native: BigUint,
    /// BEV valued in native units at block prices, summed over blocks.
    #[serde(with = "dec")]
    pub bev_native: BigUint,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PrivateCounts {
    pub sandwiches: u64,
    pub arbitrages: u64,
    pub liquidations: u64,
    pub zero_gas_price_txs: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Histograms {
    pub sandwich_positions: PositionStats,
    pub bid_rounds: BTreeMap<String, u64>,
    pub backrun_gas_delta: BTreeMap<String, u64>,
    pub arbitrage_state: BTreeMap<String, u64>,
    pub liquidator_profiles: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BevReport {
    pub metadata: ReportMetadata,
    pub sandwiches: Vec<SandwichInstance>,
    pub arbitrages: Vec<ArbitrageCycle>,
    pub liquidations: Vec<LiquidationRecord>,
    pub clogging: Vec<CloggingPeriod>,
    pub totals: Totals,
    pub private: PrivateCounts,
    pub scope: ScopeTable,
    pub liquidation_platforms: BTreeMap<String, PlatformCounts>,
    pub clogging_durations: Vec<DurationRow>,
    pub histograms: Histograms,
    pub multipliers: MultiplierSummary,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn trace_checksum(trace: &Trace) -> String {
    let mut h = Sha256::new();
    h.update(trace.to_text().as_bytes());
    hex::encode(h.finalize())
}

struct BlockFindings {
    sandwiches: Vec<SandwichInstance>,
    arbitrages: Vec<ArbitrageCycle>,
    liquidations: Vec<LiquidationRecord>,
    failures: Vec<String>,
}

fn scan_block(block: &crate::chain::Block, set: &DetectorSet) -> BlockFindings {
    let mut f = BlockFindings {
        sandwiches: Vec::new(),
        arbitrages: Vec::new(),
        liquidations: Vec::new(),
        failures: Vec::new(),
    };
    if set.has(Detector::Sandwich) {
        f.sandwiches = detect_sandwiches(block);
        for s in &f.sandwiches {
            if !verify_sandwich(block, s) {
                f.failures.push(format!("sandwich {} fails re-check", s.front.hash));
            }
        }
    }
    if set.has(Detector::Arbitrage) {
        f.arbitrages = detect_arbitrages(block);
        for c in &f.arbitrages {
            if !verify_arbitrage(block, c) {
                f.failures.push(format!("arbitrage {} fails re-check", c.tx.hash));
            }
        }
    }
    if set.has(Detector::Liquidation) {
        f.liquidations = detect_liquidations(block);
        for r in &f.liquidations {
            if !verify_liquidation(block, r) {
                f.failures.push(format!("liquidation {} fails re-check", r.tx.hash));
            }
        }
    }
    f
}

/// Valued BEV of one block: positive sandwich profits, arbitrage revenues and
/// liquidation profits, converted at block-start prices.
fn block_bev(
    block: &crate::chain::Block,
    sandwiches: &[SandwichInstance],
    arbitrages: &[ArbitrageCycle],
    liquidations: &[LiquidationRecord],
) -> BigUint {
    let mut sum = BigUint::default();
    let mut add = |asset: &AssetId, amount: &BigInt| {
        if amount.is_positive() {
            let a = AssetAmount::new(asset.clone(), amount.magnitude().clone());
            sum += value_in_native(&a, &block.prices).value;
        }
    };
    for s in sandwiches {
        add(&s.profit.asset, &s.profit.amount);
    }
    for c in arbitrages {
        add(&c.loop_asset, &c.revenue);
    }
    let native = AssetId::native();
    for r in liquidations {
        if let Some(p) = &r.profit_native {
            add(&native, p);
        }
    }
    sum
}

/// Runs the selected detectors over the trace and assembles the report.
/// Every instance is re-checked by an independent predicate; any mismatch is
/// returned as [`ReportError::Invariant`].
pub fn scan_trace(
    trace: &Trace,
    set: &DetectorSet,
    seed: Option<u64>,
    flags: BTreeMap<String, String>,
) -> Result<BevReport, ReportError> {
    let findings: Vec<BlockFindings> = trace
        .blocks
        .par_iter()
        .map(|b| scan_block(b, set))
        .collect();

    let mut sandwiches = Vec::new();
    let mut arbitrages = Vec::new();
    let mut liquidations = Vec::new();
    let mut failures = Vec::new();
    let mut bev_per_block: BTreeMap<u64, BigUint> = BTreeMap::new();
    let mut pools: BTreeMap<String, PoolState> = BTreeMap::new();

    for (block, mut f) in trace.blocks.iter().zip(findings) {
        for p in &block.pool_states {
            pools.insert(p.market_id.clone(), p.clone());
        }
        for c in &mut f.arbitrages {
            c.state_class = classify_arbitrage_state(c, &pools);
        }
        let bev = block_bev(block, &f.sandwiches, &f.arbitrages, &f.liquidations);
        if bev > BigUint::default() {
            bev_per_block.insert(block.number, bev);
        }
        sandwiches.append(&mut f.sandwiches);
        arbitrages.append(&mut f.arbitrages);
        liquidations.append(&mut f.liquidations);
        failures.append(&mut f.failures);
    }
    let clogging = if set.has(Detector::Clogging) {
        detect_clogging_periods(trace)
    } else {
        Vec::new()
    };

    if let Some(first) = failures.first() {
        return Err(ReportError::Invariant(format!(
            "{first} ({} failure(s) in total)",
            failures.len()
        )));
    }

    let mut totals = Totals::default();
    for s in &sandwiches {
        *totals.sandwich_profit.entry(s.profit.asset.clone()).or_default() += &s.profit.amount;
        totals.sandwich_gas_native += &s.gas_cost_native;
    }
    for c in &arbitrages {
        *totals.arbitrage_revenue.entry(c.loop_asset.clone()).or_default() += &c.revenue;
        totals.arbitrage_gas_native += &c.gas_cost_native;
    }
    for r in &liquidations {
        if let Some(p) = &r.profit_native {
            totals.liquidation_profit_native += p;
        }
    }
    for p in &clogging {
        totals.clogging_cost_native += &p.total_cost_native;
    }
    totals.bev_native = bev_per_block.values().sum();

    let private = PrivateCounts {
        sandwiches: sandwiches.iter().filter(|s| s.privately_relayed).count() as u64,
        arbitrages: arbitrages.iter().filter(|c| c.privately_relayed).count() as u64,
        liquidations: liquidations.iter().filter(|r| r.privately_relayed).count() as u64,
        zero_gas_price_txs: trace
            .blocks
            .iter()
            .flat_map(|b| &b.transactions)
            .filter(|t| t.is_zero_gas_price())
            .count() as u64,
    };

    let mut hist = Histograms {
        sandwich_positions: sandwich_position_stats(&sandwiches),
        ..Default::default()
    };
    for s in &sandwiches {
        let key = match estimate_bid_rounds(s) {
            Ok(e) => e.bucket.label().to_string(),
            Err(_) => "not_applicable".to_string(),
        };
        *hist.bid_rounds.entry(key).or_default() += 1;
        let key = match backrun_gas_delta(s) {
            Ok(b) => format!("{b:?}"),
            Err(_) => "not_applicable".to_string(),
        };
        *hist.backrun_gas_delta.entry(key).or_default() += 1;
    }
    for c in &arbitrages {
        let key = match c.state_class {
            StateClass::BlockState => "block_state",
            StateClass::NetworkState => "network_state",
            StateClass::Unknown => "unknown",
        };
        *hist.arbitrage_state.entry(key.to_string()).or_default() += 1;
    }
    for p in liquidator_profile(&liquidations).values() {
        let key = match p {
            LiquidatorProfile::FrontOnly => "front_only",
            LiquidatorProfile::BackOnly => "back_only",
            LiquidatorProfile::Mixed => "mixed",
        };
        *hist.liquidator_profiles.entry(key.to_string()).or_default() += 1;
    }

    let report = BevReport {
        metadata: ReportMetadata {
            tool_version: REPORT_VERSION.to_string(),
            trace_checksum: trace_checksum(trace),
            seed,
            flags,
        },
        scope: arbitrage_scope_table(&arbitrages),
        liquidation_platforms: strategy_counts(&liquidations),
        clogging_durations: clogging_duration_table(&clogging),
        multipliers: bev_multiplier_histogram(trace, &bev_per_block, &MULTIPLIER_THRESHOLDS),
        sandwiches,
        arbitrages,
        liquidations,
        clogging,
        totals,
        private,
        histograms: hist,
    };
    check_totals(&report)?;
    Ok(report)
}

/// Double-entry check: totals recomputed independently from the records.
pub fn check_totals(r: &BevReport) -> Result<(), ReportError> {
    let sandwich: BigInt = r.sandwiches.iter().map(|s| &s.profit.amount).sum();
    let sandwich_total: BigInt = r.totals.sandwich_profit.values().sum();
    let arb: BigInt = r.arbitrages.iter().map(|c| &c.revenue).sum();
    let arb_total: BigInt = r.totals.arbitrage_revenue.values().sum();
    let liq: BigInt = r.liquidations.iter().filter_map(|l| l.profit_native.as_ref()).sum();
    let bev: BigUint = r.multipliers.multipliers.iter().map(|m| &m.bev_native).sum();
    let problems = [
        (sandwich != sandwich_total, "sandwich profit"),
        (arb != arb_total, "arbitrage revenue"),
        (liq != r.totals.liquidation_profit_native, "liquidation profit"),
        (bev != r.totals.bev_native, "per-block BEV"),
        (r.scope.total() != r.arbitrages.len() as u64, "scope table"),
    ];
    match problems.iter().find(|(bad, _)| *bad) {
        Some((_, what)) => Err(ReportError::Invariant(format!("{what} total disagrees with records"))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line<'a> {
    Metadata(&'a ReportMetadata),
    Sandwich(&'a SandwichInstance),
    Arbitrage(&'a ArbitrageCycle),
    Liquidation(&'a LiquidationRecord),
    Clogging(&'a CloggingPeriod),
    Totals(&'a Totals),
    PrivateCounts(&'a PrivateCounts),
    ScopeTable(&'a ScopeTable),
    LiquidationPlatforms { platforms: &'a BTreeMap<String, PlatformCounts> },
    CloggingDurations { rows: &'a [DurationRow] },
    Histograms(&'a Histograms),
    Multipliers(&'a MultiplierSummary),
}

impl BevReport {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut emit = |l: Line<'_>| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, &l)?;
            w.write_all(b"\n")
        };
        emit(Line::Metadata(&self.metadata))?;
        for s in &self.sandwiches {
            emit(Line::Sandwich(s))?;
        }
        for c in &self.arbitrages {
            emit(Line::Arbitrage(c))?;
        }
        for r in &self.liquidations {
            emit(Line::Liquidation(r))?;
        }
        for p in &self.clogging {
            emit(Line::Clogging(p))?;
        }
        emit(Line::Totals(&self.totals))?;
        emit(Line::PrivateCounts(&self.private))?;
        emit(Line::ScopeTable(&self.scope))?;
        emit(Line::LiquidationPlatforms {
            platforms: &self.liquidation_platforms,
        })?;
        emit(Line::CloggingDurations {
            rows: &self.clogging_durations,
        })?;
        emit(Line::Histograms(&self.histograms))?;
        emit(Line::Multipliers(&self.multipliers))
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    /// Tab-separated, plot-ready tables written next to the report.
    pub fn write_plot_sidecars(&self, dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, body: String| -> std::io::Result<()> {
            let p = dir.join(name);
            fs::write(&p, body)?;
            written.push(p);
            Ok(())
        };

        let mut s = String::from("intermediate_txs\tpublic\tprivate\n");
        let pos = &self.histograms.sandwich_positions;
        let keys: std::collections::BTreeSet<u32> =
            pos.public.keys().chain(pos.private.keys()).copied().collect();
        for k in keys {
            s += &format!(
                "{k}\t{}\t{}\n",
                pos.public.get(&k).unwrap_or(&0),
                pos.private.get(&k).unwrap_or(&0)
            );
        }
        put("sandwich_positions.tsv", s)?;

        let mut s = String::from("bucket\tcount\n");
        for (k, v) in &self.histograms.bid_rounds {
            s += &format!("{k}\t{v}\n");
        }
        put("bid_rounds.tsv", s)?;

        let mut s = String::from("bucket\tcount\n");
        for (k, v) in &self.histograms.backrun_gas_delta {
            s += &format!("{k}\t{v}\n");
        }
        put("backrun_gas_delta.tsv", s)?;

        let mut s = String::from("markets\\platforms\t1\t2\t3\t>=4\n");
        for (i, row) in self.scope.counts.iter().enumerate() {
            s += crate::arbitrage::SCOPE_ROWS[i];
            for v in row {
                s += &format!("\t{v}");
            }
            s.push('\n');
        }
        put("arbitrage_scope.tsv", s)?;

        let mut s = String::from("platform\tfront_run\tback_run\tunclassified\ttotal\n");
        for (k, c) in &self.liquidation_platforms {
            s += &format!("{k}\t{}\t{}\t{}\t{}\n", c.front_run, c.back_run, c.unclassified, c.total);
        }
        put("liquidation_platforms.tsv", s)?;

        let mut s = String::from("strategy\tgas_price\n");
        for r in &self.liquidations {
            if let Some(st) = r.strategy {
                s += &format!("{st:?}\t{}\n", r.gas_price);
            }
        }
        put("liquidation_gas_prices.tsv", s)?;

        let mut s = String::from("duration\tcount\tavg_gas_used\tavg_cost_native\n");
        for r in &self.clogging_durations {
            s += &format!("{}\t{}\t{}\t{}\n", r.label, r.count, r.avg_gas_used, r.avg_cost_native);
        }
        put("clogging_durations.tsv", s)?;

        let mut s = String::from("block\tbev_native\tdenominator\tmultiple\n");
        for m in &self.multipliers.multipliers {
            s += &format!("{}\t{}\t{}\t{:.6}\n", m.block_number, m.bev_native, m.denominator, m.as_f64());
        }
        put("bev_multipliers.tsv", s)?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{generate_fixture, FixtureSpec};

    #[test]
    fn detector_names_parse() {
        for d in Detector::ALL {
            assert_eq!(d.name().parse::<Detector>(), Ok(d));
        }
        assert!("mev".parse::<Detector>().is_err());
    }

    #[test]
    fn report_is_reproducible() {
        let fx = generate_fixture(&FixtureSpec::small(3)).unwrap();
        let a = scan_trace(&fx.trace, &DetectorSet::all(), Some(3), BTreeMap::new()).unwrap();
        let b = scan_trace(&fx.trace, &DetectorSet::all(), Some(3), BTreeMap::new()).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert!(a.to_jsonl().starts_with("{\"record\":\"metadata\""));
    }

    #[test]
    fn only_selected_detectors_run() {
        let fx = generate_fixture(&FixtureSpec::small(4)).unwrap();
        let r = scan_trace(
            &fx.trace,
            &DetectorSet::only(&[Detector::Sandwich]),
            None,
            BTreeMap::new(),
        )
        .unwrap();
        assert!(!r.sandwiches.is_empty());
        assert!(r.arbitrages.is_empty() && r.liquidations.is_empty() && r.clogging.is_empty());
    }

    #[test]
    fn tampered_totals_are_caught() {
        let fx = generate_fixture(&FixtureSpec::small(5)).unwrap();
        let mut r = scan_trace(&fx.trace, &DetectorSet::all(), None, BTreeMap::new()).unwrap();
        r.totals.liquidation_profit_native += 1;
        assert!(matches!(check_totals(&r), Err(ReportError::Invariant(_))));
    }
}
