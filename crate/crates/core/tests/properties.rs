use std::collections::BTreeMap;

use num_bigint::BigUint;
use proptest::prelude::*;

use bevscope::arbitrage::{detect_arbitrages, verify_arbitrage};
use bevscope::chain::{amm_swap_out, constant_product_out, AssetAmount, AssetId, PoolState};
use bevscope::clogging::{detect_clogging_periods, exceeds_share, MIN_PERIOD_BLOCKS};
use bevscope::fork::{forking_threshold, ForkRaceModel};
use bevscope::report::{check_totals, scan_trace, DetectorSet};
use bevscope::sandwich::{detect_sandwiches, verify_sandwich};
use bevscope::trace::{generate_fixture, FixtureSpec, Trace};

fn pool(rx: u128, ry: u128, fee: u32) -> PoolState {
    PoolState {
        market_id: "p".into(),
        asset_x: AssetId::native(),
        asset_y: AssetId::new("T"),
        reserve_x: rx.into(),
        reserve_y: ry.into(),
        fee_bps: fee,
    }
}

fn tiny_spec(seed: u64) -> FixtureSpec {
    FixtureSpec {
        seed,
        n_blocks: 40,
        sandwiches: 4,
        arbitrages: 4,
        liquidations: 4,
        clogging_periods: 1,
        replayables: 3,
        private_txs: 2,
        noise_per_block: 2.0,
        decoys_per_kind: 1,
        ..FixtureSpec::default()
    }
}

proptest! {
    #[test]
    fn product_never_decreases(rx in 1u128..1 << 90, ry in 1u128..1 << 90, a in 1u128..1 << 90, fee in 0u32..10_000) {
        let p = pool(rx, ry, fee);
        if let Ok(r) = amm_swap_out(&p, &AssetAmount::native(a)) {
            let after = &r.pool_after.reserve_x * &r.pool_after.reserve_y;
            prop_assert!(after >= BigUint::from(rx) * BigUint::from(ry));
            prop_assert!(r.output.amount < BigUint::from(ry));
        }
    }

    #[test]
    fn higher_fee_never_pays_more(rx in 1u128..1 << 80, ry in 1u128..1 << 80, a in 1u128..1 << 80, f1 in 0u32..5_000, df in 0u32..5_000) {
        let (rx, ry, a) = (BigUint::from(rx), BigUint::from(ry), BigUint::from(a));
        prop_assert!(constant_product_out(&rx, &ry, &a, f1 + df) <= constant_product_out(&rx, &ry, &a, f1));
    }

    #[test]
    fn scaling_everything_scales_output(rx in 1u64.., ry in 1u64.., a in 1u64.., c in 1u32..1000) {
        let (rx, ry, a) = (BigUint::from(rx), BigUint::from(ry), BigUint::from(a));
        let c = BigUint::from(c);
        let base = constant_product_out(&rx, &ry, &a, 30);
        let scaled = constant_product_out(&(&rx * &c), &(&ry * &c), &(&a * &c), 30);
        prop_assert!(scaled >= &base * &c);
        prop_assert!(scaled < (&base + 1u32) * &c);
    }

    #[test]
    fn round_trip_never_profits(rx in 1_000u128..1 << 90, ry in 1_000u128..1 << 90, a in 1u128..1 << 90, fee in 0u32..1_000) {
        let p = pool(rx, ry, fee);
        if let Ok(first) = amm_swap_out(&p, &AssetAmount::native(a)) {
            if let Ok(back) = amm_swap_out(&first.pool_after, &first.output) {
                prop_assert!(back.output.amount <= BigUint::from(a));
            }
        }
    }

    #[test]
    fn share_threshold_is_strict(limit in 1u64..1 << 40) {
        prop_assert!(!exceeds_share(limit / 10 * 8, limit / 10 * 10));
        prop_assert!(exceeds_share(limit, limit));
    }

    #[test]
    fn threshold_bounded_and_monotone(v in 0.0f64..800.0, dv in 0.0f64..50.0) {
        let a = forking_threshold(ForkRaceModel::new(v)).alpha;
        let b = forking_threshold(ForkRaceModel::new(v + dv)).alpha;
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_traces_round_trip(seed in any::<u64>()) {
        let fx = generate_fixture(&tiny_spec(seed)).unwrap();
        let text = fx.trace.to_text();
        let back = Trace::read_from(text.as_bytes()).unwrap();
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn detections_satisfy_their_predicates(seed in any::<u64>()) {
        let fx = generate_fixture(&tiny_spec(seed)).unwrap();
        for b in &fx.trace.blocks {
            for s in detect_sandwiches(b) {
                prop_assert!(s.front.index < s.victim.index && s.victim.index < s.back.index);
                prop_assert!(verify_sandwich(b, &s));
            }
            for c in detect_arbitrages(b) {
                prop_assert!(c.swaps.len() >= 2);
                prop_assert!(verify_arbitrage(b, &c));
            }
        }
        for p in detect_clogging_periods(&fx.trace) {
            prop_assert!(p.length_blocks >= MIN_PERIOD_BLOCKS);
            prop_assert_eq!(p.end_block - p.start_block + 1, p.length_blocks);
        }
    }

    #[test]
    fn report_totals_and_reproducibility(seed in any::<u64>()) {
        let fx = generate_fixture(&tiny_spec(seed)).unwrap();
        let a = scan_trace(&fx.trace, &DetectorSet::all(), Some(seed), BTreeMap::new()).unwrap();
        let b = scan_trace(&fx.trace, &DetectorSet::all(), Some(seed), BTreeMap::new()).unwrap();
        prop_assert!(check_totals(&a).is_ok());
        prop_assert_eq!(a.to_jsonl(), b.to_jsonl());
    }
}

#[test]
fn clean_fixture_matches_truth_exactly() {
    let fx = generate_fixture(&FixtureSpec::clean(11)).unwrap();
    let found: Vec<_> = fx.trace.blocks.iter().flat_map(detect_sandwiches).map(|s| s.front.hash).collect();
    let mut truth: Vec<_> = fx.truth.sandwiches.iter().map(|s| s.front).collect();
    let mut found_sorted = found.clone();
    found_sorted.sort();
    truth.sort();
    assert_eq!(found_sorted, truth);
    let arbs = fx.trace.blocks.iter().flat_map(detect_arbitrages).count();
    assert_eq!(arbs, fx.truth.arbitrages.len());
    let detected: BTreeMap<_, _> = fx
        .trace
        .blocks
        .iter()
        .flat_map(detect_sandwiches)
        .map(|s| (s.front.hash, s.intermediate_tx_count))
        .collect();
    for s in &fx.truth.sandwiches {
        assert_eq!(detected[&s.front], s.intermediate_tx_count);
    }
}
