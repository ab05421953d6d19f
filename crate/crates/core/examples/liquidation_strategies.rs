//! Classify liquidations as front-run or back-run of the price update that
//! made them possible, per lending platform.
//!
//! ```bash
//! cargo run --example liquidation_strategies
//! ```

use bevscope::liquidation::{detect_liquidations, health_factor, liquidator_profile, strategy_counts};
use bevscope::trace::{generate_fixture, FixtureSpec};

fn main() {
    let fx = generate_fixture(&FixtureSpec { liquidations: 40, ..FixtureSpec::small(3) }).expect("fixture");
    let records: Vec<_> = fx.trace.blocks.iter().flat_map(detect_liquidations).collect();

    println!("platform\tfront\tback\tunclassified\ttotal");
    for (platform, c) in strategy_counts(&records) {
        println!("{platform}\t{}\t{}\t{}\t{}", c.front_run, c.back_run, c.unclassified, c.total);
    }

    if let Some(r) = records.iter().find(|r| r.internal_backrun) {
        let block = fx.trace.block_by_number(r.block_number).unwrap();
        let pos = block.position(&r.platform, &r.borrower).unwrap();
        let hf = health_factor(pos, &block.prices).unwrap();
        println!(
            "internal back-run in block {}: health at block start {} -> {:?}, profit {:?}",
            r.block_number, hf, r.strategy, r.profit_native
        );
    }

    let mut profiles = std::collections::BTreeMap::new();
    for p in liquidator_profile(&records).values() {
        *profiles.entry(format!("{p:?}")).or_insert(0) += 1;
    }
    println!("liquidator profiles: {profiles:?}");
}
