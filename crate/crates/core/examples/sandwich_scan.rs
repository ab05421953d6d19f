//! Detect sandwich attacks in a synthetic trace and bucket the attackers'
//! gas-price bids.
//!
//! ```bash
//! cargo run --example sandwich_scan
//! ```

use std::collections::BTreeMap;

use bevscope::sandwich::{backrun_gas_delta, detect_sandwiches, estimate_bid_rounds, sandwich_position_stats};
use bevscope::trace::{generate_fixture, FixtureSpec};

fn main() {
    let fx = generate_fixture(&FixtureSpec::small(4)).expect("fixture");
    let found: Vec<_> = fx.trace.blocks.iter().flat_map(detect_sandwiches).collect();
    println!("{} sandwiches ({} planted)", found.len(), fx.truth.sandwiches.len());

    for s in found.iter().take(5) {
        println!(
            "block {} front #{} victim #{} back #{} market {} profit {} {} perfect={}",
            s.block_number, s.front.index, s.victim.index, s.back.index, s.market_id, s.profit.amount, s.profit.asset, s.perfect
        );
    }

    let mut bids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut deltas: BTreeMap<String, usize> = BTreeMap::new();
    for s in &found {
        match estimate_bid_rounds(s) {
            Ok(e) => *bids.entry(e.bucket.label()).or_default() += 1,
            Err(_) => *bids.entry("private victim").or_default() += 1,
        }
        if let Ok(b) = backrun_gas_delta(s) {
            *deltas.entry(format!("{b:?}")).or_default() += 1;
        }
    }
    println!("bid-round buckets: {bids:?}");
    println!("back-run gas delta: {deltas:?}");

    let stats = sandwich_position_stats(&found);
    println!("front-run positions, public: {:?}", stats.public);
    println!("front-run positions, private: {:?}", stats.private);
}
