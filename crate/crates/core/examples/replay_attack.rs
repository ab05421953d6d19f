//! Copy pending contract calls with the adversary as sender and keep the ones
//! that would have paid off.
//!
//! ```bash
//! cargo run --example replay_attack
//! ```

use bevscope::replay::scan_replayable;
use bevscope::trace::{generate_fixture, FixtureSpec};

fn main() {
    let fx = generate_fixture(&FixtureSpec { replayables: 21, ..FixtureSpec::small(6) }).expect("fixture");
    let scan = scan_replayable(&fx.trace, &fx.truth.adversary);
    println!("{} contract calls evaluated, {} profitable replays", scan.evaluated, scan.candidates.len());
    for c in &scan.candidates {
        println!(
            "block {} #{} {:?} profit {} capital {} substitutions {} miner-only {}",
            c.block_number, c.victim_index, c.pattern_class, c.profit_native, c.upfront_capital, c.substitution_count, c.miner_only
        );
    }
    println!("total profit {} ; capital buckets {:?}", scan.total_profit, scan.capital);
}
