//! Find cyclic arbitrage and tell apart opportunities that existed at the top
//! of the block from ones created by an earlier transaction in the same block.
//!
//! ```bash
//! cargo run --example arbitrage_state
//! ```

use std::collections::BTreeMap;

use bevscope::arbitrage::{arbitrage_scope_table, classify_arbitrage_state, detect_arbitrages, SCOPE_COLS, SCOPE_ROWS};
use bevscope::chain::PoolState;
use bevscope::trace::{generate_fixture, FixtureSpec};

fn main() {
    let fx = generate_fixture(&FixtureSpec { arbitrages: 30, ..FixtureSpec::small(2) }).expect("fixture");

    let mut pools: BTreeMap<String, PoolState> = BTreeMap::new();
    let mut cycles = Vec::new();
    for block in &fx.trace.blocks {
        for p in &block.pool_states {
            pools.insert(p.market_id.clone(), p.clone());
        }
        for mut c in detect_arbitrages(block) {
            c.state_class = classify_arbitrage_state(&c, &pools);
            cycles.push(c);
        }
    }

    let mut by_state: BTreeMap<String, usize> = BTreeMap::new();
    for c in &cycles {
        *by_state.entry(format!("{:?}", c.state_class)).or_default() += 1;
    }
    println!("{} cycles: {by_state:?}", cycles.len());

    let table = arbitrage_scope_table(&cycles);
    print!("markets\\platforms");
    for col in SCOPE_COLS {
        print!("\t{col}");
    }
    println!();
    for (r, row) in SCOPE_ROWS.iter().enumerate() {
        print!("{row}");
        for c in 0..SCOPE_COLS.len() {
            print!("\t{}", table.counts[r][c]);
        }
        println!();
    }
}
