//! Compare mined transactions against a mempool log to find the ones that
//! never went through the public network.
//!
//! ```bash
//! cargo run --example private_diff
//! ```

use bevscope::trace::{diff_private_transactions, generate_fixture, FixtureSpec};

fn main() {
    let fx = generate_fixture(&FixtureSpec { private_txs: 20, ..FixtureSpec::small(5) }).expect("fixture");
    let sets = diff_private_transactions(&fx.trace, &fx.mempool);
    println!("mempool log: {} entries", fx.mempool.len());
    println!("not broadcast: {}", sets.not_broadcast.len());
    println!("zero gas price: {}", sets.zero_gas_price.len());
    println!("private (union): {}", sets.union.len());
    assert_eq!(sets.not_broadcast, fx.truth.private_not_broadcast);
    for h in sets.zero_gas_price.iter().take(3) {
        println!("  {h}");
    }
}
