//! Expected revenue of a relay miner running a sealed first-price auction,
//! analytic value against a seeded Monte Carlo estimate.
//!
//! ```bash
//! cargo run --release --example relay_auction
//! ```

use bevscope::auction::{expected_max_bid, nash_bid, relay_payoff, AuctionScenario};

fn main() {
    for n in [2u32, 5, 10, 50] {
        let est = expected_max_bid(&AuctionScenario { alpha: 0.0, n, r_max: 1.0, trials: 1_000_000, seed: 1 }).unwrap();
        println!(
            "n={n:>3}  analytic {:.5}  monte carlo {:.5} ± {:.5}  (z = {:.2})",
            est.analytic, est.monte_carlo, est.stderr, est.z_score()
        );
    }
    let r = 10.0;
    let bid = nash_bid(2, r);
    println!("two players, revenue {r}: equilibrium bid {bid}, winner keeps {}", relay_payoff(r, bid, true));
}
