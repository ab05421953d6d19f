//! Share of transactions a relay with mining power alpha keeps off the public
//! peer-to-peer network.
//!
//! ```bash
//! cargo run --example network_impact
//! ```

use bevscope::auction::{is_propagation_prevented, simulate_network_impact, synthetic_revenue_fees};

fn main() {
    let d = is_propagation_prevented(0.3, 0.5, 2.5, 1.0).unwrap();
    println!("alpha=0.3 pr=0.5 R/fee=2.5: protogenetic={} prevented={}", d.protogenetic, d.prevented);

    let txs = synthetic_revenue_fees(50_000, 1.5, 42);
    let alphas: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
    let impact = simulate_network_impact(&txs, &alphas, 42).unwrap();
    println!("protogenetic share {:.3}", impact.protogenetic_fraction);
    for (a, f) in impact.alphas.iter().zip(&impact.prevented_fraction) {
        println!("alpha {a:.1}\tprevented {f:.4}\t{}", "#".repeat((f * 60.0) as usize));
    }
}
