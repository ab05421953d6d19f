//! Find runs of at least five blocks in which one address consumed more than
//! 80% of the gas limit.
//!
//! ```bash
//! cargo run --example clogging_periods
//! ```

use bevscope::clogging::{clogging_duration_table, detect_clogging_periods};
use bevscope::trace::{generate_fixture, FixtureSpec};

fn main() {
    let fx = generate_fixture(&FixtureSpec { clogging_periods: 6, decoys_per_kind: 3, ..FixtureSpec::small(8) }).expect("fixture");
    let periods = detect_clogging_periods(&fx.trace);
    for p in &periods {
        println!(
            "{} blocks {}..={} ({} blocks) avg share {:.3}",
            p.address,
            p.start_block,
            p.end_block,
            p.length_blocks,
            num_traits::ToPrimitive::to_f64(&p.avg_gas_share).unwrap_or(f64::NAN)
        );
    }
    let rejected = fx.truth.decoys.iter().filter(|d| d.detector == "clogging").count();
    println!("{} periods found, {rejected} near-miss runs rejected", periods.len());
    for row in clogging_duration_table(&periods) {
        println!("{}\t{}\tavg gas {}\tavg cost {}", row.label, row.count, row.avg_gas_used, row.avg_cost_native);
    }
}
