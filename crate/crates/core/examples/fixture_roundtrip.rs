//! Generate a seeded trace with ground truth, write it, read it back and scan
//! it into a report.
//!
//! ```bash
//! cargo run --example fixture_roundtrip -- /tmp/bev
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use bevscope::report::{scan_trace, DetectorSet};
use bevscope::trace::{generate_fixture, load_trace, FixtureSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&dir)?;
    let fx = generate_fixture(&FixtureSpec::small(7))?;
    let path = dir.join("trace.jsonl");
    fx.trace.save(&path)?;
    std::fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&fx.truth)?)?;

    let trace = load_trace(&path)?;
    assert_eq!(trace, fx.trace);
    println!("{}: {} blocks, {} transactions", path.display(), trace.blocks.len(), trace.transaction_count());

    let report = scan_trace(&trace, &DetectorSet::all(), Some(7), BTreeMap::new())?;
    let out = dir.join("report.jsonl");
    std::fs::write(&out, report.to_jsonl())?;
    let plots = report.write_plot_sidecars(&dir.join("plots"))?;
    println!(
        "{} sandwiches, {} arbitrages, {} liquidations, {} clogging periods; BEV {} (native base units)",
        report.sandwiches.len(),
        report.arbitrages.len(),
        report.liquidations.len(),
        report.clogging.len(),
        report.totals.bev_native
    );
    println!("report {} with {} plot sidecars", out.display(), plots.len());
    Ok(())
}
