//! Minimum hash-rate share at which re-mining a block worth `v` block rewards
//! of extractable value beats honest mining.
//!
//! ```bash
//! cargo run --release --example fork_threshold
//! ```

use bevscope::fork::{threshold_curve, ForkRaceModel, RaceSolution, DEFAULT_MAX_DEPTH};

fn main() {
    let vs = [0.0, 0.5, 1.0, 2.0, 4.0, 10.0, 100.0, 600.0];
    for r in threshold_curve(&vs, DEFAULT_MAX_DEPTH) {
        println!("v = {:>6}  alpha* = {:.4}", r.v, r.alpha);
    }

    let s = RaceSolution::solve(ForkRaceModel::new(4.0), 0.25);
    let (mc, se) = s.win_probability_mc(500_000, 9);
    println!(
        "v=4 alpha=0.25: value {:.4}, win probability {:.4} (monte carlo {mc:.4} ± {se:.4})",
        s.root_value(),
        s.win_probability()
    );
}
