//! BEV-to-reward multipliers and the forking threshold of a depth-bounded
//! fork race.
//!
//! Race mechanics: the contested block (carrying BEV worth `v` block rewards)
//! is already on the honest chain. The attacker mines a private fork from its
//! parent. Each step the attacker finds the next block with probability
//! `alpha`, otherwise the honest network does. The attacker wins once its fork
//! is longer than the honest chain (`a >= h + 2`), collecting `a` rewards plus
//! `v`. Reaching `a + h >= d` without winning ends the race with nothing. Every
//! step spent racing forgoes the honest expectation `alpha`, and after the
//! first step the attacker may abandon at any time.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;

use crate::auction::stream_rng;
use crate::chain::codec::dec;
use crate::chain::Price;
use crate::trace::Trace;

pub const DEFAULT_MAX_DEPTH: u32 = 10;
pub const THRESHOLD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForkRaceModel {
    pub max_depth: u32,
    pub v: f64,
}

impl ForkRaceModel {
    pub fn new(v: f64) -> Self {
        ForkRaceModel {
            max_depth: DEFAULT_MAX_DEPTH,
            v,
        }
    }

    pub fn with_depth(mut self, d: u32) -> Self {
        assert!(d >= 1, "race depth must be at least 1");
        self.max_depth = d;
        self
    }

    fn won(a: u32, h: u32) -> bool {
        a >= h + 2
    }

    fn cut(&self, a: u32, h: u32) -> bool {
        a + h >= self.max_depth
    }
}

/// Optimal-stopping values of every race state at a given `alpha`.
#[derive(Debug, Clone)]
pub struct RaceSolution {
    pub alpha: f64,
    pub model: ForkRaceModel,
    values: Vec<Vec<f64>>,
    continue_at: Vec<Vec<bool>>,
}

impl RaceSolution {
    pub fn solve(model: ForkRaceModel, alpha: f64) -> Self {
        let d = model.max_depth as usize;
        let mut values = vec![vec![0.0; d + 2]; d + 2];
        let mut continue_at = vec![vec![false; d + 2]; d + 2];
        for total in (0..=d + 1).rev() {
            for a in 0..=total {
                let h = total - a;
                let (a32, h32) = (a as u32, h as u32);
                if ForkRaceModel::won(a32, h32) {
                    values[a][h] = f64::from(a32) + model.v;
                    continue;
                }
                if model.cut(a32, h32) {
                    continue;
                }
                let cont = -alpha + alpha * values[a + 1][h] + (1.0 - alpha) * values[a][h + 1];
                let root = a == 0 && h == 0;
                if root || cont > 0.0 {
                    values[a][h] = cont;
                    continue_at[a][h] = true;
                }
            }
        }
        RaceSolution {
            alpha,
            model,
            values,
            continue_at,
        }
    }

    /// Expected gain of forking over honest mining from the start state.
    pub fn root_value(&self) -> f64 {
        self.values[0][0]
    }

    pub fn continues(&self, a: u32, h: u32) -> bool {
        self.continue_at[a as usize][h as usize]
    }

    /// Probability of winning under the optimal policy, by forward propagation.
    pub fn win_probability(&self) -> f64 {
        let d = self.model.max_depth as usize;
        let mut mass = vec![vec![0.0; d + 2]; d + 2];
        mass[0][0] = 1.0;
        let mut win = 0.0;
        for total in 0..=d + 1 {
            for a in 0..=total {
                let h = total - a;
                let m = mass[a][h];
                if m == 0.0 {
                    continue;
                }
                if ForkRaceModel::won(a as u32, h as u32) {
                    win += m;
                    continue;
                }
                if !self.continue_at[a][h] {
                    continue;
                }
                mass[a + 1][h] += m * self.alpha;
                mass[a][h + 1] += m * (1.0 - self.alpha);
            }
        }
        win
    }

    /// Monte Carlo estimate of the same probability and its standard error.
    pub fn win_probability_mc(&self, trials: u64, seed: u64) -> (f64, f64) {
        let mut rng = stream_rng(seed, 0);
        let mut wins = 0u64;
        for _ in 0..trials {
            let (mut a, mut h) = (0u32, 0u32);
            loop {
                if ForkRaceModel::won(a, h) {
                    wins += 1;
                    break;
                }
                if !self.continues(a, h) {
                    break;
                }
                if rng.random::<f64>() < self.alpha {
                    a += 1;
                } else {
                    h += 1;
                }
            }
        }
        let p = wins as f64 / trials as f64;
        (p, (p * (1.0 - p) / trials as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub v: f64,
    pub alpha: f64,
    /// Race value minus honest value at the returned `alpha`.
    pub gap: f64,
}

/// Smallest `alpha` at which forking is at least as profitable as honest
/// mining, by bisection to [`THRESHOLD_TOLERANCE`]. No prize means no fork
/// ever pays, so `v = 0` returns 1.
pub fn forking_threshold(model: ForkRaceModel) -> ThresholdResult {
    if model.v <= 0.0 {
        return ThresholdResult {
            v: model.v,
            alpha: 1.0,
            gap: 0.0,
        };
    }
    let value = |a: f64| RaceSolution::solve(model, a).root_value();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if value(hi) < 0.0 {
        return ThresholdResult {
            v: model.v,
            alpha: 1.0,
            gap: value(hi),
        };
    }
    while hi - lo > THRESHOLD_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if value(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    ThresholdResult {
        v: model.v,
        alpha: hi,
        gap: value(hi),
    }
}

/// `(v, alpha*)` pairs over a grid of multiples.
pub fn threshold_curve(vs: &[f64], max_depth: u32) -> Vec<ThresholdResult> {
    use rayon::prelude::*;
    vs.par_iter()
        .map(|&v| forking_threshold(ForkRaceModel::new(v).with_depth(max_depth)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BevMultiplier {
    #[serde(with = "dec")]
    pub block_number: u64,
    #[serde(with = "dec")]
    pub bev_native: BigUint,
    #[serde(with = "dec")]
    pub denominator: BigUint,
    #[serde(with = "dec")]
    pub multiple: Price,
}

impl BevMultiplier {
    pub fn as_f64(&self) -> f64 {
        self.multiple.to_f64().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MultiplierSummary {
    pub multipliers: Vec<BevMultiplier>,
    /// `(k, number of blocks with multiple >= k)`.
    pub at_least: Vec<(u64, u64)>,
    pub skipped_zero_denominator: u64,
}

pub fn bev_multiplier(block_number: u64, bev: &BigUint, denominator: &BigUint) -> Option<BevMultiplier> {
    (!denominator.is_zero()).then(|| BevMultiplier {
        block_number,
        bev_native: bev.clone(),
        denominator: denominator.clone(),
        multiple: Price::new(BigInt::from(bev.clone()), BigInt::from(denominator.clone())),
    })
}

/// Per-block multiples of detected BEV over block reward plus fees.
pub fn bev_multiplier_histogram(
    trace: &Trace,
    bev_per_block: &BTreeMap<u64, BigUint>,
    thresholds: &[u64],
) -> MultiplierSummary {
    let mut out = MultiplierSummary::default();
    let zero = BigUint::default();
    for b in &trace.blocks {
        let bev = bev_per_block.get(&b.number).unwrap_or(&zero);
        match bev_multiplier(b.number, bev, &b.block_reward_plus_fees) {
            Some(m) => out.multipliers.push(m),
            None => {
                log::warn!("block {} has zero reward plus fees; skipped", b.number);
                out.skipped_zero_denominator += 1;
            }
        }
    }
    out.at_least = thresholds
        .iter()
        .map(|&k| {
            let kk = Price::from_integer(BigInt::from(k));
            let n = out.multipliers.iter().filter(|m| m.multiple >= kk).count() as u64;
            (k, n)
        })
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_division() {
        let m = bev_multiplier(1, &8u32.into(), &2u32.into()).unwrap();
        assert_eq!(m.multiple, Price::from_integer(4.into()));
        let m = bev_multiplier(1, &0u32.into(), &2u32.into()).unwrap();
        assert!(m.multiple.is_zero());
        assert!(bev_multiplier(1, &1u32.into(), &0u32.into()).is_none());
    }

    #[test]
    fn paper_top_block_arithmetic() {
        let bev = 8453.9f64;
        let denom = bev / 616.6;
        assert!((bev / denom - 616.6).abs() < 1e-9);
    }

    #[test]
    fn no_prize_never_forks() {
        assert_eq!(forking_threshold(ForkRaceModel::new(0.0)).alpha, 1.0);
    }

    #[test]
    fn threshold_decreases_with_prize() {
        let a1 = forking_threshold(ForkRaceModel::new(1.0)).alpha;
        let a4 = forking_threshold(ForkRaceModel::new(4.0)).alpha;
        let a100 = forking_threshold(ForkRaceModel::new(100.0)).alpha;
        assert!(a1 >= a4 && a4 >= a100, "{a1} {a4} {a100}");
        assert!(a100 < 0.05);
    }

    #[test]
    fn bisection_lands_on_root() {
        let r = forking_threshold(ForkRaceModel::new(4.0));
        assert!(r.gap >= 0.0);
        let below = RaceSolution::solve(ForkRaceModel::new(4.0), r.alpha - THRESHOLD_TOLERANCE);
        assert!(below.root_value() < 0.0);
    }

    #[test]
    fn dp_and_mc_agree() {
        let s = RaceSolution::solve(ForkRaceModel::new(4.0), 0.3);
        let p = s.win_probability();
        let (q, se) = s.win_probability_mc(200_000, 5);
        assert!((p - q).abs() <= 3.0 * se.max(1e-12), "{p} vs {q} ± {se}");
    }

    #[test]
    fn win_states_need_lead_of_two() {
        let s = RaceSolution::solve(ForkRaceModel::new(4.0), 1.0);
        assert!((s.win_probability() - 1.0).abs() < 1e-12);
        assert!((s.root_value() - (2.0 + 4.0 - 2.0)).abs() < 1e-12);
    }
}
