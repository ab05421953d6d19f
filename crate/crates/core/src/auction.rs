//! P2P all-pay versus relay sealed-bid auction model, protogenetic
//! suppression and the network-impact Monte Carlo.

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Trials per independently seeded stream.
pub const TRIALS_PER_STREAM: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuctionError {
    #[error("fee must be positive, got {0}")]
    NonPositiveFee(f64),
    #[error("success probability must lie in (0, 1], got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("relay mining power must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("player count must be at least 1")]
    NoPlayers,
    #[error("revenue bound must be positive, got {0}")]
    NonPositiveRevenueBound(f64),
}

/// Expected payoff of joining the P2P all-pay auction.
pub fn p2p_expected_payoff(alpha: f64, pr: f64, revenue: f64, bid: f64) -> f64 {
    (1.0 - alpha) * pr * revenue - bid
}

/// Payoff in the relay's first-price sealed-bid auction.
pub fn relay_payoff(revenue: f64, bid: f64, won: bool) -> f64 {
    if bid > revenue {
        log::warn!("bid {bid} exceeds revenue {revenue}");
    }
    if won {
        revenue - bid
    } else {
        0.0
    }
}

/// Symmetric Bayesian Nash bid with revenues iid uniform.
pub fn nash_bid(n: u32, revenue: f64) -> f64 {
    assert!(n >= 1, "nash_bid needs at least one player");
    f64::from(n - 1) / f64::from(n) * revenue
}

pub fn expected_max_bid_analytic(n: u32, r_max: f64) -> f64 {
    f64::from(n.saturating_sub(1)) / f64::from(n + 1) * r_max
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionScenario {
    pub alpha: f64,
    pub n: u32,
    pub r_max: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxBidEstimate {
    pub analytic: f64,
    pub monte_carlo: f64,
    pub stderr: f64,
    pub trials: u64,
}

impl MaxBidEstimate {
    pub fn z_score(&self) -> f64 {
        if self.stderr == 0.0 {
            if self.analytic == self.monte_carlo {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.monte_carlo - self.analytic).abs() / self.stderr
        }
    }
}

/// A generator for stream `stream` of a seeded family.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Analytic and Monte Carlo expected revenue of the relay miner.
pub fn expected_max_bid(s: &AuctionScenario) -> Result<MaxBidEstimate, AuctionError> {
    if s.n == 0 {
        return Err(AuctionError::NoPlayers);
    }
    if s.r_max.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(AuctionError::NonPositiveRevenueBound(s.r_max));
    }
    let streams = s.trials.div_ceil(TRIALS_PER_STREAM);
    let partial: Vec<(f64, f64)> = (0..streams)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(s.seed, k);
            let count = TRIALS_PER_STREAM.min(s.trials - k * TRIALS_PER_STREAM);
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..count {
                let mut top = 0.0f64;
                for _ in 0..s.n {
                    top = top.max(rng.random::<f64>() * s.r_max);
                }
                let b = nash_bid(s.n, top);
                sum += b;
                sq += b * b;
            }
            (sum, sq)
        })
        .collect();
    let (sum, sq) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let t = s.trials as f64;
    let mean = if s.trials == 0 { 0.0 } else { sum / t };
    let var = if s.trials > 1 {
        ((sq - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(MaxBidEstimate {
        analytic: expected_max_bid_analytic(s.n, s.r_max),
        monte_carlo: mean,
        stderr: (var / t.max(1.0)).sqrt(),
        trials: s.trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PropagationDecision {
    pub protogenetic: bool,
    pub prevented: bool,
}

fn check_inputs(alpha: f64, pr: f64, fee: f64) -> Result<(), AuctionError> {
    if fee.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(AuctionError::NonPositiveFee(fee));
    }
    if !(pr > 0.0 && pr <= 1.0) {
        return Err(AuctionError::ProbabilityOutOfRange(pr));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AuctionError::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// Whether relay mining power `alpha` keeps a protogenetic opportunity off
/// the P2P network: `1/pr < R/fee < 1/((1-alpha)·pr)`.
pub fn is_propagation_prevented(
    alpha: f64,
    pr: f64,
    revenue: f64,
    fee: f64,
) -> Result<PropagationDecision, AuctionError> {
    check_inputs(alpha, pr, fee)?;
    let ratio = revenue / fee;
    let protogenetic = 1.0 / pr < ratio;
    let prevented = if alpha >= 1.0 {
        protogenetic
    } else {
        protogenetic && ratio < 1.0 / ((1.0 - alpha) * pr)
    };
    Ok(PropagationDecision {
        protogenetic,
        prevented,
    })
}

/// The same decision through the payoff definition: protogenetic and a
/// non-positive expected P2P payoff at `alpha`.
pub fn prevented_by_payoff(alpha: f64, pr: f64, revenue: f64, fee: f64) -> bool {
    let protogenetic = p2p_expected_payoff(0.0, pr, revenue, fee) > 0.0;
    protogenetic && p2p_expected_payoff(alpha, pr, revenue, fee) <= 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevenueFee {
    pub revenue: f64,
    pub fee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkImpact {
    pub alphas: Vec<f64>,
    pub prevented_fraction: Vec<f64>,
    pub protogenetic_fraction: f64,
}

/// Fraction of transactions kept off the P2P network per relay share. One
/// success probability is drawn per transaction and reused for every alpha.
pub fn simulate_network_impact(
    txs: &[RevenueFee],
    alphas: &[f64],
    seed: u64,
) -> Result<NetworkImpact, AuctionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(0.1, 0.9).expect("valid range");
    let prs: Vec<f64> = txs.iter().map(|_| dist.sample(&mut rng)).collect();
    let n = txs.len().max(1) as f64;
    let mut fractions = Vec::with_capacity(alphas.len());
    let mut protogenetic = 0usize;
    for (i, &alpha) in alphas.iter().enumerate() {
        let mut prevented = 0usize;
        for (tx, &pr) in txs.iter().zip(&prs) {
            let d = is_propagation_prevented(alpha, pr, tx.revenue, tx.fee)?;
            prevented += usize::from(d.prevented);
            if i == 0 {
                protogenetic += usize::from(d.protogenetic);
            }
        }
        fractions.push(prevented as f64 / n);
    }
    Ok(NetworkImpact {
        alphas: alphas.to_vec(),
        prevented_fraction: fractions,
        protogenetic_fraction: protogenetic as f64 / n,
    })
}

/// Revenue/fee pairs with Pareto-distributed ratios, a stand-in for an
/// empirical heavy-tailed fee market.
pub fn synthetic_revenue_fees(count: usize, tail_index: f64, seed: u64) -> Vec<RevenueFee> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            let fee = 0.001 + rng.random::<f64>() * 0.01;
            RevenueFee {
                revenue: fee * u.powf(-1.0 / tail_index),
                fee,
            }
        })
        .collect()
}
