//! Seeded MDP instance generators used by the experiment harness.
//!
//! Three families:
//!
//! * `random-dirichlet`: every kernel row drawn from a flat Dirichlet,
//!   rewards uniform on [0, 1]. Generic well-conditioned instances.
//! * `chain`: a directed chain with a terminal reward state, noisy forward
//!   transitions, and a geometric ladder of action gaps. Estimation errors
//!   in the forward probabilities flip near-tied action choices, and the
//!   value cost of a flip compounds over the ~1/(1-gamma) horizon, which
//!   makes the family a hard instance for planners at every sample size.
//! * `symmetric-adversarial`: rewards and transitions identical across
//!   actions, so every deterministic policy is optimal and the optimal
//!   Q-function ties exactly. Worst case for tie-breaking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_unit, Stream};
use crate::types::TabularMdp;

/// Instance family selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MdpFamily {
    #[serde(rename = "random-dirichlet")]
    RandomDirichlet,
    #[serde(rename = "chain")]
    Chain,
    #[serde(rename = "symmetric-adversarial")]
    SymmetricAdversarial,
}

impl std::str::FromStr for MdpFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-dirichlet" => Ok(MdpFamily::RandomDirichlet),
            "chain" => Ok(MdpFamily::Chain),
            "symmetric-adversarial" => Ok(MdpFamily::SymmetricAdversarial),
            other => Err(Error::invalid(format!(
                "unknown family `{other}` (use random-dirichlet|chain|symmetric-adversarial)"
            ))),
        }
    }
}

impl std::fmt::Display for MdpFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MdpFamily::RandomDirichlet => "random-dirichlet",
            MdpFamily::Chain => "chain",
            MdpFamily::SymmetricAdversarial => "symmetric-adversarial",
        })
    }
}

/// Deterministically generates an instance of the requested family.
pub fn generate_mdp(
    family: MdpFamily,
    num_states: usize,
    num_actions: usize,
    discount: f64,
    seed: u64,
) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::invalid("num_states and num_actions must be positive"));
    }
    match family {
        MdpFamily::RandomDirichlet => dirichlet(num_states, num_actions, discount, seed),
        MdpFamily::Chain => chain(num_states, num_actions, discount),
        MdpFamily::SymmetricAdversarial => symmetric(num_states, num_actions, discount, seed),
    }
}

/// Flat-Dirichlet row via normalized exponentials, keyed per (row, column).
fn dirichlet_row(seed: u64, stream: Stream, row: u64, n: usize) -> Vec<f64> {
    let mut e: Vec<f64> = (0..n)
        .map(|j| {
            let u = keyed_unit(seed, stream, row, j as u64);
            -(1.0 - u).ln()
        })
        .collect();
    let sum: f64 = e.iter().sum();
    if sum <= 0.0 {
        // All draws hit u = 0 exactly; fall back to uniform.
        return vec![1.0 / n as f64; n];
    }
    for x in e.iter_mut() {
        *x /= sum;
    }
    // Force an exact unit sum so downstream validation never sees drift.
    let correction: f64 = e.iter().sum();
    for x in e.iter_mut() {
        *x /= correction;
    }
    e
}

fn dirichlet(s_n: usize, a_n: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    let pairs = s_n * a_n;
    let mut kernel = DMatrix::zeros(pairs, s_n);
    for i in 0..pairs {
        let row = dirichlet_row(seed, Stream::FamilyKernel, i as u64, s_n);
        for (j, p) in row.iter().enumerate() {
            kernel[(i, j)] = *p;
        }
    }
    let reward = DVector::from_fn(pairs, |i, _| keyed_unit(seed, Stream::FamilyReward, i as u64, 0));
    TabularMdp::new(s_n, a_n, kernel, reward, gamma)
}

/// Base forward probability of the chain; kept proportional to 1-gamma so
/// per-link traversal takes about one effective-horizon's worth of steps.
fn chain_base_prob(gamma: f64) -> f64 {
    (2.0 * (1.0 - gamma)).min(0.8)
}

/// Relative action gap at chain depth `s`; a geometric ladder so that some
/// state is near the estimation-noise scale at every sample size.
fn chain_gap(s: usize) -> f64 {
    0.28 * 1.87f64.powi(-(s as i32))
}

fn chain(s_n: usize, a_n: usize, gamma: f64) -> Result<TabularMdp> {
    let pairs = s_n * a_n;
    let mut kernel = DMatrix::zeros(pairs, s_n);
    let mut reward = DVector::zeros(pairs);

    let b = chain_base_prob(gamma);
    let last = s_n - 1;
    // Linear optimal-value profile from v_lo/(1-gamma) up to 1/(1-gamma);
    // the per-state rewards below realize it exactly, which keeps the value
    // cost of a wrong action uniform along the chain.
    let v_lo = 0.3;
    let w = if s_n > 1 {
        (1.0 - v_lo) / ((1.0 - gamma) * last as f64)
    } else {
        0.0
    };

    for s in 0..s_n {
        for a in 0..a_n {
            let i = s * a_n + a;
            if s == last {
                kernel[(i, s)] = 1.0;
                reward[i] = 1.0;
                continue;
            }
            let rel_gap = if a_n > 1 { chain_gap(s) * a as f64 } else { 0.0 };
            let q = (b * (1.0 - rel_gap)).max(0.01);
            kernel[(i, s + 1)] = q;
            kernel[(i, s)] = 1.0 - q;
            let v_s = (v_lo + (1.0 - v_lo) * s as f64 / last as f64) / (1.0 - gamma);
            reward[i] = ((1.0 - gamma) * v_s - gamma * b * w).clamp(0.0, 1.0);
        }
    }
    TabularMdp::new(s_n, a_n, kernel, reward, gamma)
}

fn symmetric(s_n: usize, a_n: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    let pairs = s_n * a_n;
    let mut kernel = DMatrix::zeros(pairs, s_n);
    let mut reward = DVector::zeros(pairs);
    for s in 0..s_n {
        // One row and one reward per state, shared across actions.
        let row = dirichlet_row(seed, Stream::FamilyKernel, s as u64, s_n);
        let r = keyed_unit(seed, Stream::FamilyReward, s as u64, 0);
        for a in 0..a_n {
            let i = s * a_n + a;
            for (j, p) in row.iter().enumerate() {
                kernel[(i, j)] = *p;
            }
            reward[i] = r;
        }
    }
    TabularMdp::new(s_n, a_n, kernel, reward, gamma)
}
