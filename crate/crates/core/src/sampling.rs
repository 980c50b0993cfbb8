//! The generative-model simulator: i.i.d. next-state draws per state-action
//! pair and the empirical kernel built from their counts.
//!
//! Draw `i` for pair `(s, a)` is keyed by `(seed, Transition, sa, i)`, so
//! the counts matrix is identical whether pairs are sampled sequentially,
//! in parallel, or selectively.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_unit, Stream};
use crate::types::TabularMdp;

/// Per-pair transition counts and the induced empirical kernel `P_hat`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalModel {
    counts: DMatrix<u64>,
    samples_per_pair: u64,
    kernel_hat: DMatrix<f64>,
    source_seed: u64,
    num_states: usize,
    num_actions: usize,
}

impl EmpiricalModel {
    fn from_counts(
        counts: DMatrix<u64>,
        samples_per_pair: u64,
        source_seed: u64,
        num_states: usize,
        num_actions: usize,
    ) -> Result<Self> {
        let pairs = num_states * num_actions;
        if counts.nrows() != pairs || counts.ncols() != num_states {
            return Err(Error::dims(format!(
                "counts must be {pairs} x {num_states}, got {} x {}",
                counts.nrows(),
                counts.ncols()
            )));
        }
        for i in 0..pairs {
            let sum: u64 = counts.row(i).iter().sum();
            if sum != samples_per_pair {
                return Err(Error::invalid(format!(
                    "counts row {i} sums to {sum}, expected n = {samples_per_pair}"
                )));
            }
        }
        let n = samples_per_pair as f64;
        let kernel_hat = counts.map(|c| c as f64 / n);
        Ok(Self {
            counts,
            samples_per_pair,
            kernel_hat,
            source_seed,
            num_states,
            num_actions,
        })
    }

    pub fn counts(&self) -> &DMatrix<u64> {
        &self.counts
    }

    pub fn samples_per_pair(&self) -> u64 {
        self.samples_per_pair
    }

    /// The empirical kernel; every entry is an integer multiple of `1/n`.
    pub fn kernel_hat(&self) -> &DMatrix<f64> {
        &self.kernel_hat
    }

    pub fn source_seed(&self) -> u64 {
        self.source_seed
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn to_json_string(&self) -> String {
        let raw = EmpiricalModelJson::from(self);
        serde_json::to_string_pretty(&raw).expect("empirical model serialization cannot fail")
    }

    pub fn from_json_str(text: &str, num_actions: usize) -> Result<Self> {
        let raw: EmpiricalModelJson = serde_json::from_str(text)?;
        raw.into_model(num_actions)
    }
}

/// Wire form `{ n, seed, counts }`. The number of actions is implicit in the
/// row count, so deserialization takes it as a parameter.
#[derive(Serialize, Deserialize)]
struct EmpiricalModelJson {
    n: u64,
    seed: u64,
    counts: Vec<Vec<u64>>,
}

impl From<&EmpiricalModel> for EmpiricalModelJson {
    fn from(em: &EmpiricalModel) -> Self {
        let counts = (0..em.counts.nrows())
            .map(|i| em.counts.row(i).iter().copied().collect())
            .collect();
        EmpiricalModelJson { n: em.samples_per_pair, seed: em.source_seed, counts }
    }
}

impl EmpiricalModelJson {
    fn into_model(self, num_actions: usize) -> Result<EmpiricalModel> {
        if num_actions == 0 {
            return Err(Error::invalid("num_actions must be positive"));
        }
        let pairs = self.counts.len();
        if pairs == 0 || !pairs.is_multiple_of(num_actions) {
            return Err(Error::invalid(format!(
                "counts has {pairs} rows, not a positive multiple of num_actions {num_actions}"
            )));
        }
        let num_states = pairs / num_actions;
        for (i, row) in self.counts.iter().enumerate() {
            if row.len() != num_states {
                return Err(Error::invalid(format!(
                    "counts row {i}: expected {num_states} entries, got {}",
                    row.len()
                )));
            }
        }
        let flat: Vec<u64> = self.counts.into_iter().flatten().collect();
        let counts = DMatrix::from_row_slice(pairs, num_states, &flat);
        EmpiricalModel::from_counts(counts, self.n, self.seed, num_states, num_actions)
    }
}

/// Inverse-CDF draw from a probability row: the first index whose prefix
/// sum strictly exceeds `u`. Equal prefix sums (zero-probability states)
/// resolve toward the lower index; if roundoff leaves `u` past the final
/// prefix sum, the last positive-probability state is returned.
fn categorical(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, p) in row.iter().enumerate() {
        if *p > 0.0 {
            last_positive = j;
        }
        acc += p;
        if u < acc {
            return j;
        }
    }
    last_positive
}

/// Draws `n` next states for every pair and assembles the empirical model.
/// Identical inputs reproduce identical counts bit for bit.
pub fn sample_empirical_kernel(mdp: &TabularMdp, n: u64, seed: u64) -> Result<EmpiricalModel> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let pairs = mdp.num_pairs();
    let rows: Vec<Vec<u64>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = mdp.kernel().row(i).iter().copied().collect();
            let mut counts = vec![0u64; mdp.num_states()];
            for draw in 0..n {
                let u = keyed_unit(seed, Stream::Transition, i as u64, draw);
                counts[categorical(&row, u)] += 1;
            }
            counts
        })
        .collect();
    let flat: Vec<u64> = rows.into_iter().flatten().collect();
    let counts = DMatrix::from_row_slice(pairs, mdp.num_states(), &flat);
    EmpiricalModel::from_counts(counts, n, seed, mdp.num_states(), mdp.num_actions())
}

/// The empirical MDP `(S, A, P_hat, r, gamma)`.
pub fn empirical_mdp(em: &EmpiricalModel, reward: &DVector<f64>, discount: f64) -> Result<TabularMdp> {
    TabularMdp::new(
        em.num_states(),
        em.num_actions(),
        em.kernel_hat().clone(),
        reward.clone(),
        discount,
    )
}

/// Total number of generative-model calls, `n * |S| * |A|`.
pub fn total_sample_size(em: &EmpiricalModel) -> u64 {
    em.samples_per_pair() * em.num_states() as u64 * em.num_actions() as u64
}
