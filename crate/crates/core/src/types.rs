//! Core domain types: the MDP quintuple, deterministic policies, and the
//! value/Q vectors over states and state-action pairs.
//!
//! State-action pairs are flattened as `(s, a) -> s * num_actions + a`
//! everywhere; the transition kernel is stored densely with one row per
//! pair, so row `(s, a)` of the kernel is the distribution over next states.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Row sums of a stochastic matrix may deviate from 1 by at most this much.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A finite discounted MDP `(S, A, P, r, gamma)` in dense tabular form.
///
/// Rewards are arbitrary finite reals. The common normalized setting keeps
/// them in `[0, 1]`, but absorbing constructions need rewards anywhere in
/// `[-1/(1-gamma), 1/(1-gamma)]`, so the type does not restrict the range.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    kernel: DMatrix<f64>,
    reward: DVector<f64>,
    discount: f64,
}

impl TabularMdp {
    /// Validates and builds an MDP. `kernel` must be `(S*A) x S` with
    /// nonnegative rows summing to 1 within [`ROW_SUM_TOL`]; `reward` must
    /// have length `S*A` with finite entries; `discount` must lie in (0, 1).
    pub fn new(
        num_states: usize,
        num_actions: usize,
        kernel: DMatrix<f64>,
        reward: DVector<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("num_states and num_actions must be positive"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid(format!(
                "discount must lie strictly inside (0, 1), got {discount}"
            )));
        }
        let pairs = num_states * num_actions;
        if kernel.nrows() != pairs || kernel.ncols() != num_states {
            return Err(Error::dims(format!(
                "kernel must be {pairs} x {num_states}, got {} x {}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        if reward.len() != pairs {
            return Err(Error::dims(format!(
                "reward must have length {pairs}, got {}",
                reward.len()
            )));
        }
        for (i, r) in reward.iter().enumerate() {
            if !r.is_finite() {
                let (s, a) = (i / num_actions, i % num_actions);
                return Err(Error::invalid(format!(
                    "reward[{i}] (s={s}, a={a}) is not finite: {r}"
                )));
            }
        }
        for i in 0..pairs {
            let row = kernel.row(i);
            let mut sum = 0.0;
            for (j, p) in row.iter().enumerate() {
                if !p.is_finite() || *p < 0.0 {
                    let (s, a) = (i / num_actions, i % num_actions);
                    return Err(Error::invalid(format!(
                        "kernel row {i} (s={s}, a={a}), column {j}: entry {p} is negative or not finite"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                let (s, a) = (i / num_actions, i % num_actions);
                return Err(Error::invalid(format!(
                    "kernel row {i} (s={s}, a={a}) sums to {sum:.17}, must be 1 within {ROW_SUM_TOL:e}"
                )));
            }
        }
        Ok(Self { num_states, num_actions, kernel, reward, discount })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of state-action pairs `S*A`.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    /// The `(S*A) x S` transition kernel; row `(s, a)` is `P(. | s, a)`.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn reward(&self) -> &DVector<f64> {
        &self.reward
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Flattened index of the pair `(s, a)`.
    #[inline]
    pub fn sa(&self, s: usize, a: usize) -> usize {
        debug_assert!(s < self.num_states && a < self.num_actions);
        s * self.num_actions + a
    }

    pub fn reward_at(&self, s: usize, a: usize) -> f64 {
        self.reward[self.sa(s, a)]
    }

    /// Same MDP with the reward vector replaced; kernel and discount shared.
    pub fn with_reward(&self, reward: DVector<f64>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.kernel.clone(),
            reward,
            self.discount,
        )
    }

    /// Same MDP with the kernel replaced.
    pub fn with_kernel(&self, kernel: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            kernel,
            self.reward.clone(),
            self.discount,
        )
    }

    /// Parses the JSON schema
    /// `{ num_states, num_actions, discount, reward: [..], kernel: [[..]] }`,
    /// validating every invariant.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: MdpJson = serde_json::from_str(text)?;
        raw.try_into()
    }

    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let raw = MdpJson::from(self);
        serde_json::to_string_pretty(&raw).expect("MDP serialization cannot fail")
    }
}

/// Wire form of [`TabularMdp`].
#[derive(Serialize, Deserialize)]
struct MdpJson {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    reward: Vec<f64>,
    kernel: Vec<Vec<f64>>,
}

impl TryFrom<MdpJson> for TabularMdp {
    type Error = Error;

    fn try_from(raw: MdpJson) -> Result<Self> {
        let pairs = raw.num_states.checked_mul(raw.num_actions).ok_or_else(|| {
            Error::invalid("num_states * num_actions overflows")
        })?;
        if raw.kernel.len() != pairs {
            return Err(Error::invalid(format!(
                "field `kernel`: expected {pairs} rows, got {}",
                raw.kernel.len()
            )));
        }
        for (i, row) in raw.kernel.iter().enumerate() {
            if row.len() != raw.num_states {
                return Err(Error::invalid(format!(
                    "field `kernel`, row {i}: expected {} entries, got {}",
                    raw.num_states,
                    row.len()
                )));
            }
        }
        if raw.reward.len() != pairs {
            return Err(Error::invalid(format!(
                "field `reward`: expected {pairs} entries, got {}",
                raw.reward.len()
            )));
        }
        let flat: Vec<f64> = raw.kernel.into_iter().flatten().collect();
        let kernel = DMatrix::from_row_slice(pairs, raw.num_states, &flat);
        TabularMdp::new(
            raw.num_states,
            raw.num_actions,
            kernel,
            DVector::from_vec(raw.reward),
            raw.discount,
        )
    }
}

impl From<&TabularMdp> for MdpJson {
    fn from(mdp: &TabularMdp) -> Self {
        let kernel = (0..mdp.num_pairs())
            .map(|i| mdp.kernel.row(i).iter().copied().collect())
            .collect();
        MdpJson {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            discount: mdp.discount,
            reward: mdp.reward.iter().copied().collect(),
            kernel,
        }
    }
}

/// A deterministic policy: one action index per state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Checks that the policy addresses exactly the states of `mdp` with
    /// valid action indices.
    pub fn validate_for(&self, mdp: &TabularMdp) -> Result<()> {
        if self.actions.len() != mdp.num_states() {
            return Err(Error::dims(format!(
                "policy covers {} states, MDP has {}",
                self.actions.len(),
                mdp.num_states()
            )));
        }
        for (s, &a) in self.actions.iter().enumerate() {
            if a >= mdp.num_actions() {
                return Err(Error::invalid(format!(
                    "policy action {a} at state {s} is out of range (|A| = {})",
                    mdp.num_actions()
                )));
            }
        }
        Ok(())
    }
}

/// A value function `V` over states.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueVector(pub DVector<f64>);

/// An action-value function `Q` over flattened state-action pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct QVector(pub DVector<f64>);

impl ValueVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() == 0
    }

    /// Sup-norm distance to another value vector.
    pub fn sup_distance(&self, other: &ValueVector) -> f64 {
        (&self.0 - &other.0).amax()
    }
}

impl QVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() == 0
    }

    pub fn at(&self, s: usize, a: usize, num_actions: usize) -> f64 {
        self.0[s * num_actions + a]
    }

    pub fn sup_distance(&self, other: &QVector) -> f64 {
        (&self.0 - &other.0).amax()
    }
}

/// The matrices induced by a policy: the 0/1 projection `Pi^pi`, the two
/// square stochastic matrices `P^pi = P Pi^pi` (over pairs) and
/// `P_pi = Pi^pi P` (over states), and the restricted reward `r_pi`.
#[derive(Clone, Debug)]
pub struct PolicyMatrices {
    /// `|S| x |S||A|` selector; row `s` has a single 1 at column `(s, pi(s))`.
    pub projection: DMatrix<f64>,
    /// `P^pi`, row-stochastic over state-action pairs.
    pub p_super: DMatrix<f64>,
    /// `P_pi`, row-stochastic over states.
    pub p_sub: DMatrix<f64>,
    /// `r_pi(s) = r(s, pi(s))`.
    pub r_pi: DVector<f64>,
}
