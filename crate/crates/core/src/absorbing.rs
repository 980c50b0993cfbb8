//! State-action-absorbing MDP constructions.
//!
//! `M_{s,a,u}` equals the original MDP except that executing `a` in `s`
//! loops back to `s` and pays the scalar reward `u`. Because every other
//! kernel row is untouched, the absorbing model built on an empirical
//! kernel does not depend on the sampled row `(s, a)` at all, which is what
//! makes these models useful for decoupling arguments. The canonical reward
//! `u* = r(s,a) + gamma (P V*)_{s,a} - gamma V*(s)` makes the absorbing MDP
//! share `Q*` and `V*` with the original exactly.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::bounds::separation_gap;
use crate::sampling::{empirical_mdp, EmpiricalModel};
use crate::solver::solve_optimal_oracle;
use crate::types::TabularMdp;

/// Largest epsilon-net the toolkit will materialize.
const MAX_NET_POINTS: usize = 1 << 26;

/// Which pair becomes absorbing, and at what reward.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AbsorbingSpec {
    pub state: usize,
    pub action: usize,
    /// Absorbing reward; must satisfy `|u| <= 1/(1-gamma)` for the target MDP.
    pub u: f64,
}

/// Replaces kernel row `(s, a)` with the unit mass on `s` and the reward
/// entry with `u`. All other rows and entries are copied bit for bit, and
/// the operation is idempotent.
pub fn make_absorbing(mdp: &TabularMdp, spec: &AbsorbingSpec) -> Result<TabularMdp> {
    if spec.state >= mdp.num_states() || spec.action >= mdp.num_actions() {
        return Err(Error::invalid(format!(
            "absorbing pair ({}, {}) out of range",
            spec.state, spec.action
        )));
    }
    let horizon = 1.0 / (1.0 - mdp.discount());
    if !(spec.u.is_finite() && spec.u.abs() <= horizon + 1e-12) {
        return Err(Error::invalid(format!(
            "absorbing reward {} outside [-{horizon}, {horizon}]",
            spec.u
        )));
    }
    let row = mdp.sa(spec.state, spec.action);
    let mut kernel = mdp.kernel().clone();
    for j in 0..mdp.num_states() {
        kernel[(row, j)] = if j == spec.state { 1.0 } else { 0.0 };
    }
    let mut reward = mdp.reward().clone();
    reward[row] = spec.u;
    TabularMdp::new(mdp.num_states(), mdp.num_actions(), kernel, reward, mdp.discount())
}

/// The canonical absorbing reward `u* = r(s,a) + gamma (P V*)_{s,a} - gamma V*(s)`,
/// computed from an exact solve of the MDP.
pub fn canonical_u_star(mdp: &TabularMdp, s: usize, a: usize) -> Result<f64> {
    let out = solve_optimal_oracle(mdp)?;
    canonical_u_star_with(mdp, &out.value.0, s, a)
}

/// Same, reusing a precomputed optimal value vector.
pub fn canonical_u_star_with(
    mdp: &TabularMdp,
    v_star: &DVector<f64>,
    s: usize,
    a: usize,
) -> Result<f64> {
    if s >= mdp.num_states() || a >= mdp.num_actions() {
        return Err(Error::invalid(format!("pair ({s}, {a}) out of range")));
    }
    if v_star.len() != mdp.num_states() {
        return Err(Error::dims("optimal value vector has wrong length"));
    }
    let row = mdp.sa(s, a);
    let pv = mdp.kernel().row(row).transpose().dot(v_star);
    Ok(mdp.reward()[row] + mdp.discount() * (pv - v_star[s]))
}

/// Symmetric grid `{-n step, ..., -step, 0, step, ..., n step}` with the
/// largest `n` satisfying `n * step < 1/(1-gamma)`.
#[derive(Clone, Debug)]
pub struct EpsilonNet {
    pub step: f64,
    pub points: Vec<f64>,
    half_count: i64,
}

impl EpsilonNet {
    /// Number of grid points.
    pub fn cardinality(&self) -> usize {
        self.points.len()
    }

    /// Nearest grid point to `u`; exact midpoints resolve toward the
    /// smaller value. Inputs beyond the grid clamp to the extreme points.
    pub fn nearest(&self, u: f64) -> f64 {
        let k_low = (u / self.step).floor();
        let low = k_low * self.step;
        let high = (k_low + 1.0) * self.step;
        let k = if (u - low) <= (high - u) { k_low } else { k_low + 1.0 };
        let clamped = (k as i64).clamp(-self.half_count, self.half_count);
        clamped as f64 * self.step
    }
}

/// Builds the net. A step at or beyond the value range collapses to `{0}`.
pub fn build_net(discount: f64, step: f64) -> Result<EpsilonNet> {
    if discount <= 0.0 || discount >= 1.0 || discount.is_nan() {
        return Err(Error::invalid("discount must lie in (0, 1)"));
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::invalid("net step must be positive and finite"));
    }
    let horizon = 1.0 / (1.0 - discount);
    let mut n = (horizon / step).floor() as i64;
    while n > 0 && n as f64 * step >= horizon {
        n -= 1;
    }
    let count = 2 * n + 1;
    if count > MAX_NET_POINTS as i64 {
        return Err(Error::invalid(format!(
            "net with {count} points exceeds the {MAX_NET_POINTS}-point limit; use a larger step"
        )));
    }
    let points = (-n..=n).map(|k| k as f64 * step).collect();
    Ok(EpsilonNet { step, points, half_count: n })
}

/// Result of the net-matching check for one `(s, a)` pair.
#[derive(Clone, Debug, Serialize)]
pub enum NetMatchOutcome {
    /// The empirical optimal Q-function is not `omega`-separated, so the
    /// matching statement has nothing to say.
    NotApplicable { gap: f64 },
    Checked {
        /// Net point closest to the canonical empirical absorbing reward.
        u0: f64,
        /// The canonical reward `u_hat*` itself.
        u_hat_star: f64,
        /// Whether the absorbing model's optimal policy equals the
        /// empirical optimal policy at every state.
        matches: bool,
        gap: f64,
    },
}

/// Checks that some point of the `(1-gamma) omega / 4` net reproduces the
/// empirical optimal policy through the `(s, a)`-absorbing model, provided
/// the separation event holds at level `omega`.
pub fn net_match(
    em: &EmpiricalModel,
    reward: &DVector<f64>,
    discount: f64,
    s: usize,
    a: usize,
    omega: f64,
) -> Result<NetMatchOutcome> {
    if omega <= 0.0 || omega.is_nan() {
        return Err(Error::invalid("omega must be positive"));
    }
    let m_hat = empirical_mdp(em, reward, discount)?;
    let solved = solve_optimal_oracle(&m_hat)?;
    let (gap, _) = separation_gap(&solved.q, m_hat.num_actions())?;
    if gap < omega {
        return Ok(NetMatchOutcome::NotApplicable { gap });
    }

    let u_hat_star = canonical_u_star_with(&m_hat, &solved.value.0, s, a)?;
    let net = build_net(discount, (1.0 - discount) * omega / 4.0)?;
    let u0 = net.nearest(u_hat_star);

    let absorbing = make_absorbing(&m_hat, &AbsorbingSpec { state: s, action: a, u: u0 })?;
    let solved_abs = solve_optimal_oracle(&absorbing)?;
    let matches = solved_abs.policy == solved.policy;
    Ok(NetMatchOutcome::Checked { u0, u_hat_star, matches, gap })
}
