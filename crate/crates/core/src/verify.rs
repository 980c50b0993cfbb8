//! Hard numerical checks of the toolkit's structural identities: resolvent
//! properties, the canonical absorbing reward, the variance-resolvent
//! bounds, and Lipschitz continuity of absorbing optima. These are exact
//! statements, so every check is a zero-tolerance assertion up to stated
//! floating-point slack; a single failure is a bug, not noise.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::absorbing::{canonical_u_star_with, make_absorbing, AbsorbingSpec};
use crate::bounds::check_variance_resolvent_bound;
use crate::error::Result;
use crate::families::{generate_mdp, MdpFamily};
use crate::rng::{derive_seed, keyed_u64, keyed_unit, Stream};
use crate::solver::{policy_matrices, solve_optimal_oracle, Resolvent};
use crate::types::{Policy, TabularMdp};

/// Margins from one resolvent check (`(I - gamma P_pi)^-1` properties).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResolventCheck {
    /// Max entrywise gap between the truncated Neumann series and the
    /// direct inverse.
    pub neumann_error: f64,
    /// Smallest inverse entry (must be >= -1e-12).
    pub min_entry: f64,
    /// `||inv||_1 - 1/(1-gamma)` (must be <= 1e-9).
    pub one_norm_excess: f64,
    /// `||(1-gamma) inv 1 - 1||_inf` (must be <= 1e-10).
    pub ones_residual: f64,
    /// Worst violation of `inv r1 <= inv r2` for `0 <= r1 <= r2`
    /// (must be <= 1e-12).
    pub monotonicity_violation: f64,
}

impl ResolventCheck {
    pub fn passes(&self) -> bool {
        self.neumann_error <= 1e-8
            && self.min_entry >= -1e-12
            && self.one_norm_excess <= 1e-9
            && self.ones_residual <= 1e-10
            && self.monotonicity_violation <= 1e-12
    }
}

/// Evaluates the resolvent properties on `(mdp, pi)` with the supplied
/// comparison rewards `0 <= r1 <= r2`.
///
/// The Neumann truncation length adapts to the discount: 200 terms suffice
/// for the 1e-8 comparison only up to gamma ~ 0.9 (the tail is bounded by
/// gamma^{k+1}/(1-gamma)), so the length grows with gamma while never
/// dropping below 200.
pub fn resolvent_check(
    mdp: &TabularMdp,
    pi: &Policy,
    r1: &DVector<f64>,
    r2: &DVector<f64>,
) -> Result<ResolventCheck> {
    let gamma = mdp.discount();
    let mats = policy_matrices(mdp, pi)?;
    let resolvent = Resolvent::new(&mats.p_sub, gamma)?;
    let inv = resolvent.inverse()?;
    let n = mdp.num_states();

    // (a) truncated Neumann series.
    let terms = neumann_terms(gamma, 1e-9);
    let mut partial = DMatrix::<f64>::identity(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let scaled = &mats.p_sub * gamma;
    for _ in 0..terms {
        power = &power * &scaled;
        partial += &power;
    }
    let neumann_error = (&partial - &inv).amax();

    // (b) nonnegativity.
    let min_entry = inv.iter().cloned().fold(f64::INFINITY, f64::min);

    // (c) max row sum.
    let one_norm = (0..n)
        .map(|i| inv.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let one_norm_excess = one_norm - 1.0 / (1.0 - gamma);

    // (d) row sums are exactly the horizon.
    let ones = DVector::from_element(n, 1.0);
    let ones_residual = ((&inv * &ones) * (1.0 - gamma) - &ones).amax();

    // (e) monotonicity.
    let lo = &inv * r1;
    let hi = &inv * r2;
    let monotonicity_violation = (lo - hi).iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    Ok(ResolventCheck {
        neumann_error,
        min_entry,
        one_norm_excess,
        ones_residual,
        monotonicity_violation,
    })
}

/// Terms needed for the Neumann tail `gamma^{k+1}/(1-gamma)` to drop below
/// `tail_tol`, floored at 200.
pub fn neumann_terms(gamma: f64, tail_tol: f64) -> usize {
    let needed = ((tail_tol * (1.0 - gamma)).ln() / gamma.ln()).ceil();
    (needed.max(200.0)) as usize
}

/// Max deviation of the `u*`-absorbing optimum from the original optimum,
/// over every state-action pair: `max_{s,a} ||Q*_{s,a,u*} - Q*||_inf`
/// (also folding in the value-function deviation).
pub fn absorbing_equivalence_deviation(mdp: &TabularMdp) -> Result<f64> {
    let solved = solve_optimal_oracle(mdp)?;
    let mut worst = 0.0f64;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let u = canonical_u_star_with(mdp, &solved.value.0, s, a)?;
            let absorbing = make_absorbing(mdp, &AbsorbingSpec { state: s, action: a, u })?;
            let solved_abs = solve_optimal_oracle(&absorbing)?;
            worst = worst.max(solved_abs.q.sup_distance(&solved.q));
            worst = worst.max(solved_abs.value.sup_distance(&solved.value));
        }
    }
    Ok(worst)
}

/// One check of `||Qhat*_{s,a,u} - Qhat*_{s,a,u'}||_inf <= |u - u'|/(1-gamma)`.
/// Returns `(lhs, bound)`.
pub fn lipschitz_check(mdp: &TabularMdp, s: usize, a: usize, u1: f64, u2: f64) -> Result<(f64, f64)> {
    let q1 = solve_optimal_oracle(&make_absorbing(mdp, &AbsorbingSpec { state: s, action: a, u: u1 })?)?.q;
    let q2 = solve_optimal_oracle(&make_absorbing(mdp, &AbsorbingSpec { state: s, action: a, u: u2 })?)?.q;
    Ok((q1.sup_distance(&q2), (u1 - u2).abs() / (1.0 - mdp.discount())))
}

/// Aggregate outcome of one named check across a battery.
#[derive(Clone, Debug, Serialize)]
pub struct CheckSummary {
    pub name: &'static str,
    pub instances: usize,
    pub failures: usize,
    /// Most adverse margin seen (sign convention per check; negative or
    /// tiny positive values are healthy).
    pub worst_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaBatteryReport {
    pub checks: Vec<CheckSummary>,
    pub all_pass: bool,
}

/// Runs the full battery over `instances` seeded random MDPs with mixed
/// sizes and discounts.
pub fn run_lemma_battery(instances: usize, seed: u64) -> Result<LemmaBatteryReport> {
    let mut resolvent = CheckSummary { name: "resolvent (a)-(e)", instances: 0, failures: 0, worst_margin: f64::NEG_INFINITY };
    let mut absorbing_eq = CheckSummary { name: "absorbing u* equivalence", instances: 0, failures: 0, worst_margin: f64::NEG_INFINITY };
    let mut var_resolvent = CheckSummary { name: "variance-resolvent bound", instances: 0, failures: 0, worst_margin: f64::NEG_INFINITY };
    let mut classical = CheckSummary { name: "classical r-based bound", instances: 0, failures: 0, worst_margin: f64::NEG_INFINITY };
    let mut lipschitz = CheckSummary { name: "absorbing Lipschitz", instances: 0, failures: 0, worst_margin: f64::NEG_INFINITY };

    for i in 0..instances {
        let k = i as u64;
        let num_states = 2 + (keyed_u64(seed, Stream::Trial, k, 0) % 5) as usize;
        let num_actions = 1 + (keyed_u64(seed, Stream::Trial, k, 1) % 3) as usize;
        let gamma = [0.5, 0.9, 0.95][(keyed_u64(seed, Stream::Trial, k, 2) % 3) as usize];
        let instance_seed = derive_seed(seed, Stream::Trial, k);
        let mdp = generate_mdp(MdpFamily::RandomDirichlet, num_states, num_actions, gamma, instance_seed)?;
        let pi = Policy::new(
            (0..num_states)
                .map(|s| (keyed_u64(seed, Stream::Trial, k, 100 + s as u64) % num_actions as u64) as usize)
                .collect(),
        );

        let r1 = DVector::from_fn(num_states, |s, _| keyed_unit(instance_seed, Stream::FamilyReward, 1000 + s as u64, 0));
        let r2 = DVector::from_fn(num_states, |s, _| {
            r1[s] + keyed_unit(instance_seed, Stream::FamilyReward, 2000 + s as u64, 0)
        });
        let rc = resolvent_check(&mdp, &pi, &r1, &r2)?;
        resolvent.instances += 1;
        if !rc.passes() {
            resolvent.failures += 1;
        }
        resolvent.worst_margin = resolvent
            .worst_margin
            .max(rc.neumann_error)
            .max(-rc.min_entry)
            .max(rc.one_norm_excess)
            .max(rc.ones_residual)
            .max(rc.monotonicity_violation);

        let dev = absorbing_equivalence_deviation(&mdp)?;
        absorbing_eq.instances += 1;
        if dev > 1e-8 {
            absorbing_eq.failures += 1;
        }
        absorbing_eq.worst_margin = absorbing_eq.worst_margin.max(dev);

        let check = check_variance_resolvent_bound(&mdp, &pi, &r1)?;
        var_resolvent.instances += 1;
        classical.instances += 1;
        if !check.holds {
            var_resolvent.failures += 1;
        }
        if !check.classical_holds {
            classical.failures += 1;
        }
        var_resolvent.worst_margin = var_resolvent.worst_margin.max(check.lhs - check.rhs);
        classical.worst_margin = classical.worst_margin.max(check.lhs - check.classical_rhs);

        let horizon = 1.0 / (1.0 - gamma);
        let s_pick = (keyed_u64(seed, Stream::Trial, k, 5) % num_states as u64) as usize;
        let a_pick = (keyed_u64(seed, Stream::Trial, k, 6) % num_actions as u64) as usize;
        let u1 = (2.0 * keyed_unit(instance_seed, Stream::Trial, 7, 0) - 1.0) * 0.95 * horizon;
        let u2 = (2.0 * keyed_unit(instance_seed, Stream::Trial, 8, 0) - 1.0) * 0.95 * horizon;
        let (lhs, bound) = lipschitz_check(&mdp, s_pick, a_pick, u1, u2)?;
        lipschitz.instances += 1;
        if lhs > bound + 1e-8 {
            lipschitz.failures += 1;
        }
        lipschitz.worst_margin = lipschitz.worst_margin.max(lhs - bound);
    }

    let checks = vec![resolvent, absorbing_eq, var_resolvent, classical, lipschitz];
    let all_pass = checks.iter().all(|c| c.failures == 0);
    Ok(LemmaBatteryReport { checks, all_pass })
}
