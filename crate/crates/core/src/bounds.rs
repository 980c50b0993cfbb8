//! Plug-in policy evaluation and the computable pieces of its error
//! analysis: the variance-resolvent bounds, the auxiliary value recursion,
//! the Bernstein-type deviation condition, and the instance/worst-case
//! error bounds for `||Vhat^pi - V^pi||_inf`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::{empirical_mdp, EmpiricalModel};
use crate::solver::{evaluate_policy_exact, policy_matrices, variance_of_value, Resolvent};
use crate::types::{Policy, QVector, TabularMdp, ValueVector};

/// `Vhat^pi = (I - gamma Phat_pi)^-1 r_pi`: exact policy evaluation on the
/// empirical kernel with the true rewards.
pub fn plug_in_evaluate(
    em: &EmpiricalModel,
    reward: &DVector<f64>,
    discount: f64,
    pi: &Policy,
) -> Result<ValueVector> {
    let m_hat = empirical_mdp(em, reward, discount)?;
    let (v, _) = evaluate_policy_exact(&m_hat, pi)?;
    Ok(v)
}

/// The auxiliary recursion
/// `r^(0) = r_pi`, `V^(l) = (I - gamma P_pi)^-1 r^(l)`,
/// `r^(l) = sqrt(Var_{P_pi}[V^(l-1)])` for `l >= 1`.
#[derive(Clone, Debug)]
pub struct AuxiliarySequence {
    pub depth: usize,
    pub r_levels: Vec<DVector<f64>>,
    pub v_levels: Vec<DVector<f64>>,
}

/// Default recursion depth `ceil(log(e/(1-gamma)))`.
pub fn default_depth(discount: f64) -> usize {
    (std::f64::consts::E / (1.0 - discount)).ln().ceil().max(1.0) as usize
}

/// Builds the auxiliary sequence up to level `m`.
pub fn auxiliary_sequence(mdp: &TabularMdp, pi: &Policy, m: usize) -> Result<AuxiliarySequence> {
    if m == 0 {
        return Err(Error::invalid("auxiliary depth m must be at least 1"));
    }
    let mats = policy_matrices(mdp, pi)?;
    let resolvent = Resolvent::new(&mats.p_sub, mdp.discount())?;

    let mut r_levels = Vec::with_capacity(m + 1);
    let mut v_levels = Vec::with_capacity(m + 1);
    r_levels.push(mats.r_pi.clone());
    v_levels.push(resolvent.solve_checked(&mats.r_pi, 1e-10)?);
    for l in 1..=m {
        let var = variance_of_value(&mats.p_sub, &ValueVector(v_levels[l - 1].clone()))?;
        let r_l = var.map(f64::sqrt);
        let v_l = resolvent.solve_checked(&r_l, 1e-10)?;
        r_levels.push(r_l);
        v_levels.push(v_l);
    }
    Ok(AuxiliarySequence { depth: m, r_levels, v_levels })
}

/// Both sides of the variance-resolvent bound
/// `||(I - gamma P_pi)^-1 sqrt(Var_{P_pi}(V))||_inf <= 4/(gamma sqrt(1-gamma)) ||V||_inf`
/// for `V = (I - gamma P_pi)^-1 r` with `r >= 0`, together with the
/// classical `2 log2 / (gamma (1-gamma)^1.5) ||r||_inf` bound for
/// comparison.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VarianceResolventCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// The classical right-hand side in terms of `||r||_inf`.
    pub classical_rhs: f64,
    pub classical_holds: bool,
}

/// Evaluates the bound for the value induced by a nonnegative restricted
/// reward `r_nonneg` (length `|S|`).
pub fn check_variance_resolvent_bound(
    mdp: &TabularMdp,
    pi: &Policy,
    r_nonneg: &DVector<f64>,
) -> Result<VarianceResolventCheck> {
    if r_nonneg.len() != mdp.num_states() {
        return Err(Error::dims(format!(
            "restricted reward must have length {}, got {}",
            mdp.num_states(),
            r_nonneg.len()
        )));
    }
    if r_nonneg.iter().any(|r| *r < 0.0) {
        return Err(Error::invalid("the bound requires a nonnegative reward vector"));
    }
    let mats = policy_matrices(mdp, pi)?;
    let resolvent = Resolvent::new(&mats.p_sub, mdp.discount())?;
    let v = resolvent.solve_checked(r_nonneg, 1e-10)?;
    let lhs = resolvent_variance_norm(&resolvent, &mats.p_sub, &v)?;

    let gamma = mdp.discount();
    let rhs = 4.0 / (gamma * (1.0 - gamma).sqrt()) * v.amax();
    let classical_rhs = 2.0 * 2.0f64.ln() / (gamma * (1.0 - gamma).powf(1.5)) * r_nonneg.amax();
    Ok(VarianceResolventCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
        classical_rhs,
        classical_holds: lhs <= classical_rhs,
    })
}

/// `||(I - gamma P_pi)^-1 sqrt(Var_{P_pi}(v))||_inf`.
fn resolvent_variance_norm(
    resolvent: &Resolvent,
    p_sub: &DMatrix<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    let var = variance_of_value(p_sub, &ValueVector(v.clone()))?;
    let sqrt_var = var.map(f64::sqrt);
    Ok(resolvent.solve(&sqrt_var)?.amax())
}

/// Per-level outcome of the Bernstein-type condition
/// `|(Phat_pi - P_pi) V^(l)| <= sqrt(beta1/N) sqrt(Var_{P_pi}[V^(l)]) + beta1 ||V^(l)||_inf / N`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BernsteinLevel {
    pub level: usize,
    pub holds: bool,
    /// Worst entrywise excess of the left side over the right (<= 0 when the
    /// level passes).
    pub max_excess: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BernsteinReport {
    pub beta1: f64,
    pub n: u64,
    pub levels: Vec<BernsteinLevel>,
    pub all_hold: bool,
    /// Smallest beta1 that would make every level pass.
    pub minimal_beta1: f64,
}

/// Checks the condition entrywise for every level of `aux`, and reports the
/// minimal `beta1` under which all levels pass.
pub fn bernstein_condition_check(
    p_true: &DMatrix<f64>,
    p_hat: &DMatrix<f64>,
    pi: &Policy,
    aux: &AuxiliarySequence,
    beta1: f64,
    n: u64,
) -> Result<BernsteinReport> {
    if p_true.shape() != p_hat.shape() {
        return Err(Error::dims("true and empirical kernels must share a shape"));
    }
    let num_states = p_true.ncols();
    if pi.num_states() != num_states {
        return Err(Error::dims("policy does not match kernel width"));
    }
    let num_actions = p_true.nrows() / num_states;
    if num_states * num_actions != p_true.nrows() {
        return Err(Error::dims("kernel row count is not |S| * |A|"));
    }
    if beta1.is_nan() || beta1 < 0.0 || n == 0 {
        return Err(Error::invalid("beta1 must be nonnegative and n positive"));
    }

    // Row-restrict both kernels to the policy's actions.
    let mut p_pi = DMatrix::zeros(num_states, num_states);
    let mut p_hat_pi = DMatrix::zeros(num_states, num_states);
    for s in 0..num_states {
        let row = s * num_actions + pi.action(s);
        p_pi.set_row(s, &p_true.row(row));
        p_hat_pi.set_row(s, &p_hat.row(row));
    }

    let n_f = n as f64;
    let mut levels = Vec::with_capacity(aux.v_levels.len());
    let mut minimal = 0.0f64;
    for (l, v_l) in aux.v_levels.iter().enumerate() {
        let dev = (&p_hat_pi - &p_pi) * v_l;
        let var = variance_of_value(&p_pi, &ValueVector(v_l.clone()))?;
        let v_sup = v_l.amax();

        let mut max_excess = f64::NEG_INFINITY;
        for s in 0..num_states {
            let lhs = dev[s].abs();
            let sigma = var[s].sqrt();
            let rhs = (beta1 / n_f).sqrt() * sigma + beta1 * v_sup / n_f;
            max_excess = max_excess.max(lhs - rhs);
            minimal = minimal.max(minimal_beta(lhs, sigma, v_sup, n_f));
        }
        levels.push(BernsteinLevel { level: l, holds: max_excess <= 0.0, max_excess });
    }
    let all_hold = levels.iter().all(|l| l.holds);
    Ok(BernsteinReport { beta1, n, levels, all_hold, minimal_beta1: minimal })
}

/// Smallest `beta >= 0` with `sqrt(beta/n) sigma + beta m / n >= d`.
/// Quadratic in `sqrt(beta)`; degenerate cases fall out of the limits.
fn minimal_beta(d: f64, sigma: f64, m: f64, n: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if m > 0.0 {
        let a = m / n;
        let b = sigma / n.sqrt();
        let x = (-b + (b * b + 4.0 * a * d).sqrt()) / (2.0 * a);
        x * x
    } else if sigma > 0.0 {
        let x = d * n.sqrt() / sigma;
        x * x
    } else {
        // Zero vector cannot deviate; a positive d here means corruption.
        f64::INFINITY
    }
}

/// The computable content of the plug-in evaluation bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EvalBoundReport {
    /// `||Vhat^pi - V^pi||_inf`, computed exactly.
    pub empirical_error: f64,
    /// Instance-dependent bound
    /// `4 gamma sqrt(2L/N) ||(I-gamma P_pi)^-1 sqrt(Var)||_inf + 2 gamma L ||V^pi||_inf / ((1-gamma) N)`.
    pub instance_bound: f64,
    /// Worst-case bound `6 sqrt(2L/(N (1-gamma)^3)) ||r||_inf`.
    pub worst_case_bound: f64,
    pub resolvent_variance_norm: f64,
    pub n: u64,
    pub delta: f64,
}

/// Assembles the report for a fixed policy (the caller must keep `pi`
/// independent of the samples behind `em` for the bounds to carry their
/// probabilistic meaning).
pub fn eval_bound_report(
    mdp_true: &TabularMdp,
    em: &EmpiricalModel,
    pi: &Policy,
    delta: f64,
) -> Result<EvalBoundReport> {
    if delta <= 0.0 || delta >= 1.0 || delta.is_nan() {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    let gamma = mdp_true.discount();
    let n = em.samples_per_pair();
    let n_f = n as f64;

    let (v_true, _) = evaluate_policy_exact(mdp_true, pi)?;
    let v_hat = plug_in_evaluate(em, mdp_true.reward(), gamma, pi)?;
    let empirical_error = v_hat.sup_distance(&v_true);

    let mats = policy_matrices(mdp_true, pi)?;
    let resolvent = Resolvent::new(&mats.p_sub, gamma)?;
    let rvn = resolvent_variance_norm(&resolvent, &mats.p_sub, &v_true.0)?;

    let s_f = mdp_true.num_states() as f64;
    let log_factor = (4.0 * s_f * (std::f64::consts::E / (1.0 - gamma)).ln() / delta).ln();
    let instance_bound = 4.0 * gamma * (2.0 * log_factor / n_f).sqrt() * rvn
        + 2.0 * gamma * log_factor / ((1.0 - gamma) * n_f) * v_true.0.amax();
    let worst_case_bound =
        6.0 * (2.0 * log_factor / (n_f * (1.0 - gamma).powi(3))).sqrt() * mdp_true.reward().amax();

    Ok(EvalBoundReport {
        empirical_error,
        instance_bound,
        worst_case_bound,
        resolvent_variance_norm: rvn,
        n,
        delta,
    })
}

/// Minimum over states of (best Q minus second-best Q), plus the greedy
/// policy. The separation event `B_omega` holds exactly when the returned
/// gap is at least `omega`. With a single action the gap is infinite by
/// convention.
pub fn separation_gap(q: &QVector, num_actions: usize) -> Result<(f64, Policy)> {
    if num_actions == 0 || !q.len().is_multiple_of(num_actions) {
        return Err(Error::dims(format!(
            "Q length {} is not a multiple of num_actions {num_actions}",
            q.len()
        )));
    }
    let num_states = q.len() / num_actions;
    let mut gap = f64::INFINITY;
    let mut actions = Vec::with_capacity(num_states);
    for s in 0..num_states {
        let mut best_a = 0;
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for a in 0..num_actions {
            let val = q.0[s * num_actions + a];
            if val > best {
                second = best;
                best = val;
                best_a = a;
            } else if val > second {
                second = val;
            }
        }
        actions.push(best_a);
        if num_actions >= 2 {
            gap = gap.min(best - second);
        }
    }
    Ok((gap, Policy::new(actions)))
}
